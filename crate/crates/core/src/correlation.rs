//! The linear correlation predictor over concatenated bimodal embeddings and
//! the polarity-balanced MAE correlation loss.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::UnimodalEncoder;
use crate::error::{config_err, Error, Result};
use crate::numerics::{abs_subgradient, absolute_error, dot, Parameterized, Tensor2};
use crate::pairing::{BimodalPair, ModalityPair};

/// `s = W_cp (x_i ++ x_j)` with `W_cp` of shape `1 x 2d`. No squashing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPredictor {
    weights: Tensor2,
}

impl CorrelationPredictor {
    pub fn init<R: Rng + ?Sized>(embedding_dim: usize, rng: &mut R) -> Self {
        Self { weights: Tensor2::uniform_init(1, 2 * embedding_dim, rng) }
    }

    pub fn zeros(embedding_dim: usize) -> Self {
        Self { weights: Tensor2::zeros(1, 2 * embedding_dim) }
    }

    pub fn from_weights(weights: Tensor2) -> Result<Self> {
        if weights.rows() != 1 || weights.cols() % 2 != 0 || weights.cols() == 0 {
            return Err(config_err!(
                "correlation predictor weights must be 1 x 2d, got {} x {}",
                weights.rows(),
                weights.cols()
            ));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &Tensor2 {
        &self.weights
    }

    pub fn embedding_dim(&self) -> usize {
        self.weights.cols() / 2
    }

    fn halves(&self) -> (&[f64], &[f64]) {
        self.weights.row(0).split_at(self.embedding_dim())
    }

    pub fn predict_score(&self, x_i: &[f64], x_j: &[f64]) -> Result<f64> {
        let d = self.embedding_dim();
        if x_i.len() != d || x_j.len() != d {
            return Err(config_err!(
                "correlation predictor expects two width-{d} embeddings, got {} and {}",
                x_i.len(),
                x_j.len()
            ));
        }
        let (wi, wj) = self.halves();
        Ok(dot(wi, x_i) + dot(wj, x_j))
    }
}

impl Parameterized for CorrelationPredictor {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((crate::numerics::params_join(prefix, "w_cp"), self.weights.data()));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((crate::numerics::params_join(prefix, "w_cp"), self.weights.data_mut()));
    }
}

/// One predictor per modality pair, or a single shared one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorBank {
    predictors: Vec<CorrelationPredictor>,
    shared: bool,
    clamp_scores: bool,
}

impl PredictorBank {
    pub fn init<R: Rng + ?Sized>(
        pair_count: usize,
        embedding_dim: usize,
        shared: bool,
        clamp_scores: bool,
        rng: &mut R,
    ) -> Self {
        let count = if shared { 1 } else { pair_count };
        let predictors = (0..count).map(|_| CorrelationPredictor::init(embedding_dim, rng)).collect();
        Self { predictors, shared, clamp_scores }
    }

    pub fn from_predictors(predictors: Vec<CorrelationPredictor>, shared: bool, clamp_scores: bool) -> Result<Self> {
        if predictors.is_empty() {
            return Err(config_err!("predictor bank needs at least one predictor"));
        }
        if shared && predictors.len() != 1 {
            return Err(config_err!("a shared bank holds exactly one predictor"));
        }
        Ok(Self { predictors, shared, clamp_scores })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            predictors: self.predictors.iter().map(|p| CorrelationPredictor::zeros(p.embedding_dim())).collect(),
            shared: self.shared,
            clamp_scores: self.clamp_scores,
        }
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn predictors(&self) -> &[CorrelationPredictor] {
        &self.predictors
    }

    fn slot(&self, pair_index: usize) -> Result<usize> {
        let slot = if self.shared { 0 } else { pair_index };
        if slot >= self.predictors.len() {
            return Err(config_err!("no correlation predictor for modality pair {pair_index}"));
        }
        Ok(slot)
    }

    pub fn for_pair(&self, pair_index: usize) -> Result<&CorrelationPredictor> {
        Ok(&self.predictors[self.slot(pair_index)?])
    }

    /// Score and its derivative with respect to the raw linear output.
    fn score(&self, pair_index: usize, x_i: &[f64], x_j: &[f64]) -> Result<(f64, f64)> {
        let raw = self.for_pair(pair_index)?.predict_score(x_i, x_j)?;
        if self.clamp_scores {
            if raw < 0.0 {
                Ok((0.0, 0.0))
            } else if raw > 1.0 {
                Ok((1.0, 0.0))
            } else {
                Ok((raw, 1.0))
            }
        } else {
            Ok((raw, 1.0))
        }
    }

    pub fn predict(&self, pair_index: usize, x_i: &[f64], x_j: &[f64]) -> Result<f64> {
        self.score(pair_index, x_i, x_j).map(|(s, _)| s)
    }
}

impl Parameterized for PredictorBank {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        for (i, p) in self.predictors.iter().enumerate() {
            p.collect(&crate::numerics::params_join(prefix, &format!("cp{i}")), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        for (i, p) in self.predictors.iter_mut().enumerate() {
            p.collect_mut(&crate::numerics::params_join(prefix, &format!("cp{i}")), out);
        }
    }
}

#[inline]
pub fn pair_loss(score: f64, target: f64) -> f64 {
    absolute_error(score, target)
}

/// Half the positive mean plus half the negative mean.
pub fn bimodal_loss(positive_losses: &[f64], negative_losses: &[f64]) -> Result<f64> {
    if positive_losses.is_empty() || negative_losses.is_empty() {
        return Err(Error::Curriculum(format!(
            "bimodal loss needs both polarities, got {} positive and {} negative pairs",
            positive_losses.len(),
            negative_losses.len()
        )));
    }
    let pos = positive_losses.iter().sum::<f64>() / (2.0 * positive_losses.len() as f64);
    let neg = negative_losses.iter().sum::<f64>() / (2.0 * negative_losses.len() as f64);
    Ok(pos + neg)
}

/// Mean of the `k choose 2` bimodal losses.
pub fn overall_correlation_loss(bimodal_losses: &[f64], k: usize) -> Result<f64> {
    let expected = k * k.saturating_sub(1) / 2;
    if expected == 0 || bimodal_losses.len() != expected {
        return Err(config_err!(
            "{k} modalities give {expected} bimodal losses, got {}",
            bimodal_losses.len()
        ));
    }
    Ok(bimodal_losses.iter().sum::<f64>() / expected as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalLossReport {
    pub modalities: ModalityPair,
    pub positive_mean: f64,
    pub negative_mean: f64,
    pub positive_losses: Vec<f64>,
    pub negative_losses: Vec<f64>,
    pub loss: f64,
}

/// The pairs selected for one modality pair in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSelection {
    pub modalities: ModalityPair,
    pub positives: Vec<BimodalPair>,
    pub negatives: Vec<BimodalPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationLoss {
    pub loss: f64,
    pub per_pair: Vec<BimodalLossReport>,
}

/// Embeddings indexed `[modality][sample]`.
pub type Embeddings = Vec<Vec<Vec<f64>>>;

fn pair_embeddings<'a>(embeddings: &'a Embeddings, pair: &BimodalPair) -> Result<(&'a [f64], &'a [f64])> {
    let first = embeddings
        .get(pair.modalities.first.0)
        .and_then(|m| m.get(pair.o1))
        .ok_or_else(|| config_err!("no embedding for modality {} sample {}", pair.modalities.first, pair.o1))?;
    let second = embeddings
        .get(pair.modalities.second.0)
        .and_then(|m| m.get(pair.o2))
        .ok_or_else(|| config_err!("no embedding for modality {} sample {}", pair.modalities.second, pair.o2))?;
    Ok((first, second))
}

/// Per-pair absolute errors of `pairs` under predictor slot `pair_index`.
pub fn pair_losses(bank: &PredictorBank, pair_index: usize, embeddings: &Embeddings, pairs: &[BimodalPair]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|p| {
            let (xi, xj) = pair_embeddings(embeddings, p)?;
            Ok(pair_loss(bank.predict(pair_index, xi, xj)?, p.target))
        })
        .collect()
}

pub fn correlation_loss(bank: &PredictorBank, embeddings: &Embeddings, selections: &[PairSelection]) -> Result<CorrelationLoss> {
    evaluate(bank, embeddings, selections, 0.0, None)
}

/// Loss plus gradients. `scale` multiplies the loss before differentiation
/// (the weight of the correlation term in the total objective). Gradients
/// are accumulated into `bank_grads` and, when given, into the embedding
/// gradients laid out like `embeddings`.
pub fn correlation_backward(
    bank: &PredictorBank,
    embeddings: &Embeddings,
    selections: &[PairSelection],
    scale: f64,
    bank_grads: &mut PredictorBank,
    embedding_grads: Option<&mut Embeddings>,
) -> Result<CorrelationLoss> {
    evaluate(bank, embeddings, selections, scale, Some((bank_grads, embedding_grads)))
}

fn evaluate(
    bank: &PredictorBank,
    embeddings: &Embeddings,
    selections: &[PairSelection],
    scale: f64,
    mut grads: Option<(&mut PredictorBank, Option<&mut Embeddings>)>,
) -> Result<CorrelationLoss> {
    let k = embeddings.len();
    let mut per_pair = Vec::with_capacity(selections.len());
    let pair_weight = 1.0 / selections.len().max(1) as f64;
    for (p, sel) in selections.iter().enumerate() {
        let mut losses = [Vec::with_capacity(sel.positives.len()), Vec::with_capacity(sel.negatives.len())];
        for (polarity, pairs) in [&sel.positives, &sel.negatives].into_iter().enumerate() {
            let weight = scale * pair_weight * 0.5 / pairs.len().max(1) as f64;
            for pair in pairs.iter() {
                if pair.modalities != sel.modalities {
                    return Err(Error::Internal(format!(
                        "pair for {:?} filed under {:?}",
                        pair.modalities, sel.modalities
                    )));
                }
                let (xi, xj) = pair_embeddings(embeddings, pair)?;
                let (score, dscore) = bank.score(p, xi, xj)?;
                let residual = score - pair.target;
                losses[polarity].push(libm::fabs(residual));
                if let Some((bank_grads, emb_grads)) = grads.as_mut() {
                    let coeff = weight * abs_subgradient(residual) * dscore;
                    if coeff == 0.0 {
                        continue;
                    }
                    let slot = bank.slot(p)?;
                    let d = xi.len();
                    let (wi, wj) = bank.predictors[slot].halves();
                    let g = bank_grads.predictors[slot].weights.data_mut();
                    for t in 0..d {
                        g[t] += coeff * xi[t];
                        g[d + t] += coeff * xj[t];
                    }
                    if let Some(emb) = emb_grads.as_mut() {
                        for (e, &w) in emb[pair.modalities.first.0][pair.o1].iter_mut().zip(wi) {
                            *e += coeff * w;
                        }
                        for (e, &w) in emb[pair.modalities.second.0][pair.o2].iter_mut().zip(wj) {
                            *e += coeff * w;
                        }
                    }
                }
            }
        }
        let [positive_losses, negative_losses] = losses;
        let loss = bimodal_loss(&positive_losses, &negative_losses)?;
        per_pair.push(BimodalLossReport {
            modalities: sel.modalities,
            positive_mean: positive_losses.iter().sum::<f64>() / positive_losses.len() as f64,
            negative_mean: negative_losses.iter().sum::<f64>() / negative_losses.len() as f64,
            positive_losses,
            negative_losses,
            loss,
        });
    }
    let values: Vec<f64> = per_pair.iter().map(|r| r.loss).collect();
    let loss = overall_correlation_loss(&values, k)?;
    if !loss.is_finite() {
        return Err(Error::Training("non-finite correlation loss".into()));
    }
    Ok(CorrelationLoss { loss, per_pair })
}

/// Gradients of the correlation loss with respect to the predictors and,
/// through backpropagation, every encoder. `features` is indexed
/// `[modality][sample]`.
pub fn correlation_grads(
    bank: &PredictorBank,
    encoders: &[UnimodalEncoder],
    features: &[Vec<Vec<f64>>],
    selections: &[PairSelection],
) -> Result<(CorrelationLoss, PredictorBank, Vec<UnimodalEncoder>)> {
    if selections.iter().all(|s| s.positives.is_empty() && s.negatives.is_empty()) {
        return Err(Error::Curriculum("no pairs selected".into()));
    }
    if features.len() != encoders.len() {
        return Err(config_err!("{} feature sets for {} encoders", features.len(), encoders.len()));
    }
    let mut embeddings = Vec::with_capacity(encoders.len());
    let mut caches = Vec::with_capacity(encoders.len());
    for (enc, rows) in encoders.iter().zip(features) {
        let mut e = Vec::with_capacity(rows.len());
        let mut c = Vec::with_capacity(rows.len());
        for row in rows {
            let (emb, cache) = enc.encode_with_cache(row)?;
            e.push(emb);
            c.push(cache);
        }
        embeddings.push(e);
        caches.push(c);
    }
    let mut emb_grads: Embeddings = embeddings.iter().map(|m| m.iter().map(|e| vec![0.0; e.len()]).collect()).collect();
    let mut bank_grads = bank.zeros_like();
    let loss = correlation_backward(bank, &embeddings, selections, 1.0, &mut bank_grads, Some(&mut emb_grads))?;
    let mut enc_grads: Vec<UnimodalEncoder> = encoders.iter().map(|e| e.zeros_like()).collect();
    for (m, enc) in encoders.iter().enumerate() {
        for (cache, g) in caches[m].iter().zip(&emb_grads[m]) {
            if g.iter().any(|&v| v != 0.0) {
                enc.backward_into(cache, g, &mut enc_grads[m])?;
            }
        }
    }
    Ok((loss, bank_grads, enc_grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::ModalityId;
    use crate::numerics::{check_gradient, Activation, AdamConfig, AdamState};
    use crate::pairing::{generate_negative_pairs, generate_positive_pairs, modality_pairs, PairPolarity};
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn av() -> ModalityPair {
        modality_pairs(2)[0]
    }

    #[test]
    fn predict_score_examples() {
        assert_eq!(CorrelationPredictor::zeros(2).predict_score(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 0.0);
        let ones = CorrelationPredictor::from_weights(Tensor2::new(1, 4, vec![1.0; 4]).unwrap()).unwrap();
        assert_eq!(ones.predict_score(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 10.0);
        assert!(ones.predict_score(&[1.0], &[3.0, 4.0]).is_err());
        assert!(CorrelationPredictor::from_weights(Tensor2::zeros(1, 3)).is_err());
    }

    #[test]
    fn random_score_matches_hand_dot_product() {
        let mut rng = stream(8, Stream::Init);
        let cp = CorrelationPredictor::init(3, &mut rng);
        let xi = [0.2, -0.4, 1.1];
        let xj = [2.0, 0.3, -0.7];
        let w = cp.weights().data();
        let mut expected = 0.0;
        for t in 0..3 {
            expected += w[t] * xi[t];
        }
        for t in 0..3 {
            expected += w[3 + t] * xj[t];
        }
        assert!((cp.predict_score(&xi, &xj).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(pair_loss(0.3, 0.3), 0.0);
        assert!((pair_loss(0.2, 1.0) - 0.8).abs() < 1e-15);
        assert!((pair_loss(1.5, 0.714286) - 0.785714).abs() < 1e-12);
        assert_eq!(bimodal_loss(&[0.0; 3], &[0.0; 4]).unwrap(), 0.0);
        assert!((bimodal_loss(&[0.4, 0.4], &[0.1, 0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(bimodal_loss(&[], &[0.1]), Err(Error::Curriculum(_))));
        assert!((overall_correlation_loss(&[0.3, 0.3, 0.3], 3).unwrap() - 0.3).abs() < 1e-15);
        assert!((overall_correlation_loss(&[0.1, 0.2, 0.6], 3).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(overall_correlation_loss(&[0.42], 2).unwrap(), 0.42);
        assert!(overall_correlation_loss(&[0.42], 3).is_err());
    }

    #[test]
    fn bimodal_loss_matches_resummation() {
        let mut rng = stream(12, Stream::Init);
        for _ in 0..20 {
            let np = rng.random_range(1..30);
            let nn = rng.random_range(1..30);
            let pos: Vec<f64> = (0..np).map(|_| rng.random_range(0.0..2.0)).collect();
            let neg: Vec<f64> = (0..nn).map(|_| rng.random_range(0.0..2.0)).collect();
            let mut total = 0.0;
            for v in &pos {
                total += v / (2 * np) as f64;
            }
            for v in &neg {
                total += v / (2 * nn) as f64;
            }
            assert!((bimodal_loss(&pos, &neg).unwrap() - total).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn bimodal_loss_is_permutation_invariant(mut pos in proptest::collection::vec(0.0f64..3.0, 1..20),
                                                 neg in proptest::collection::vec(0.0f64..3.0, 1..20)) {
            let a = bimodal_loss(&pos, &neg).unwrap();
            pos.reverse();
            let b = bimodal_loss(&pos, &neg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0);
        }
    }

    fn toy_setup(seed: u64, k: usize, n: usize, d: usize, width: usize) -> (PredictorBank, Vec<UnimodalEncoder>, Vec<Vec<Vec<f64>>>, Vec<PairSelection>) {
        let mut rng = stream(seed, Stream::Init);
        let encoders: Vec<_> = (0..k)
            .map(|m| UnimodalEncoder::init(ModalityId(m), width, &[4], d, Activation::Tanh, &mut rng).unwrap())
            .collect();
        let features: Vec<Vec<Vec<f64>>> = (0..k)
            .map(|_| (0..n).map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .collect();
        let labels: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let bank = PredictorBank::init(k * (k - 1) / 2, d, false, false, &mut rng);
        let selections = modality_pairs(k)
            .into_iter()
            .map(|mp| PairSelection {
                modalities: mp,
                positives: generate_positive_pairs(&labels, mp).unwrap(),
                negatives: generate_negative_pairs(&labels, mp, 2.0, 1.4, &mut rng).unwrap(),
            })
            .collect();
        (bank, encoders, features, selections)
    }

    #[test]
    fn scalar_case_matches_sign_times_inputs() {
        let cp = CorrelationPredictor::from_weights(Tensor2::new(1, 2, vec![0.5, 0.25]).unwrap()).unwrap();
        let bank = PredictorBank::from_predictors(vec![cp], false, false).unwrap();
        let emb: Embeddings = vec![vec![vec![2.0]], vec![vec![4.0]]];
        let pair = |polarity, target| BimodalPair { modalities: av(), o1: 0, o2: 0, polarity, target };
        // s = 0.5*2 + 0.25*4 = 2; positive target 1 and negative target 0.5.
        let sel = vec![PairSelection {
            modalities: av(),
            positives: vec![pair(PairPolarity::Positive, 1.0)],
            negatives: vec![pair(PairPolarity::Negative, 0.5)],
        }];
        let mut g = bank.zeros_like();
        let mut eg: Embeddings = vec![vec![vec![0.0]], vec![vec![0.0]]];
        let loss = correlation_backward(&bank, &emb, &sel, 1.0, &mut g, Some(&mut eg)).unwrap();
        assert!((loss.loss - (0.5 * 1.0 + 0.5 * 1.5)).abs() < 1e-15);
        // Both residuals are positive: d/dW = 0.5*x + 0.5*x = x.
        assert_eq!(g.predictors()[0].weights().data(), &[2.0, 4.0]);
        assert_eq!(eg, vec![vec![vec![0.5]], vec![vec![0.25]]]);
    }

    #[test]
    fn clamped_scores_saturate_without_gradient() {
        let cp = CorrelationPredictor::from_weights(Tensor2::new(1, 2, vec![0.5, 0.25]).unwrap()).unwrap();
        let bank = PredictorBank::from_predictors(vec![cp], false, true).unwrap();
        assert_eq!(bank.predict(0, &[2.0], &[4.0]).unwrap(), 1.0);
        assert_eq!(bank.predict(0, &[-2.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(bank.predict(0, &[0.5], &[1.0]).unwrap(), 0.5);
        let emb: Embeddings = vec![vec![vec![2.0], vec![0.5]], vec![vec![4.0], vec![1.0]]];
        // Saturated positive (raw 2) and an interior negative (raw 0.5, target 0.25).
        let sel = vec![PairSelection {
            modalities: av(),
            positives: vec![BimodalPair { modalities: av(), o1: 0, o2: 0, polarity: PairPolarity::Positive, target: 1.0 }],
            negatives: vec![BimodalPair { modalities: av(), o1: 1, o2: 1, polarity: PairPolarity::Negative, target: 0.25 }],
        }];
        let mut g = bank.zeros_like();
        let mut eg = zero_like(&emb);
        let loss = correlation_backward(&bank, &emb, &sel, 1.0, &mut g, Some(&mut eg)).unwrap();
        assert!((loss.loss - 0.5 * 0.25).abs() < 1e-15);
        assert_eq!(g.predictors()[0].weights().data(), &[0.25, 0.5]);
        assert_eq!(eg, vec![vec![vec![0.0], vec![0.25]], vec![vec![0.0], vec![0.125]]]);
    }

    fn zero_like(emb: &Embeddings) -> Embeddings {
        emb.iter().map(|m| m.iter().map(|e| vec![0.0; e.len()]).collect()).collect()
    }

    #[test]
    fn exact_predictions_give_zero_gradients() {
        let bank = PredictorBank::from_predictors(vec![CorrelationPredictor::zeros(1)], false, false).unwrap();
        let emb: Embeddings = vec![vec![vec![1.0], vec![2.0]], vec![vec![3.0], vec![4.0]]];
        let sel = vec![PairSelection {
            modalities: av(),
            positives: vec![BimodalPair { modalities: av(), o1: 0, o2: 0, polarity: PairPolarity::Positive, target: 0.0 }],
            negatives: vec![BimodalPair { modalities: av(), o1: 0, o2: 1, polarity: PairPolarity::Negative, target: 0.0 }],
        }];
        let mut g = bank.zeros_like();
        let loss = correlation_backward(&bank, &emb, &sel, 1.0, &mut g, None).unwrap();
        assert_eq!(loss.loss, 0.0);
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        #[derive(Clone)]
        struct Joint(PredictorBank, Vec<UnimodalEncoder>);
        impl Parameterized for Joint {
            fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
                self.0.collect(prefix, out);
                for (i, e) in self.1.iter().enumerate() {
                    e.collect(&format!("enc{i}"), out);
                }
            }
            fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
                self.0.collect_mut(prefix, out);
                for (i, e) in self.1.iter_mut().enumerate() {
                    e.collect_mut(&format!("enc{i}"), out);
                }
            }
        }
        for seed in 0..10 {
            let (bank, encoders, features, selections) = toy_setup(seed, 3, 4, 3, 5);
            let (_, bg, eg) = correlation_grads(&bank, &encoders, &features, &selections).unwrap();
            let point = Joint(bank, encoders);
            let analytic = Joint(bg, eg);
            let loss = |j: &Joint| correlation_grads(&j.0, &j.1, &features, &selections).unwrap().0.loss;
            let report = check_gradient(&point, loss, &analytic, 1e-6).unwrap();
            assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn predictor_alone_fits_linearly_realizable_scores() {
        // Targets come from a hidden linear map of fixed embeddings, so a zero
        // training MAE is attainable.
        let mut rng = stream(33, Stream::Init);
        let d = 4;
        let n = 40;
        let emb: Embeddings = (0..2)
            .map(|_| (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .collect();
        let hidden = CorrelationPredictor::init(d, &mut rng);
        let make = |o1: usize, o2: usize, polarity| BimodalPair {
            modalities: av(),
            o1,
            o2,
            polarity,
            target: hidden.predict_score(&emb[0][o1], &emb[1][o2]).unwrap(),
        };
        let positives: Vec<_> = (0..n).map(|o| make(o, o, PairPolarity::Positive)).collect();
        let negatives: Vec<_> = (0..n).flat_map(|o| [make(o, (o + 1) % n, PairPolarity::Negative), make(o, (o + 7) % n, PairPolarity::Negative)]).collect();
        let sel = vec![PairSelection { modalities: av(), positives, negatives }];
        let mut bank = PredictorBank::init(1, d, false, false, &mut rng);
        let mut adam = AdamState::new(&bank, AdamConfig::with_learning_rate(0.01)).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            let mut g = bank.zeros_like();
            last = correlation_backward(&bank, &emb, &sel, 1.0, &mut g, None).unwrap().loss;
            adam.step(&mut bank, &g).unwrap();
        }
        assert!(last < 0.05, "training MAE {last}");
    }
}
