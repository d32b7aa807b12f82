//! Pre-training of the difficulty-scoring predictor and the joint training
//! loop: task MSE on the fused embeddings plus the curriculum-fed
//! correlation loss, `L + alpha * l_c`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Ablations, CurriculumConfig, ModelConfig, TrainConfig};
use crate::correlation::{correlation_backward, correlation_loss, pair_losses, Embeddings, PairSelection, PredictorBank};
use crate::curriculum::{
    difficulty_scores, discard_noisy, partition, Feeder, PairScorer, Partitioning, StreamInput, TrajectoryRecord,
};
use crate::encoders::{check_shared_dim, ModalityId, UnimodalEncoder};
use crate::error::{config_err, Error, Result};
use crate::numerics::{squared_error, Activation, AdamConfig, AdamState, Mlp, MlpCache, Parameterized};
use crate::pairing::{generate_negative_pairs, generate_positive_pairs, modality_pairs, BimodalPair, PairPolarity};
use crate::report::{ConfigEcho, DiscardRecord, EpochRecord, PretrainRecord, RoundRecord, RunReport, TrajectorySummary};
use crate::rng::{stream, Stream};
use crate::synth::SampleBatch;

/// `(target - prediction)^2`.
#[inline]
pub fn task_loss(target: f64, prediction: f64) -> f64 {
    squared_error(target, prediction)
}

/// `task + alpha * correlation`.
#[inline]
pub fn total_loss(task: f64, correlation: f64, alpha: f64) -> f64 {
    task + alpha * correlation
}

/// Fusion network over the concatenated embeddings followed by the scalar
/// multimodal predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionHead {
    fusion: Mlp,
    predictor: Mlp,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    fusion: MlpCache,
    fused_pre: Vec<f64>,
    predictor: MlpCache,
}

impl FusionHead {
    pub fn init<R: Rng + ?Sized>(
        input_width: usize,
        fusion_hidden: &[usize],
        predictor_hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut fusion_widths = vec![input_width];
        fusion_widths.extend_from_slice(fusion_hidden);
        let mut predictor_widths = vec![*fusion_widths.last().unwrap_or(&input_width)];
        predictor_widths.extend_from_slice(predictor_hidden);
        predictor_widths.push(1);
        let fusion = Mlp::init(&fusion_widths, activation, rng)?;
        let predictor = Mlp::init(&predictor_widths, activation, rng)?;
        Ok(Self { fusion, predictor })
    }

    pub fn from_parts(fusion: Mlp, predictor: Mlp) -> Result<Self> {
        if fusion.output_width() != predictor.input_width() {
            return Err(config_err!(
                "fusion emits {} values but the predictor expects {}",
                fusion.output_width(),
                predictor.input_width()
            ));
        }
        if predictor.output_width() != 1 {
            return Err(config_err!("the multimodal predictor must emit one value"));
        }
        Ok(Self { fusion, predictor })
    }

    pub fn fusion(&self) -> &Mlp {
        &self.fusion
    }

    pub fn predictor(&self) -> &Mlp {
        &self.predictor
    }

    pub fn input_width(&self) -> usize {
        self.fusion.input_width()
    }

    pub fn zeros_like(&self) -> Self {
        Self { fusion: self.fusion.zeros_like(), predictor: self.predictor.zeros_like() }
    }

    fn concat(&self, embeddings: &[&[f64]]) -> Result<Vec<f64>> {
        let width: usize = embeddings.iter().map(|e| e.len()).sum();
        if width != self.input_width() {
            return Err(config_err!("fusion head expects {} inputs, got {width}", self.input_width()));
        }
        Ok(embeddings.iter().flat_map(|e| e.iter().copied()).collect())
    }

    pub fn fuse_and_predict(&self, embeddings: &[&[f64]]) -> Result<f64> {
        let x = self.concat(embeddings)?;
        let act = self.fusion.activation();
        let fused: Vec<f64> = self.fusion.predict(&x)?.into_iter().map(|v| act.apply(v)).collect();
        Ok(self.predictor.predict(&fused)?[0])
    }

    fn forward(&self, embeddings: &[&[f64]]) -> Result<(f64, HeadCache)> {
        let x = self.concat(embeddings)?;
        let act = self.fusion.activation();
        let (fused_pre, fusion) = self.fusion.forward(&x)?;
        let fused: Vec<f64> = fused_pre.iter().map(|&v| act.apply(v)).collect();
        let (out, predictor) = self.predictor.forward(&fused)?;
        Ok((out[0], HeadCache { fusion, fused_pre, predictor }))
    }

    fn backward_into(&self, cache: &HeadCache, output_grad: f64, grads: &mut FusionHead) -> Result<Vec<f64>> {
        let act = self.fusion.activation();
        let d_fused = self.predictor.backward_into(&cache.predictor, &[output_grad], &mut grads.predictor)?;
        let d_pre: Vec<f64> = d_fused.iter().zip(&cache.fused_pre).map(|(g, &p)| g * act.derivative(p)).collect();
        self.fusion.backward_into(&cache.fusion, &d_pre, &mut grads.fusion)
    }
}

impl Parameterized for FusionHead {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.fusion.collect(&crate::numerics::params_join(prefix, "fusion"), out);
        self.predictor.collect(&crate::numerics::params_join(prefix, "predictor"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.fusion.collect_mut(&crate::numerics::params_join(prefix, "fusion"), out);
        self.predictor.collect_mut(&crate::numerics::params_join(prefix, "predictor"), out);
    }
}

fn collect_encoders<'a>(encoders: &'a [UnimodalEncoder], out: &mut Vec<(String, &'a [f64])>) {
    for e in encoders {
        e.collect(&format!("encoder{}", e.modality()), out);
    }
}

fn collect_encoders_mut<'a>(encoders: &'a mut [UnimodalEncoder], out: &mut Vec<(String, &'a mut [f64])>) {
    for e in encoders {
        let name = format!("encoder{}", e.modality());
        e.collect_mut(&name, out);
    }
}

type EncoderCaches = Vec<Vec<MlpCache>>;

fn encode_batch(encoders: &[UnimodalEncoder], data: &SampleBatch, ids: &[usize]) -> Result<Embeddings> {
    encoders
        .iter()
        .enumerate()
        .map(|(m, enc)| ids.iter().map(|&o| enc.encode(data.features(o, m))).collect())
        .collect()
}

fn encode_batch_cached(encoders: &[UnimodalEncoder], data: &SampleBatch, ids: &[usize]) -> Result<(Embeddings, EncoderCaches)> {
    let mut embeddings = Vec::with_capacity(encoders.len());
    let mut caches = Vec::with_capacity(encoders.len());
    for (m, enc) in encoders.iter().enumerate() {
        let mut e = Vec::with_capacity(ids.len());
        let mut c = Vec::with_capacity(ids.len());
        for &o in ids {
            let (emb, cache) = enc.encode_with_cache(data.features(o, m))?;
            e.push(emb);
            c.push(cache);
        }
        embeddings.push(e);
        caches.push(c);
    }
    Ok((embeddings, caches))
}

fn backprop_encoders(
    encoders: &[UnimodalEncoder],
    caches: &EncoderCaches,
    embedding_grads: &Embeddings,
    grads: &mut [UnimodalEncoder],
) -> Result<()> {
    for (m, enc) in encoders.iter().enumerate() {
        for (cache, g) in caches[m].iter().zip(&embedding_grads[m]) {
            if g.iter().any(|&v| v != 0.0) {
                enc.backward_into(cache, g, &mut grads[m])?;
            }
        }
    }
    Ok(())
}

fn zero_embeddings(embeddings: &Embeddings) -> Embeddings {
    embeddings.iter().map(|m| m.iter().map(|e| vec![0.0; e.len()]).collect()).collect()
}

fn check_data(data: &SampleBatch, encoders: &[UnimodalEncoder]) -> Result<()> {
    if data.modalities() != encoders.len() {
        return Err(config_err!("data has {} modalities, model has {}", data.modalities(), encoders.len()));
    }
    for (enc, &w) in encoders.iter().zip(data.widths()) {
        if enc.input_width() != w {
            return Err(config_err!(
                "modality {} has {w} features, its encoder expects {}",
                enc.modality(),
                enc.input_width()
            ));
        }
    }
    Ok(())
}

/// Encoders, correlation predictors and the fusion head trained together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub encoders: Vec<UnimodalEncoder>,
    pub bank: PredictorBank,
    pub head: FusionHead,
}

/// Forward state of one batch, reused by the backward pass.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub embeddings: Embeddings,
    pub predictions: Vec<f64>,
    encoder_caches: EncoderCaches,
    head_caches: Vec<HeadCache>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchTerms {
    pub task_loss: f64,
    pub correlation_loss: Option<f64>,
    pub total: f64,
}

impl Model {
    pub fn init<R: Rng + ?Sized>(widths: &[usize], cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let k = widths.len();
        if k < 2 {
            return Err(config_err!("need at least 2 modalities"));
        }
        let d = cfg.embedding_dim;
        let encoders = widths
            .iter()
            .enumerate()
            .map(|(m, &w)| UnimodalEncoder::init(ModalityId(m), w, &cfg.encoder_hidden, d, cfg.activation, rng))
            .collect::<Result<Vec<_>>>()?;
        let bank = PredictorBank::init(k * (k - 1) / 2, d, cfg.shared_predictor, cfg.clamp_scores, rng);
        let head = FusionHead::init(k * d, &cfg.fusion_hidden, &cfg.predictor_hidden, cfg.activation, rng)?;
        Self::from_parts(encoders, bank, head)
    }

    pub fn from_parts(encoders: Vec<UnimodalEncoder>, bank: PredictorBank, head: FusionHead) -> Result<Self> {
        let d = check_shared_dim(&encoders)?;
        if head.input_width() != encoders.len() * d {
            return Err(config_err!(
                "fusion head expects {} inputs, {} encoders of width {d} give {}",
                head.input_width(),
                encoders.len(),
                encoders.len() * d
            ));
        }
        if bank.predictors().iter().any(|p| p.embedding_dim() != d) {
            return Err(config_err!("correlation predictors must take width-{d} embeddings"));
        }
        Ok(Self { encoders, bank, head })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoders: self.encoders.iter().map(|e| e.zeros_like()).collect(),
            bank: self.bank.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    pub fn modalities(&self) -> usize {
        self.encoders.len()
    }

    pub fn embed(&self, data: &SampleBatch, ids: &[usize]) -> Result<Embeddings> {
        encode_batch(&self.encoders, data, ids)
    }

    pub fn predict(&self, data: &SampleBatch, sample: usize) -> Result<f64> {
        let embeddings: Vec<Vec<f64>> = self
            .encoders
            .iter()
            .enumerate()
            .map(|(m, enc)| enc.encode(data.features(sample, m)))
            .collect::<Result<_>>()?;
        let refs: Vec<&[f64]> = embeddings.iter().map(|e| e.as_slice()).collect();
        self.head.fuse_and_predict(&refs)
    }

    /// Mean task loss over `ids`; 0 for an empty set.
    pub fn mse(&self, data: &SampleBatch, ids: &[usize]) -> Result<f64> {
        if ids.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for &o in ids {
            total += task_loss(data.label(o), self.predict(data, o)?);
        }
        Ok(total / ids.len() as f64)
    }

    pub fn forward(&self, data: &SampleBatch, ids: &[usize]) -> Result<BatchForward> {
        check_data(data, &self.encoders)?;
        let (embeddings, encoder_caches) = encode_batch_cached(&self.encoders, data, ids)?;
        let mut predictions = Vec::with_capacity(ids.len());
        let mut head_caches = Vec::with_capacity(ids.len());
        for o in 0..ids.len() {
            let refs: Vec<&[f64]> = embeddings.iter().map(|m| m[o].as_slice()).collect();
            let (p, c) = self.head.forward(&refs)?;
            predictions.push(p);
            head_caches.push(c);
        }
        Ok(BatchForward { embeddings, predictions, encoder_caches, head_caches })
    }

    /// Loss terms for a batch, optionally accumulating the gradient of
    /// `mean task loss + alpha * l_c` into `grads`. Pair indices in
    /// `selections` are positions within `ids`.
    pub fn backward(
        &self,
        fwd: &BatchForward,
        data: &SampleBatch,
        ids: &[usize],
        selections: Option<&[PairSelection]>,
        alpha: f64,
        grads: Option<&mut Model>,
    ) -> Result<BatchTerms> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::Batch("empty batch".into()));
        }
        let mut task = 0.0;
        for (p, &o) in fwd.predictions.iter().zip(ids) {
            task += task_loss(data.label(o), *p);
        }
        task /= n as f64;

        let Some(grads) = grads else {
            let correlation = match selections {
                Some(sel) => Some(correlation_loss(&self.bank, &fwd.embeddings, sel)?.loss),
                None => None,
            };
            let total = total_loss(task, correlation.unwrap_or(0.0), alpha);
            return Ok(BatchTerms { task_loss: task, correlation_loss: correlation, total });
        };

        let mut emb_grads = zero_embeddings(&fwd.embeddings);
        let d = self.encoders[0].embedding_dim();
        for (o, (&sample, cache)) in ids.iter().zip(&fwd.head_caches).enumerate() {
            let dl = -2.0 * (data.label(sample) - fwd.predictions[o]) / n as f64;
            let dx = self.head.backward_into(cache, dl, &mut grads.head)?;
            for (m, chunk) in dx.chunks(d).enumerate() {
                for (g, v) in emb_grads[m][o].iter_mut().zip(chunk) {
                    *g += v;
                }
            }
        }
        let correlation = match selections {
            Some(sel) => Some(
                correlation_backward(&self.bank, &fwd.embeddings, sel, alpha, &mut grads.bank, Some(&mut emb_grads))?
                    .loss,
            ),
            None => None,
        };
        backprop_encoders(&self.encoders, &fwd.encoder_caches, &emb_grads, &mut grads.encoders)?;
        let total = total_loss(task, correlation.unwrap_or(0.0), alpha);
        if !total.is_finite() {
            return Err(Error::Training(format!("non-finite total loss {total}")));
        }
        Ok(BatchTerms { task_loss: task, correlation_loss: correlation, total })
    }

    /// Loss and fresh gradients for one batch.
    pub fn objective(
        &self,
        data: &SampleBatch,
        ids: &[usize],
        selections: Option<&[PairSelection]>,
        alpha: f64,
    ) -> Result<(BatchTerms, Model)> {
        let fwd = self.forward(data, ids)?;
        let mut grads = self.zeros_like();
        let terms = self.backward(&fwd, data, ids, selections, alpha, Some(&mut grads))?;
        Ok((terms, grads))
    }

    pub fn loss(&self, data: &SampleBatch, ids: &[usize], selections: Option<&[PairSelection]>, alpha: f64) -> Result<f64> {
        let fwd = self.forward(data, ids)?;
        Ok(self.backward(&fwd, data, ids, selections, alpha, None)?.total)
    }
}

impl Parameterized for Model {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        let _ = prefix;
        collect_encoders(&self.encoders, out);
        self.bank.collect("", out);
        self.head.collect("head", out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        let _ = prefix;
        collect_encoders_mut(&mut self.encoders, out);
        self.bank.collect_mut("", out);
        self.head.collect_mut("head", out);
    }
}

/// Frozen predictor and the encoder snapshot it was trained with. Nothing
/// mutates it once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pretrained {
    encoders: Vec<UnimodalEncoder>,
    bank: PredictorBank,
}

impl Pretrained {
    pub fn bank(&self) -> &PredictorBank {
        &self.bank
    }

    pub fn encoders(&self) -> &[UnimodalEncoder] {
        &self.encoders
    }

    pub fn embed(&self, data: &SampleBatch, ids: &[usize]) -> Result<Embeddings> {
        encode_batch(&self.encoders, data, ids)
    }
}

#[derive(Clone)]
struct PretrainModel {
    encoders: Vec<UnimodalEncoder>,
    bank: PredictorBank,
}

impl PretrainModel {
    fn zeros_like(&self) -> Self {
        Self { encoders: self.encoders.iter().map(|e| e.zeros_like()).collect(), bank: self.bank.zeros_like() }
    }
}

impl Parameterized for PretrainModel {
    fn collect<'a>(&'a self, _prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        collect_encoders(&self.encoders, out);
        self.bank.collect("", out);
    }

    fn collect_mut<'a>(&'a mut self, _prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        collect_encoders_mut(&mut self.encoders, out);
        self.bank.collect_mut("", out);
    }
}

fn batches_of(ids: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    ids.chunks(batch_size).filter(|c| c.len() >= 2).map(|c| c.to_vec()).collect()
}

fn batch_labels(data: &SampleBatch, ids: &[usize]) -> Vec<f64> {
    ids.iter().map(|&o| data.label(o)).collect()
}

/// Positives and `round(beta * n)` negatives per modality pair, indices
/// local to the batch.
fn all_pairs<R: Rng + ?Sized>(labels: &[f64], k: usize, beta: f64, gamma: f64, rng: &mut R) -> Result<Vec<PairSelection>> {
    modality_pairs(k)
        .into_iter()
        .map(|mp| {
            Ok(PairSelection {
                modalities: mp,
                positives: generate_positive_pairs(labels, mp)?,
                negatives: generate_negative_pairs(labels, mp, beta, gamma, rng)?,
            })
        })
        .collect()
}

/// Optional target override used to test pre-training on scores that are
/// not derived from labels: `(pair, global o1, global o2) -> target`.
type Retarget<'a> = &'a dyn Fn(&BimodalPair, usize, usize) -> f64;

/// Trains encoders and predictors on randomly ordered pairs (all pairs of
/// each batch, negatives at `beta_pretrain`) and freezes the result.
pub fn pretrain_correlation_predictor(
    data: &SampleBatch,
    train_ids: &[usize],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(Pretrained, Vec<PretrainRecord>)> {
    pretrain_with_targets(data, train_ids, model_cfg, train_cfg, None)
}

fn pretrain_with_targets(
    data: &SampleBatch,
    train_ids: &[usize],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    retarget: Option<Retarget<'_>>,
) -> Result<(Pretrained, Vec<PretrainRecord>)> {
    if train_ids.is_empty() {
        return Err(Error::Batch("pre-training needs a non-empty dataset".into()));
    }
    model_cfg.validate()?;
    train_cfg.validate()?;
    let k = data.modalities();
    let d = model_cfg.embedding_dim;
    let mut init = stream(train_cfg.seed, Stream::PretrainInit);
    let encoders = data
        .widths()
        .iter()
        .enumerate()
        .map(|(m, &w)| UnimodalEncoder::init(ModalityId(m), w, &model_cfg.encoder_hidden, d, model_cfg.activation, &mut init))
        .collect::<Result<Vec<_>>>()?;
    let bank = PredictorBank::init(k * (k - 1) / 2, d, model_cfg.shared_predictor, model_cfg.clamp_scores, &mut init);
    let mut model = PretrainModel { encoders, bank };
    let mut adam = AdamState::new(&model, AdamConfig::with_learning_rate(train_cfg.learning_rate))?;
    let mut rng = stream(train_cfg.seed, Stream::PretrainData);
    let mut order = train_ids.to_vec();
    let mut curve = Vec::with_capacity(train_cfg.pretrain_epochs);
    for epoch in 0..train_cfg.pretrain_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, ids) in batches_of(&order, train_cfg.batch_size).iter().enumerate() {
            let labels = batch_labels(data, ids);
            let mut selections = all_pairs(&labels, k, train_cfg.beta_pretrain, train_cfg.gamma, &mut rng)?;
            if let Some(f) = retarget {
                for sel in &mut selections {
                    for p in sel.positives.iter_mut().chain(sel.negatives.iter_mut()) {
                        p.target = f(p, ids[p.o1], ids[p.o2]);
                    }
                }
            }
            let (embeddings, caches) = encode_batch_cached(&model.encoders, data, ids)?;
            let mut grads = model.zeros_like();
            let mut emb_grads = zero_embeddings(&embeddings);
            let loss = correlation_backward(&model.bank, &embeddings, &selections, 1.0, &mut grads.bank, Some(&mut emb_grads))
                .map_err(|e| provenance("pre-training", epoch, b, e))?;
            backprop_encoders(&model.encoders, &caches, &emb_grads, &mut grads.encoders)?;
            adam.step(&mut model, &grads).map_err(|e| provenance("pre-training", epoch, b, e))?;
            total += loss.loss;
            batches += 1;
        }
        curve.push(PretrainRecord { epoch, correlation_loss: total / batches.max(1) as f64 });
    }
    Ok((Pretrained { encoders: model.encoders, bank: model.bank }, curve))
}

fn provenance(phase: &str, epoch: usize, batch: usize, err: Error) -> Error {
    match err {
        Error::Training(msg) => Error::Training(format!("{phase} epoch {epoch} batch {batch}: {msg}")),
        other => other,
    }
}

/// Seeded 80/10/10 split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut stream(seed, Stream::Data));
        let train_len = n * 8 / 10;
        let val_len = n / 10;
        let test = ids.split_off(train_len + val_len);
        let val = ids.split_off(train_len);
        Self { train: ids, val, test }
    }
}

/// Pairs of one stream of one batch, sorted by difficulty when the
/// curriculum is on, with their partitions.
#[derive(Debug, Clone)]
struct StreamPairs {
    sorted: Vec<BimodalPair>,
    partitions: Partitioning,
    generated: usize,
}

fn stream_index(pair_index: usize, polarity: PairPolarity) -> usize {
    2 * pair_index + usize::from(polarity == PairPolarity::Negative)
}

/// Everything a full run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub report: RunReport,
    pub model: Model,
    pub pretrained: Option<Pretrained>,
}

/// Full pipeline on `data`: split, pre-train the scoring predictor when the
/// curriculum needs it, then train.
pub fn run_pipeline(
    data: &SampleBatch,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    curriculum_cfg: &CurriculumConfig,
    ablations: &Ablations,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    curriculum_cfg.validate()?;
    let split = DataSplit::new(data.len(), train_cfg.seed);
    if split.train.len() < 2 {
        return Err(Error::Batch(format!("{} samples leave too few for training", data.len())));
    }
    let needs_pretrain = !ablations.no_correlation && !ablations.no_curriculum;
    let (pretrained, curve) = if needs_pretrain {
        let (p, c) = pretrain_correlation_predictor(data, &split.train, model_cfg, train_cfg)?;
        (Some(p), c)
    } else {
        (None, Vec::new())
    };
    let (mut report, model) =
        train_with(data, &split, pretrained.as_ref(), model_cfg, train_cfg, curriculum_cfg, ablations)?;
    report.pretrain = curve;
    Ok(TrainOutcome { report, model, pretrained })
}

/// [`run_pipeline`] keeping only the report.
pub fn train(
    data: &SampleBatch,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    curriculum_cfg: &CurriculumConfig,
    ablations: &Ablations,
) -> Result<RunReport> {
    run_pipeline(data, model_cfg, train_cfg, curriculum_cfg, ablations).map(|o| o.report)
}

/// The main loop given a split and, when the curriculum is on, a frozen
/// pre-trained predictor.
pub fn train_with(
    data: &SampleBatch,
    split: &DataSplit,
    pretrained: Option<&Pretrained>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    curriculum_cfg: &CurriculumConfig,
    ablations: &Ablations,
) -> Result<(RunReport, Model)> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    curriculum_cfg.validate()?;
    let k = data.modalities();
    let correlation_on = !ablations.no_correlation;
    let curriculum_on = correlation_on && !ablations.no_curriculum;
    let pretrained = match (curriculum_on, pretrained) {
        (true, Some(p)) => {
            check_data(data, &p.encoders)?;
            Some(p)
        }
        (true, None) => return Err(config_err!("the curriculum needs a pre-trained correlation predictor")),
        (false, _) => None,
    };
    let alpha = train_cfg.alpha;

    let mut model = Model::init(data.widths(), model_cfg, &mut stream(train_cfg.seed, Stream::Init))?;
    let mut adam = AdamState::new(&model, AdamConfig::with_learning_rate(train_cfg.learning_rate))?;
    let mut data_rng = stream(train_cfg.seed ^ 0x5eed_da7a, Stream::Data);
    let mut pair_rng = stream(train_cfg.seed, Stream::Pairing);
    let mut feeder = curriculum_on.then(|| Feeder::new(k, curriculum_cfg, ablations, train_cfg.seed));
    let pair_list = modality_pairs(k);

    let mut report = RunReport {
        seed: train_cfg.seed,
        config: ConfigEcho {
            model: model_cfg.clone(),
            train: train_cfg.clone(),
            curriculum: curriculum_cfg.clone(),
            ablations: ablations.enabled().into_iter().map(ToString::to_string).collect(),
        },
        pretrain: Vec::new(),
        initial_train_mse: model.mse(data, &split.train)?,
        initial_val_mse: model.mse(data, &split.val)?,
        epochs: Vec::new(),
        rounds: Vec::new(),
        trajectory: Vec::new(),
        discards: Vec::new(),
        trajectory_summary: None,
        noise_recall: None,
        final_train_mse: 0.0,
        final_val_mse: 0.0,
        final_test_mse: 0.0,
    };

    let mut order = split.train.clone();
    for epoch in 0..train_cfg.epochs {
        order.shuffle(&mut data_rng);
        let batches = batches_of(&order, train_cfg.batch_size);
        let warm_up = epoch < curriculum_cfg.warm_up_epochs;

        // Pairs for this epoch, scored and partitioned once.
        let mut epoch_pairs: Vec<Vec<StreamPairs>> = Vec::with_capacity(batches.len());
        if correlation_on {
            for (b, ids) in batches.iter().enumerate() {
                let labels = batch_labels(data, ids);
                let generated = all_pairs(&labels, k, train_cfg.beta_main, train_cfg.gamma, &mut pair_rng)?;
                let mut streams = Vec::with_capacity(2 * generated.len());
                let scoring = match pretrained {
                    Some(p) => Some((p.embed(data, ids)?, if warm_up { None } else { Some(model.embed(data, ids)?) })),
                    None => None,
                };
                for (p, sel) in generated.into_iter().enumerate() {
                    for (polarity, pairs) in [(PairPolarity::Positive, sel.positives), (PairPolarity::Negative, sel.negatives)] {
                        let generated = pairs.len();
                        let entry = match (&scoring, pretrained, feeder.as_ref()) {
                            (Some((pre_emb, cur_emb)), Some(pre), Some(f)) => {
                                let pre_scorer = PairScorer { bank: &pre.bank, embeddings: pre_emb, pair_index: p };
                                let cur_scorer = PairScorer {
                                    bank: &model.bank,
                                    embeddings: cur_emb.as_ref().unwrap_or(pre_emb),
                                    pair_index: p,
                                };
                                let scored = difficulty_scores(&pairs, pre_scorer, cur_scorer, curriculum_cfg.lambda, warm_up)?;
                                let percentile = (!ablations.no_discard).then_some(curriculum_cfg.discard_percentile);
                                let outcome = discard_noisy(scored, percentile);
                                if percentile.is_some() {
                                    report.discards.push(DiscardRecord {
                                        epoch,
                                        batch: b,
                                        modality_i: sel.modalities.first.0,
                                        modality_j: sel.modalities.second.0,
                                        polarity,
                                        warm_up,
                                        scored: generated,
                                        threshold: outcome.threshold,
                                        discarded: outcome.discarded.iter().map(|s| [ids[s.pair.o1], ids[s.pair.o2]]).collect(),
                                    });
                                }
                                let sorted: Vec<BimodalPair> = outcome.retained.iter().map(|s| s.pair).collect();
                                let partitions = partition(sorted.len(), f.partition_count(polarity))?;
                                StreamPairs { sorted, partitions, generated }
                            }
                            _ => {
                                let partitions = partition(pairs.len(), 1)?;
                                StreamPairs { sorted: pairs, partitions, generated }
                            }
                        };
                        streams.push(entry);
                    }
                }
                epoch_pairs.push(streams);
            }
        }

        let mut task_sum = 0.0;
        let mut corr_sum = 0.0;
        for (b, ids) in batches.iter().enumerate() {
            let fwd = model.forward(data, ids)?;
            let mut generated_counts = Vec::new();
            let mut selected_counts = Vec::new();
            let selections: Option<Vec<PairSelection>> = if correlation_on {
                let streams = &epoch_pairs[b];
                let mut chosen: Vec<Vec<BimodalPair>> = Vec::with_capacity(streams.len());
                if let Some(f) = feeder.as_mut() {
                    let mut losses = Vec::with_capacity(streams.len());
                    for (s, sp) in streams.iter().enumerate() {
                        let l = pair_losses(&model.bank, s / 2, &fwd.embeddings, &sp.sorted)?;
                        losses.push(l.iter().sum::<f64>() / l.len().max(1) as f64);
                    }
                    let inputs: Vec<StreamInput<'_>> = streams
                        .iter()
                        .zip(&losses)
                        .map(|(sp, &loss_now)| StreamInput { loss_now, partitions: &sp.partitions })
                        .collect();
                    let outcomes = f.run_round(&inputs).map_err(|e| provenance("training", epoch, b, e))?;
                    for ((outcome, record), sp) in outcomes.into_iter().zip(streams) {
                        chosen.push(outcome.selected.iter().map(|&i| sp.sorted[i]).collect());
                        report.trajectory.push(record);
                    }
                } else {
                    chosen.extend(streams.iter().map(|sp| sp.sorted.clone()));
                }
                generated_counts = streams.iter().map(|sp| sp.generated).collect();
                selected_counts = chosen.iter().map(Vec::len).collect();
                let mut it = chosen.into_iter();
                Some(
                    pair_list
                        .iter()
                        .map(|&mp| PairSelection {
                            modalities: mp,
                            positives: it.next().unwrap_or_default(),
                            negatives: it.next().unwrap_or_default(),
                        })
                        .collect(),
                )
            } else {
                None
            };
            report.rounds.push(RoundRecord {
                round: report.rounds.len(),
                epoch,
                batch: b,
                samples: ids.clone(),
                generated: generated_counts,
                selected: selected_counts,
            });
            let mut grads = model.zeros_like();
            let terms = model
                .backward(&fwd, data, ids, selections.as_deref(), alpha, Some(&mut grads))
                .map_err(|e| provenance("training", epoch, b, e))?;
            adam.step(&mut model, &grads).map_err(|e| provenance("training", epoch, b, e))?;
            task_sum += terms.task_loss;
            corr_sum += terms.correlation_loss.unwrap_or(0.0);
        }
        let nb = batches.len().max(1) as f64;
        let train_mse = model.mse(data, &split.train)?;
        let val_mse = model.mse(data, &split.val)?;
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(Error::Training(format!("epoch {epoch}: non-finite evaluation loss")));
        }
        report.epochs.push(EpochRecord {
            epoch,
            batch_task_loss: task_sum / nb,
            correlation_loss: correlation_on.then_some(corr_sum / nb),
            train_mse,
            val_mse,
        });
    }

    if let Some(f) = feeder.as_ref() {
        report.trajectory_summary = Some(summarize_trajectory(&report.trajectory, f, &pair_list));
    }
    report.final_train_mse = model.mse(data, &split.train)?;
    report.final_val_mse = model.mse(data, &split.val)?;
    report.final_test_mse = model.mse(data, &split.test)?;
    Ok((report, model))
}

fn summarize_trajectory(
    trajectory: &[TrajectoryRecord],
    feeder: &Feeder,
    pairs: &[crate::pairing::ModalityPair],
) -> TrajectorySummary {
    let rounds = feeder.rounds();
    let mut first = vec![None; feeder.streams().len()];
    for rec in trajectory {
        let p = pairs
            .iter()
            .position(|mp| mp.first.0 == rec.modality_i && mp.second.0 == rec.modality_j)
            .unwrap_or(0);
        let s = stream_index(p, rec.polarity);
        if first[s].is_none() && rec.c_i >= feeder.partition_count(rec.polarity) {
            first[s] = Some(rec.round);
        }
    }
    let mut sums = [0.0, 0.0];
    let mut reached = [0usize, 0];
    let mut counts = [0usize, 0];
    for (s, id) in feeder.streams().iter().enumerate() {
        let side = usize::from(id.polarity == PairPolarity::Negative);
        counts[side] += 1;
        match first[s] {
            Some(r) => {
                sums[side] += r as f64;
                reached[side] += 1;
            }
            None => sums[side] += rounds as f64,
        }
    }
    TrajectorySummary {
        positive_first_max_round: sums[0] / counts[0].max(1) as f64,
        negative_first_max_round: sums[1] / counts[1].max(1) as f64,
        positive_reached: reached[0],
        negative_reached: reached[1],
        rounds,
    }
}
