//! Synthetic multimodal regression data from a linear latent-factor model.
//!
//! Each sample draws a shared latent `z`; the label is `clamp(w . z, -3, 3)`
//! and modality `m` observes `A_m z + B_m u_m + noise` with a private latent
//! `u_m`. Contradictory-modality corruption swaps one modality's features
//! for another sample's and records which modality was replaced.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoders::ModalityId;
use crate::error::{config_err, Error, Result};
use crate::pairing::PairPolarity;
use crate::report::RunReport;
use crate::rng::{stream, Stream};

pub const LABEL_BOUND: f64 = 3.0;

/// Per-sample features for every modality plus continuous labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    widths: Vec<usize>,
    /// `[sample][modality][feature]`.
    features: Vec<Vec<Vec<f64>>>,
    labels: Vec<f64>,
}

impl SampleBatch {
    pub fn new(widths: Vec<usize>, features: Vec<Vec<Vec<f64>>>, labels: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(config_err!("need at least 2 modalities, got {}", widths.len()));
        }
        if features.len() != labels.len() {
            return Err(Error::Batch(alloc::format!(
                "{} feature rows for {} labels",
                features.len(),
                labels.len()
            )));
        }
        for (o, row) in features.iter().enumerate() {
            if row.len() != widths.len() {
                return Err(Error::Batch(alloc::format!("sample {o} has {} modalities", row.len())));
            }
            for (m, (f, &w)) in row.iter().zip(&widths).enumerate() {
                if f.len() != w {
                    return Err(Error::Batch(alloc::format!(
                        "sample {o} modality {m} has {} features, expected {w}",
                        f.len()
                    )));
                }
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Batch(alloc::format!("sample {o} modality {m} has a non-finite feature")));
                }
            }
        }
        if let Some(o) = labels.iter().position(|l| !l.is_finite()) {
            return Err(Error::Batch(alloc::format!("label {o} is not finite")));
        }
        Ok(Self { widths, features, labels })
    }

    pub fn modalities(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, sample: usize) -> f64 {
        self.labels[sample]
    }

    pub fn features(&self, sample: usize, modality: usize) -> &[f64] {
        &self.features[sample][modality]
    }

    pub fn sample(&self, sample: usize) -> &[Vec<f64>] {
        &self.features[sample]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub samples: usize,
    /// Feature width of each modality; `k` is the length.
    pub modality_widths: Vec<usize>,
    /// Latent factors shared by every modality and driving the label.
    pub shared_dim: usize,
    /// Per-modality latent factors unrelated to the label.
    pub private_dim: usize,
    /// Standard deviation of `w . z` before clamping.
    pub label_std: f64,
    /// Scale of the private factor loadings.
    pub private_scale: f64,
    /// Standard deviation of the isotropic feature noise.
    pub feature_noise: f64,
    /// Share of samples with one contradictory modality.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            samples: 600,
            modality_widths: vec![12, 12, 16],
            shared_dim: 4,
            private_dim: 4,
            label_std: 1.5,
            private_scale: 1.0,
            feature_noise: 0.25,
            noise_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn k(&self) -> usize {
        self.modality_widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(config_err!("synth.samples must be >= 2"));
        }
        if self.modality_widths.len() < 2 {
            return Err(config_err!("synth.modality_widths needs at least 2 modalities"));
        }
        if let Some(w) = self.modality_widths.iter().find(|&&w| w < self.shared_dim + self.private_dim || w == 0) {
            return Err(config_err!(
                "modality width {w} is smaller than shared_dim + private_dim = {}",
                self.shared_dim + self.private_dim
            ));
        }
        if !(self.label_std > 0.0) || !(self.feature_noise >= 0.0) || !(self.private_scale >= 0.0) {
            return Err(config_err!("synth scales must be non-negative (label_std positive)"));
        }
        if !(0.0..0.5).contains(&self.noise_fraction) {
            return Err(config_err!("synth.noise_fraction must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

/// Generated data plus the ground-truth corruption flags, which only the
/// evaluation helpers in this module read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub data: SampleBatch,
    /// The replaced modality of each corrupted sample.
    pub noise: Vec<Option<ModalityId>>,
}

impl SynthDataset {
    pub fn noisy_count(&self) -> usize {
        self.noise.iter().filter(|f| f.is_some()).count()
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| scale * gaussian(rng)).collect()).collect()
}

pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let k = cfg.k();
    let mut model_rng = stream(cfg.seed, Stream::SynthModel);
    let shared_scale = 1.0 / libm::sqrt(cfg.shared_dim.max(1) as f64);
    let private_scale = cfg.private_scale / libm::sqrt(cfg.private_dim.max(1) as f64);
    let mut label_weights: Vec<f64> = (0..cfg.shared_dim).map(|_| gaussian(&mut model_rng)).collect();
    let norm = libm::sqrt(label_weights.iter().map(|w| w * w).sum::<f64>());
    if norm > 0.0 {
        label_weights.iter_mut().for_each(|w| *w *= cfg.label_std / norm);
    }
    let loadings: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = cfg
        .modality_widths
        .iter()
        .map(|&w| {
            (
                gaussian_matrix(w, cfg.shared_dim, shared_scale, &mut model_rng),
                gaussian_matrix(w, cfg.private_dim, private_scale, &mut model_rng),
            )
        })
        .collect();

    let mut rng = stream(cfg.seed, Stream::SynthSamples);
    let mut features = Vec::with_capacity(cfg.samples);
    let mut labels = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let z: Vec<f64> = (0..cfg.shared_dim).map(|_| gaussian(&mut rng)).collect();
        let raw = if cfg.shared_dim == 0 {
            // No shared signal: the label is independent of every modality.
            cfg.label_std * gaussian(&mut rng)
        } else {
            label_weights.iter().zip(&z).map(|(w, x)| w * x).sum()
        };
        labels.push(raw.clamp(-LABEL_BOUND, LABEL_BOUND));
        let mut row = Vec::with_capacity(k);
        for (shared, private) in &loadings {
            let u: Vec<f64> = (0..cfg.private_dim).map(|_| gaussian(&mut rng)).collect();
            let f: Vec<f64> = shared
                .iter()
                .zip(private)
                .map(|(a, b)| {
                    let s: f64 = a.iter().zip(&z).map(|(x, y)| x * y).sum();
                    let p: f64 = b.iter().zip(&u).map(|(x, y)| x * y).sum();
                    s + p + cfg.feature_noise * gaussian(&mut rng)
                })
                .collect();
            row.push(f);
        }
        features.push(row);
    }
    let dataset = SynthDataset {
        data: SampleBatch::new(cfg.modality_widths.clone(), features, labels)?,
        noise: vec![None; cfg.samples],
    };
    inject_noise(dataset, cfg.noise_fraction, cfg.seed)
}

/// Corrupts `round(fraction * n)` uniformly chosen samples: one uniformly
/// chosen modality takes the (original) features of another sample.
pub fn inject_noise(mut dataset: SynthDataset, fraction: f64, seed: u64) -> Result<SynthDataset> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(config_err!("noise fraction must lie in [0, 0.5), got {fraction}"));
    }
    let n = dataset.data.len();
    let count = libm::round(fraction * n as f64) as usize;
    if count == 0 {
        return Ok(dataset);
    }
    let k = dataset.data.modalities();
    let mut rng = stream(seed, Stream::Noise);
    let mut chosen = index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    let original = dataset.data.features.clone();
    for o in chosen {
        let m = rng.random_range(0..k);
        let mut donor = rng.random_range(0..n - 1);
        if donor >= o {
            donor += 1;
        }
        dataset.data.features[o][m] = original[donor][m].clone();
        dataset.noise[o] = Some(ModalityId(m));
    }
    Ok(dataset)
}

/// Whether a positive pair (same sample, global index) involves the
/// corrupted modality of that sample.
pub fn is_noisy_positive(noise: &[Option<ModalityId>], modality_i: usize, modality_j: usize, sample: usize) -> bool {
    matches!(noise.get(sample), Some(Some(m)) if m.0 == modality_i || m.0 == modality_j)
}

/// Recall of noise-flagged positive pairs among discarded positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecall {
    pub noisy_positive_pairs: usize,
    pub noisy_discarded: usize,
    pub positive_pairs: usize,
    pub discarded: usize,
    pub recall: f64,
    /// Recall a uniformly random discard of the same size would reach.
    pub chance: f64,
}

/// Pools the positive-stream discard records from `from_epoch` on. Every
/// batch sample forms one positive pair per modality pair, so the batch
/// membership in the round records gives the denominators.
pub fn discard_recall(report: &RunReport, noise: &[Option<ModalityId>], from_epoch: usize) -> NoiseRecall {
    let mut batches = BTreeMap::new();
    for r in &report.rounds {
        batches.insert((r.epoch, r.batch), &r.samples);
    }
    let mut r = NoiseRecall { noisy_positive_pairs: 0, noisy_discarded: 0, positive_pairs: 0, discarded: 0, recall: 0.0, chance: 0.0 };
    for rec in report.discards.iter().filter(|d| d.polarity == PairPolarity::Positive && d.epoch >= from_epoch) {
        let Some(samples) = batches.get(&(rec.epoch, rec.batch)) else { continue };
        r.positive_pairs += samples.len();
        r.discarded += rec.discarded.len();
        r.noisy_positive_pairs +=
            samples.iter().filter(|&&o| is_noisy_positive(noise, rec.modality_i, rec.modality_j, o)).count();
        r.noisy_discarded += rec
            .discarded
            .iter()
            .filter(|[o1, _]| is_noisy_positive(noise, rec.modality_i, rec.modality_j, *o1))
            .count();
    }
    if r.noisy_positive_pairs > 0 {
        r.recall = r.noisy_discarded as f64 / r.noisy_positive_pairs as f64;
    }
    if r.positive_pairs > 0 {
        r.chance = r.discarded as f64 / r.positive_pairs as f64;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_noise_means_no_flags() {
        let d = generate_dataset(&SynthConfig::default()).unwrap();
        assert_eq!(d.noisy_count(), 0);
        assert_eq!(d.data.len(), 600);
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig { noise_fraction: 0.1, seed: 9, ..SynthConfig::default() };
        assert_eq!(generate_dataset(&cfg).unwrap(), generate_dataset(&cfg).unwrap());
        let other = SynthConfig { seed: 10, ..cfg.clone() };
        assert_ne!(generate_dataset(&cfg).unwrap(), generate_dataset(&other).unwrap());
    }

    #[test]
    fn labels_cover_the_scale() {
        let d = generate_dataset(&SynthConfig::default()).unwrap();
        let min = d.data.labels().iter().copied().fold(f64::INFINITY, f64::min);
        let max = d.data.labels().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(min < -2.0 && max > 2.0, "label range [{min}, {max}]");
        assert!(min >= -3.0 && max <= 3.0);
    }

    #[test]
    fn noise_injection_counts_and_swaps() {
        let base = generate_dataset(&SynthConfig::default()).unwrap();
        assert_eq!(inject_noise(base.clone(), 0.0, 1).unwrap(), base);
        let noisy = inject_noise(base.clone(), 0.1, 1).unwrap();
        assert_eq!(noisy.noisy_count(), 60);
        for (o, flag) in noisy.noise.iter().enumerate() {
            for m in 0..3 {
                let changed = noisy.data.features(o, m) != base.data.features(o, m);
                if changed {
                    assert_eq!(*flag, Some(ModalityId(m)));
                }
            }
            if let Some(m) = flag {
                let donor_exists = (0..600).any(|p| p != o && base.data.features(p, m.0) == noisy.data.features(o, m.0));
                assert!(donor_exists);
            }
        }
        assert_eq!(noisy.data.labels(), base.data.labels());
        assert!(inject_noise(base, 0.5, 1).is_err());
    }

    #[test]
    fn invalid_configs() {
        let narrow = SynthConfig { modality_widths: vec![4, 12], ..SynthConfig::default() };
        assert!(narrow.validate().is_err());
        let one = SynthConfig { modality_widths: vec![12], ..SynthConfig::default() };
        assert!(one.validate().is_err());
    }

    #[test]
    fn noisy_positive_needs_the_corrupted_modality() {
        let noise = vec![Some(ModalityId(2)), None, Some(ModalityId(0))];
        assert!(!is_noisy_positive(&noise, 0, 1, 0));
        assert!(is_noisy_positive(&noise, 1, 2, 0));
        assert!(!is_noisy_positive(&noise, 0, 1, 1));
        assert!(is_noisy_positive(&noise, 0, 1, 2));
        assert!(!is_noisy_positive(&noise, 0, 1, 7));
    }
}
