//! Hyperparameters. Defaults are desk-scale; the larger values used on the
//! sentiment benchmarks are noted next to each field.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::numerics::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// Patience `p` (6 on MOSI, 5 on MOSEI).
    pub patience: usize,
    /// Forward factor `f`.
    pub forward_factor: f64,
    /// Backward factor `b`.
    pub backward_factor: f64,
    /// Partitions for positive streams (2 on MOSI, 8 on MOSEI).
    pub partitions_positive: usize,
    /// Partitions for negative streams.
    pub partitions_negative: usize,
    /// Weight `lambda` of the current-predictor loss in the difficulty score.
    pub lambda: f64,
    /// Pairs whose difficulty strictly exceeds this empirical percentile are
    /// dropped as noisy.
    pub discard_percentile: f64,
    /// Epochs during which only the pre-trained predictor scores difficulty.
    pub warm_up_epochs: usize,
    /// Share of the hardest partition's size drawn from the other partitions
    /// once the feeder sits on the hardest partition.
    pub augment_fraction: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            patience: 6,
            forward_factor: 0.1,
            backward_factor: 0.15,
            partitions_positive: 2,
            partitions_negative: 10,
            lambda: 0.8,
            discard_percentile: 0.95,
            warm_up_epochs: 2,
            augment_fraction: 0.5,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(config_err!("curriculum.patience must be >= 1"));
        }
        if !(self.forward_factor > 0.0) {
            return Err(config_err!("curriculum.forward_factor must be > 0"));
        }
        if !(self.backward_factor > 0.0) {
            return Err(config_err!("curriculum.backward_factor must be > 0"));
        }
        if self.partitions_positive < 1 || self.partitions_negative < 1 {
            return Err(config_err!("curriculum partitions must be >= 1"));
        }
        if !(self.lambda >= 0.0) {
            return Err(config_err!("curriculum.lambda must be >= 0"));
        }
        if !(self.discard_percentile > 0.0 && self.discard_percentile < 1.0) {
            return Err(config_err!("curriculum.discard_percentile must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.augment_fraction) {
            return Err(config_err!("curriculum.augment_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight `alpha` of the correlation loss.
    pub alpha: f64,
    /// Adam learning rate (2e-5 on MOSI with BERT features).
    pub learning_rate: f64,
    /// Batch size `n` (64 on MOSI, 48 on MOSEI).
    pub batch_size: usize,
    /// Main training epochs (20 on MOSI, 50 on MOSEI).
    pub epochs: usize,
    pub pretrain_epochs: usize,
    /// Negative sampling factor during pre-training.
    pub beta_pretrain: f64,
    /// Negative sampling factor in the main loop.
    pub beta_main: f64,
    /// Scale factor `gamma` bounding negative targets by `1/gamma`.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            pretrain_epochs: 40,
            beta_pretrain: 4.0,
            beta_main: 30.0,
            gamma: 1.4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(config_err!("train.alpha must be >= 0"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(config_err!("train.learning_rate must be > 0"));
        }
        if self.batch_size < 2 {
            return Err(config_err!("train.batch_size must be >= 2 to form negative pairs"));
        }
        if !(self.beta_pretrain > 0.0) || !(self.beta_main > 0.0) {
            return Err(config_err!("negative sampling factors must be > 0"));
        }
        if !(self.gamma > 1.0) {
            return Err(config_err!("train.gamma must be > 1, got {}", self.gamma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Shared embedding width `d` (100 on the benchmarks).
    pub embedding_dim: usize,
    pub encoder_hidden: Vec<usize>,
    /// Hidden widths of the fusion network; its output feeds the predictor.
    pub fusion_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
    pub activation: Activation,
    /// One correlation predictor for all modality pairs instead of one each.
    pub shared_predictor: bool,
    /// Clamp predicted correlation scores into `[0, 1]`.
    pub clamp_scores: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 16,
            encoder_hidden: vec![32],
            fusion_hidden: vec![32],
            predictor_hidden: vec![16],
            activation: Activation::Relu,
            shared_predictor: false,
            clamp_scores: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(config_err!("model.embedding_dim must be >= 1"));
        }
        if self.fusion_hidden.is_empty() {
            return Err(config_err!("model.fusion_hidden needs at least one layer"));
        }
        let all = self.encoder_hidden.iter().chain(&self.fusion_hidden).chain(&self.predictor_hidden);
        if all.into_iter().any(|&w| w == 0) {
            return Err(config_err!("hidden layer widths must be >= 1"));
        }
        Ok(())
    }
}

/// Each flag removes exactly one mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Drop the correlation loss (`alpha = 0`).
    pub no_correlation: bool,
    /// Feed every generated pair each iteration: no scoring, partitions or
    /// discarding.
    pub no_curriculum: bool,
    /// Patience 1.
    pub no_patience: bool,
    /// Never take the step-backward branch.
    pub no_backward: bool,
    /// Keep the hardest pairs.
    pub no_discard: bool,
    /// No replay of easier partitions from the hardest partition.
    pub no_random_sampling: bool,
}

impl Ablations {
    pub const NAMES: [&'static str; 6] = [
        "no-correlation",
        "no-curriculum",
        "no-patience",
        "no-backward",
        "no-discard",
        "no-random-sampling",
    ];

    pub fn enable(&mut self, name: &str) -> Result<()> {
        let flag = match name {
            "no-correlation" => &mut self.no_correlation,
            "no-curriculum" => &mut self.no_curriculum,
            "no-patience" => &mut self.no_patience,
            "no-backward" => &mut self.no_backward,
            "no-discard" => &mut self.no_discard,
            "no-random-sampling" => &mut self.no_random_sampling,
            other => return Err(config_err!("unknown ablation `{other}`")),
        };
        *flag = true;
        Ok(())
    }

    pub fn enabled(&self) -> Vec<&'static str> {
        let flags = [
            self.no_correlation,
            self.no_curriculum,
            self.no_patience,
            self.no_backward,
            self.no_discard,
            self.no_random_sampling,
        ];
        Self::NAMES.iter().zip(flags).filter(|(_, on)| *on).map(|(n, _)| *n).collect()
    }
}
