//! The record a training run returns. Serialised by the `corrcurr` crate.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::{CurriculumConfig, ModelConfig, TrainConfig};
use crate::curriculum::TrajectoryRecord;
use crate::pairing::PairPolarity;
use crate::synth::NoiseRecall;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub curriculum: CurriculumConfig,
    pub ablations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainRecord {
    pub epoch: usize,
    pub correlation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch task losses seen while training.
    pub batch_task_loss: f64,
    /// Mean of the per-batch correlation losses; absent without correlation.
    pub correlation_loss: Option<f64>,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Pairs generated and fed per stream in one batch iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub epoch: usize,
    pub batch: usize,
    /// Global sample ids of the batch.
    pub samples: Vec<usize>,
    pub generated: Vec<usize>,
    pub selected: Vec<usize>,
}

/// Pairs dropped as noisy from one stream of one batch at rescoring time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardRecord {
    pub epoch: usize,
    pub batch: usize,
    pub modality_i: usize,
    pub modality_j: usize,
    pub polarity: PairPolarity,
    pub warm_up: bool,
    pub scored: usize,
    pub threshold: Option<f64>,
    /// Global `(o1, o2)` sample ids.
    pub discarded: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    /// Mean over positive streams of the first round at which `c_i` reached
    /// the stream's partition count; streams that never got there count as
    /// the total number of rounds.
    pub positive_first_max_round: f64,
    pub negative_first_max_round: f64,
    pub positive_reached: usize,
    pub negative_reached: usize,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: ConfigEcho,
    pub pretrain: Vec<PretrainRecord>,
    pub initial_train_mse: f64,
    pub initial_val_mse: f64,
    pub epochs: Vec<EpochRecord>,
    pub rounds: Vec<RoundRecord>,
    pub trajectory: Vec<TrajectoryRecord>,
    pub discards: Vec<DiscardRecord>,
    pub trajectory_summary: Option<TrajectorySummary>,
    /// Filled in by evaluation code that can see the corruption flags.
    pub noise_recall: Option<NoiseRecall>,
    pub final_train_mse: f64,
    pub final_val_mse: f64,
    pub final_test_mse: f64,
}
