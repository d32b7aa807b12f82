//! Run configuration files.
//!
//! One TOML document with a table per concern. Every key is optional and
//! falls back to the library default; unknown keys are rejected so typos
//! surface as usage errors naming the field.

use std::fs;
use std::path::{Path, PathBuf};

use corrcurr_core::{Ablations, CurriculumConfig, ModelConfig, SynthConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset file; when absent the `[synth]` table generates one.
    pub data: Option<PathBuf>,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub curriculum: CurriculumConfig,
    /// Kebab-case ablation names, e.g. `["no-discard"]`.
    pub ablations: Vec<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn ablation_set(&self) -> CliResult<Ablations> {
        let mut set = Ablations::default();
        for name in &self.ablations {
            set.enable(name).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(set)
    }

    pub fn validate(&self) -> CliResult<()> {
        let usage = |e: corrcurr_core::Error| CliError::Usage(e.to_string());
        self.synth.validate().map_err(usage)?;
        self.model.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.curriculum.validate().map_err(usage)?;
        self.ablation_set().map(|_| ())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

/// Annotated defaults, written by `corrcurr init-config`.
pub const DEFAULT_CONFIG: &str = r#"# corrcurr run configuration. Every key is optional.

# data = "dataset.txt"      # read samples from a file instead of [synth]
ablations = []              # no-correlation, no-curriculum, no-patience,
                            # no-backward, no-discard, no-random-sampling

[synth]
samples = 600
modality_widths = [12, 12, 16]
shared_dim = 4
private_dim = 4
label_std = 1.5
private_scale = 1.0
feature_noise = 0.25
noise_fraction = 0.0        # share of samples with one modality swapped
seed = 0

[model]
embedding_dim = 16          # d
encoder_hidden = [32]
fusion_hidden = [32]
predictor_hidden = [16]
activation = "relu"         # identity, relu, tanh
shared_predictor = false    # one W_cp for every modality pair
clamp_scores = true         # clamp predicted correlation scores to [0, 1]

[train]
alpha = 1.0                 # weight of the correlation loss
learning_rate = 0.001
batch_size = 32
epochs = 30
pretrain_epochs = 40
beta_pretrain = 4.0         # negative sampling factor while pre-training
beta_main = 30.0            # negative sampling factor while training
gamma = 1.4                 # must exceed 1
seed = 0

[curriculum]
patience = 6                # p
forward_factor = 0.1        # f
backward_factor = 0.15      # b
partitions_positive = 2     # c for positive pairs
partitions_negative = 10    # c for negative pairs
lambda = 0.8
discard_percentile = 0.95
warm_up_epochs = 2
augment_fraction = 0.5
"#;
