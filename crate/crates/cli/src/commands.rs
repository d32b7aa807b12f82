//! Subcommand implementations. Each returns what it would print so tests
//! can drive them without a process boundary.

use std::path::{Path, PathBuf};

use corrcurr_core::curriculum::FeedRules;
use corrcurr_core::synth::{discard_recall, generate_dataset};
use corrcurr_core::trainer::{pretrain_correlation_predictor, run_pipeline, train_with, DataSplit, Model, Pretrained};
use corrcurr_core::{RunReport, SynthDataset};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset;
use crate::error::{CliError, CliResult};
use crate::output::{self, MODEL_FILE, PRETRAINED_FILE, PRETRAIN_FILE};
use crate::replay;

/// Config file plus command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    pub path: Option<PathBuf>,
    /// `section.key=value` assignments in TOML value syntax; bare words are
    /// taken as strings.
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub ablations: Vec<String>,
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` must look like section.key=value")))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().ok_or_else(|| CliError::Usage("empty override key".into()))?;
    let mut cursor = table;
    for s in sections {
        cursor = cursor
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("`{s}` in `{key}` is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

impl ConfigSource {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let text = match &self.path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
            None => String::new(),
        };
        let label = self.path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default();
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{label}invalid config: {}", e.message())))?;
        for s in &self.sets {
            apply_set(&mut table, s)?;
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("{label}invalid config: {}", e.message())))?;
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
            cfg.synth.seed = seed;
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        cfg.ablations.extend(self.ablations.iter().cloned());
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The configured dataset file, or a freshly generated one.
pub fn load_data(cfg: &RunConfig) -> CliResult<SynthDataset> {
    match &cfg.data {
        Some(p) => dataset::load(p),
        None => Ok(generate_dataset(&cfg.synth)?),
    }
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> CliResult<String> {
    let ds = generate_dataset(&cfg.synth)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        output::ensure_dir(parent)?;
    }
    dataset::save(out, &ds)?;
    Ok(format!("wrote {} samples ({} flagged) to {}\n", ds.data.len(), ds.noisy_count(), out.display()))
}

pub fn pretrain(cfg: &RunConfig, out_dir: &Path) -> CliResult<String> {
    let ds = load_data(cfg)?;
    let split = DataSplit::new(ds.data.len(), cfg.train.seed);
    let (pre, curve) = pretrain_correlation_predictor(&ds.data, &split.train, &cfg.model, &cfg.train)?;
    output::ensure_dir(out_dir)?;
    output::write_json(&out_dir.join(PRETRAINED_FILE), &pre)?;
    output::write_file(&out_dir.join(PRETRAIN_FILE), &output::to_jsonl(&curve)?)?;
    let last = curve.last().map(|r| r.correlation_loss);
    Ok(format!(
        "pre-trained for {} epochs, final correlation loss {}\nwrote {}\n",
        curve.len(),
        last.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}")),
        out_dir.join(PRETRAINED_FILE).display()
    ))
}

/// A trained model with the seed that fixes its data split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub seed: u64,
    pub samples: usize,
    pub model: Model,
}

/// Pre-train (unless `pretrained` is given or not needed), train, evaluate
/// and write every artifact into `out_dir`.
pub fn train(cfg: &RunConfig, out_dir: &Path, pretrained: Option<&Path>) -> CliResult<(RunReport, String)> {
    let ds = load_data(cfg)?;
    let ablations = cfg.ablation_set()?;
    let (mut report, model, pre) = match pretrained {
        Some(p) => {
            let pre: Pretrained = output::read_json(p)?;
            let split = DataSplit::new(ds.data.len(), cfg.train.seed);
            let (report, model) =
                train_with(&ds.data, &split, Some(&pre), &cfg.model, &cfg.train, &cfg.curriculum, &ablations)?;
            (report, model, Some(pre))
        }
        None => {
            let o = run_pipeline(&ds.data, &cfg.model, &cfg.train, &cfg.curriculum, &ablations)?;
            (o.report, o.model, o.pretrained)
        }
    };
    if ds.noisy_count() > 0 && !report.discards.is_empty() {
        report.noise_recall = Some(discard_recall(&report, &ds.noise, cfg.curriculum.warm_up_epochs));
    }
    let mut written = output::write_report(out_dir, &report)?;
    let ds_path = out_dir.join("dataset.txt");
    dataset::save(&ds_path, &ds)?;
    written.push(ds_path);
    let model_path = out_dir.join(MODEL_FILE);
    output::write_json(&model_path, &SavedModel { seed: cfg.train.seed, samples: ds.data.len(), model })?;
    written.push(model_path);
    if let Some(pre) = pre {
        let p = out_dir.join(PRETRAINED_FILE);
        output::write_json(&p, &pre)?;
        written.push(p);
    }
    let config_path = out_dir.join("config.toml");
    output::write_file(&config_path, &cfg.to_toml())?;
    written.push(config_path);

    let mut msg = format!(
        "final mse: train {:.6} val {:.6} test {:.6}\n",
        report.final_train_mse, report.final_val_mse, report.final_test_mse
    );
    if let Some(s) = &report.trajectory_summary {
        msg.push_str(&format!(
            "first round at max c_i: positive {:.1} ({} streams), negative {:.1} ({} streams) of {}\n",
            s.positive_first_max_round, s.positive_reached, s.negative_first_max_round, s.negative_reached, s.rounds
        ));
    }
    if let Some(r) = &report.noise_recall {
        msg.push_str(&format!("noise recall {:.4} (chance {:.4})\n", r.recall, r.chance));
    }
    for p in written {
        msg.push_str(&format!("wrote {}\n", p.display()));
    }
    Ok((report, msg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
    All,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            "all" => Ok(Self::All),
            other => Err(format!("unknown split `{other}` (train, val, test, all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub split: String,
    pub samples: usize,
    pub mse: f64,
}

pub fn eval(cfg: &RunConfig, model_path: &Path, split: Split) -> CliResult<EvalResult> {
    let saved: SavedModel = output::read_json(model_path)?;
    let ds = load_data(cfg)?;
    let ids: Vec<usize> = match split {
        Split::All => (0..ds.data.len()).collect(),
        _ => {
            if ds.data.len() != saved.samples {
                return Err(CliError::Usage(format!(
                    "the model was trained on {} samples, the dataset has {}; use --split all",
                    saved.samples,
                    ds.data.len()
                )));
            }
            let s = DataSplit::new(ds.data.len(), saved.seed);
            match split {
                Split::Train => s.train,
                Split::Val => s.val,
                _ => s.test,
            }
        }
    };
    let mse = saved.model.mse(&ds.data, &ids)?;
    let name = match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
        Split::All => "all",
    };
    Ok(EvalResult { split: name.to_string(), samples: ids.len(), mse })
}

pub fn feed_rules(cfg: &RunConfig) -> CliResult<FeedRules> {
    Ok(FeedRules::new(&cfg.curriculum, &cfg.ablation_set()?))
}

/// Trace of a loss sequence through one stream as JSON lines.
pub fn replay_losses(cfg: &RunConfig, losses_path: &Path, partitions: usize) -> CliResult<String> {
    if partitions == 0 {
        return Err(CliError::Usage("--partitions must be >= 1".into()));
    }
    let text = std::fs::read_to_string(losses_path).map_err(|e| CliError::io(losses_path, e))?;
    let losses = replay::parse_losses(&text, losses_path)?;
    output::to_jsonl(&replay::trace(&losses, partitions, &feed_rules(cfg)?))
}

/// Checks a trajectory file against the state machine.
pub fn replay_trajectory(cfg: &RunConfig, path: &Path) -> CliResult<String> {
    let records = output::read_trajectory(path)?;
    let summary = replay::verify_trajectory(
        &records,
        cfg.curriculum.partitions_positive,
        cfg.curriculum.partitions_negative,
        &feed_rules(cfg)?,
    );
    if let Some(first) = summary.mismatches.first() {
        return Err(CliError::Mismatch(format!("{} of {} records differ; first: {first}", summary.mismatches.len(), summary.records)));
    }
    Ok(format!("{} records over {} streams replay exactly\n", summary.records, summary.streams))
}
