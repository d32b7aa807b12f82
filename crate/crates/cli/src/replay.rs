//! Offline replay of the feeding state machine.

use std::collections::BTreeMap;
use std::path::Path;

use corrcurr_core::curriculum::{replay, FeedAction, FeedRules, TrajectoryRecord};
use corrcurr_core::pairing::PairPolarity;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub step: usize,
    pub loss: f64,
    pub action: FeedAction,
    pub c_i: usize,
    pub count: usize,
}

/// One loss per line; blank lines and `#` comments are skipped.
pub fn parse_losses(text: &str, path: &Path) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| CliError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("`{line}` is not a number"),
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(CliError::Format {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("loss `{line}` must be finite and non-negative"),
            });
        }
        out.push(v);
    }
    Ok(out)
}

pub fn trace(losses: &[f64], partitions: usize, rules: &FeedRules) -> Vec<ReplayStep> {
    replay(losses, partitions, rules)
        .into_iter()
        .zip(losses)
        .enumerate()
        .map(|(step, ((action, state), &loss))| ReplayStep {
            step,
            loss,
            action,
            c_i: state.choosing_index,
            count: state.count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub streams: usize,
    pub records: usize,
    pub mismatches: Vec<String>,
}

/// Re-derives the action, `c_i` and `count` columns of a trajectory from
/// its loss column, stream by stream.
pub fn verify_trajectory(
    records: &[TrajectoryRecord],
    partitions_positive: usize,
    partitions_negative: usize,
    rules: &FeedRules,
) -> VerifySummary {
    let mut by_stream: BTreeMap<(usize, usize, bool), Vec<&TrajectoryRecord>> = BTreeMap::new();
    for r in records {
        by_stream
            .entry((r.modality_i, r.modality_j, r.polarity == PairPolarity::Negative))
            .or_default()
            .push(r);
    }
    let mut mismatches = Vec::new();
    for ((i, j, negative), recs) in &by_stream {
        let c = if *negative { partitions_negative } else { partitions_positive };
        let losses: Vec<f64> = recs.iter().map(|r| r.loss).collect();
        for (r, (action, state)) in recs.iter().zip(replay(&losses, c, rules)) {
            if r.action != action || r.c_i != state.choosing_index || r.count != state.count {
                mismatches.push(format!(
                    "stream ({i},{j},{}) round {}: recorded {}/{}/{}, replayed {}/{}/{}",
                    r.polarity.as_str(),
                    r.round,
                    r.action.as_str(),
                    r.c_i,
                    r.count,
                    action.as_str(),
                    state.choosing_index,
                    state.count
                ));
            }
        }
    }
    VerifySummary { streams: by_stream.len(), records: records.len(), mismatches }
}
