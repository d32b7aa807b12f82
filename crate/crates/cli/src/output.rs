//! Run artifacts: a JSON report plus line-delimited record files.

use std::fs;
use std::path::{Path, PathBuf};

use corrcurr_core::curriculum::TrajectoryRecord;
use corrcurr_core::RunReport;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const REPORT_FILE: &str = "report.json";
pub const EPOCHS_FILE: &str = "epochs.jsonl";
pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const DISCARDS_FILE: &str = "discards.jsonl";
pub const PRETRAIN_FILE: &str = "pretrain.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const PRETRAINED_FILE: &str = "pretrained.json";

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CORRCURR_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "runs";

/// One compact JSON object per line, newline terminated.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> CliResult<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| CliError::Usage(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> CliResult<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Format {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn trajectory_jsonl(records: &[TrajectoryRecord]) -> CliResult<String> {
    to_jsonl(records)
}

pub fn read_trajectory(path: &Path) -> CliResult<Vec<TrajectoryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_jsonl(&text, path)
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// `explicit`, else the environment variable, else `runs`.
pub fn resolve_out_dir(explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes the report and its record files into `dir`. Returns the paths.
pub fn write_report(dir: &Path, report: &RunReport) -> CliResult<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let files = [
        (REPORT_FILE, {
            let mut t = serde_json::to_string_pretty(report).map_err(|e| CliError::Usage(e.to_string()))?;
            t.push('\n');
            t
        }),
        (EPOCHS_FILE, to_jsonl(&report.epochs)?),
        (TRAJECTORY_FILE, trajectory_jsonl(&report.trajectory)?),
        (DISCARDS_FILE, to_jsonl(&report.discards)?),
        (PRETRAIN_FILE, to_jsonl(&report.pretrain)?),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
