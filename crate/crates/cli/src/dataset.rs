//! Flat columnar text format for datasets.
//!
//! A header of four lines (magic, `k`, `widths`, `count`) is followed by one
//! row per sample: the label, the corruption flag (`-` for a clean sample,
//! otherwise the index of the replaced modality) and the features of every
//! modality in order. Numbers are written in Rust's shortest round-trip form,
//! so reading a written file gives back the same bits. See `docs/formats.md`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use corrcurr_core::encoders::ModalityId;
use corrcurr_core::{SampleBatch, SynthDataset};

use crate::error::{CliError, CliResult};

pub const MAGIC: &str = "corrcurr-dataset 1";

pub fn to_text(dataset: &SynthDataset) -> String {
    let data = &dataset.data;
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "k {}", data.modalities());
    out.push_str("widths");
    for w in data.widths() {
        let _ = write!(out, " {w}");
    }
    out.push('\n');
    let _ = writeln!(out, "count {}", data.len());
    for o in 0..data.len() {
        let _ = write!(out, "{:?}", data.label(o));
        match dataset.noise.get(o).copied().flatten() {
            Some(m) => {
                let _ = write!(out, " {}", m.0);
            }
            None => out.push_str(" -"),
        }
        for m in 0..data.modalities() {
            for v in data.features(o, m) {
                let _ = write!(out, " {v:?}");
            }
        }
        out.push('\n');
    }
    out
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> CliError {
        CliError::Format { path: self.path.to_path_buf(), line: self.line, message: message.into() }
    }

    fn next_line(&mut self, what: &str) -> CliResult<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.err(format!("unexpected end of file, expected {what}")))
            }
        }
    }

    fn keyed(&mut self, key: &str) -> CliResult<Vec<usize>> {
        let line = self.next_line(key)?;
        let mut fields = line.split_ascii_whitespace();
        if fields.next() != Some(key) {
            return Err(self.err(format!("expected `{key}` line")));
        }
        fields
            .map(|f| f.parse::<usize>().map_err(|_| self.err(format!("`{f}` is not a non-negative integer"))))
            .collect()
    }

    fn single(&mut self, key: &str) -> CliResult<usize> {
        match self.keyed(key)?.as_slice() {
            [v] => Ok(*v),
            _ => Err(self.err(format!("`{key}` takes exactly one value"))),
        }
    }
}

fn parse_real(lines: &Lines<'_>, field: &str) -> CliResult<f64> {
    let v: f64 = field.parse().map_err(|_| lines.err(format!("`{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(lines.err(format!("non-finite value `{field}`")));
    }
    Ok(v)
}

/// Parses the text form; `path` only labels error messages.
pub fn parse(text: &str, path: &Path) -> CliResult<SynthDataset> {
    let mut lines = Lines { path, inner: text.lines().enumerate(), line: 0 };
    if lines.next_line("the header")?.trim_end() != MAGIC {
        return Err(lines.err(format!("missing `{MAGIC}` header")));
    }
    let k = lines.single("k")?;
    let widths = lines.keyed("widths")?;
    if widths.len() != k {
        return Err(lines.err(format!("{} widths for k = {k}", widths.len())));
    }
    let count = lines.single("count")?;
    let row_width = 2 + widths.iter().sum::<usize>();
    let mut labels = Vec::with_capacity(count);
    let mut noise = Vec::with_capacity(count);
    let mut features = Vec::with_capacity(count);
    for _ in 0..count {
        let row = lines.next_line("a sample row")?;
        let fields: Vec<&str> = row.split_ascii_whitespace().collect();
        if fields.len() != row_width {
            return Err(lines.err(format!("expected {row_width} fields, found {}", fields.len())));
        }
        labels.push(parse_real(&lines, fields[0])?);
        noise.push(match fields[1] {
            "-" => None,
            f => match f.parse::<usize>() {
                Ok(m) if m < k => Some(ModalityId(m)),
                _ => return Err(lines.err(format!("flag `{f}` must be `-` or a modality index below {k}"))),
            },
        });
        let mut offset = 2;
        let mut sample = Vec::with_capacity(k);
        for &w in &widths {
            sample.push(fields[offset..offset + w].iter().map(|f| parse_real(&lines, f)).collect::<CliResult<Vec<_>>>()?);
            offset += w;
        }
        features.push(sample);
    }
    if let Some((i, extra)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        lines.line = i + 1;
        return Err(lines.err(format!("trailing content `{}` after {count} rows", extra.trim())));
    }
    let data = SampleBatch::new(widths, features, labels).map_err(|e| lines.err(e.to_string()))?;
    Ok(SynthDataset { data, noise })
}

pub fn load(path: &Path) -> CliResult<SynthDataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, path)
}

pub fn save(path: &Path, dataset: &SynthDataset) -> CliResult<()> {
    fs::write(path, to_text(dataset)).map_err(|e| CliError::io(path, e))
}
