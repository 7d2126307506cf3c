//! CSV tables and run metadata. Every CSV starts with a
//! `# config_hash=<hex>` line tying it to the resolved configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::mean_and_se;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot encode run metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{file}: config hash {found} does not match run hash {expected}")]
    HashMismatch { file: String, expected: String, found: String },
    #[error("malformed report {file}: {reason}")]
    Malformed { file: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Shortest round-trip form, in exponent notation for very small or large
/// magnitudes; `NaN`, `inf`, `-inf` for non-finite values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e15) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, config_hash: &str) -> String {
        let mut s = format!("# config_hash={config_hash}\n");
        s.push_str(&self.header.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path, config_hash: &str) -> Result<(), ReportError> {
        let mut f = fs::File::create(path).map_err(io_err(path))?;
        f.write_all(self.render(config_hash).as_bytes()).map_err(io_err(path))
    }

    /// Reads a table written by [`CsvTable::write`], returning its hash.
    pub fn read(path: &Path) -> Result<(String, Self), ReportError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let malformed = |reason: &str| ReportError::Malformed {
            file: path.display().to_string(),
            reason: reason.into(),
        };
        let mut lines = text.lines();
        let hash = lines
            .next()
            .and_then(|l| l.strip_prefix("# config_hash="))
            .ok_or_else(|| malformed("missing config hash line"))?
            .to_string();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| malformed("missing header"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut table = Self::new(header);
        for l in lines.filter(|l| !l.is_empty()) {
            let row: Vec<String> = l.split(',').map(str::to_string).collect();
            if row.len() != table.header.len() {
                return Err(malformed("row width differs from header"));
            }
            table.rows.push(row);
        }
        Ok((hash, table))
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Metadata record written as `run.json` next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

impl RunRecord {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, ReportError> {
        let path = dir.join("run.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self, ReportError> {
        let path = dir.join("run.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes `resolved_config.toml`.
pub fn write_resolved_config(dir: &Path, toml_text: &str) -> Result<PathBuf, ReportError> {
    let path = dir.join("resolved_config.toml");
    fs::write(&path, toml_text).map_err(io_err(&path))?;
    Ok(path)
}

pub fn ensure_dir(dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSummary {
    pub column: String,
    pub group: String,
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

/// Recomputes per-group means and standard errors of the numeric columns of
/// `file` inside a run directory, after checking its hash against `run.json`.
pub fn reaggregate(dir: &Path, file: &str, group_by: Option<&str>) -> Result<Vec<ColumnSummary>, ReportError> {
    let record = RunRecord::read(dir)?;
    let (hash, table) = CsvTable::read(&dir.join(file))?;
    if hash != record.config_hash {
        return Err(ReportError::HashMismatch {
            file: file.into(),
            expected: record.config_hash,
            found: hash,
        });
    }
    let group_col = match group_by {
        Some(g) => Some(table.column(g).ok_or_else(|| ReportError::Malformed {
            file: file.into(),
            reason: format!("no column {g}"),
        })?),
        None => None,
    };
    let mut groups: Vec<String> = Vec::new();
    for r in &table.rows {
        let g = group_col.map_or(String::new(), |c| r[c].clone());
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    let mut out = Vec::new();
    for (ci, name) in table.header.iter().enumerate() {
        if Some(ci) == group_col {
            continue;
        }
        for g in &groups {
            let vals: Option<Vec<f64>> = table
                .rows
                .iter()
                .filter(|r| group_col.is_none_or(|c| &r[c] == g))
                .map(|r| r[ci].parse::<f64>().ok())
                .collect();
            let Some(vals) = vals else { continue };
            let vals: Vec<f64> = vals.into_iter().filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                continue;
            }
            let (mean, se) = mean_and_se(&vals);
            out.push(ColumnSummary {
                column: name.clone(),
                group: g.clone(),
                mean,
                se,
                count: vals.len(),
            });
        }
    }
    Ok(out)
}
