//! CSV tables and their JSON manifest sidecars.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

/// Mode order used in every output.
pub const MODE_ORDER: &str = "A1,A2,B1,B2";

/// Scientific notation with 9 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.8e}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Renders the table with the `#`-prefixed manifest reference line.
    pub fn render(&self, manifest_name: &str) -> String {
        let mut out = format!("# manifest: {manifest_name}\n");
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StatResidual {
    pub row: String,
    pub statistic: String,
    pub imag_residual: f64,
    pub imag_stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub mode_order: String,
    pub csv: String,
    pub seed: u64,
    pub workers: usize,
    pub samples: u64,
    pub failures: usize,
    pub wall_time_s: f64,
    pub config: serde_json::Value,
    pub imag_residuals: Vec<StatResidual>,
    pub notes: Vec<String>,
}

pub fn manifest_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    csv.with_file_name(name)
}

/// Writes `csv` and its manifest sidecar.
pub fn write_outputs(csv: &Path, table: &Table, manifest: &RunManifest) -> Result<()> {
    let mpath = manifest_path(csv);
    let mname = mpath
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(csv, table.render(&mname)).map_err(|e| CliError::io(csv, e))?;
    let mut f = std::fs::File::create(&mpath).map_err(|e| CliError::io(&mpath, e))?;
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    writeln!(f, "{json}").map_err(|e| CliError::io(&mpath, e))?;
    Ok(())
}
