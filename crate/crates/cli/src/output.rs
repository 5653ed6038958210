//! Run report and the files written next to it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cascade_core::geometry::GccReport;
use cascade_core::operators::HypothesisReport;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const REPORT: &str = "report.json";
pub const CONFIG: &str = "config.json";
pub const INITIAL: &str = "initial.json";
pub const CONTROL: &str = "control.csv";
pub const SPECTRA: &str = "spectra.csv";
pub const TRAJECTORY: &str = "trajectory.csv";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedGcc {
    pub name: String,
    pub report: GccReport,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResolvedEcho {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub steps: usize,
    pub k_filter: usize,
    pub horizon_defaulted: bool,
}

/// Terminal energies of the run whose control is stored in `control.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub epsilon: f64,
    pub k_filter: usize,
    pub terminal_energy_full: f64,
    pub terminal_energy_filtered: f64,
    pub terminal_energy_per_component: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub verdict: String,
    pub summary: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub resolved: Option<ResolvedEcho>,
    pub hypotheses: Option<HypothesisReport>,
    pub gcc: Vec<NamedGcc>,
    pub result: serde_json::Value,
    pub replay: Option<ReplayRecord>,
    pub notes: Vec<String>,
    pub artifacts: Vec<String>,
    pub versions: BTreeMap<String, String>,
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("cascade-lab".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("report-format".to_string(), "1".to_string()),
    ])
}

/// Collects files for one output directory.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let p = self.dir.join(name);
        fs::write(&p, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Names written so far plus the report itself.
    pub fn artifacts(&self) -> Vec<String> {
        let mut a = self.written.clone();
        a.push(REPORT.to_string());
        a
    }
}

pub fn spectra_csv(values: &[f64]) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{:.16e}", i + 1, v);
    }
    out
}
