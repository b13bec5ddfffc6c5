//! Result records, reports and atomic output files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ExperimentConfig;
use super::CliError;
use crate::stats::Estimate;

/// Uncertainty attached to every reported number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uncertainty {
    StdErr(f64),
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub uncertainty: Uncertainty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

impl Measurement {
    pub fn estimate(name: impl Into<String>, e: Estimate) -> Self {
        Self { name: name.into(), value: e.value, uncertainty: Uncertainty::StdErr(e.std_err), target: None }
    }

    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, uncertainty: Uncertainty::Exact, target: None }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }
}

/// One experiment or acceptance criterion. Runtimes live in `timings.json`
/// so that records are byte-identical across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    pub tags: Vec<String>,
    pub description: String,
    pub inputs: Value,
    pub measurements: Vec<Measurement>,
    pub tolerance: String,
    /// `None` for records without a declared tolerance.
    pub pass: Option<bool>,
    pub notes: Vec<String>,
}

impl ResultRecord {
    pub fn new(id: &str, tags: &[&str], description: &str, inputs: Value) -> Self {
        Self {
            id: id.into(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            description: description.into(),
            inputs,
            measurements: Vec::new(),
            tolerance: String::new(),
            pass: None,
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, m: Measurement) {
        self.measurements.push(m);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn judge(&mut self, tolerance: impl Into<String>, pass: bool) {
        self.tolerance = tolerance.into();
        self.pass = Some(pass);
    }

    pub fn status(&self) -> &'static str {
        match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "INFO",
        }
    }

    /// `PASS  id  description  [name=value ± err, ...]`.
    pub fn summary_line(&self) -> String {
        let shown: Vec<String> = self
            .measurements
            .iter()
            .take(6)
            .map(|m| match m.uncertainty {
                Uncertainty::StdErr(e) => format!("{}={:.4}±{:.4}", m.name, m.value, e),
                Uncertainty::Exact => format!("{}={}", m.name, fmt_exact(m.value)),
            })
            .collect();
        let more = if self.measurements.len() > 6 { ", ..." } else { "" };
        format!("{}  {:<24} {}  [{}{}]", self.status(), self.id, self.description, shown.join(", "), more)
    }
}

fn fmt_exact(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.6}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub informational: usize,
}

/// The primary JSON output of every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub experiment: String,
    pub seed: u64,
    /// False when tolerances or budgets differ from the defaults.
    pub canonical: bool,
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub records: Vec<ResultRecord>,
}

impl Report {
    pub fn new(command: &str, config: &ExperimentConfig, records: Vec<ResultRecord>) -> Self {
        let count = |f: fn(&ResultRecord) -> bool| records.iter().filter(|r| f(r)).count();
        Self {
            command: command.into(),
            experiment: config.experiment.clone(),
            seed: config.seed,
            canonical: config.is_canonical(),
            config: config.clone(),
            summary: Summary {
                passed: count(|r| r.pass == Some(true)),
                failed: count(|r| r.pass == Some(false)),
                informational: count(|r| r.pass.is_none()),
            },
            records,
        }
    }

    pub fn any_failed(&self) -> bool {
        self.summary.failed > 0
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The human-readable table.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{} {} seed={}{}\n",
            self.command,
            self.experiment,
            self.seed,
            if self.canonical { "" } else { " (non-canonical)" }
        );
        for r in &self.records {
            s.push_str(&r.summary_line());
            s.push('\n');
        }
        s.push_str(&format!(
            "passed {} failed {} informational {}\n",
            self.summary.passed, self.summary.failed, self.summary.informational
        ));
        s
    }
}

/// A file produced by a command, written under the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &str, bytes: impl Into<Vec<u8>>) -> Self {
        Self { name: name.into(), bytes: bytes.into() }
    }
}

/// Everything a command produces; a pure function of the config.
#[derive(Clone, Debug)]
pub struct CommandOutput {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
    /// Wall-clock seconds per record id; written separately.
    pub timings: BTreeMap<String, f64>,
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}
