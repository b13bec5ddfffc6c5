//! Experiment configuration files: flat JSON with explicit seeds and budgets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::capacity::{KernelMode, ShellFamily};
use crate::lattice::LatticePoint;
use crate::walk::{GreenMethod, Preset};

/// Pass/fail thresholds. The defaults are the canonical acceptance values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Standard errors allowed in statistical agreement checks.
    pub sigma: f64,
    pub kolmogorov: f64,
    pub dim_perc: f64,
    pub green_origin: f64,
    pub gamma: f64,
    pub gamma_agreement: f64,
    pub minkowski: f64,
    pub hausdorff: f64,
    pub solver_rel: f64,
    pub bounded_median_shell: i64,
    pub unbounded_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            kolmogorov: 0.15,
            dim_perc: 0.2,
            green_origin: 0.01,
            gamma: 0.2,
            gamma_agreement: 0.15,
            minkowski: 0.25,
            hausdorff: 0.3,
            solver_rel: 1e-4,
            bounded_median_shell: 6,
            unbounded_fraction: 0.8,
        }
    }
}

/// One experiment. Fields a command does not use are ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    /// Master seed; every random stream of the run derives from it.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_values: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<f64>>,
    /// Largest shell `K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    /// Independent replicates: seeds, trees or joint trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green: Option<GreenMethod>,
    /// Radius of the Green table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    /// Walks leaving `[-escape, escape]^d` count as misses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<LatticePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<LatticePoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<ShellFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_sets: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_set_size: Option<usize>,
    /// Random sets are drawn in `V_n` for this `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_box: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_mode: Option<KernelMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_minimizers: Option<bool>,
    /// Multiplies every sample budget of `verify`. Anything but 1 is non-canonical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_scale: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// A parsed config together with its source text, for line-precise errors.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    source: String,
}

impl LoadedConfig {
    pub fn parse(source: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = serde_json::from_str(source)
            .map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        Ok(Self { config, source: source.to_owned() })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&source).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// A validation error pointing at the line where `field` is set.
    pub fn invalid(&self, field: &str, message: impl std::fmt::Display) -> CliError {
        let key = format!("\"{field}\"");
        match self.source.lines().position(|l| l.contains(&key)) {
            Some(i) => CliError::Config(format!("line {}: {field}: {message}", i + 1)),
            None => CliError::Config(format!("{field}: {message}")),
        }
    }

    pub fn require<T: Clone>(&self, field: &str, value: &Option<T>) -> Result<T, CliError> {
        value.clone().ok_or_else(|| CliError::Config(format!("missing field \"{field}\" for this experiment")))
    }

    /// `p` must lie in `(0, 1]`.
    pub fn check_p(&self, field: &str, p: f64) -> Result<f64, CliError> {
        if p > 0.0 && p <= 1.0 {
            Ok(p)
        } else {
            Err(self.invalid(field, format!("retention probability {p} is outside (0, 1]")))
        }
    }

    /// The `p` grid of the experiment: `p_values`, else the single `p`.
    pub fn p_list(&self) -> Result<Vec<f64>, CliError> {
        let c = &self.config;
        let list = match (&c.p_values, c.p) {
            (Some(v), _) if !v.is_empty() => v.clone(),
            (_, Some(p)) => vec![p],
            _ => return Err(CliError::Config("missing field \"p\" or \"p_values\" for this experiment".into())),
        };
        for &p in &list {
            self.check_p(if c.p_values.is_some() { "p_values" } else { "p" }, p)?;
        }
        Ok(list)
    }

    pub fn dimension(&self) -> Result<usize, CliError> {
        let d = self.require("d", &self.config.d)?;
        if (1..=crate::lattice::MAX_DIM).contains(&d) {
            Ok(d)
        } else {
            Err(self.invalid("d", format!("dimension {d} is outside 1..={}", crate::lattice::MAX_DIM)))
        }
    }
}

impl ExperimentConfig {
    /// Tolerances and budgets are the canonical ones.
    pub fn is_canonical(&self) -> bool {
        self.tolerances == Tolerances::default() && self.budget_scale.is_none_or(|s| s == 1.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let src = r#"{
  "experiment": "demo",
  "seed": 7,
  "p": 0.8,
  "walk": {"kind": "srw", "d": 3},
  "family": {"kind": "full_lattice", "d": 3, "cap": 512, "seed": 1}
}"#;
        let a = LoadedConfig::parse(src).unwrap().config;
        let b = LoadedConfig::parse(&a.to_json()).unwrap().config;
        assert_eq!(a, b);
        assert!(a.is_canonical());
        let bad = LoadedConfig::parse("{\n  \"experiment\": \"x\",\n  \"seed\": 1,\n  \"pp\": 2\n}").unwrap_err();
        assert!(bad.to_string().contains("line 4"), "{bad}");
        let l = LoadedConfig::parse("{\n \"experiment\": \"x\",\n \"seed\": 1,\n \"p\": 1.5\n}").unwrap();
        let e = l.p_list().unwrap_err();
        assert!(e.to_string().starts_with("configuration error: line 4"), "{e}");
    }
}
