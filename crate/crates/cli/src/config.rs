//! Run configuration, read from TOML with unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use adk_core::model::ModelParams;
use adk_core::verify::Scale;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Linear,
    Budget,
    Lq,
    Stop,
    Simulate,
    Verify,
}

impl Problem {
    pub fn as_str(self) -> &'static str {
        match self {
            Problem::Linear => "linear",
            Problem::Budget => "budget",
            Problem::Lq => "lq",
            Problem::Stop => "stop",
            Problem::Simulate => "simulate",
            Problem::Verify => "verify",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

fn default_points() -> usize {
    201
}

fn default_tol() -> f64 {
    1e-10
}

fn default_verify_seed() -> u64 {
    20240917
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBlock {
    /// Points in the sampled policy and value curves.
    #[serde(default = "default_points")]
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetBlock {
    #[serde(rename = "M")]
    pub budget: f64,
    #[serde(default = "default_points")]
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqBlock {
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopBlock {
    pub k: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Points in the sampled verification grid.
    #[serde(default = "default_stop_points")]
    pub n_points: usize,
}

fn default_stop_points() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimPolicy {
    Linear,
    Budget,
    Lq,
}

/// Monte Carlo run; the seed is mandatory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub policy: SimPolicy,
    /// Budget for `policy = "budget"`.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    #[serde(default = "default_verify_seed")]
    pub seed: u64,
    #[serde(default)]
    pub scale: Scale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lq: Option<LqBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyBlock>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check_blocks()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    fn blocks(&self) -> [(Problem, bool); 6] {
        [
            (Problem::Linear, self.linear.is_some()),
            (Problem::Budget, self.budget.is_some()),
            (Problem::Lq, self.lq.is_some()),
            (Problem::Stop, self.stop.is_some()),
            (Problem::Simulate, self.simulate.is_some()),
            (Problem::Verify, self.verify.is_some()),
        ]
    }

    /// Only the selected problem's block may appear. Blocks whose fields
    /// all have defaults (`linear`, `lq`, `verify`) may be omitted.
    fn check_blocks(&self) -> Result<(), CliError> {
        for (problem, present) in self.blocks() {
            if present && problem != self.problem {
                return Err(CliError::Config(format!(
                    "[{problem}] block given but problem = \"{}\"",
                    self.problem
                )));
            }
        }
        let needs_block = matches!(
            self.problem,
            Problem::Budget | Problem::Stop | Problem::Simulate
        );
        let has_block = self
            .blocks()
            .iter()
            .any(|(p, present)| *p == self.problem && *present);
        if needs_block && !has_block {
            return Err(CliError::Config(format!(
                "missing [{}] block",
                self.problem
            )));
        }
        let needs_model = self.problem != Problem::Verify;
        if needs_model && self.model.is_none() {
            return Err(CliError::Config("missing [model] block".into()));
        }
        if let Some(sim) = &self.simulate {
            if (sim.policy == SimPolicy::Budget) != sim.budget.is_some() {
                return Err(CliError::Config(
                    "[simulate] M is required for policy = \"budget\" and only then".into(),
                ));
            }
        }
        if self.formats.is_empty() {
            return Err(CliError::Config(
                "formats must name at least one of csv, json".into(),
            ));
        }
        Ok(())
    }

    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LQ: &str = r#"
problem = "lq"
output_dir = "out"
formats = ["csv", "json"]

[model]
rho = 0.5
c = 0.1
T = 1.0
sigma0 = 0.0
sigma1 = 0.2
sigma2 = 0.5
m = 1.0
gamma0 = 0.5
x_init = 1.0
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = RunConfig::from_toml(LQ).unwrap();
        assert_eq!(cfg.problem, Problem::Lq);
        assert_eq!(cfg.model.unwrap().horizon, 1.0);
        assert!(cfg.lq.is_none());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = LQ.replace("x_init = 1.0", "x_init = 1.0\nx_start = 2.0");
        assert!(matches!(
            RunConfig::from_toml(&bad),
            Err(CliError::Config(_))
        ));
        let bad = format!("{LQ}\n[lq]\ntolerance = 1e-9\n");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn foreign_block_rejected() {
        let bad = format!("{LQ}\n[budget]\nM = 0.3\n");
        let err = RunConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("[budget]"), "{err}");
    }

    #[test]
    fn simulate_requires_seed() {
        let text = LQ.replace("problem = \"lq\"", "problem = \"simulate\"")
            + "\n[simulate]\nn_paths = 10\nn_steps = 10\npolicy = \"lq\"\n";
        assert!(RunConfig::from_toml(&text).is_err());
        let ok = text.replace("n_steps = 10", "n_steps = 10\nseed = 3");
        assert!(RunConfig::from_toml(&ok).is_ok());
    }
}
