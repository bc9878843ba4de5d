use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::OptimizerConfig;
use crate::problems::{LeastSquares, LogReg, Mlp, Problem};

fn one() -> f64 {
    1.0
}

fn default_samples() -> usize {
    512
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    LeastSquares {
        n: usize,
        d: usize,
        #[serde(default = "one")]
        solution_norm: f64,
        /// Instance seed; the run seed when absent.
        #[serde(default)]
        seed: Option<u64>,
    },
    Logreg {
        n: usize,
        d: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Mlp {
        layers: Vec<usize>,
        #[serde(default = "default_samples")]
        n: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl ProblemConfig {
    pub fn build(&self, run_seed: u64) -> Result<Box<dyn Problem>> {
        let wrap = |e: Error| Error::Config {
            key: "problem".into(),
            message: e.to_string(),
        };
        Ok(match self {
            ProblemConfig::LeastSquares { n, d, solution_norm, seed } => {
                Box::new(LeastSquares::make(*n, *d, seed.unwrap_or(run_seed), *solution_norm).map_err(wrap)?)
            }
            ProblemConfig::Logreg { n, d, seed } => Box::new(LogReg::make(*n, *d, seed.unwrap_or(run_seed)).map_err(wrap)?),
            ProblemConfig::Mlp { layers, n, seed } => Box::new(Mlp::make(layers, *n, seed.unwrap_or(run_seed)).map_err(wrap)?),
        })
    }
}

fn default_eval_every() -> u64 {
    50
}

fn default_repeats() -> u64 {
    1
}

/// One training experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed expanded into per-worker data, compressor and sketch streams.
    #[serde(default)]
    pub seed: u64,
    pub workers: usize,
    /// Samples drawn per worker per step.
    pub batch: usize,
    pub steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// Runs with seeds `seed, seed + 1, ...`.
    #[serde(default = "default_repeats")]
    pub repeats: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub problem: ProblemConfig,
    pub optimizer: OptimizerConfig,
}

/// Turn a deserialization message into a config error naming the key.
fn toml_error(e: toml::de::Error) -> Error {
    let message = e.message().to_string();
    let key = message
        .split('`')
        .nth(1)
        .filter(|_| message.contains("unknown field") || message.contains("missing field"))
        .map(str::to_string)
        .unwrap_or_else(|| e.span().map_or_else(|| "config".to_string(), |s| format!("config at bytes {}..{}", s.start, s.end)));
    Error::Config { key, message }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(toml_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        let cfg: Self = value.try_into().map_err(toml_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            key: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.workers == 0 {
            return bad("workers", "must be at least 1");
        }
        if self.batch == 0 {
            return bad("batch", "must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be at least 1");
        }
        if self.repeats == 0 {
            return bad("repeats", "must be at least 1");
        }
        Ok(())
    }
}
