use serde::{Deserialize, Serialize};

use crate::compressors::{CompressorSpec, Size};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Dense SGD.
    Sgd,
    /// Compressed gradients without error feedback.
    CompressedSgd,
    /// Error feedback with a dense error vector.
    Efsgd,
    /// Error feedback with the error stored through the error compressor.
    Conef,
    /// Two-stage compressed error, both stages through the error compressors.
    IconefV1,
    /// Two-stage compressed error, first stage contractive.
    IconefV2,
    /// Only part of the compressed error is added back each step.
    Partial,
    /// Error feedback keeping the top-k entries of the error.
    Hefsgd,
}

impl Algorithm {
    pub fn uses_error_compressor(self) -> bool {
        matches!(self, Algorithm::Conef | Algorithm::IconefV1 | Algorithm::IconefV2 | Algorithm::Partial)
    }
}

/// How a count-sketch error holder absorbs a step under [`Algorithm::Partial`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchUpdate {
    /// `S <- S + sketch(eta g - delta)`: the stored table is taken as the
    /// compressed error itself, so only the new residual is inserted.
    #[default]
    Accumulate,
    /// `S <- beta S + sketch(p - delta)`, which re-inserts the decoded error.
    ScaleThenAdd,
}

fn default_decay() -> f64 {
    0.1
}

fn default_identity() -> CompressorSpec {
    CompressorSpec::Identity
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    /// Initial learning rate.
    pub lr: f64,
    /// Steps at which the learning rate is multiplied by `lr_decay`.
    #[serde(default)]
    pub lr_milestones: Vec<u64>,
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub nesterov: bool,
    /// Max-norm clip applied to each local gradient.
    #[serde(default)]
    pub clip: Option<f64>,
    /// Average the error state across workers every this many steps.
    #[serde(default)]
    pub error_reset_every: Option<u64>,
    #[serde(default = "default_identity")]
    pub grad_compressor: CompressorSpec,
    #[serde(default)]
    pub error_compressor: Option<CompressorSpec>,
    /// Second-stage error compressor for the two-stage variants.
    #[serde(default)]
    pub error_compressor2: Option<CompressorSpec>,
    /// Entries of the error kept by [`Algorithm::Hefsgd`].
    #[serde(default)]
    pub hefsgd_k: Option<Size>,
    #[serde(default)]
    pub sketch_update: SketchUpdate,
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: format!("optimizer.{key}"),
        message: message.into(),
    }
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, lr: f64) -> Self {
        Self {
            algorithm,
            lr,
            lr_milestones: Vec::new(),
            lr_decay: default_decay(),
            beta: 0.0,
            momentum: 0.0,
            nesterov: false,
            clip: None,
            error_reset_every: None,
            grad_compressor: CompressorSpec::Identity,
            error_compressor: None,
            error_compressor2: None,
            hefsgd_k: None,
            sketch_update: SketchUpdate::default(),
        }
    }

    pub fn with_grad(mut self, spec: CompressorSpec) -> Self {
        self.grad_compressor = spec;
        self
    }

    pub fn with_error(mut self, spec: CompressorSpec) -> Self {
        self.error_compressor = Some(spec);
        self
    }

    pub fn with_error2(mut self, spec: CompressorSpec) -> Self {
        self.error_compressor2 = Some(spec);
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Learning rate at `step` under the piecewise-constant schedule.
    pub fn lr_at(&self, step: u64) -> f64 {
        let decays = self.lr_milestones.iter().filter(|&&m| step >= m).count();
        self.lr * self.lr_decay.powi(decays as i32)
    }

    /// First-stage error compressor; the two-stage contractive variant falls
    /// back to the gradient compressor.
    pub fn first_error_spec(&self) -> Option<CompressorSpec> {
        match self.algorithm {
            Algorithm::IconefV2 => Some(
                self.error_compressor
                    .clone()
                    .unwrap_or_else(|| self.grad_compressor.clone()),
            ),
            a if a.uses_error_compressor() => self.error_compressor.clone(),
            _ => None,
        }
    }

    /// Second-stage error compressor of the two-stage variants.
    pub fn second_error_spec(&self) -> Option<CompressorSpec> {
        match self.algorithm {
            Algorithm::IconefV1 => self.error_compressor2.clone().or_else(|| self.error_compressor.clone()),
            Algorithm::IconefV2 => self.error_compressor2.clone().or_else(|| self.error_compressor.clone()),
            _ => None,
        }
    }

    /// Error entries kept by hefsgd; ratios round to nearest and may reach 0.
    pub fn hefsgd_keep(&self, dim: usize) -> usize {
        match self.hefsgd_k {
            Some(Size::Count(k)) => k.min(dim),
            Some(Size::Ratio(r)) => ((r * dim as f64).round() as usize).min(dim),
            None => dim,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(bad("lr", "must be positive and finite"));
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return Err(bad("lr_decay", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(bad("beta", format!("{} is outside [0, 1)", self.beta)));
        }
        if self.beta != 0.0 && self.algorithm != Algorithm::Partial {
            return Err(bad("beta", "only the partial algorithm uses beta"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(bad("momentum", format!("{} is outside [0, 1)", self.momentum)));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(bad("clip", "must be positive"));
            }
        }
        if self.error_reset_every == Some(0) {
            return Err(bad("error_reset_every", "must be at least 1"));
        }
        let check = |key: &str, spec: &CompressorSpec| spec.validate(dim).map_err(|e| bad(key, e.to_string()));
        check("grad_compressor", &self.grad_compressor)?;
        if self.algorithm.uses_error_compressor() && self.first_error_spec().is_none() {
            return Err(bad("error_compressor", "required by this algorithm"));
        }
        if let Some(spec) = &self.error_compressor {
            check("error_compressor", spec)?;
        }
        if let Some(spec) = &self.error_compressor2 {
            check("error_compressor2", spec)?;
        }
        if self.algorithm == Algorithm::Hefsgd {
            match self.hefsgd_k {
                None => return Err(bad("hefsgd_k", "required by hefsgd")),
                Some(Size::Ratio(r)) if !(0.0..=1.0).contains(&r) => {
                    return Err(bad("hefsgd_k", "ratio must lie in [0, 1]"));
                }
                Some(Size::Count(k)) if k > dim => {
                    return Err(bad("hefsgd_k", format!("k must not exceed d = {dim}")));
                }
                _ => {}
            }
        }
        if self.error_reset_every.is_some() {
            for (key, spec) in [("error_compressor", self.first_error_spec()), ("error_compressor2", self.second_error_spec())] {
                if let Some(spec) = spec {
                    if !matches!(spec, CompressorSpec::Identity | CompressorSpec::CountSketch { .. }) {
                        return Err(Error::Unsupported(format!(
                            "optimizer.{key}: error reset needs dense or count-sketch error state, not {}",
                            spec.name()
                        )));
                    }
                }
            }
            if self.algorithm == Algorithm::Hefsgd {
                return Err(Error::Unsupported("error reset needs dense or count-sketch error state".into()));
            }
        }
        Ok(())
    }
}
