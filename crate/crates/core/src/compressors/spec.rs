use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::linalg::matrix_view;
use crate::sketch::{BlockLayout, Precision, SketchShape};

/// A count given either as an absolute number or as a fraction of `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Size {
    Count(usize),
    Ratio(f64),
}

impl Size {
    /// Ratios round to the nearest integer and never resolve below 1.
    pub fn resolve(&self, d: usize) -> usize {
        match *self {
            Size::Count(k) => k,
            Size::Ratio(r) => ((r * d as f64).round() as usize).max(1),
        }
    }
}

/// Norm used to scale stochastic quantization levels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantNorm {
    L2,
    #[default]
    Max,
}

fn one() -> usize {
    1
}

/// Declarative description of a compressor. Serialized with a `kind` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompressorSpec {
    Identity,
    ScaledSign,
    RandomK {
        k: Size,
        #[serde(default)]
        scaled: bool,
        #[serde(default)]
        shared_seed: Option<u64>,
    },
    RandomBlockK {
        k: Size,
        #[serde(default)]
        scaled: bool,
        #[serde(default)]
        shared_seed: Option<u64>,
    },
    TopK {
        k: Size,
    },
    PowerLowrank {
        rank: usize,
    },
    RandomProjection {
        rank: usize,
        #[serde(default)]
        shared_seed: Option<u64>,
    },
    StochasticQuantize {
        levels: u32,
        #[serde(default)]
        norm: QuantNorm,
    },
    CountSketch {
        #[serde(default = "one")]
        rows: usize,
        width: Size,
        #[serde(default)]
        precision: Precision,
        #[serde(default = "one")]
        block_size: usize,
        #[serde(default)]
        layout: BlockLayout,
        /// Fixed hash seed; drawn from the caller's stream when absent.
        #[serde(default)]
        seed: Option<u64>,
        /// Collision-free row hashes; needs at least as many buckets as entries.
        #[serde(default)]
        injective: bool,
    },
}

impl CompressorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CompressorSpec::Identity => "identity",
            CompressorSpec::ScaledSign => "scaled_sign",
            CompressorSpec::RandomK { .. } => "random_k",
            CompressorSpec::RandomBlockK { .. } => "random_block_k",
            CompressorSpec::TopK { .. } => "top_k",
            CompressorSpec::PowerLowrank { .. } => "power_lowrank",
            CompressorSpec::RandomProjection { .. } => "random_projection",
            CompressorSpec::StochasticQuantize { .. } => "stochastic_quantize",
            CompressorSpec::CountSketch { .. } => "count_sketch",
        }
    }

    /// Whether `E[decode(compress(x))] = x`.
    pub fn is_unbiased(&self) -> bool {
        match self {
            CompressorSpec::Identity
            | CompressorSpec::RandomProjection { .. }
            | CompressorSpec::StochasticQuantize { .. }
            | CompressorSpec::CountSketch { .. } => true,
            CompressorSpec::RandomK { scaled, .. } | CompressorSpec::RandomBlockK { scaled, .. } => *scaled,
            CompressorSpec::ScaledSign | CompressorSpec::TopK { .. } | CompressorSpec::PowerLowrank { .. } => false,
        }
    }

    /// Whether messages from different workers can be summed in compressed form.
    /// Requires shared randomness for the sampled kinds.
    pub fn is_allreducable(&self) -> bool {
        matches!(
            self,
            CompressorSpec::Identity
                | CompressorSpec::RandomK { .. }
                | CompressorSpec::RandomBlockK { .. }
                | CompressorSpec::PowerLowrank { .. }
                | CompressorSpec::RandomProjection { .. }
                | CompressorSpec::CountSketch { .. }
        )
    }

    /// Kinds whose randomness must agree across workers to be allreduced.
    pub fn wants_shared_randomness(&self) -> bool {
        matches!(
            self,
            CompressorSpec::RandomK { .. }
                | CompressorSpec::RandomBlockK { .. }
                | CompressorSpec::RandomProjection { .. }
                | CompressorSpec::CountSketch { .. }
        )
    }

    pub fn shared_seed(&self) -> Option<u64> {
        match self {
            CompressorSpec::RandomK { shared_seed, .. }
            | CompressorSpec::RandomBlockK { shared_seed, .. }
            | CompressorSpec::RandomProjection { shared_seed, .. } => *shared_seed,
            CompressorSpec::CountSketch { seed, .. } => *seed,
            _ => None,
        }
    }

    /// Copy with `shared_seed` filled in where the kind carries one and it is unset.
    pub fn with_default_shared_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            CompressorSpec::RandomK { shared_seed, .. }
            | CompressorSpec::RandomBlockK { shared_seed, .. }
            | CompressorSpec::RandomProjection { shared_seed, .. }
            | CompressorSpec::CountSketch { seed: shared_seed, .. } => {
                shared_seed.get_or_insert(seed);
            }
            _ => {}
        }
        out
    }

    /// Resolved `k` for the sampling kinds.
    pub fn k(&self, d: usize) -> Option<usize> {
        match self {
            CompressorSpec::RandomK { k, .. } | CompressorSpec::RandomBlockK { k, .. } | CompressorSpec::TopK { k } => {
                Some(k.resolve(d))
            }
            _ => None,
        }
    }

    pub fn sketch_shape(&self, d: usize) -> Option<SketchShape> {
        match self {
            CompressorSpec::CountSketch {
                rows,
                width,
                precision,
                block_size,
                layout,
                ..
            } => Some(SketchShape {
                rows: *rows,
                width: width.resolve(d),
                block_size: *block_size,
                layout: *layout,
                precision: *precision,
            }),
            _ => None,
        }
    }

    /// Checks that the spec can compress vectors of length `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        if d == 0 {
            return Err(contract("compressor dimension must be positive"));
        }
        match self {
            CompressorSpec::RandomK { .. } | CompressorSpec::RandomBlockK { .. } | CompressorSpec::TopK { .. } => {
                let k = self.k(d).unwrap_or(0);
                if k == 0 || k > d {
                    return Err(contract(format!("{}: k = {k} must lie in 1..={d}", self.name())));
                }
            }
            CompressorSpec::PowerLowrank { rank } | CompressorSpec::RandomProjection { rank, .. } => {
                let (n, m) = matrix_view(d);
                if *rank == 0 || *rank > n.min(m) {
                    return Err(contract(format!(
                        "{}: rank {rank} must lie in 1..={} for the {n}x{m} view",
                        self.name(),
                        n.min(m)
                    )));
                }
            }
            CompressorSpec::StochasticQuantize { levels, .. } => {
                if *levels < 1 {
                    return Err(contract("stochastic_quantize: levels must be at least 1"));
                }
            }
            CompressorSpec::CountSketch { .. } => {
                self.sketch_shape(d).expect("count sketch").validate()?;
            }
            CompressorSpec::Identity | CompressorSpec::ScaledSign => {}
        }
        Ok(())
    }
}
