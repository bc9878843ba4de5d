use crate::compressors::{compress, sketch_family, decode, quantize, CompressedMsg, CompressorSpec, LowRankState, QuantizedBlob};
use crate::error::Result;
use crate::numerics::{HashFamily, RngStream};
use crate::sketch::{CountSketch, SketchShape};

/// A worker's error state, stored in whatever form its compressor produces.
#[derive(Clone, Debug, PartialEq)]
pub enum ErrorHolder {
    None,
    Dense(Vec<f64>),
    Sketch(CountSketch),
    Quantized(QuantizedBlob),
    /// Any other compressed form, decoded on read.
    Message(CompressedMsg),
}

impl ErrorHolder {
    /// Dense estimate of the error; zeros for [`ErrorHolder::None`].
    pub fn decoded(&self, dim: usize) -> Result<Vec<f64>> {
        Ok(match self {
            ErrorHolder::None => vec![0.0; dim],
            ErrorHolder::Dense(v) => v.clone(),
            ErrorHolder::Sketch(s) => s.decode_all(),
            ErrorHolder::Quantized(q) => q.decode(),
            ErrorHolder::Message(m) => decode(m)?,
        })
    }

    /// Auxiliary memory in bytes, with full-precision values counted as f32.
    pub fn bytes(&self) -> u64 {
        match self {
            ErrorHolder::None => 0,
            ErrorHolder::Dense(v) => 4 * v.len() as u64,
            ErrorHolder::Sketch(s) => s.bytes() as u64,
            ErrorHolder::Quantized(q) => q.encoded_bits().div_ceil(8),
            ErrorHolder::Message(m) => m.payload_bits.div_ceil(8),
        }
    }
}

/// Writes vectors into [`ErrorHolder`]s through one error compressor.
/// Count-sketch holders keep one hash family for the whole run.
#[derive(Clone, Debug)]
pub struct ErrorStore {
    spec: CompressorSpec,
    rng: RngStream,
    warm: LowRankState,
    sketch: Option<(HashFamily, SketchShape)>,
}

impl ErrorStore {
    /// `family_seed` must agree across workers so sketches stay mergeable.
    pub fn new(spec: CompressorSpec, dim: usize, rng: RngStream, family_seed: u64) -> Result<Self> {
        spec.validate(dim)?;
        let sketch = match &spec {
            CompressorSpec::CountSketch { seed, injective, .. } => {
                let shape = spec.sketch_shape(dim).expect("count sketch");
                let family = sketch_family(seed.unwrap_or(family_seed), &shape, *injective);
                Some((family, shape))
            }
            _ => None,
        };
        Ok(Self {
            spec,
            rng,
            warm: LowRankState::default(),
            sketch,
        })
    }

    pub fn spec(&self) -> &CompressorSpec {
        &self.spec
    }

    pub fn is_sketch(&self) -> bool {
        self.sketch.is_some()
    }

    /// Sketch of `v` under the run's fixed family.
    pub fn sketch_of(&self, v: &[f64]) -> Result<CountSketch> {
        let (family, shape) = self.sketch.as_ref().expect("sketch store");
        CountSketch::compress(v, family.clone(), shape)
    }

    /// `C(v)`.
    pub fn store(&mut self, v: &[f64]) -> Result<ErrorHolder> {
        Ok(match &self.spec {
            CompressorSpec::Identity => ErrorHolder::Dense(v.to_vec()),
            CompressorSpec::CountSketch { .. } => ErrorHolder::Sketch(self.sketch_of(v)?),
            CompressorSpec::StochasticQuantize { levels, norm } => {
                ErrorHolder::Quantized(quantize(v, *levels, *norm, &mut self.rng))
            }
            spec => ErrorHolder::Message(compress(spec, v, &mut self.rng, Some(&mut self.warm))?),
        })
    }

    /// Holder for the all-zero error.
    pub fn zero(&mut self, dim: usize) -> Result<ErrorHolder> {
        match &self.sketch {
            Some((family, shape)) => Ok(ErrorHolder::Sketch(CountSketch::zeros(family.clone(), dim, shape)?)),
            None => {
                // Fresh randomness is not consumed by the zero vector for
                // the fixed-size kinds; the stream is restored to keep runs
                // aligned with and without an initial store.
                let saved = self.rng.clone();
                let holder = self.store(&vec![0.0; dim])?;
                self.rng = saved;
                self.warm = LowRankState::default();
                Ok(holder)
            }
        }
    }
}
