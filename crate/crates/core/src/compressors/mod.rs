//! Gradient compressors `Q` and error compressors `C` behind one contract:
//! `compress` maps a dense vector to a [`CompressedMsg`], `decode` maps it back.

mod elias;
mod estimate;
mod msg;
mod quantize;
mod spec;

pub use elias::{gamma_len, BitReader, BitWriter};
pub use estimate::{estimate_delta, estimate_theta, monte_carlo_mean, SampleDist};
pub use msg::{CompressedMsg, Kind, Payload, HEADER_BYTES};
pub use quantize::{level_probabilities, quantize, quantize_with, QuantizedBlob};
pub use spec::{CompressorSpec, QuantNorm, Size};

use crate::error::{contract, Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, matrix_view, orthonormalize_columns};
use crate::numerics::{purpose, HashFamily, RngStream};
use crate::sketch::CountSketch;

/// Warm-start factor for the power iteration, owned by one worker.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LowRankState {
    pub q: Vec<f64>,
}

/// U (`m x r`, entries N(0, 1/r)) regenerated from its seed.
pub fn projection_matrix(seed: u64, m: usize, rank: usize) -> Vec<f64> {
    let mut rng = RngStream::new(seed, purpose::stream(purpose::PROJECTION, 0));
    let sd = 1.0 / (rank as f64).sqrt();
    (0..m * rank).map(|_| sd * rng.next_gaussian()).collect()
}

fn sample_without_replacement(d: usize, k: usize, rng: &mut RngStream) -> Vec<u32> {
    let mut pool: Vec<u32> = (0..d as u32).collect();
    for i in 0..k {
        let j = i + rng.next_below((d - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

/// Indices of the `k` largest magnitudes, ties to the lowest index, ascending.
pub fn top_k_indices(x: &[f64], k: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..x.len() as u32).collect();
    let order = |a: &u32, b: &u32| {
        x[*b as usize]
            .abs()
            .total_cmp(&x[*a as usize].abs())
            .then(a.cmp(b))
    };
    if k < idx.len() {
        idx.select_nth_unstable_by(k, order);
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// Hash family of a count-sketch compressor.
pub fn sketch_family(seed: u64, shape: &crate::sketch::SketchShape, injective: bool) -> HashFamily {
    if injective {
        HashFamily::injective(seed, shape.rows, shape.buckets())
    } else {
        HashFamily::new(seed, shape.rows, shape.buckets())
    }
}

/// Compress `x`. `warm` carries the power-iteration factor between calls;
/// without it a fresh Gaussian start is drawn from `rng`.
pub fn compress(
    spec: &CompressorSpec,
    x: &[f64],
    rng: &mut RngStream,
    warm: Option<&mut LowRankState>,
) -> Result<CompressedMsg> {
    let d = x.len();
    spec.validate(d)?;
    let msg = match spec {
        CompressorSpec::Identity => CompressedMsg::new(Kind::Identity, d, Payload::Dense(x.to_vec())),
        CompressorSpec::ScaledSign => {
            let scale = x.iter().map(|v| v.abs()).sum::<f64>() / d as f64;
            let negative = x.iter().map(|&v| v < 0.0).collect();
            CompressedMsg::new(Kind::ScaledSign, d, Payload::Sign { scale, negative })
        }
        CompressorSpec::RandomK { scaled, .. } => {
            let k = spec.k(d).unwrap();
            let gain = if *scaled { d as f64 / k as f64 } else { 1.0 };
            let indices = sample_without_replacement(d, k, rng);
            let values = indices.iter().map(|&i| gain * x[i as usize]).collect();
            CompressedMsg::new(Kind::RandomK, d, Payload::Sparse { indices, values })
        }
        CompressorSpec::RandomBlockK { scaled, .. } => {
            let k = spec.k(d).unwrap();
            let gain = if *scaled { d as f64 / k as f64 } else { 1.0 };
            let offset = rng.next_below(d as u64) as usize;
            let values = (0..k).map(|j| gain * x[(offset + j) % d]).collect();
            CompressedMsg::new(Kind::RandomBlockK, d, Payload::Block { offset, values })
        }
        CompressorSpec::TopK { .. } => {
            let indices = top_k_indices(x, spec.k(d).unwrap());
            let values = indices.iter().map(|&i| x[i as usize]).collect();
            CompressedMsg::new(Kind::TopK, d, Payload::Sparse { indices, values })
        }
        CompressorSpec::PowerLowrank { rank } => {
            let (n, m, r) = {
                let (n, m) = matrix_view(d);
                (n, m, *rank)
            };
            let mut local = LowRankState::default();
            let state = warm.unwrap_or(&mut local);
            if state.q.len() != m * r {
                let sd = 1.0 / (m as f64).sqrt();
                state.q = (0..m * r).map(|_| sd * rng.next_gaussian()).collect();
            }
            let mut p = matmul(x, &state.q, n, m, r);
            orthonormalize_columns(&mut p, n, r);
            let q = matmul_tn(x, &p, n, m, r);
            state.q.clone_from(&q);
            CompressedMsg::new(Kind::PowerLowrank, d, Payload::LowRank { n, m, rank: r, p, q })
        }
        CompressorSpec::RandomProjection { rank, .. } => {
            let (n, m) = matrix_view(d);
            let seed = rng.next_u64();
            let u = projection_matrix(seed, m, *rank);
            let gu = matmul(x, &u, n, m, *rank);
            CompressedMsg::new(
                Kind::RandomProjection,
                d,
                Payload::Projection {
                    n,
                    m,
                    rank: *rank,
                    seed,
                    gu,
                },
            )
        }
        CompressorSpec::StochasticQuantize { levels, norm } => {
            CompressedMsg::new(Kind::StochasticQuantize, d, Payload::Quantized(quantize(x, *levels, *norm, rng)))
        }
        CompressorSpec::CountSketch { seed, injective, .. } => {
            let shape = spec.sketch_shape(d).unwrap();
            let seed = seed.unwrap_or_else(|| rng.next_u64());
            let family = sketch_family(seed, &shape, *injective);
            CompressedMsg::new(Kind::CountSketch, d, Payload::Sketch(CountSketch::compress(x, family, &shape)?))
        }
    };
    Ok(msg)
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::Decode(what.into())
}

/// Dense reconstruction of `msg`; rejects payloads inconsistent with `msg.dim`.
pub fn decode(msg: &CompressedMsg) -> Result<Vec<f64>> {
    let d = msg.dim;
    let mut out = vec![0.0; d];
    match &msg.payload {
        Payload::Dense(v) => {
            if v.len() != d {
                return Err(corrupt("dense payload length differs from d"));
            }
            out.copy_from_slice(v);
        }
        Payload::Sign { scale, negative } => {
            if negative.len() != d {
                return Err(corrupt("sign bitmap length differs from d"));
            }
            for (o, &neg) in out.iter_mut().zip(negative) {
                *o = if neg { -scale } else { *scale };
            }
        }
        Payload::Block { offset, values } => {
            if *offset >= d.max(1) || values.len() > d {
                return Err(corrupt("block offset or length out of range"));
            }
            for (j, v) in values.iter().enumerate() {
                out[(offset + j) % d] = *v;
            }
        }
        Payload::Sparse { indices, values } => {
            if indices.len() != values.len() || values.len() > d {
                return Err(corrupt("sparse payload lengths inconsistent"));
            }
            let mut seen = vec![false; d];
            for (&i, &v) in indices.iter().zip(values) {
                let i = i as usize;
                if i >= d || seen[i] {
                    return Err(corrupt(format!("sparse index {i} out of range or repeated")));
                }
                seen[i] = true;
                out[i] = v;
            }
        }
        Payload::LowRank { n, m, rank, p, q } => {
            if n * m != d || p.len() != n * rank || q.len() != m * rank {
                return Err(corrupt("low-rank factor shapes inconsistent with d"));
            }
            out = matmul_nt(p, q, *n, *m, *rank);
        }
        Payload::Projection { n, m, rank, seed, gu } => {
            if n * m != d || gu.len() != n * rank {
                return Err(corrupt("projection shapes inconsistent with d"));
            }
            let u = projection_matrix(*seed, *m, *rank);
            out = matmul_nt(gu, &u, *n, *m, *rank);
        }
        Payload::Quantized(q) => {
            if q.codes.len() != d || q.levels == 0 {
                return Err(corrupt("quantized payload inconsistent with d"));
            }
            if q.codes.iter().any(|c| c.unsigned_abs() > q.levels) {
                return Err(corrupt("quantization level above the level count"));
            }
            out = q.decode();
        }
        Payload::Sketch(s) => {
            if s.dim() != d {
                return Err(corrupt("sketch dimension differs from d"));
            }
            out = s.decode_all();
        }
    }
    Ok(out)
}

/// Bits of the Elias-gamma encoding of a quantized message.
pub fn quantize_encode_bits(msg: &CompressedMsg) -> Result<u64> {
    match &msg.payload {
        Payload::Quantized(q) => Ok(q.encoded_bits()),
        _ => Err(contract("quantize_encode_bits needs a stochastic_quantize message")),
    }
}

/// A spec bound to a dimension, a random stream and warm-start state.
#[derive(Clone, Debug)]
pub struct Compressor {
    spec: CompressorSpec,
    dim: usize,
    rng: RngStream,
    warm: LowRankState,
}

impl Compressor {
    pub fn new(spec: CompressorSpec, dim: usize, rng: RngStream) -> Result<Self> {
        spec.validate(dim)?;
        Ok(Self {
            spec,
            dim,
            rng,
            warm: LowRankState::default(),
        })
    }

    /// Compressor for one worker. Kinds that must agree across workers share
    /// one stream derived from `shared_seed` (or from `seed` when unset).
    pub fn for_worker(spec: &CompressorSpec, dim: usize, seed: u64, role: u64, worker: u64) -> Result<Self> {
        let rng = if spec.wants_shared_randomness() {
            let shared = spec.shared_seed().unwrap_or(seed ^ role.wrapping_mul(0x9e37_79b9));
            RngStream::new(shared, purpose::stream(purpose::SHARED, role))
        } else {
            RngStream::new(seed, purpose::stream(role, worker))
        };
        Self::new(spec.clone(), dim, rng)
    }

    pub fn spec(&self) -> &CompressorSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    pub fn compress(&mut self, x: &[f64]) -> Result<CompressedMsg> {
        if x.len() != self.dim {
            return Err(contract(format!("compressor built for d = {}, got {}", self.dim, x.len())));
        }
        compress(&self.spec, x, &mut self.rng, Some(&mut self.warm))
    }

    /// `decode(compress(x))`.
    pub fn apply(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        decode(&self.compress(x)?)
    }
}
