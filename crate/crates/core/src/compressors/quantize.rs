//! Stochastic uniform quantization with Elias-gamma run-length coding.

use super::elias::{gamma_len, BitReader, BitWriter};
use super::spec::QuantNorm;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Quantized vector: entry `i` decodes to `norm * codes[i] / levels`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedBlob {
    pub norm: f64,
    pub levels: u32,
    pub codes: Vec<i32>,
}

fn scale_of(x: &[f64], norm: QuantNorm) -> f64 {
    match norm {
        QuantNorm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        QuantNorm::Max => x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    }
}

/// Lower level `l` and the probability of rounding up to `l + 1`, per entry.
pub fn level_probabilities(x: &[f64], levels: u32, norm: QuantNorm) -> Vec<(u32, f64)> {
    let scale = scale_of(x, norm);
    let s = f64::from(levels);
    x.iter()
        .map(|v| {
            if scale == 0.0 {
                return (0, 0.0);
            }
            let r = (v.abs() / scale * s).min(s);
            let l = (r.floor() as u32).min(levels);
            (l, if l == levels { 0.0 } else { r - f64::from(l) })
        })
        .collect()
}

/// Quantize with uniforms supplied by `uniform`; exposed so tests can force outcomes.
pub fn quantize_with(x: &[f64], levels: u32, norm: QuantNorm, mut uniform: impl FnMut() -> f64) -> QuantizedBlob {
    let probs = level_probabilities(x, levels, norm);
    let codes = x
        .iter()
        .zip(&probs)
        .map(|(v, &(l, p))| {
            let level = if uniform() < p { l + 1 } else { l } as i32;
            if *v < 0.0 {
                -level
            } else {
                level
            }
        })
        .collect();
    QuantizedBlob {
        norm: scale_of(x, norm),
        levels,
        codes,
    }
}

pub fn quantize(x: &[f64], levels: u32, norm: QuantNorm, rng: &mut RngStream) -> QuantizedBlob {
    quantize_with(x, levels, norm, || rng.next_uniform())
}

impl QuantizedBlob {
    pub fn dim(&self) -> usize {
        self.codes.len()
    }

    pub fn decode(&self) -> Vec<f64> {
        let unit = self.norm / f64::from(self.levels);
        self.codes.iter().map(|&c| unit * f64::from(c)).collect()
    }

    pub fn nonzeros(&self) -> usize {
        self.codes.iter().filter(|&&c| c != 0).count()
    }

    /// Exact size of [`Self::encode`] in bits, without building the stream.
    pub fn encoded_bits(&self) -> u64 {
        let mut bits = 32 + gamma_len(u64::from(self.levels)) + gamma_len(self.nonzeros() as u64 + 1);
        let mut run = 0u64;
        for &c in &self.codes {
            if c == 0 {
                run += 1;
            } else {
                bits += gamma_len(run + 1) + 1 + gamma_len(u64::from(c.unsigned_abs()));
                run = 0;
            }
        }
        bits
    }

    /// `[norm f32][gamma(s)][gamma(nnz + 1)]`, then per nonzero
    /// `[gamma(zero run + 1)][sign bit][gamma(level)]`.
    pub fn encode(&self) -> (Vec<u8>, u64) {
        let mut w = BitWriter::new();
        w.write_bits(u64::from((self.norm as f32).to_bits()), 32);
        w.write_gamma(u64::from(self.levels));
        w.write_gamma(self.nonzeros() as u64 + 1);
        let mut run = 0u64;
        for &c in &self.codes {
            if c == 0 {
                run += 1;
            } else {
                w.write_gamma(run + 1);
                w.write_bit(c < 0);
                w.write_gamma(u64::from(c.unsigned_abs()));
                run = 0;
            }
        }
        let bits = w.bit_len();
        (w.into_bytes(), bits)
    }

    pub fn decode_stream(bytes: &[u8], bits: u64, dim: usize) -> Result<Self> {
        let bad = |what: &str| Error::Decode(format!("quantized payload: {what}"));
        let mut r = BitReader::new(bytes, bits);
        let norm = f64::from(f32::from_bits(r.read_bits(32).ok_or_else(|| bad("truncated norm"))? as u32));
        let levels = r.read_gamma().ok_or_else(|| bad("truncated level count"))?;
        let levels = u32::try_from(levels).map_err(|_| bad("level count overflow"))?;
        let nnz = r.read_gamma().ok_or_else(|| bad("truncated nonzero count"))? - 1;
        if nnz as usize > dim {
            return Err(bad("more nonzeros than coordinates"));
        }
        let mut codes = vec![0i32; dim];
        let mut pos = 0usize;
        for _ in 0..nnz {
            let run = r.read_gamma().ok_or_else(|| bad("truncated run"))? - 1;
            pos = pos
                .checked_add(run as usize)
                .filter(|&p| p < dim)
                .ok_or_else(|| bad("run past the end"))?;
            let negative = r.read_bit().ok_or_else(|| bad("truncated sign"))?;
            let level = r.read_gamma().ok_or_else(|| bad("truncated level"))?;
            if level > u64::from(levels) {
                return Err(bad("level above the level count"));
            }
            codes[pos] = if negative { -(level as i32) } else { level as i32 };
            pos += 1;
        }
        if r.position() != bits {
            return Err(bad("trailing bits"));
        }
        Ok(Self { norm, levels, codes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_example_probabilities() {
        // e = [3, 4], s = 1: ratios 0.6 and 0.8
        let p = level_probabilities(&[3.0, 4.0], 1, QuantNorm::L2);
        assert_eq!(p[0].0, 0);
        assert!((p[0].1 - 0.6).abs() < 1e-15);
        assert!((p[1].1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_expectation_is_exact() {
        let x = [3.0, 4.0];
        let p = level_probabilities(&x, 1, QuantNorm::L2);
        let mut mean = [0.0; 2];
        let mut err = 0.0;
        for outcome in 0..4u32 {
            let ups = [outcome & 1 == 1, outcome & 2 == 2];
            let mut draws = ups.iter().map(|&u| if u { 0.0 } else { 1.0 - 1e-16 });
            let q = quantize_with(&x, 1, QuantNorm::L2, || draws.next().unwrap());
            let prob: f64 = (0..2).map(|i| if ups[i] { p[i].1 } else { 1.0 - p[i].1 }).product();
            let dec = q.decode();
            for v in &dec {
                assert!(*v == 0.0 || *v == 5.0);
            }
            for i in 0..2 {
                mean[i] += prob * dec[i];
            }
            err += prob * ((dec[0] - 3.0).powi(2) + (dec[1] - 4.0).powi(2));
        }
        assert!((mean[0] - 3.0).abs() < 1e-12 && (mean[1] - 4.0).abs() < 1e-12);
        assert!((err / 25.0 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn max_norm_saturates_the_largest_entry() {
        let mut rng = RngStream::new(1, 1);
        let q = quantize(&[0.5, -2.0, 1.0], 4, QuantNorm::Max, &mut rng);
        assert_eq!(q.codes[1], -4);
        assert_eq!(q.norm, 2.0);
    }

    #[test]
    fn zero_vector_costs_a_header() {
        let mut rng = RngStream::new(1, 1);
        let q = quantize(&[0.0; 100], 8, QuantNorm::Max, &mut rng);
        assert!(q.decode().iter().all(|&v| v == 0.0));
        assert_eq!(q.encoded_bits(), 32 + gamma_len(8) + 1);
    }

    #[test]
    fn stream_round_trip() {
        let mut rng = RngStream::new(9, 2);
        let x: Vec<f64> = (0..300).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.25).collect();
        let q = quantize(&x, 16, QuantNorm::Max, &mut rng);
        let (bytes, bits) = q.encode();
        assert_eq!(bits, q.encoded_bits());
        let back = QuantizedBlob::decode_stream(&bytes, bits, x.len()).unwrap();
        assert_eq!(back, q);
        assert!(QuantizedBlob::decode_stream(&bytes, bits - 1, x.len()).is_err());
    }
}
