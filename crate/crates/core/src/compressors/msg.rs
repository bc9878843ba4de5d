//! Compressed messages and their little-endian wire format.

use super::quantize::QuantizedBlob;
use crate::error::{Error, Result};
use crate::sketch::CountSketch;

/// Size of the fixed message header: kind, 3 reserved bytes, `d`, `payload_bits`.
pub const HEADER_BYTES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Identity = 0,
    ScaledSign = 1,
    RandomK = 2,
    RandomBlockK = 3,
    TopK = 4,
    PowerLowrank = 5,
    RandomProjection = 6,
    StochasticQuantize = 7,
    CountSketch = 8,
}

impl Kind {
    fn from_u8(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Kind::Identity,
            1 => Kind::ScaledSign,
            2 => Kind::RandomK,
            3 => Kind::RandomBlockK,
            4 => Kind::TopK,
            5 => Kind::PowerLowrank,
            6 => Kind::RandomProjection,
            7 => Kind::StochasticQuantize,
            8 => Kind::CountSketch,
            t => return Err(Error::Decode(format!("unknown compressor tag {t}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Dense(Vec<f64>),
    /// `negative[i]` marks coordinates decoding to `-scale`.
    Sign { scale: f64, negative: Vec<bool> },
    /// Values for coordinates `(offset + j) mod d`.
    Block { offset: usize, values: Vec<f64> },
    Sparse { indices: Vec<u32>, values: Vec<f64> },
    /// `P` is `n x r`, `Q` is `m x r`, both row-major.
    LowRank { n: usize, m: usize, rank: usize, p: Vec<f64>, q: Vec<f64> },
    /// `GU` (`n x r`) and the seed that regenerates `U` (`m x r`).
    Projection { n: usize, m: usize, rank: usize, seed: u64, gu: Vec<f64> },
    Quantized(QuantizedBlob),
    Sketch(CountSketch),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedMsg {
    pub kind: Kind,
    pub dim: usize,
    pub payload_bits: u64,
    pub payload: Payload,
}

fn put_f32s(out: &mut Vec<u8>, values: &[f64]) {
    values.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes()));
}

fn get_f32s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect()
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

impl Payload {
    /// Bit-exact size of the serialized payload.
    pub fn bits(&self) -> u64 {
        let b = |n: usize| 8 * n as u64;
        match self {
            Payload::Dense(v) => b(4 * v.len()),
            Payload::Sign { negative, .. } => b(4 + negative.len().div_ceil(8)),
            Payload::Block { values, .. } => b(8 + 4 * values.len()),
            Payload::Sparse { values, .. } => b(8 * values.len()),
            Payload::LowRank { p, q, .. } => b(8 + 4 * (p.len() + q.len())),
            Payload::Projection { gu, .. } => b(16 + 4 * gu.len()),
            Payload::Quantized(q) => q.encoded_bits(),
            Payload::Sketch(s) => b(40 + s.bytes()),
        }
    }
}

impl CompressedMsg {
    pub fn new(kind: Kind, dim: usize, payload: Payload) -> Self {
        let payload_bits = payload.bits();
        Self {
            kind,
            dim,
            payload_bits,
            payload,
        }
    }

    /// Header plus payload, in bits.
    pub fn wire_bits(&self) -> u64 {
        8 * HEADER_BYTES as u64 + self.payload_bits
    }

    /// Header plus payload rounded up to whole bytes.
    pub fn wire_bytes(&self) -> u64 {
        HEADER_BYTES as u64 + self.payload_bits.div_ceil(8)
    }

    /// Full-precision values travel as f32.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.wire_bytes() as usize);
        out.push(self.kind as u8);
        out.extend_from_slice(&[0; 3]);
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&self.payload_bits.to_le_bytes());
        match &self.payload {
            Payload::Dense(v) => put_f32s(&mut out, v),
            Payload::Sign { scale, negative } => {
                out.extend_from_slice(&(*scale as f32).to_le_bytes());
                let mut bitmap = vec![0u8; negative.len().div_ceil(8)];
                for (i, _) in negative.iter().enumerate().filter(|(_, &n)| n) {
                    bitmap[i / 8] |= 1 << (i % 8);
                }
                out.extend_from_slice(&bitmap);
            }
            Payload::Block { offset, values } => {
                out.extend_from_slice(&(*offset as u64).to_le_bytes());
                put_f32s(&mut out, values);
            }
            Payload::Sparse { indices, values } => {
                indices.iter().for_each(|i| out.extend_from_slice(&i.to_le_bytes()));
                put_f32s(&mut out, values);
            }
            Payload::LowRank { n, m, p, q, .. } => {
                out.extend_from_slice(&(*n as u32).to_le_bytes());
                out.extend_from_slice(&(*m as u32).to_le_bytes());
                put_f32s(&mut out, p);
                put_f32s(&mut out, q);
            }
            Payload::Projection { n, m, seed, gu, .. } => {
                out.extend_from_slice(&(*n as u32).to_le_bytes());
                out.extend_from_slice(&(*m as u32).to_le_bytes());
                out.extend_from_slice(&seed.to_le_bytes());
                put_f32s(&mut out, gu);
            }
            Payload::Quantized(q) => out.extend_from_slice(&q.encode().0),
            Payload::Sketch(s) => out.extend_from_slice(&s.to_bytes()?),
        }
        debug_assert_eq!(out.len() as u64, self.wire_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |what: String| Error::Decode(what);
        if bytes.len() < HEADER_BYTES {
            return Err(bad("message header truncated".into()));
        }
        let kind = Kind::from_u8(bytes[0])?;
        if bytes[1..4] != [0; 3] {
            return Err(bad("reserved header bytes are not zero".into()));
        }
        let dim = u64_at(bytes, 4) as usize;
        let payload_bits = u64_at(bytes, 12);
        let body = &bytes[HEADER_BYTES..];
        if body.len() as u64 != payload_bits.div_ceil(8) {
            return Err(bad(format!(
                "payload is {} bytes, header declares {payload_bits} bits",
                body.len()
            )));
        }
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(bad(format!("{what}"))) };
        let payload = match kind {
            Kind::Identity => {
                need(body.len() == 4 * dim, "dense payload length")?;
                Payload::Dense(get_f32s(body))
            }
            Kind::ScaledSign => {
                need(body.len() == 4 + dim.div_ceil(8), "sign payload length")?;
                let scale = f64::from(f32::from_le_bytes(body[..4].try_into().unwrap()));
                let negative = (0..dim).map(|i| body[4 + i / 8] >> (i % 8) & 1 == 1).collect();
                Payload::Sign { scale, negative }
            }
            Kind::RandomBlockK => {
                need(body.len() >= 8 && (body.len() - 8) % 4 == 0, "block payload length")?;
                Payload::Block {
                    offset: u64_at(body, 0) as usize,
                    values: get_f32s(&body[8..]),
                }
            }
            Kind::RandomK | Kind::TopK => {
                need(body.len() % 8 == 0, "sparse payload length")?;
                let k = body.len() / 8;
                Payload::Sparse {
                    indices: (0..k).map(|i| u32_at(body, 4 * i)).collect(),
                    values: get_f32s(&body[4 * k..]),
                }
            }
            Kind::PowerLowrank => {
                need(body.len() >= 8, "low-rank payload length")?;
                let (n, m) = (u32_at(body, 0) as usize, u32_at(body, 4) as usize);
                let rest = body.len() - 8;
                need(n + m > 0 && rest % (4 * (n + m)) == 0, "low-rank factor length")?;
                let rank = rest / (4 * (n + m));
                let vals = get_f32s(&body[8..]);
                Payload::LowRank {
                    n,
                    m,
                    rank,
                    p: vals[..n * rank].to_vec(),
                    q: vals[n * rank..].to_vec(),
                }
            }
            Kind::RandomProjection => {
                need(body.len() >= 16, "projection payload length")?;
                let (n, m) = (u32_at(body, 0) as usize, u32_at(body, 4) as usize);
                let rest = body.len() - 16;
                need(n > 0 && rest % (4 * n) == 0, "projection factor length")?;
                Payload::Projection {
                    n,
                    m,
                    rank: rest / (4 * n),
                    seed: u64_at(body, 8),
                    gu: get_f32s(&body[16..]),
                }
            }
            Kind::StochasticQuantize => Payload::Quantized(QuantizedBlob::decode_stream(body, payload_bits, dim)?),
            Kind::CountSketch => Payload::Sketch(CountSketch::from_bytes(body)?),
        };
        let msg = Self {
            kind,
            dim,
            payload_bits,
            payload,
        };
        need(msg.payload.bits() == payload_bits, "payload_bits disagrees with payload")?;
        Ok(msg)
    }
}
