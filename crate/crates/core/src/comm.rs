//! Simulated collectives over in-process workers with a byte ledger.
//!
//! Reductions always run in ascending worker order, so results do not depend
//! on how worker compute was scheduled. Payloads are charged at their exact
//! serialized size; AllReduce costs `N * payload` per round and AllGather
//! `N * (N - 1) * payload` (ring model).

use serde::{Deserialize, Serialize};

use crate::compressors::{decode, CompressedMsg, Kind, Payload};
use crate::error::{contract, Result};
use crate::sketch::CountSketch;

/// Bytes of one full-precision value on the wire.
pub const DENSE_VALUE_BYTES: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    AllReduce,
    AllGather,
}

impl Primitive {
    /// Bytes charged for one round where each worker contributes `payload` bytes.
    pub fn charge(self, payload: u64, participants: usize) -> u64 {
        let n = participants as u64;
        match self {
            Primitive::AllReduce => n * payload,
            Primitive::AllGather => n * n.saturating_sub(1) * payload,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub primitive: Primitive,
    /// Payload bytes of one worker's contribution.
    pub payload_bytes: u64,
    pub participants: usize,
    pub charged_bytes: u64,
    /// What the same round would cost with dense fp32 payloads.
    pub dense_bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLedger {
    pub bytes_sent_total: u64,
    pub rounds: u64,
    pub per_round: Vec<RoundRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub bytes: u64,
    pub rounds: u64,
    pub dense_bytes: u64,
    /// `bytes / dense_bytes`; 1 for an empty ledger.
    pub reduction_ratio: f64,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one round where each of `participants` workers contributes
    /// `payload_bytes`, for vectors of dimension `dim`.
    pub fn charge(&mut self, primitive: Primitive, payload_bytes: u64, participants: usize, dim: usize) {
        let charged_bytes = primitive.charge(payload_bytes, participants);
        let dense_bytes = primitive.charge(DENSE_VALUE_BYTES * dim as u64, participants);
        self.bytes_sent_total += charged_bytes;
        self.rounds += 1;
        self.per_round.push(RoundRecord {
            primitive,
            payload_bytes,
            participants,
            charged_bytes,
            dense_bytes,
        });
    }

    pub fn dense_bytes(&self) -> u64 {
        self.per_round.iter().map(|r| r.dense_bytes).sum()
    }

    pub fn report(&self) -> LedgerReport {
        ledger_report(self)
    }
}

pub fn ledger_report(ledger: &CommLedger) -> LedgerReport {
    let dense = ledger.dense_bytes();
    LedgerReport {
        bytes: ledger.bytes_sent_total,
        rounds: ledger.rounds,
        dense_bytes: dense,
        reduction_ratio: if dense == 0 {
            1.0
        } else {
            ledger.bytes_sent_total as f64 / dense as f64
        },
    }
}

fn payload_bytes(msg: &CompressedMsg) -> u64 {
    msg.payload_bits.div_ceil(8)
}

/// Sum in ascending order, then divide by `N`.
pub fn mean_in_order(vectors: &[Vec<f64>]) -> Vec<f64> {
    let d = vectors.first().map_or(0, Vec::len);
    let mut sum = vec![0.0; d];
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    sum
}

/// AllReduce of dense full-precision vectors.
pub fn allreduce_dense(vectors: &[Vec<f64>], ledger: &mut CommLedger) -> Result<Vec<f64>> {
    let d = match vectors.first() {
        Some(v) => v.len(),
        None => return Err(contract("allreduce needs at least one worker")),
    };
    if vectors.iter().any(|v| v.len() != d) {
        return Err(contract("allreduce inputs differ in length"));
    }
    ledger.charge(Primitive::AllReduce, DENSE_VALUE_BYTES * d as u64, vectors.len(), d);
    Ok(mean_in_order(vectors))
}

fn shares_support(a: &Payload, b: &Payload) -> bool {
    match (a, b) {
        (Payload::Block { offset: o1, values: v1 }, Payload::Block { offset: o2, values: v2 }) => {
            o1 == o2 && v1.len() == v2.len()
        }
        (Payload::Sparse { indices: i1, .. }, Payload::Sparse { indices: i2, .. }) => i1 == i2,
        (Payload::Projection { seed: s1, rank: r1, .. }, Payload::Projection { seed: s2, rank: r2, .. }) => {
            s1 == s2 && r1 == r2
        }
        (Payload::LowRank { rank: r1, .. }, Payload::LowRank { rank: r2, .. }) => r1 == r2,
        (Payload::Sketch(s1), Payload::Sketch(s2)) => s1.family() == s2.family() && s1.shape() == s2.shape(),
        (Payload::Dense(_), Payload::Dense(_)) => true,
        _ => false,
    }
}

/// AllReduce of compressed messages of an aggregatable kind. Sketches are
/// merged before decoding; other kinds average their decoded contributions.
pub fn allreduce_mean(msgs: &[CompressedMsg], ledger: &mut CommLedger) -> Result<Vec<f64>> {
    let first = msgs.first().ok_or_else(|| contract("allreduce needs at least one worker"))?;
    let (kind, dim) = (first.kind, first.dim);
    if msgs.iter().any(|m| m.kind != kind || m.dim != dim) {
        return Err(contract("allreduce inputs differ in kind or dimension"));
    }
    if matches!(kind, Kind::ScaledSign | Kind::TopK | Kind::StochasticQuantize) {
        return Err(contract(format!("{kind:?} messages cannot be summed in compressed form")));
    }
    if msgs.iter().any(|m| !shares_support(&first.payload, &m.payload)) {
        return Err(contract("allreduce inputs do not share their support or hash family"));
    }
    let payload = msgs.iter().map(payload_bytes).max().unwrap_or(0);
    let mean = if kind == Kind::CountSketch {
        let sketches: Vec<CountSketch> = msgs
            .iter()
            .map(|m| match &m.payload {
                Payload::Sketch(s) => s.clone(),
                _ => unreachable!("kind checked above"),
            })
            .collect();
        CountSketch::merge_mean(&sketches)?.decode_all()
    } else {
        let decoded = msgs.iter().map(decode).collect::<Result<Vec<_>>>()?;
        mean_in_order(&decoded)
    };
    ledger.charge(Primitive::AllReduce, payload, msgs.len(), dim);
    Ok(mean)
}

/// AllGather: every worker receives every message. Charged per sender.
pub fn allgather(msgs: &[CompressedMsg], ledger: &mut CommLedger) -> Result<Vec<CompressedMsg>> {
    let first = msgs.first().ok_or_else(|| contract("allgather needs at least one worker"))?;
    let n = msgs.len();
    let total: u64 = msgs.iter().map(payload_bytes).sum();
    let dim = first.dim;
    // Uneven payloads (variable-length codes) are charged exactly: each
    // message travels to the other N - 1 workers.
    let charged = (n as u64).saturating_sub(1) * total;
    let dense = Primitive::AllGather.charge(DENSE_VALUE_BYTES * dim as u64, n);
    ledger.bytes_sent_total += charged;
    ledger.rounds += 1;
    ledger.per_round.push(RoundRecord {
        primitive: Primitive::AllGather,
        payload_bytes: total.div_ceil(n as u64),
        participants: n,
        charged_bytes: charged,
        dense_bytes: dense,
    });
    Ok(msgs.to_vec())
}

/// Decode gathered messages and average them in worker order.
pub fn mean_of_decoded(msgs: &[CompressedMsg]) -> Result<Vec<f64>> {
    let decoded = msgs.iter().map(decode).collect::<Result<Vec<_>>>()?;
    Ok(mean_in_order(&decoded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressors::{compress, CompressorSpec, Size};
    use crate::numerics::RngStream;

    #[test]
    fn dense_mean() {
        let mut ledger = CommLedger::new();
        let out = allreduce_dense(&[vec![1.0, 2.0], vec![3.0, 4.0]], &mut ledger).unwrap();
        assert_eq!(out, vec![2.0, 3.0]);
        assert_eq!(ledger.bytes_sent_total, 2 * 8);
        assert_eq!(ledger.report().reduction_ratio, 1.0);
    }

    #[test]
    fn shared_block_messages_reduce() {
        let spec = CompressorSpec::RandomBlockK {
            k: Size::Count(10),
            scaled: false,
            shared_seed: Some(1),
        };
        let msgs: Vec<_> = (0..4)
            .map(|w| {
                let x: Vec<f64> = (0..100).map(|i| (i * (w + 1)) as f64).collect();
                compress(&spec, &x, &mut RngStream::new(1, 99), None).unwrap()
            })
            .collect();
        let mut ledger = CommLedger::new();
        let mean = allreduce_mean(&msgs, &mut ledger).unwrap();
        assert_eq!(mean, mean_of_decoded(&msgs).unwrap());
        assert_eq!(ledger.bytes_sent_total, 4 * (10 * 4 + 8));
    }

    #[test]
    fn mismatched_supports_are_rejected() {
        let spec = CompressorSpec::RandomBlockK {
            k: Size::Count(10),
            scaled: false,
            shared_seed: None,
        };
        let x = vec![1.0; 100];
        let a = compress(&spec, &x, &mut RngStream::new(1, 1), None).unwrap();
        let b = compress(&spec, &x, &mut RngStream::new(2, 1), None).unwrap();
        assert!(allreduce_mean(&[a, b], &mut CommLedger::new()).is_err());
    }

    #[test]
    fn allgather_cost_model() {
        let x = vec![1.0; 1000];
        let msg = compress(&CompressorSpec::ScaledSign, &x, &mut RngStream::new(1, 1), None).unwrap();
        let mut ledger = CommLedger::new();
        allgather(&[msg.clone()], &mut ledger).unwrap();
        assert_eq!(ledger.bytes_sent_total, 0);
        allgather(&vec![msg; 4], &mut ledger).unwrap();
        assert_eq!(ledger.bytes_sent_total, 12 * (4 + 125));
    }
}
