//! Counter-based random streams and keyed hash families.
//!
//! Every random draw in the crate is a pure function of `(seed, stream_id,
//! counter)`, so per-worker, per-purpose streams can be derived without any
//! coordination and a run replays bit-for-bit regardless of scheduling.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const KEY_SALT: u64 = 0x243f_6a88_85a3_08d3;
const STREAM_SALT: u64 = 0x1319_8a2e_0370_7344;
const ROW_SALT: u64 = 0xa409_3822_299f_31d0;

/// 64-bit finalizer (splitmix64 constants).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Purpose tags used to derive independent stream ids from one master seed.
pub mod purpose {
    pub const DATA: u64 = 1;
    pub const GRAD_COMPRESSOR: u64 = 2;
    pub const ERR_COMPRESSOR: u64 = 3;
    pub const SKETCH: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SHARED: u64 = 6;
    pub const PROBLEM: u64 = 7;
    pub const PROJECTION: u64 = 8;

    /// Stream id for `(purpose, worker)`.
    pub const fn stream(purpose: u64, worker: u64) -> u64 {
        (purpose << 32) | worker
    }
}

/// A splittable, counter-based random stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
    #[serde(skip)]
    keys: Option<(u64, u64)>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            counter: 0,
            keys: Some(Self::derive_keys(seed, stream_id)),
        }
    }

    /// Reconstructs a stream positioned at an arbitrary counter.
    pub fn at(seed: u64, stream_id: u64, counter: u64) -> Self {
        let mut s = Self::new(seed, stream_id);
        s.counter = counter;
        s
    }

    fn derive_keys(seed: u64, stream_id: u64) -> (u64, u64) {
        let k0 = mix64(seed ^ KEY_SALT);
        let k1 = mix64(stream_id.wrapping_mul(GOLDEN) ^ mix64(seed ^ STREAM_SALT));
        (k0, k1)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Value at `counter` without advancing.
    pub fn peek_u64(&self, counter: u64) -> u64 {
        let (k0, k1) = self
            .keys
            .unwrap_or_else(|| Self::derive_keys(self.seed, self.stream_id));
        let x = counter.wrapping_mul(GOLDEN).wrapping_add(k0);
        mix64(mix64(x) ^ k1)
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = self.peek_u64(self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` (Lemire's multiply-and-reject).
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal via Box–Muller; consumes two counters.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Random sign in `{+1, -1}`.
    pub fn next_sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Child stream keyed by this stream's next output.
    pub fn fork(&mut self, stream_id: u64) -> RngStream {
        RngStream::new(self.next_u64(), stream_id)
    }
}

/// Keyed hash family for count sketches: one bucket hash and one sign hash
/// per row.
#[derive(Clone, Debug, PartialEq)]
pub struct HashFamily {
    seed: u64,
    rows: usize,
    width: usize,
    kind: HashKind,
}

#[derive(Clone, Debug, PartialEq)]
enum HashKind {
    Keyed,
    /// Per-row permutation of `[0, width)`; injective on `[0, width)`.
    Injective(Vec<Vec<u32>>),
    /// Explicit tables, used for pinned examples.
    Explicit {
        index: Vec<Vec<usize>>,
        sign: Vec<Vec<i8>>,
    },
}

impl HashFamily {
    pub fn new(seed: u64, rows: usize, width: usize) -> Self {
        assert!(rows >= 1 && width >= 1, "hash family needs rows, width >= 1");
        Self {
            seed,
            rows,
            width,
            kind: HashKind::Keyed,
        }
    }

    /// Row hashes are seeded permutations of the columns, so any
    /// `coord < width` lands in a distinct column.
    pub fn injective(seed: u64, rows: usize, width: usize) -> Self {
        assert!(rows >= 1 && width >= 1, "hash family needs rows, width >= 1");
        assert!(width <= u32::MAX as usize);
        let perms = (0..rows)
            .map(|r| {
                let mut rng = RngStream::new(seed, ROW_SALT ^ r as u64);
                let mut p: Vec<u32> = (0..width as u32).collect();
                for i in (1..width).rev() {
                    let j = rng.next_below(i as u64 + 1) as usize;
                    p.swap(i, j);
                }
                p
            })
            .collect();
        Self {
            seed,
            rows,
            width,
            kind: HashKind::Injective(perms),
        }
    }

    /// Family with pinned tables: `index[row][coord]`, `sign[row][coord]`.
    pub fn explicit(width: usize, index: Vec<Vec<usize>>, sign: Vec<Vec<i8>>) -> Self {
        let rows = index.len();
        assert!(rows >= 1 && rows == sign.len());
        for (ix, sg) in index.iter().zip(&sign) {
            assert_eq!(ix.len(), sg.len());
            assert!(ix.iter().all(|&c| c < width));
            assert!(sg.iter().all(|&s| s == 1 || s == -1));
        }
        Self {
            seed: 0,
            rows,
            width,
            kind: HashKind::Explicit { index, sign },
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_injective(&self) -> bool {
        matches!(self.kind, HashKind::Injective(_))
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self.kind, HashKind::Explicit { .. })
    }

    /// Largest coordinate the family can hash, if bounded.
    pub fn coord_limit(&self) -> Option<usize> {
        match &self.kind {
            HashKind::Keyed => None,
            HashKind::Injective(_) => Some(self.width),
            HashKind::Explicit { index, .. } => Some(index[0].len()),
        }
    }

    #[inline]
    fn raw(&self, row: usize, coord: usize) -> u64 {
        let k = mix64(self.seed ^ mix64((row as u64).wrapping_add(1).wrapping_mul(ROW_SALT)));
        mix64(k ^ (coord as u64).wrapping_mul(GOLDEN))
    }

    /// Column in `[0, width)` for `coord` in `row`.
    #[inline]
    pub fn hash_index(&self, row: usize, coord: usize) -> usize {
        assert!(row < self.rows, "row {row} out of range ({} rows)", self.rows);
        match &self.kind {
            HashKind::Keyed => ((self.raw(row, coord) as u128 * self.width as u128) >> 64) as usize,
            HashKind::Injective(p) => p[row][coord] as usize,
            HashKind::Explicit { index, .. } => index[row][coord],
        }
    }

    /// Sign in `{+1, -1}` for `coord` in `row`.
    #[inline]
    pub fn hash_sign(&self, row: usize, coord: usize) -> f64 {
        assert!(row < self.rows, "row {row} out of range ({} rows)", self.rows);
        match &self.kind {
            HashKind::Keyed | HashKind::Injective(_) => {
                if self.raw(row, coord) & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            HashKind::Explicit { sign, .. } => sign[row][coord] as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_a_pure_function_of_its_key() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let c = RngStream::at(7, 3, 50);
        assert_eq!(c.peek_u64(50), RngStream::new(7, 3).peek_u64(50));
    }

    #[test]
    fn uniform_mean_is_one_half() {
        let mut s = RngStream::new(11, 0);
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| s.next_uniform()).sum::<f64>() / n as f64;
        // 3 sigma of the uniform mean is 3 * sqrt(1/12) / 1000 ~= 0.00087.
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn distinct_streams_differ() {
        let a = RngStream::new(1, 0).peek_u64(0);
        let b = RngStream::new(1, 1).peek_u64(0);
        assert_ne!(a, b);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 1);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| a.next_uniform()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.next_uniform()).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!(r.abs() < 0.01, "correlation {r}");
    }

    #[test]
    fn next_below_stays_in_range() {
        let mut s = RngStream::new(5, 5);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            let v = s.next_below(7) as usize;
            seen[v] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn gaussian_moments() {
        let mut s = RngStream::new(9, 2);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.next_gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn single_column_always_zero() {
        let h = HashFamily::new(3, 2, 1);
        for c in 0..1000 {
            assert_eq!(h.hash_index(0, c), 0);
            assert_eq!(h.hash_index(1, c), 0);
        }
    }

    #[test]
    fn hashes_are_deterministic_in_seed() {
        let a = HashFamily::new(42, 3, 17);
        let b = HashFamily::new(42, 3, 17);
        for row in 0..3 {
            for c in 0..500 {
                assert_eq!(a.hash_index(row, c), b.hash_index(row, c));
                assert_eq!(a.hash_sign(row, c), b.hash_sign(row, c));
            }
        }
    }

    #[test]
    fn column_occupancy_is_balanced() {
        let d = 100_000;
        let w = 100;
        let h = HashFamily::new(2024, 1, w);
        let mut counts = vec![0usize; w];
        for c in 0..d {
            counts[h.hash_index(0, c)] += 1;
        }
        let expect = (d / w) as f64;
        let tol = 4.0 * expect.sqrt();
        for &n in &counts {
            assert!((n as f64 - expect).abs() <= tol, "bucket {n} vs {expect}");
        }
    }

    #[test]
    fn signs_are_balanced() {
        let h = HashFamily::new(77, 1, 10);
        let d = 100_000;
        let mean: f64 = (0..d).map(|c| h.hash_sign(0, c)).sum::<f64>() / d as f64;
        assert!(mean.abs() < 0.01, "sign mean {mean}");
        for c in 0..1000 {
            assert_eq!(h.hash_sign(0, c).powi(2), 1.0);
        }
    }

    #[test]
    fn injective_family_has_no_collisions() {
        let h = HashFamily::injective(1, 3, 64);
        for row in 0..3 {
            let mut seen = vec![false; 64];
            for c in 0..64 {
                let col = h.hash_index(row, c);
                assert!(!seen[col]);
                seen[col] = true;
            }
        }
    }

    #[test]
    #[should_panic]
    fn row_out_of_range_panics() {
        HashFamily::new(0, 2, 4).hash_index(2, 0);
    }
}
