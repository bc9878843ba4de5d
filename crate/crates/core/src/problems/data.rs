use crate::error::{contract, Result};
use crate::numerics::RngStream;

/// Sample indices with the weight that keeps the worker average unbiased
/// when shards have unequal sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub weight: f64,
}

/// Round-robin partition of the samples across workers; each step draws a
/// batch uniformly with replacement from the worker's shard.
#[derive(Clone, Debug, PartialEq)]
pub struct ShardedDataset {
    samples: usize,
    shards: Vec<Vec<usize>>,
    batch: usize,
}

impl ShardedDataset {
    pub fn new(samples: usize, workers: usize, batch: usize) -> Result<Self> {
        if workers == 0 || batch == 0 {
            return Err(contract("sharding needs at least one worker and a positive batch"));
        }
        if samples < workers {
            return Err(contract(format!("{samples} samples cannot cover {workers} workers")));
        }
        let mut shards = vec![Vec::new(); workers];
        for i in 0..samples {
            shards[i % workers].push(i);
        }
        Ok(Self { samples, shards, batch })
    }

    pub fn workers(&self) -> usize {
        self.shards.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn shard(&self, worker: usize) -> &[usize] {
        &self.shards[worker]
    }

    /// `weight = N * |shard| / n`; exactly 1 when the shards are equal.
    pub fn draw(&self, worker: usize, rng: &mut RngStream) -> Batch {
        let shard = &self.shards[worker];
        let indices = (0..self.batch)
            .map(|_| shard[rng.next_below(shard.len() as u64) as usize])
            .collect();
        let weight = if shard.len() * self.shards.len() == self.samples {
            1.0
        } else {
            (self.shards.len() * shard.len()) as f64 / self.samples as f64
        };
        Batch { indices, weight }
    }
}
