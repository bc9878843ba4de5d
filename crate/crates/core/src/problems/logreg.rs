use super::Problem;
use crate::error::{contract, Result};
use crate::linalg::{axpy, dot};
use crate::numerics::{purpose, RngStream};

/// Mean logistic loss on synthetic linearly separable data with 5% of the
/// labels flipped.
#[derive(Clone, Debug)]
pub struct LogReg {
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

const LABEL_NOISE: f64 = 0.05;

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogReg {
    pub fn make(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(contract("logistic regression needs n, d >= 1"));
        }
        let mut rng = RngStream::new(seed, purpose::stream(purpose::PROBLEM, 1));
        let teacher: Vec<f64> = (0..d).map(|_| 3.0 * rng.next_gaussian()).collect();
        let sd = 1.0 / (d as f64).sqrt();
        let features: Vec<f64> = (0..n * d).map(|_| sd * rng.next_gaussian()).collect();
        let labels = (0..n)
            .map(|i| {
                let clean = if dot(&features[i * d..(i + 1) * d], &teacher) >= 0.0 {
                    1.0
                } else {
                    -1.0
                };
                if rng.next_uniform() < LABEL_NOISE {
                    -clean
                } else {
                    clean
                }
            })
            .collect();
        Ok(Self { n, d, features, labels })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    fn margin(&self, i: usize, x: &[f64]) -> f64 {
        self.labels[i] * dot(self.row(i), x)
    }

    fn accumulate(&self, x: &[f64], i: usize, scale: f64, g: &mut [f64]) {
        // d/dx log(1 + e^{-m}) = -y a sigmoid(-m)
        let coef = -self.labels[i] * sigmoid(-self.margin(i, x));
        axpy(scale * coef, self.row(i), g);
    }
}

impl Problem for LogReg {
    fn dim(&self) -> usize {
        self.d
    }

    fn samples(&self) -> usize {
        self.n
    }

    fn loss(&self, x: &[f64]) -> f64 {
        (0..self.n).map(|i| softplus(-self.margin(i, x))).sum::<f64>() / self.n as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        let scale = 1.0 / self.n as f64;
        for i in 0..self.n {
            self.accumulate(x, i, scale, &mut g);
        }
        g
    }

    fn batch_gradient(&self, x: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            self.accumulate(x, i, scale, &mut g);
        }
        g
    }

    /// Training accuracy.
    fn eval_metric(&self, x: &[f64]) -> Option<f64> {
        let correct = (0..self.n).filter(|&i| self.margin(i, x) > 0.0).count();
        Some(correct as f64 / self.n as f64)
    }
}
