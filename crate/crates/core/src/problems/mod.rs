//! Synthetic objectives with exact and stochastic gradients, worker data
//! sharding, and verification oracles.

mod data;
mod least_squares;
mod logreg;
mod mlp;

pub use data::{Batch, ShardedDataset};
pub use least_squares::LeastSquares;
pub use logreg::LogReg;
pub use mlp::Mlp;

use crate::numerics::RngStream;

/// A finite-sum objective over `samples()` data points.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;

    fn samples(&self) -> usize;

    /// Full objective.
    fn loss(&self, x: &[f64]) -> f64;

    /// Full gradient.
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Gradient estimate from `batch`, unbiased for [`Problem::gradient`]
    /// when the batch is drawn uniformly with replacement.
    fn batch_gradient(&self, x: &[f64], batch: &[usize]) -> Vec<f64>;

    /// Task metric such as accuracy; `None` when the problem has none.
    fn eval_metric(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    fn initial_point(&self, _rng: &mut RngStream) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn as_least_squares(&self) -> Option<&LeastSquares> {
        None
    }
}

/// Max over `coords` of `|analytic - central difference| / (|analytic| + h)`.
pub fn finite_diff_check(problem: &dyn Problem, x: &[f64], coords: &[usize], h: f64) -> f64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    let grad = problem.gradient(x);
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for &c in coords {
        probe[c] = x[c] + h;
        let up = problem.loss(&probe);
        probe[c] = x[c] - h;
        let down = problem.loss(&probe);
        probe[c] = x[c];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((grad[c] - numeric).abs() / (grad[c].abs() + h));
    }
    worst
}
