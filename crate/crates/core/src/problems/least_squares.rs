use nalgebra::{DMatrix, DVector};

use super::Problem;
use crate::error::{contract, Result};
use crate::linalg::{axpy, dot, norm, orthonormal_rows};
use crate::numerics::{purpose, RngStream};

/// `f(x) = 1/2 |Ax - y|^2` with a wide `A` (`n x d`, `d > n`), so the set of
/// zero-loss minimizers is an affine subspace.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    n: usize,
    d: usize,
    a: Vec<f64>,
    y: Vec<f64>,
    basis: Vec<Vec<f64>>,
    planted: Option<Vec<f64>>,
}

impl LeastSquares {
    /// Gaussian `A` with entries of variance `1/d` and `y = A x_planted`,
    /// where `x_planted` lies in the row space of `A` and has norm `solution_norm`.
    pub fn make(n: usize, d: usize, seed: u64, solution_norm: f64) -> Result<Self> {
        if n == 0 || d <= n {
            return Err(contract(format!("least squares needs d > n >= 1, got n = {n}, d = {d}")));
        }
        let mut rng = RngStream::new(seed, purpose::stream(purpose::PROBLEM, 0));
        let sd = 1.0 / (d as f64).sqrt();
        let a: Vec<f64> = (0..n * d).map(|_| sd * rng.next_gaussian()).collect();
        let coeffs: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let mut planted = vec![0.0; d];
        for (i, c) in coeffs.iter().enumerate() {
            axpy(*c, &a[i * d..(i + 1) * d], &mut planted);
        }
        let scale = solution_norm / norm(&planted);
        planted.iter_mut().for_each(|v| *v *= scale);
        let y = (0..n).map(|i| dot(&a[i * d..(i + 1) * d], &planted)).collect();
        let mut p = Self::from_parts(a, y, n, d)?;
        p.planted = Some(planted);
        Ok(p)
    }

    /// From a row-major `n x d` matrix and targets; requires full row rank.
    pub fn from_parts(a: Vec<f64>, y: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if a.len() != n * d || y.len() != n {
            return Err(contract("least-squares data shapes do not match n and d"));
        }
        let basis = orthonormal_rows(&a, n, d);
        if basis.len() != n {
            return Err(contract(format!("A has rank {} < n = {n}", basis.len())));
        }
        Ok(Self {
            n,
            d,
            a,
            y,
            basis,
            planted: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.d..(i + 1) * self.d]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    /// The planted zero-loss solution, when the instance was generated.
    pub fn planted(&self) -> Option<&[f64]> {
        self.planted.as_deref()
    }

    /// `A^T (A A^T)^{-1} y`.
    pub fn min_norm_solution(&self) -> Result<Vec<f64>> {
        let a = DMatrix::from_row_slice(self.n, self.d, &self.a);
        let gram = &a * a.transpose();
        let chol = gram
            .cholesky()
            .ok_or_else(|| contract("A A^T is not positive definite"))?;
        let z = chol.solve(&DVector::from_column_slice(&self.y));
        Ok((a.transpose() * z).iter().copied().collect())
    }

    /// Orthogonal projection of `v` onto the row space of `A`.
    pub fn project_rowspace(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for b in &self.basis {
            axpy(dot(v, b), b, &mut out);
        }
        out
    }

    /// `|v - P v|` for `P` the row-space projector.
    pub fn rowspace_residual(&self, v: &[f64]) -> f64 {
        let mut r = v.to_vec();
        // Subtracting one basis direction at a time keeps the residual
        // accurate when v is almost entirely in the row space.
        for _ in 0..2 {
            for b in &self.basis {
                let c = dot(&r, b);
                axpy(-c, b, &mut r);
            }
        }
        norm(&r)
    }

    fn residual(&self, i: usize, x: &[f64]) -> f64 {
        dot(self.row(i), x) - self.y[i]
    }
}

impl Problem for LeastSquares {
    fn dim(&self) -> usize {
        self.d
    }

    fn samples(&self) -> usize {
        self.n
    }

    fn loss(&self, x: &[f64]) -> f64 {
        0.5 * (0..self.n).map(|i| self.residual(i, x).powi(2)).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        for i in 0..self.n {
            axpy(self.residual(i, x), self.row(i), &mut g);
        }
        g
    }

    /// `(n / |B|) * sum_{i in B} a_i (a_i^T x - y_i)`.
    fn batch_gradient(&self, x: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        let scale = self.n as f64 / batch.len() as f64;
        for &i in batch {
            axpy(scale * self.residual(i, x), self.row(i), &mut g);
        }
        g
    }

    fn as_least_squares(&self) -> Option<&LeastSquares> {
        Some(self)
    }
}
