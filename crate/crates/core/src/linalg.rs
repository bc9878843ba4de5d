//! Row-major dense helpers for the matrix-view compressors.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `(n, m)` with `m` the smallest divisor of `d` that is at least `sqrt(d)`.
pub fn matrix_view(d: usize) -> (usize, usize) {
    assert!(d > 0);
    let root = (d as f64).sqrt().ceil() as usize;
    let m = (root.max(1)..=d).find(|m| d % m == 0).unwrap_or(d);
    (d / m, m)
}

/// `A (n x k) * B (k x r)`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, r: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * r);
    let mut out = vec![0.0; n * r];
    for i in 0..n {
        let row = &mut out[i * r..(i + 1) * r];
        for j in 0..k {
            let aij = a[i * k + j];
            if aij != 0.0 {
                axpy(aij, &b[j * r..(j + 1) * r], row);
            }
        }
    }
    out
}

/// `A^T (k x n) * B (n x r)` for `A` stored `n x k`.
pub fn matmul_tn(a: &[f64], b: &[f64], n: usize, k: usize, r: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), n * r);
    let mut out = vec![0.0; k * r];
    for i in 0..n {
        let brow = &b[i * r..(i + 1) * r];
        for j in 0..k {
            let aij = a[i * k + j];
            if aij != 0.0 {
                axpy(aij, brow, &mut out[j * r..(j + 1) * r]);
            }
        }
    }
    out
}

/// `A (n x r) * B^T` for `B` stored `m x r`; result `n x m`.
pub fn matmul_nt(a: &[f64], b: &[f64], n: usize, m: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a[i * r..(i + 1) * r];
        for j in 0..m {
            out[i * m + j] = dot(arow, &b[j * r..(j + 1) * r]);
        }
    }
    out
}

/// Modified Gram-Schmidt on the columns of a row-major `n x r` matrix.
/// Columns that vanish after projection are set to zero.
pub fn orthonormalize_columns(p: &mut [f64], n: usize, r: usize) {
    let col_norm = |p: &[f64], j: usize| (0..n).map(|i| p[i * r + j].powi(2)).sum::<f64>().sqrt();
    for j in 0..r {
        let before = col_norm(p, j);
        for k in 0..j {
            let proj: f64 = (0..n).map(|i| p[i * r + j] * p[i * r + k]).sum();
            for i in 0..n {
                p[i * r + j] -= proj * p[i * r + k];
            }
        }
        let nrm = col_norm(p, j);
        if nrm <= 1e-12 * before.max(f64::MIN_POSITIVE) || nrm == 0.0 {
            for i in 0..n {
                p[i * r + j] = 0.0;
            }
        } else {
            for i in 0..n {
                p[i * r + j] /= nrm;
            }
        }
    }
}

/// Orthonormal basis (as rows) of the span of the rows of `a` (`n x d`).
pub fn orthonormal_rows(a: &[f64], n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = a[i * d..(i + 1) * d].to_vec();
        let before = norm(&v);
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                axpy(-c, b, &mut v);
            }
        }
        let nrm = norm(&v);
        if nrm > 1e-10 * before.max(f64::MIN_POSITIVE) {
            v.iter_mut().for_each(|x| *x /= nrm);
            basis.push(v);
        }
    }
    basis
}
