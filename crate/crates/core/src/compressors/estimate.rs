//! Monte-Carlo estimates of the contraction constant `delta` and the
//! variance constant `theta` of a compressor.

use super::{compress, decode, CompressorSpec};
use crate::error::{contract, Result};
use crate::linalg::{dist_sq, norm_sq};
use crate::numerics::RngStream;

/// Distribution of test vectors.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleDist {
    Gaussian,
    /// Gaussian entries kept with probability `density`.
    Sparse { density: f64 },
    /// Random signs, magnitudes `(rank + 1)^-exponent` at shuffled positions.
    PowerLaw { exponent: f64 },
    Fixed(Vec<f64>),
}

impl SampleDist {
    pub fn sample(&self, d: usize, rng: &mut RngStream) -> Vec<f64> {
        match self {
            SampleDist::Gaussian => (0..d).map(|_| rng.next_gaussian()).collect(),
            SampleDist::Sparse { density } => {
                let mut x: Vec<f64> = (0..d)
                    .map(|_| {
                        let keep = rng.next_uniform() < *density;
                        let g = rng.next_gaussian();
                        if keep {
                            g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if x.iter().all(|&v| v == 0.0) {
                    x[rng.next_below(d as u64) as usize] = 1.0;
                }
                x
            }
            SampleDist::PowerLaw { exponent } => {
                let mut x: Vec<f64> = (0..d)
                    .map(|i| rng.next_sign() * ((i + 1) as f64).powf(-exponent))
                    .collect();
                for i in (1..d).rev() {
                    let j = rng.next_below(i as u64 + 1) as usize;
                    x.swap(i, j);
                }
                x
            }
            SampleDist::Fixed(v) => v.clone(),
        }
    }
}

fn ratio_estimate(spec: &CompressorSpec, dist: &SampleDist, d: usize, samples: usize, trials: usize, rng: &mut RngStream) -> Result<f64> {
    if samples == 0 || trials == 0 {
        return Err(contract("estimates need at least one sample and one trial"));
    }
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = dist.sample(d, rng);
        let scale = norm_sq(&x);
        if scale == 0.0 {
            continue;
        }
        let mut total = 0.0;
        for _ in 0..trials {
            let y = decode(&compress(spec, &x, rng, None)?)?;
            total += dist_sq(&y, &x);
        }
        worst = worst.max(total / trials as f64 / scale);
    }
    Ok(worst)
}

/// Max over `samples` draws of the mean of `|Q(x) - x|^2 / |x|^2` over `trials`.
pub fn estimate_delta(spec: &CompressorSpec, dist: &SampleDist, d: usize, samples: usize, trials: usize, rng: &mut RngStream) -> Result<f64> {
    ratio_estimate(spec, dist, d, samples, trials, rng)
}

/// As [`estimate_delta`], restricted to unbiased compressors.
pub fn estimate_theta(spec: &CompressorSpec, dist: &SampleDist, d: usize, samples: usize, trials: usize, rng: &mut RngStream) -> Result<f64> {
    if !spec.is_unbiased() {
        return Err(contract(format!("{} is biased; theta is undefined", spec.name())));
    }
    ratio_estimate(spec, dist, d, samples, trials, rng)
}

/// Per-coordinate mean and standard error of `decode(compress(x))`.
pub fn monte_carlo_mean(spec: &CompressorSpec, x: &[f64], trials: usize, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = x.len();
    let (mut sum, mut sum_sq) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..trials {
        let y = decode(&compress(spec, x, rng, None)?)?;
        for i in 0..d {
            sum[i] += y[i];
            sum_sq[i] += y[i] * y[i];
        }
    }
    let t = trials as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let stderr = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| ((sq / t - m * m).max(0.0) / (t - 1.0).max(1.0)).sqrt())
        .collect();
    Ok((mean, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressors::Size;

    #[test]
    fn scaled_sign_ratio_is_two_fourteenths() {
        let mut rng = RngStream::new(3, 3);
        let dist = SampleDist::Fixed(vec![1.0, -2.0, 3.0]);
        let delta = estimate_delta(&CompressorSpec::ScaledSign, &dist, 3, 1, 1, &mut rng).unwrap();
        assert!((delta - 2.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn theta_rejects_biased_kinds() {
        let mut rng = RngStream::new(3, 3);
        let top = CompressorSpec::TopK { k: Size::Count(1) };
        assert!(estimate_theta(&top, &SampleDist::Gaussian, 4, 1, 1, &mut rng).is_err());
    }
}
