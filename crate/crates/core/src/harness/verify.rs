//! Property-verification suites with a machine-readable report.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ProblemConfig, RunConfig, Trainer};
use crate::compressors::{
    estimate_delta, estimate_theta, level_probabilities, monte_carlo_mean, quantize, quantize_with, Compressor,
    CompressorSpec, QuantNorm, SampleDist, Size,
};
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm, norm_sq};
use crate::numerics::{purpose, HashFamily, RngStream};
use crate::optim::{Algorithm, OptimizerConfig};
use crate::problems::LeastSquares;
use crate::sketch::{BlockLayout, CountSketch, Precision, SketchShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Compressors,
    Sketch,
    Reductions,
    Rowspace,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "compressors" => Suite::Compressors,
            "sketch" => Suite::Sketch,
            "reductions" => Suite::Reductions,
            "rowspace" => Suite::Rowspace,
            "all" => Suite::All,
            other => {
                return Err(Error::Config {
                    key: "suite".into(),
                    message: format!("unknown suite `{other}` (compressors, sketch, reductions, rowspace, all)"),
                })
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

struct Checks {
    suite: &'static str,
    out: Vec<Check>,
}

impl Checks {
    fn new(suite: &'static str) -> Self {
        Self { suite, out: Vec::new() }
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.out.push(Check {
            suite: self.suite.into(),
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    /// Record a fallible check; an error counts as a failure.
    fn run(&mut self, name: &str, f: impl FnOnce() -> Result<(bool, String)>) {
        match f() {
            Ok((passed, detail)) => self.push(name, passed, detail),
            Err(e) => self.push(name, false, format!("error: {e}")),
        }
    }
}

pub fn verify(suite: Suite) -> VerifyReport {
    let mut checks = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Compressors {
        checks.extend(compressor_checks(&default_registry(VERIFY_DIM)));
    }
    if all || suite == Suite::Sketch {
        checks.extend(sketch_checks());
    }
    if all || suite == Suite::Reductions {
        checks.extend(reduction_checks());
    }
    if all || suite == Suite::Rowspace {
        checks.extend(rowspace_checks());
    }
    VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// A compressor with the unbiasedness it is claimed to have.
#[derive(Clone, Debug)]
pub struct Registered {
    pub spec: CompressorSpec,
    pub claims_unbiased: bool,
}

const VERIFY_DIM: usize = 256;

/// Every kind, with its declared unbiasedness.
pub fn default_registry(d: usize) -> Vec<Registered> {
    let k = Size::Count(d / 10);
    let specs = vec![
        CompressorSpec::Identity,
        CompressorSpec::ScaledSign,
        CompressorSpec::RandomK {
            k,
            scaled: false,
            shared_seed: None,
        },
        CompressorSpec::RandomK {
            k,
            scaled: true,
            shared_seed: None,
        },
        CompressorSpec::RandomBlockK {
            k,
            scaled: false,
            shared_seed: None,
        },
        CompressorSpec::RandomBlockK {
            k,
            scaled: true,
            shared_seed: None,
        },
        CompressorSpec::TopK { k },
        CompressorSpec::PowerLowrank { rank: 2 },
        CompressorSpec::RandomProjection {
            rank: 4,
            shared_seed: None,
        },
        CompressorSpec::StochasticQuantize {
            levels: 4,
            norm: QuantNorm::L2,
        },
        CompressorSpec::StochasticQuantize {
            levels: 4,
            norm: QuantNorm::Max,
        },
        CompressorSpec::CountSketch {
            rows: 3,
            width: Size::Ratio(0.25),
            precision: Precision::Full,
            block_size: 1,
            layout: BlockLayout::Row,
            seed: None,
            injective: false,
        },
    ];
    specs
        .into_iter()
        .map(|spec| Registered {
            claims_unbiased: spec.is_unbiased(),
            spec,
        })
        .collect()
}

fn label(spec: &CompressorSpec) -> String {
    match spec {
        CompressorSpec::RandomK { scaled: true, .. } | CompressorSpec::RandomBlockK { scaled: true, .. } => {
            format!("{} (scaled)", spec.name())
        }
        CompressorSpec::StochasticQuantize { norm, .. } => format!("{} ({norm:?})", spec.name()),
        _ => spec.name().to_string(),
    }
}

/// Largest per-coordinate deviation of the Monte-Carlo mean, in standard errors.
/// Coordinates with zero spread must match exactly.
pub fn unbiasedness_z(spec: &CompressorSpec, x: &[f64], trials: usize, rng: &mut RngStream) -> Result<f64> {
    let (mean, se) = monte_carlo_mean(spec, x, trials, rng)?;
    Ok(mean
        .iter()
        .zip(&se)
        .zip(x)
        .map(|((m, s), t)| {
            let dev = (m - t).abs();
            if *s > 0.0 {
                dev / s
            } else if dev <= 1e-12 * t.abs().max(1e-300) {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max))
}

/// Unbiasedness, contraction and accounting checks over `registry`.
pub fn compressor_checks(registry: &[Registered]) -> Vec<Check> {
    let mut c = Checks::new("compressors");
    let d = VERIFY_DIM;
    let mut rng = RngStream::new(2024, purpose::stream(purpose::PROBLEM, 100));
    let x: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
    let dists = [
        SampleDist::Gaussian,
        SampleDist::Sparse { density: 0.1 },
        SampleDist::PowerLaw { exponent: 1.0 },
    ];
    for entry in registry {
        let name = label(&entry.spec);
        if entry.claims_unbiased {
            c.run(&format!("unbiased: {name}"), || {
                let z = unbiasedness_z(&entry.spec, &x, 10_000, &mut rng)?;
                Ok((z <= 4.0, format!("max deviation {z:.2} standard errors over 10^4 trials")))
            });
        } else {
            c.run(&format!("contractive: {name}"), || {
                let mut worst = 0.0f64;
                for dist in &dists {
                    worst = worst.max(estimate_delta(&entry.spec, dist, d, 20, 20, &mut rng)?);
                }
                Ok((worst < 1.0, format!("max delta estimate {worst:.4}")))
            });
        }
    }
    c.run("random_k exact contraction", || {
        let (d, k) = (16usize, 4usize);
        let xs: Vec<f64> = (0..d).map(|i| ((i * 7) % 5) as f64 - 1.5).collect();
        let mut total = 0.0;
        let mut count = 0u32;
        for mask in 0u32..(1 << d) {
            if mask.count_ones() as usize == k {
                total += (0..d).filter(|i| mask >> i & 1 == 0).map(|i| xs[i] * xs[i]).sum::<f64>();
                count += 1;
            }
        }
        let exact = total / f64::from(count);
        let closed = (1.0 - k as f64 / d as f64) * norm_sq(&xs);
        let spec = CompressorSpec::RandomK {
            k: Size::Count(k),
            scaled: false,
            shared_seed: None,
        };
        let mc = estimate_delta(&spec, &SampleDist::Fixed(xs.clone()), d, 1, 100_000, &mut rng)? * norm_sq(&xs);
        let rel = (mc - exact).abs() / exact;
        Ok((
            (exact - closed).abs() < 1e-12 && rel < 0.02,
            format!("enumerated {exact:.6}, closed form {closed:.6}, sampled {mc:.6}"),
        ))
    });
    c.run("quantizer variance by enumeration", || {
        let e = [3.0, 4.0];
        let probs = level_probabilities(&e, 1, QuantNorm::L2);
        let mut var = 0.0;
        for outcome in 0..4u32 {
            let up = [outcome & 1 == 1, outcome & 2 == 2];
            let mut draws = up.iter().map(|&u| if u { 0.0 } else { 1.0 - f64::EPSILON });
            let q = quantize_with(&e, 1, QuantNorm::L2, || draws.next().unwrap());
            let p: f64 = (0..2).map(|i| if up[i] { probs[i].1 } else { 1.0 - probs[i].1 }).product();
            var += p * dist_sq(&q.decode(), &e);
        }
        Ok(((var - 10.0).abs() < 1e-12, format!("E|C(e) - e|^2 = {var}")))
    });
    c.run("quantizer variance bound", || {
        let mut violations = 0;
        for &d in &[64usize, 1024] {
            for &s in &[1u32, 4, 16] {
                let bound = (d as f64 / f64::from(s * s)).min((d as f64).sqrt() / f64::from(s));
                for _ in 0..200 {
                    let e: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
                    if exact_quantizer_variance(&e, s) > bound * norm_sq(&e) * (1.0 + 1e-12) {
                        violations += 1;
                    }
                }
            }
        }
        Ok((violations == 0, format!("{violations} violations")))
    });
    c.run("variance amplification of scaled random_k", || {
        let d = 100;
        let k = Size::Count(10);
        let scaled = CompressorSpec::RandomK {
            k,
            scaled: true,
            shared_seed: None,
        };
        let unscaled = CompressorSpec::RandomK {
            k,
            scaled: false,
            shared_seed: None,
        };
        let theta = estimate_theta(&scaled, &SampleDist::Gaussian, d, 10, 200, &mut rng)?;
        let delta = estimate_delta(&unscaled, &SampleDist::Gaussian, d, 10, 200, &mut rng)?;
        Ok((theta > 1.0 && delta < 1.0, format!("theta {theta:.3}, delta {delta:.3}")))
    });
    c.run("shared-seed block supports agree", || {
        let spec = CompressorSpec::RandomBlockK {
            k: Size::Ratio(0.1),
            scaled: false,
            shared_seed: Some(99),
        };
        let mut comps = (0..4)
            .map(|w| Compressor::for_worker(&spec, 1000, 5, purpose::GRAD_COMPRESSOR, w))
            .collect::<Result<Vec<_>>>()?;
        let v = vec![1.0; 1000];
        let mut same = true;
        for _ in 0..10 {
            let msgs = comps.iter_mut().map(|c| c.compress(&v)).collect::<Result<Vec<_>>>()?;
            same &= msgs.windows(2).all(|m| m[0].payload == m[1].payload);
        }
        Ok((same, "10 rounds over 4 workers".into()))
    });
    c.run("random_block_k payload bits", || {
        let d = 1000;
        let spec = CompressorSpec::RandomBlockK {
            k: Size::Ratio(0.1),
            scaled: false,
            shared_seed: None,
        };
        let msg = crate::compressors::compress(&spec, &vec![1.0; d], &mut rng, None)?;
        let want = (0.1 * 32.0 * d as f64) as u64 + 64;
        Ok((msg.payload_bits == want, format!("{} bits, expected {want}", msg.payload_bits)))
    });
    c.run("quantized bit cost", || {
        let (d, s) = (256usize, 1u32);
        let bound = 8.0 * (f64::from(s * s) + f64::from(s) * (d as f64).sqrt()) * (d as f64).log2();
        let mut total = 0u64;
        for _ in 0..1000 {
            let mut e: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
            let n = norm(&e);
            e.iter_mut().for_each(|v| *v /= n);
            total += quantize(&e, s, QuantNorm::L2, &mut rng).encoded_bits();
        }
        let mean = total as f64 / 1000.0;
        let e: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let dense = quantize(&e, 16, QuantNorm::L2, &mut rng).encoded_bits();
        Ok((
            mean <= bound && dense <= 4 * d as u64 + 64,
            format!("s=1 mean {mean:.1} bits (bound {bound:.0}); s=16 {dense} bits"),
        ))
    });
    c.out
}

/// `E|C(e) - e|^2` of the quantizer in closed form from its level probabilities.
pub fn exact_quantizer_variance(e: &[f64], s: u32) -> f64 {
    let unit = norm(e) / f64::from(s);
    level_probabilities(e, s, QuantNorm::L2)
        .iter()
        .map(|&(_, p)| unit * unit * p * (1.0 - p))
        .sum()
}

/// Fraction of trials (fresh hash seeds) where `|e - decode|_inf > eps |e|`.
pub fn sketch_tail_fraction(d: usize, shape: &SketchShape, eps: f64, trials: usize, rng: &mut RngStream) -> Result<f64> {
    let mut e: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
    let n = norm(&e);
    e.iter_mut().for_each(|v| *v /= n);
    let mut fails = 0;
    for _ in 0..trials {
        let s = CountSketch::keyed(rng.next_u64(), d, shape)?;
        let mut s = s;
        s.insert_all(&e)?;
        let worst = s.decode_all().iter().zip(&e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if worst > eps {
            fails += 1;
        }
    }
    Ok(fails as f64 / trials as f64)
}

/// Largest per-coordinate deviation, in standard errors, of the mean sketch
/// decode over fresh hash seeds.
pub fn sketch_unbiasedness_z(e: &[f64], shape: &SketchShape, trials: usize, rng: &mut RngStream) -> Result<f64> {
    let d = e.len();
    let (mut sum, mut sq) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..trials {
        let mut s = CountSketch::keyed(rng.next_u64(), d, shape)?;
        s.insert_all(e)?;
        for (i, v) in s.decode_all().into_iter().enumerate() {
            sum[i] += v;
            sq[i] += v * v;
        }
    }
    let t = trials as f64;
    Ok((0..d)
        .map(|i| {
            let m = sum[i] / t;
            let se = ((sq[i] / t - m * m).max(0.0) / (t - 1.0)).sqrt();
            if se > 0.0 {
                (m - e[i]).abs() / se
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max))
}

fn sketch_checks() -> Vec<Check> {
    let mut c = Checks::new("sketch");
    let mut rng = RngStream::new(77, purpose::stream(purpose::PROBLEM, 101));
    c.run("pinned-hash example", || {
        let family = HashFamily::explicit(3, vec![vec![0, 1, 2, 0]], vec![vec![1, 1, -1, 1]]);
        let s = CountSketch::compress(&[1.0, 2.0, 3.0, 4.0], family, &SketchShape::new(1, 3))?;
        Ok((
            s.table() == vec![5.0, 2.0, -3.0] && s.decode_all() == vec![5.0, 2.0, 3.0, 5.0],
            format!("table {:?}", s.table()),
        ))
    });
    c.run("linearity is exact", || {
        let shape = SketchShape::new(3, 32);
        let a: Vec<f64> = (0..100).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let b: Vec<f64> = (0..100).map(|i| ((i * 5) % 11) as f64 - 5.0).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let family = HashFamily::new(3, 3, 32);
        let mut merged = CountSketch::compress(&a, family.clone(), &shape)?;
        merged.merge(&CountSketch::compress(&b, family.clone(), &shape)?)?;
        let direct = CountSketch::compress(&sum, family, &shape)?;
        Ok((merged == direct, "integer-valued vectors, d = 100".into()))
    });
    c.run("exact under injective hashes", || {
        let e: Vec<f64> = (0..64).map(|_| rng.next_gaussian()).collect();
        let s = CountSketch::compress(&e, HashFamily::injective(4, 3, 64), &SketchShape::new(3, 64))?;
        Ok((s.decode_all() == e, "v = 3, w = d = 64".into()))
    });
    c.run("unbiased over hash seeds", || {
        let mut e: Vec<f64> = (0..64).map(|_| rng.next_gaussian()).collect();
        let n = norm(&e);
        e.iter_mut().for_each(|v| *v /= n);
        let z = sketch_unbiasedness_z(&e, &SketchShape::new(3, 16), 10_000, &mut rng)?;
        Ok((z <= 4.0, format!("max deviation {z:.2} standard errors")))
    });
    c.run("tail bound at eps = 0.5, p = 0.1", || {
        let (d, eps, p) = (256usize, 0.5f64, 0.1f64);
        let rows = (d as f64 / p).log2().ceil() as usize;
        let width = 4 * (1.0 / (eps * eps)).ceil() as usize;
        let frac = sketch_tail_fraction(d, &SketchShape::new(rows, width), eps, 10_000, &mut rng)?;
        Ok((frac < p, format!("v = {rows}, w = {width}: failure fraction {frac:.4}")))
    });
    for layout in [BlockLayout::Row, BlockLayout::Column] {
        c.run(&format!("tensor trick ({layout:?})"), || {
            let block = 4;
            let shape = SketchShape::new(12, 16 * block).with_blocks(block, layout);
            let frac = sketch_tail_fraction(256, &shape, 0.5, 2_000, &mut rng)?;
            let mut e: Vec<f64> = (0..256).map(|_| rng.next_gaussian()).collect();
            let n = norm(&e);
            e.iter_mut().for_each(|v| *v /= n);
            let z = sketch_unbiasedness_z(&e, &SketchShape::new(3, 16 * block).with_blocks(block, layout), 4_000, &mut rng)?;
            Ok((frac < 0.1 && z <= 4.0, format!("tail fraction {frac:.4}, max deviation {z:.2} se")))
        });
    }
    c.run("merge mean equals sketch of mean", || {
        let shape = SketchShape::new(2, 40);
        let family = HashFamily::new(8, 2, 40);
        let vs: Vec<Vec<f64>> = (0..4)
            .map(|w| (0..100).map(|i| (((i + 3 * w) * 7) % 9) as f64 * 0.25).collect())
            .collect();
        let sketches = vs
            .iter()
            .map(|v| CountSketch::compress(v, family.clone(), &shape))
            .collect::<Result<Vec<_>>>()?;
        let mean: Vec<f64> = (0..100).map(|i| vs.iter().map(|v| v[i]).sum::<f64>() / 4.0).collect();
        let merged = CountSketch::merge_mean(&sketches)?;
        Ok((merged == CountSketch::compress(&mean, family, &shape)?, "N = 4".into()))
    });
    c.run("half precision halves memory", || {
        let full = CountSketch::keyed(1, 1000, &SketchShape::new(1, 100))?;
        let half = CountSketch::keyed(1, 1000, &SketchShape::new(1, 100).with_precision(Precision::Half))?;
        Ok((2 * half.bytes() == full.bytes(), format!("{} vs {} bytes", full.bytes(), half.bytes())))
    });
    c.out
}

/// Least-squares run used by the trajectory checks.
pub fn least_squares_run(optimizer: OptimizerConfig, steps: u64) -> RunConfig {
    RunConfig {
        seed: 7,
        workers: 4,
        batch: 4,
        steps,
        eval_every: 50,
        repeats: 1,
        out: None,
        problem: ProblemConfig::LeastSquares {
            n: 50,
            d: 200,
            solution_norm: 1.0,
            seed: Some(11),
        },
        optimizer,
    }
}

/// Model after every step, asserting replica agreement along the way.
pub fn trajectory(cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let mut t = Trainer::new(cfg, cfg.seed)?;
    let mut out = vec![t.cluster().x().to_vec()];
    for _ in 0..cfg.steps {
        t.step()?;
        if t.cluster().replica_spread() != 0.0 {
            return Err(Error::Contract("worker replicas disagree".into()));
        }
        out.push(t.cluster().x().to_vec());
    }
    Ok(out)
}

/// Whether two trajectories agree bit for bit.
pub fn bitwise_equal(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()))
}

/// The four reduction pairs `(name, reduced, reference)`.
pub fn reduction_pairs() -> Vec<(&'static str, OptimizerConfig, OptimizerConfig)> {
    let q = CompressorSpec::RandomBlockK {
        k: Size::Ratio(0.1),
        scaled: false,
        shared_seed: None,
    };
    let lr = 0.05;
    let efsgd = OptimizerConfig::new(Algorithm::Efsgd, lr).with_grad(q.clone());
    vec![
        (
            "conef(C = identity) = efsgd",
            OptimizerConfig::new(Algorithm::Conef, lr)
                .with_grad(q.clone())
                .with_error(CompressorSpec::Identity),
            efsgd.clone(),
        ),
        (
            "efsgd(Q = identity) = sgd",
            OptimizerConfig::new(Algorithm::Efsgd, lr),
            OptimizerConfig::new(Algorithm::Sgd, lr),
        ),
        (
            "partial(beta = 0, C = identity) = efsgd",
            OptimizerConfig::new(Algorithm::Partial, lr)
                .with_grad(q.clone())
                .with_error(CompressorSpec::Identity),
            efsgd.clone(),
        ),
        (
            "iconef_v1(C = identity) = efsgd",
            OptimizerConfig::new(Algorithm::IconefV1, lr)
                .with_grad(q)
                .with_error(CompressorSpec::Identity),
            efsgd,
        ),
    ]
}

fn reduction_checks() -> Vec<Check> {
    let mut c = Checks::new("reductions");
    for (name, reduced, reference) in reduction_pairs() {
        c.run(name, || {
            let a = trajectory(&least_squares_run(reduced, 200))?;
            let b = trajectory(&least_squares_run(reference, 200))?;
            Ok((bitwise_equal(&a, &b), "200 steps, bitwise".into()))
        });
    }
    c.run("conef(C = injective sketch) = efsgd", || {
        let q = CompressorSpec::TopK { k: Size::Ratio(0.1) };
        let sketch = CompressorSpec::CountSketch {
            rows: 1,
            width: Size::Count(200),
            precision: Precision::Full,
            block_size: 1,
            layout: BlockLayout::Row,
            seed: None,
            injective: true,
        };
        let a = trajectory(&least_squares_run(
            OptimizerConfig::new(Algorithm::Conef, 0.05).with_grad(q.clone()).with_error(sketch),
            200,
        ))?;
        let b = trajectory(&least_squares_run(OptimizerConfig::new(Algorithm::Efsgd, 0.05).with_grad(q), 200))?;
        Ok((bitwise_equal(&a, &b), "200 steps, bitwise".into()))
    });
    c.out
}

fn rowspace_checks() -> Vec<Check> {
    let mut c = Checks::new("rowspace");
    c.run("projector examples", || {
        let p = LeastSquares::from_parts(vec![1.0, 0.0, 0.0], vec![1.0], 1, 3)?;
        let inside = p.rowspace_residual(&[2.5, 0.0, 0.0]);
        let outside = p.rowspace_residual(&[0.0, 3.0, 4.0]);
        let mixed = p.rowspace_residual(&[7.0, 3.0, 4.0]);
        Ok((
            inside < 1e-12 && (outside - 5.0).abs() < 1e-12 && (mixed - 5.0).abs() < 1e-12,
            format!("{inside}, {outside}, {mixed}"),
        ))
    });
    c.run("efsgd + top_k stays in the row space", || {
        let cfg = least_squares_run(
            OptimizerConfig::new(Algorithm::Efsgd, 0.05).with_grad(CompressorSpec::TopK { k: Size::Ratio(0.1) }),
            1000,
        );
        let mut t = Trainer::new(&cfg, cfg.seed)?;
        let ls = t.problem().as_least_squares().expect("least squares").clone();
        let mut worst = 0.0f64;
        for _ in 0..cfg.steps {
            t.step()?;
            worst = worst.max(ls.rowspace_residual(&t.cluster().corrected_iterate()?));
        }
        Ok((worst < 1e-8, format!("max residual {worst:.3e} over 1000 steps")))
    });
    c.run("sgd converges on least squares", || {
        let cfg = least_squares_run(OptimizerConfig::new(Algorithm::Sgd, 0.05), 2000);
        let mut t = Trainer::new(&cfg, cfg.seed)?;
        let start = t.record()?.train_loss;
        for _ in 0..cfg.steps {
            t.step()?;
        }
        let end = t.record()?.train_loss;
        Ok((end < 1e-6 * start, format!("loss {start:.3e} -> {end:.3e}")))
    });
    c.out
}
