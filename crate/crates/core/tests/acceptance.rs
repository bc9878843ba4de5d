//! Acceptance criteria for the library, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so every criterion reports even
//! when an earlier one fails. Exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use conef::compressors::{CompressorSpec, QuantNorm, Size};
use conef::harness::verify::{
    bitwise_equal, compressor_checks, default_registry, least_squares_run, reduction_pairs, sketch_tail_fraction,
    trajectory,
};
use conef::harness::{run_to_writer, verify, ProblemConfig, RunConfig, Suite, Trainer};
use conef::linalg::{norm, norm_sq};
use conef::numerics::{purpose, RngStream};
use conef::optim::{Algorithm, Cluster, OptimizerConfig, SketchUpdate};
use conef::sketch::{BlockLayout, Precision, SketchShape};
use conef::Result;

type Outcome = Result<(bool, String)>;

fn unscaled_block(ratio: f64) -> CompressorSpec {
    CompressorSpec::RandomBlockK {
        k: Size::Ratio(ratio),
        scaled: false,
        shared_seed: None,
    }
}

fn sketch(width: Size, precision: Precision) -> CompressorSpec {
    CompressorSpec::CountSketch {
        rows: 1,
        width,
        precision,
        block_size: 1,
        layout: BlockLayout::Row,
        seed: None,
        injective: false,
    }
}

fn conef_cs(lr: f64, width: f64, beta: f64) -> OptimizerConfig {
    OptimizerConfig::new(Algorithm::Partial, lr)
        .with_grad(unscaled_block(0.1))
        .with_error(sketch(Size::Ratio(width), Precision::Full))
        .with_beta(beta)
}

fn with_seed(mut cfg: RunConfig, seed: u64) -> RunConfig {
    cfg.seed = seed;
    cfg
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn reduction_chain() -> Outcome {
    let mut failed = Vec::new();
    for (name, reduced, reference) in reduction_pairs() {
        let a = trajectory(&least_squares_run(reduced, 200))?;
        let b = trajectory(&least_squares_run(reference, 200))?;
        if !bitwise_equal(&a, &b) {
            failed.push(name);
        }
    }
    let n = reduction_pairs().len();
    Ok((
        failed.is_empty(),
        format!("{} of {n} pairs bitwise identical over 200 steps{}", n - failed.len(), fmt_failed(&failed)),
    ))
}

fn fmt_failed(failed: &[&str]) -> String {
    if failed.is_empty() {
        String::new()
    } else {
        format!("; differ: {}", failed.join(", "))
    }
}

fn compressor_contracts() -> Outcome {
    let wanted = |name: &str| {
        name.starts_with("unbiased:")
            || name.starts_with("contractive:")
            || name == "random_k exact contraction"
            || name == "quantizer variance by enumeration"
    };
    let checks: Vec<_> = compressor_checks(&default_registry(256))
        .into_iter()
        .filter(|c| wanted(&c.name))
        .collect();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Ok((
        failed.is_empty() && checks.len() >= 14,
        format!("{} of {} checks passed{}", checks.len() - failed.len(), checks.len(), fmt_failed(&failed)),
    ))
}

/// Independent oracle: a coordinate quantized to one of two adjacent levels
/// with the unbiased probabilities has variance `(hi - e)(e - lo)`.
fn quantizer_variance_bound() -> Outcome {
    let mut rng = RngStream::new(31, purpose::stream(purpose::PROBLEM, 300));
    let (mut violations, mut off_grid, mut worst) = (0usize, 0usize, 0.0f64);
    for &d in &[64usize, 1024] {
        for &s in &[1u32, 4, 16] {
            let sf = f64::from(s);
            let bound = (d as f64 / (sf * sf)).min((d as f64).sqrt() / sf);
            let spec = CompressorSpec::StochasticQuantize {
                levels: s,
                norm: QuantNorm::L2,
            };
            for _ in 0..1000 {
                let e: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
                let n = norm(&e);
                let unit = n / sf;
                let var: f64 = e
                    .iter()
                    .map(|&x| {
                        let r = x.abs() / unit;
                        let (lo, hi) = (r.floor() * unit, (r.floor() + 1.0) * unit);
                        (hi - x.abs()) * (x.abs() - lo)
                    })
                    .sum();
                worst = worst.max(var / (bound * n * n));
                if var > bound * n * n * (1.0 + 1e-12) {
                    violations += 1;
                }
                let msg = conef::compressors::compress(&spec, &e, &mut rng, None)?;
                let out = conef::compressors::decode(&msg)?;
                for (&x, &y) in e.iter().zip(&out) {
                    let r = x.abs() / unit;
                    let level = f64::from(y.abs() as f32) / unit;
                    let on_grid = (level - r.floor()).abs() < 1e-4 || (level - r.floor() - 1.0).abs() < 1e-4;
                    if !on_grid || (y != 0.0 && y.signum() != x.signum()) {
                        off_grid += 1;
                    }
                }
            }
        }
    }
    Ok((
        violations == 0 && off_grid == 0,
        format!("{violations} violations over 6000 vectors, worst variance/bound {worst:.3}, {off_grid} outputs off the two-level grid"),
    ))
}

fn sketch_tail() -> Outcome {
    let (d, eps, p) = (256usize, 0.5f64, 0.1f64);
    let rows = (d as f64 / p).log2().ceil() as usize;
    let width = (1.0 / (eps * eps)).ceil() as usize * 4;
    let mut rng = RngStream::new(41, purpose::stream(purpose::PROBLEM, 301));
    let frac = sketch_tail_fraction(d, &SketchShape::new(rows, width), eps, 10_000, &mut rng)?;
    Ok((frac < p, format!("v = {rows}, w = {width}: failure fraction {frac:.4} over 10^4 trials")))
}

fn rowspace_deterministic() -> Outcome {
    let mut cfg = least_squares_run(
        OptimizerConfig::new(Algorithm::Efsgd, 0.05).with_grad(CompressorSpec::TopK { k: Size::Ratio(0.1) }),
        2000,
    );
    cfg.eval_every = 10;
    let mut t = Trainer::new(&cfg, cfg.seed)?;
    let mut worst = t.record()?.rowspace_residual.unwrap_or(f64::INFINITY);
    let mut logged = 1;
    for step in 1..=cfg.steps {
        t.step()?;
        if step % cfg.eval_every == 0 {
            worst = worst.max(t.record()?.rowspace_residual.unwrap_or(f64::INFINITY));
            logged += 1;
        }
    }
    Ok((worst < 1e-8, format!("max residual {worst:.2e} over {logged} logged steps")))
}

fn rowspace_stochastic() -> Outcome {
    let runs = 256;
    let base = least_squares_run(
        OptimizerConfig::new(Algorithm::Conef, 0.05)
            .with_grad(CompressorSpec::TopK { k: Size::Ratio(0.1) })
            .with_error(sketch(Size::Ratio(4.0), Precision::Full)),
        300,
    );
    let mut sum: Vec<f64> = Vec::new();
    let mut per_run = Vec::with_capacity(runs);
    let mut last = None;
    for r in 0..runs as u64 {
        let cfg = with_seed(base.clone(), 1000 + r);
        let mut t = Trainer::new(&cfg, cfg.seed)?;
        for _ in 0..cfg.steps {
            t.step()?;
        }
        let z = t.cluster().corrected_iterate()?;
        let ls = t.problem().as_least_squares().expect("least-squares run");
        per_run.push(ls.rowspace_residual(&z));
        sum.resize(z.len(), 0.0);
        sum.iter_mut().zip(&z).for_each(|(s, v)| *s += v);
        last = Some(t);
    }
    let problem = last.expect("at least one run");
    let problem = problem.problem().as_least_squares().expect("least-squares run");
    let avg: Vec<f64> = sum.iter().map(|s| s / runs as f64).collect();
    let of_mean = problem.rowspace_residual(&avg);
    let med = median(per_run);
    let ratio = med / of_mean;
    Ok((
        ratio >= 8.0,
        format!("median per-run {med:.3e}, run mean {of_mean:.3e}, ratio {ratio:.1} over {runs} runs"),
    ))
}

fn memory_accounting() -> Outcome {
    let d = 10_000;
    let mut lines = Vec::new();
    let mut ok = true;
    for (width, want) in [(0.1, 0.10), (0.2, 0.20)] {
        for (precision, scale) in [(Precision::Full, 1.0), (Precision::Half, 0.5)] {
            let cfg = OptimizerConfig::new(Algorithm::Partial, 0.1)
                .with_grad(unscaled_block(0.1))
                .with_error(sketch(Size::Ratio(width), precision))
                .with_beta(0.9);
            let mut cluster = Cluster::new(cfg, vec![0.0; d], 4, 3)?;
            let mut rng = RngStream::new(5, purpose::stream(purpose::DATA, 0));
            for _ in 0..3 {
                let grads: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.next_gaussian()).collect()).collect();
                cluster.step(&grads)?;
            }
            let ratio = cluster.aux_memory_report().ratio;
            let target = want * scale;
            ok &= (ratio - target).abs() <= 0.01 * target;
            lines.push(format!("w/d={width} {precision:?} {ratio:.4}"));
        }
    }
    Ok((ok, lines.join(", ")))
}

fn comm_ratio(spec: CompressorSpec, d: usize) -> Result<f64> {
    let cfg = OptimizerConfig::new(Algorithm::Efsgd, 0.1).with_grad(spec);
    let mut cluster = Cluster::new(cfg, vec![0.0; d], 4, 9)?;
    let mut rng = RngStream::new(6, purpose::stream(purpose::DATA, 0));
    for _ in 0..2 {
        let grads: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.next_gaussian()).collect()).collect();
        cluster.step(&grads)?;
    }
    Ok(cluster.ledger().report().reduction_ratio)
}

fn comm_accounting() -> Outcome {
    let block = comm_ratio(unscaled_block(0.1), 10_000)?;
    let sign = comm_ratio(CompressorSpec::ScaledSign, 1_000_000)?;
    Ok((
        (block - 0.10).abs() <= 0.005 && sign <= 0.035,
        format!("random_block_k {block:.5}, scaled_sign at d = 10^6 {sign:.5}"),
    ))
}

fn logreg_final_loss(optimizer: OptimizerConfig, seed: u64) -> Result<f64> {
    let cfg = RunConfig {
        seed,
        workers: 8,
        batch: 8,
        steps: 10_000,
        eval_every: 10_000,
        repeats: 1,
        out: None,
        problem: ProblemConfig::Logreg {
            n: 20_000,
            d: 1000,
            seed: Some(5),
        },
        optimizer,
    };
    let mut t = Trainer::new(&cfg, seed)?;
    for _ in 0..cfg.steps {
        t.step()?;
    }
    Ok(t.record()?.train_loss)
}

fn convergence_parity() -> Outcome {
    let lr = 50.0;
    let algorithms = [
        ("sgd", OptimizerConfig::new(Algorithm::Sgd, lr)),
        ("efsgd", OptimizerConfig::new(Algorithm::Efsgd, lr).with_grad(unscaled_block(0.1))),
        ("conef_cs", conef_cs(lr, 0.1, 0.9)),
        (
            "rbsgd",
            OptimizerConfig::new(Algorithm::CompressedSgd, lr).with_grad(CompressorSpec::RandomBlockK {
                k: Size::Ratio(0.1),
                scaled: true,
                shared_seed: None,
            }),
        ),
    ];
    let mut losses = Vec::new();
    for (_, opt) in &algorithms {
        let per_seed = (0..3)
            .map(|s| logreg_final_loss(opt.clone(), 100 + s))
            .collect::<Result<Vec<_>>>()?;
        losses.push(mean(&per_seed));
    }
    let [sgd, efsgd, conef, rb] = [losses[0], losses[1], losses[2], losses[3]];
    let rel = (conef - efsgd).abs() / efsgd;
    let gap = rb - sgd;
    let ok = rel <= 0.05 && gap > 0.0 && efsgd - sgd <= 0.5 * gap && conef - sgd <= 0.5 * gap;
    Ok((
        ok,
        format!(
            "final loss sgd {sgd:.4}, efsgd {efsgd:.4}, conef_cs {conef:.4} ({:.1}% from efsgd), rbsgd {rb:.4}",
            100.0 * rel
        ),
    ))
}

/// Time-averaged `|mean_i e^i|^2` over a horizon matched in `eta * T`,
/// averaged over seeds, plus the running max over each half of the horizon.
fn error_plateau(eta: f64) -> Result<(f64, f64, f64)> {
    let steps = (40.0 / eta).round() as u64;
    let seeds = 8u64;
    let (mut avg, mut first, mut second) = (0.0, 0.0f64, 0.0f64);
    for s in 0..seeds {
        let cfg = with_seed(
            least_squares_run(OptimizerConfig::new(Algorithm::Efsgd, eta).with_grad(unscaled_block(0.1)), steps),
            40 + s,
        );
        let mut t = Trainer::new(&cfg, cfg.seed)?;
        for step in 0..steps {
            t.step()?;
            let e = norm_sq(&t.cluster().mean_error()?);
            avg += e / (steps * seeds) as f64;
            if step < steps / 2 {
                first = first.max(e);
            } else {
                second = second.max(e);
            }
        }
    }
    Ok((avg, first, second))
}

fn error_scaling() -> Outcome {
    let etas = [0.1, 0.05, 0.025];
    let mut normalized = Vec::new();
    let mut bounded = true;
    let mut parts = Vec::new();
    for &eta in &etas {
        let (avg, first, second) = error_plateau(eta)?;
        bounded &= second <= first;
        normalized.push(avg / (eta * eta));
        parts.push(format!("eta {eta}: {avg:.3e}"));
    }
    let spread = normalized.iter().cloned().fold(0.0, f64::max) / normalized.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((
        spread <= 2.0 && bounded,
        format!("{}; plateau / eta^2 spread {spread:.2}, second-half max never above first-half max: {bounded}", parts.join(", ")),
    ))
}

fn determinism() -> Outcome {
    let cfg = least_squares_run(conef_cs(0.05, 0.2, 0.9), 300);
    let mut a = Vec::new();
    let mut b = Vec::new();
    run_to_writer(&cfg, cfg.seed, &mut a)?;
    run_to_writer(&cfg, cfg.seed, &mut b)?;
    let report = verify(Suite::All);
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Ok((
        a == b && report.passed,
        format!(
            "CSV identical: {} ({} bytes); verify: {} of {} checks{}",
            a == b,
            a.len(),
            report.checks.len() - failed.len(),
            report.checks.len(),
            fmt_failed(&failed)
        ),
    ))
}

fn gradient_decay(update: SketchUpdate, steps: u64) -> Result<f64> {
    let mut opt = conef_cs(0.05, 0.2, 0.9);
    opt.sketch_update = update;
    let cfg = least_squares_run(opt, steps);
    let mut t = Trainer::new(&cfg, cfg.seed)?;
    let g0 = norm_sq(&t.problem().gradient(t.cluster().x()));
    let tail_start = steps - steps / 10;
    let mut tail = Vec::new();
    for step in 0..steps {
        t.step()?;
        if step >= tail_start {
            tail.push(norm_sq(&t.problem().gradient(t.cluster().x())));
        }
    }
    Ok(mean(&tail) / g0)
}

fn sketch_convergence() -> Outcome {
    let ratio = gradient_decay(SketchUpdate::Accumulate, 20_000)?;
    Ok((
        ratio < 1e-3,
        format!("last-10% mean |grad|^2 / initial = {ratio:.2e} over 20000 steps"),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("criterion 1 reduction chain", reduction_chain),
        ("criterion 2 compressor contracts", compressor_contracts),
        ("criterion 3 quantizer variance bound", quantizer_variance_bound),
        ("criterion 4 sketch tail bound", sketch_tail),
        ("criterion 5 row space, deterministic compressor", rowspace_deterministic),
        ("criterion 6 row space, unbiased error compressor", rowspace_stochastic),
        ("criterion 7 memory accounting", memory_accounting),
        ("criterion 8 communication accounting", comm_accounting),
        ("criterion 9 convergence parity", convergence_parity),
        ("criterion 10 error-state scaling", error_scaling),
        ("criterion 11 determinism", determinism),
        ("invariant: sketched partial error feedback converges", sketch_convergence),
    ];
    let mut all = true;
    for (name, f) in criteria {
        let start = Instant::now();
        let (passed, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        all &= passed;
        let verdict = if passed { "PASS" } else { "FAIL" };
        println!("{verdict} {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
    }
    match gradient_decay(SketchUpdate::ScaleThenAdd, 20_000) {
        Ok(r) => println!("INFO scale-then-add sketch update: last-10% gradient ratio {r:.2e}"),
        Err(e) => println!("INFO scale-then-add sketch update: {e}"),
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
