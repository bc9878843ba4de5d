use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::comm::LedgerReport;
use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::numerics::{purpose, RngStream};
use crate::optim::{AuxReport, Cluster};
use crate::problems::{Problem, ShardedDataset};

pub const CSV_HEADER: &str = "step,train_loss,grad_norm_sq,comm_bytes_cum,aux_bytes,eval_metric,rowspace_residual";

/// One metrics row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub step: u64,
    pub train_loss: f64,
    pub grad_norm_sq: f64,
    pub comm_bytes_cum: u64,
    /// Mean auxiliary (error-state) bytes per worker.
    pub aux_bytes: u64,
    pub eval_metric: Option<f64>,
    /// Distance of `x - mean_i e^i` from the row space, for least squares.
    pub rowspace_residual: Option<f64>,
}

/// Loss growth over the initial value past which a run counts as diverged.
pub const DIVERGENCE_GROWTH: f64 = 1e10;

/// Shortest round-trip form, switching to exponent notation for very large
/// or small magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl RunRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step,
            num(self.train_loss),
            num(self.grad_norm_sq),
            self.comm_bytes_cum,
            self.aux_bytes,
            opt(self.eval_metric),
            opt(self.rowspace_residual)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps_completed: u64,
    pub last: RunRecord,
    pub comm: LedgerReport,
    pub aux: AuxReport,
}

/// A problem, its worker shards and a cluster, stepped together.
pub struct Trainer {
    problem: Box<dyn Problem>,
    data: ShardedDataset,
    cluster: Cluster,
    data_rngs: Vec<RngStream>,
}

impl Trainer {
    /// Build the run described by `cfg` with master seed `seed`.
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let problem = cfg.problem.build(seed)?;
        Self::with_problem(problem, cfg, seed)
    }

    pub fn with_problem(problem: Box<dyn Problem>, cfg: &RunConfig, seed: u64) -> Result<Self> {
        let data = ShardedDataset::new(problem.samples(), cfg.workers, cfg.batch).map_err(|e| Error::Config {
            key: "workers".into(),
            message: e.to_string(),
        })?;
        let x0 = problem.initial_point(&mut RngStream::new(seed, purpose::stream(purpose::INIT, 0)));
        let cluster = Cluster::new(cfg.optimizer.clone(), x0, cfg.workers, seed)?;
        let data_rngs = (0..cfg.workers as u64)
            .map(|w| RngStream::new(seed, purpose::stream(purpose::DATA, w)))
            .collect();
        Ok(Self {
            problem,
            data,
            cluster,
            data_rngs,
        })
    }

    pub fn problem(&self) -> &dyn Problem {
        self.problem.as_ref()
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    /// Per-worker stochastic gradients at the current model, in worker order.
    pub fn gradients(&mut self) -> Vec<Vec<f64>> {
        let x = self.cluster.x().to_vec();
        (0..self.data.workers())
            .map(|w| {
                let batch = self.data.draw(w, &mut self.data_rngs[w]);
                let mut g = self.problem.batch_gradient(&x, &batch.indices);
                if batch.weight != 1.0 {
                    g.iter_mut().for_each(|v| *v *= batch.weight);
                }
                g
            })
            .collect()
    }

    pub fn step(&mut self) -> Result<()> {
        let grads = self.gradients();
        self.cluster.step(&grads)
    }

    pub fn record(&self) -> Result<RunRecord> {
        let x = self.cluster.x();
        let residual = match self.problem.as_least_squares() {
            Some(ls) => Some(ls.rowspace_residual(&self.cluster.corrected_iterate()?)),
            None => None,
        };
        let aux = self.cluster.aux_memory_report();
        Ok(RunRecord {
            step: self.cluster.steps_taken(),
            train_loss: self.problem.loss(x),
            grad_norm_sq: norm_sq(&self.problem.gradient(x)),
            comm_bytes_cum: self.cluster.ledger().bytes_sent_total,
            aux_bytes: (aux.per_worker.iter().sum::<u64>() as f64 / aux.per_worker.len() as f64).round() as u64,
            eval_metric: self.problem.eval_metric(x),
            rowspace_residual: residual,
        })
    }
}

fn write_row(out: &mut impl Write, rec: &RunRecord) -> Result<()> {
    writeln!(out, "{}", rec.csv_line())?;
    out.flush()?;
    Ok(())
}

/// Run `cfg` with master seed `seed`, streaming one CSV row per evaluation.
/// Each row is flushed, so an interrupted run leaves a parseable prefix.
/// On divergence a final diagnostic row is written and the error returned.
pub fn run_to_writer(cfg: &RunConfig, seed: u64, out: &mut impl Write) -> Result<RunSummary> {
    let mut trainer = Trainer::new(cfg, seed)?;
    writeln!(out, "{CSV_HEADER}")?;
    let mut last = trainer.record()?;
    write_row(out, &last)?;
    let ceiling = DIVERGENCE_GROWTH * last.train_loss.max(1.0);
    for t in 1..=cfg.steps {
        let stepped = trainer.step();
        let due = t % cfg.eval_every == 0 || t == cfg.steps;
        if let Err(Error::Diverged { step, detail }) = stepped {
            write_row(out, &trainer.record()?)?;
            return Err(Error::Diverged { step, detail });
        }
        stepped?;
        if due {
            last = trainer.record()?;
            write_row(out, &last)?;
            if !last.train_loss.is_finite() || !last.grad_norm_sq.is_finite() || last.train_loss > ceiling {
                return Err(Error::Diverged {
                    step: t,
                    detail: format!("training loss is {:e}", last.train_loss),
                });
            }
        }
    }
    Ok(RunSummary {
        seed,
        steps_completed: trainer.cluster().steps_taken(),
        last,
        comm: trainer.cluster().ledger().report(),
        aux: trainer.cluster().aux_memory_report(),
    })
}

/// Output path of repeat `r`: the configured path for a single repeat,
/// otherwise `<stem>_seed<seed>.csv` beside it.
pub fn repeat_path(out: &Path, repeats: u64, seed: u64) -> PathBuf {
    if repeats <= 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    out.with_file_name(format!("{stem}_seed{seed}.csv"))
}

/// Run every repeat of `cfg`, writing CSVs under `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    let mut summaries = Vec::new();
    for r in 0..cfg.repeats {
        let seed = cfg.seed.wrapping_add(r);
        let path = repeat_path(out, cfg.repeats, seed);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        summaries.push(run_to_writer(cfg, seed, &mut w)?);
    }
    Ok(summaries)
}
