//! Data-parallel training steps: SGD, compressed SGD, error feedback with a
//! dense or compressed error, the two-stage and partial variants, top-k
//! error truncation, periodic error reset, momentum and clipping.
//!
//! A [`Cluster`] owns one [`WorkerState`] per worker. Every step is
//! bulk-synchronous: workers form their updates from local gradients, the
//! collective averages the compressed updates in worker order, and every
//! replica applies the same average.

mod config;
mod holder;

pub use config::{Algorithm, OptimizerConfig, SketchUpdate};
pub use holder::{ErrorHolder, ErrorStore};

use serde::{Deserialize, Serialize};

use crate::comm::{allgather, allreduce_dense, allreduce_mean, mean_in_order, mean_of_decoded, CommLedger, Primitive};
use crate::compressors::{compress, decode, CompressedMsg, Compressor, CompressorSpec, Size};
use crate::error::{contract, Error, Result};
use crate::linalg::norm;
use crate::numerics::{purpose, RngStream};
use crate::sketch::CountSketch;

/// Offset separating second-stage error streams from first-stage ones.
const SECOND_STAGE: u64 = 1 << 24;

#[derive(Clone, Debug)]
pub struct WorkerState {
    /// Model replica.
    pub x: Vec<f64>,
    /// Error state (the first stage for the two-stage variants).
    pub error: ErrorHolder,
    /// Second-stage error state of the two-stage variants.
    pub error2: ErrorHolder,
    velocity: Vec<f64>,
    grad: Compressor,
    store: Option<ErrorStore>,
    store2: Option<ErrorStore>,
}

/// Auxiliary memory per worker against a dense fp32 error vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxReport {
    pub per_worker: Vec<u64>,
    pub efsgd_bytes: u64,
    /// Mean per-worker bytes over `efsgd_bytes`.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct Cluster {
    config: OptimizerConfig,
    dim: usize,
    workers: Vec<WorkerState>,
    ledger: CommLedger,
    step: u64,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl Cluster {
    /// `workers` replicas starting at `x0`; all randomness derives from `seed`.
    pub fn new(config: OptimizerConfig, x0: Vec<f64>, workers: usize, seed: u64) -> Result<Self> {
        let dim = x0.len();
        if dim == 0 || workers == 0 {
            return Err(contract("a cluster needs d >= 1 and at least one worker"));
        }
        config.validate(dim)?;
        let family_seed = |stage: u64| RngStream::new(seed, purpose::stream(purpose::SKETCH, stage)).next_u64();
        let mut states = Vec::with_capacity(workers);
        for w in 0..workers as u64 {
            let grad = Compressor::for_worker(&config.grad_compressor, dim, seed, purpose::GRAD_COMPRESSOR, w)?;
            let make_store = |spec: Option<CompressorSpec>, stage: u64| -> Result<Option<ErrorStore>> {
                spec.map(|spec| {
                    let rng = RngStream::new(seed, purpose::stream(purpose::ERR_COMPRESSOR, w + stage * SECOND_STAGE));
                    ErrorStore::new(spec, dim, rng, family_seed(stage))
                })
                .transpose()
            };
            let mut store = make_store(config.first_error_spec(), 0)?;
            let mut store2 = make_store(config.second_error_spec(), 1)?;
            let error = match (&mut store, config.algorithm) {
                (Some(s), _) => s.zero(dim)?,
                (None, Algorithm::Efsgd | Algorithm::Hefsgd) => ErrorHolder::Dense(vec![0.0; dim]),
                (None, _) => ErrorHolder::None,
            };
            let error2 = match &mut store2 {
                Some(s) => s.zero(dim)?,
                None => ErrorHolder::None,
            };
            states.push(WorkerState {
                x: x0.clone(),
                error,
                error2,
                velocity: if config.momentum > 0.0 { vec![0.0; dim] } else { Vec::new() },
                grad,
                store,
                store2,
            });
        }
        Ok(Self {
            config,
            dim,
            workers: states,
            ledger: CommLedger::new(),
            step: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    /// The model (worker 0's replica; all replicas agree).
    pub fn x(&self) -> &[f64] {
        &self.workers[0].x
    }

    /// `max_i |x^i - x^0|_inf`.
    pub fn replica_spread(&self) -> f64 {
        let x0 = self.x();
        self.workers
            .iter()
            .flat_map(|w| w.x.iter().zip(x0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// Worker-average of the decoded error state (both stages).
    pub fn mean_error(&self) -> Result<Vec<f64>> {
        let per_worker = self
            .workers
            .iter()
            .map(|w| {
                let mut e = w.error.decoded(self.dim)?;
                if !matches!(w.error2, ErrorHolder::None) {
                    let q = w.error2.decoded(self.dim)?;
                    e.iter_mut().zip(&q).for_each(|(a, b)| *a += b);
                }
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_in_order(&per_worker))
    }

    /// `x - mean_i e^i`, the sequence the error-feedback analysis tracks.
    pub fn corrected_iterate(&self) -> Result<Vec<f64>> {
        Ok(sub(self.x(), &self.mean_error()?))
    }

    pub fn aux_memory_report(&self) -> AuxReport {
        let per_worker: Vec<u64> = self.workers.iter().map(|w| w.error.bytes() + w.error2.bytes()).collect();
        let efsgd_bytes = 4 * self.dim as u64;
        let mean = per_worker.iter().sum::<u64>() as f64 / per_worker.len() as f64;
        AuxReport {
            per_worker,
            efsgd_bytes,
            ratio: mean / efsgd_bytes as f64,
        }
    }

    fn local_gradient(&mut self, worker: usize, g: &[f64]) -> Vec<f64> {
        let mut g = g.to_vec();
        if let Some(c) = self.config.clip {
            let n = norm(&g);
            if n > c {
                let s = c / n;
                g.iter_mut().for_each(|v| *v *= s);
            }
        }
        let mu = self.config.momentum;
        if mu > 0.0 {
            let v = &mut self.workers[worker].velocity;
            for (vi, gi) in v.iter_mut().zip(&g) {
                *vi = mu * *vi + gi;
            }
            if self.config.nesterov {
                g.iter_mut().zip(v.iter()).for_each(|(gi, vi)| *gi += mu * vi);
            } else {
                g.clone_from(v);
            }
        }
        g
    }

    fn aggregate(&mut self, msgs: &[CompressedMsg]) -> Result<Vec<f64>> {
        if self.config.grad_compressor.is_allreducable() {
            allreduce_mean(msgs, &mut self.ledger)
        } else {
            let gathered = allgather(msgs, &mut self.ledger)?;
            mean_of_decoded(&gathered)
        }
    }

    fn apply(&mut self, delta: &[f64]) -> Result<()> {
        for w in &mut self.workers {
            for (x, d) in w.x.iter_mut().zip(delta) {
                *x -= d;
            }
        }
        if self.x().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: self.step,
                detail: "model has non-finite entries".into(),
            });
        }
        Ok(())
    }

    /// One synchronous step from per-worker stochastic gradients at the
    /// current model.
    pub fn step(&mut self, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.workers.len() || grads.iter().any(|g| g.len() != self.dim) {
            return Err(contract("need one gradient of length d per worker"));
        }
        let eta = self.config.lr_at(self.step);
        let local: Vec<Vec<f64>> = (0..grads.len()).map(|w| self.local_gradient(w, &grads[w])).collect();
        let scaled: Vec<Vec<f64>> = local.iter().map(|g| g.iter().map(|v| eta * v).collect()).collect();
        match self.config.algorithm {
            Algorithm::Sgd => {
                let mean = allreduce_dense(&scaled, &mut self.ledger)?;
                self.apply(&mean)?;
            }
            Algorithm::CompressedSgd => {
                let msgs = self
                    .workers
                    .iter_mut()
                    .zip(&scaled)
                    .map(|(w, u)| w.grad.compress(u))
                    .collect::<Result<Vec<_>>>()?;
                let mean = self.aggregate(&msgs)?;
                self.apply(&mean)?;
            }
            _ => self.error_feedback_step(&scaled)?,
        }
        self.step += 1;
        if let Some(k) = self.config.error_reset_every {
            if self.step % k == 0 {
                self.error_reset()?;
            }
        }
        Ok(())
    }

    fn error_feedback_step(&mut self, scaled: &[Vec<f64>]) -> Result<()> {
        let (alg, beta, d) = (self.config.algorithm, self.config.beta, self.dim);
        let mut ps = Vec::with_capacity(self.workers.len());
        let mut msgs = Vec::with_capacity(self.workers.len());
        for (w, u) in self.workers.iter_mut().zip(scaled) {
            let e = w.error.decoded(d)?;
            let p: Vec<f64> = match alg {
                Algorithm::Partial => {
                    let keep = 1.0 - beta;
                    u.iter().zip(&e).map(|(a, b)| a + keep * b).collect()
                }
                Algorithm::IconefV1 | Algorithm::IconefV2 => {
                    let q = w.error2.decoded(d)?;
                    u.iter().zip(&e).zip(&q).map(|((a, b), c)| a + b + c).collect()
                }
                _ => u.iter().zip(&e).map(|(a, b)| a + b).collect(),
            };
            msgs.push(w.grad.compress(&p)?);
            ps.push((p, e));
        }
        let mean = self.aggregate(&msgs)?;
        self.apply(&mean)?;
        let keep = self.config.hefsgd_keep(d);
        let update = self.config.sketch_update;
        for ((w, (p, e)), (msg, u)) in self.workers.iter_mut().zip(ps).zip(msgs.iter().zip(scaled)) {
            let delta = decode(msg)?;
            match alg {
                Algorithm::Efsgd => w.error = ErrorHolder::Dense(sub(&p, &delta)),
                Algorithm::Hefsgd => {
                    let r = sub(&p, &delta);
                    w.error = if keep == 0 {
                        ErrorHolder::None
                    } else {
                        let spec = CompressorSpec::TopK { k: Size::Count(keep) };
                        // top-k is deterministic; the stream is never read
                        ErrorHolder::Message(compress(&spec, &r, &mut RngStream::new(0, 0), None)?)
                    };
                }
                Algorithm::Conef => {
                    let store = w.store.as_mut().expect("validated");
                    w.error = store.store(&sub(&p, &delta))?;
                }
                Algorithm::Partial => {
                    let store = w.store.as_mut().expect("validated");
                    w.error = match (&mut w.error, update) {
                        (ErrorHolder::Sketch(s), SketchUpdate::Accumulate) => {
                            s.merge(&store.sketch_of(&sub(u, &delta))?)?;
                            ErrorHolder::Sketch(s.clone())
                        }
                        (ErrorHolder::Sketch(s), SketchUpdate::ScaleThenAdd) => {
                            s.axpy(&store.sketch_of(&sub(&p, &delta))?, beta)?;
                            ErrorHolder::Sketch(s.clone())
                        }
                        _ => {
                            let v: Vec<f64> = e
                                .iter()
                                .zip(&p)
                                .zip(&delta)
                                .map(|((ei, pi), di)| beta * ei + pi - di)
                                .collect();
                            store.store(&v)?
                        }
                    };
                }
                Algorithm::IconefV1 | Algorithm::IconefV2 => {
                    let r = sub(&p, &delta);
                    let first = w.store.as_mut().expect("validated").store(&r)?;
                    let rest = sub(&r, &first.decoded(d)?);
                    w.error2 = w.store2.as_mut().expect("validated").store(&rest)?;
                    w.error = first;
                }
                Algorithm::Sgd | Algorithm::CompressedSgd => unreachable!("no error state"),
            }
        }
        Ok(())
    }

    /// Replace every worker's error state by the across-worker mean.
    pub fn error_reset(&mut self) -> Result<()> {
        let d = self.dim;
        for stage in 0..2 {
            let slot = |w: &WorkerState| if stage == 0 { w.error.clone() } else { w.error2.clone() };
            let holders: Vec<ErrorHolder> = self.workers.iter().map(slot).collect();
            let merged = match &holders[0] {
                ErrorHolder::None => continue,
                ErrorHolder::Dense(_) => {
                    let vecs = holders
                        .iter()
                        .map(|h| match h {
                            ErrorHolder::Dense(v) => Ok(v.clone()),
                            _ => Err(contract("workers hold different error kinds")),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    ErrorHolder::Dense(allreduce_dense(&vecs, &mut self.ledger)?)
                }
                ErrorHolder::Sketch(s0) => {
                    let sketches = holders
                        .iter()
                        .map(|h| match h {
                            ErrorHolder::Sketch(s) => Ok(s.clone()),
                            _ => Err(contract("workers hold different error kinds")),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let merged = CountSketch::merge_mean(&sketches)?;
                    self.ledger
                        .charge(Primitive::AllReduce, 40 + s0.bytes() as u64, sketches.len(), d);
                    ErrorHolder::Sketch(merged)
                }
                _ => {
                    return Err(Error::Unsupported(
                        "error reset needs dense or count-sketch error state".into(),
                    ))
                }
            };
            for w in &mut self.workers {
                if stage == 0 {
                    w.error = merged.clone();
                } else {
                    w.error2 = merged.clone();
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn top1() -> CompressorSpec {
        CompressorSpec::TopK { k: Size::Count(1) }
    }

    fn dense(h: &ErrorHolder) -> Vec<f64> {
        h.decoded(2).unwrap()
    }

    #[test]
    fn sgd_on_half_square() {
        let mut c = Cluster::new(OptimizerConfig::new(Algorithm::Sgd, 0.5), vec![2.0], 1, 0).unwrap();
        c.step(&[vec![2.0]]).unwrap();
        assert_eq!(c.x(), &[1.0]);
        let mut c = Cluster::new(OptimizerConfig::new(Algorithm::Sgd, 1.0), vec![0.0, 0.0], 2, 0).unwrap();
        c.step(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(c.x(), &[-0.5, -0.5]);
    }

    #[test]
    fn efsgd_top1_trace() {
        let cfg = OptimizerConfig::new(Algorithm::Efsgd, 1.0).with_grad(top1());
        let mut c = Cluster::new(cfg, vec![0.0, 0.0], 1, 0).unwrap();
        c.step(&[vec![3.0, 1.0]]).unwrap();
        assert_eq!(c.x(), &[-3.0, 0.0]);
        assert_eq!(dense(&c.workers()[0].error), vec![0.0, 1.0]);
        c.step(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(c.x(), &[-3.0, -1.0]);
        assert_eq!(dense(&c.workers()[0].error), vec![0.0, 0.0]);
    }

    #[test]
    fn partial_top1_trace() {
        let cfg = OptimizerConfig::new(Algorithm::Partial, 1.0)
            .with_grad(top1())
            .with_error(CompressorSpec::Identity)
            .with_beta(0.5);
        let mut c = Cluster::new(cfg, vec![0.0, 0.0], 1, 0).unwrap();
        c.step(&[vec![3.0, 1.0]]).unwrap();
        assert_eq!(dense(&c.workers()[0].error), vec![0.0, 1.0]);
        c.step(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(c.x(), &[-3.0, -0.5]);
        assert_eq!(dense(&c.workers()[0].error), vec![0.0, 0.5]);
    }

    #[test]
    fn iconef_v2_top1_trace() {
        let cfg = OptimizerConfig::new(Algorithm::IconefV2, 1.0)
            .with_grad(top1())
            .with_error(top1())
            .with_error2(CompressorSpec::Identity);
        let mut c = Cluster::new(cfg, vec![0.0, 0.0], 1, 0).unwrap();
        c.step(&[vec![3.0, 1.0]]).unwrap();
        assert_eq!(dense(&c.workers()[0].error), vec![0.0, 1.0]);
        assert_eq!(dense(&c.workers()[0].error2), vec![0.0, 0.0]);
    }

    #[test]
    fn hefsgd_truncates() {
        let mut cfg = OptimizerConfig::new(Algorithm::Hefsgd, 1.0).with_grad(top1());
        cfg.hefsgd_k = Some(Size::Count(1));
        let mut c = Cluster::new(cfg.clone(), vec![0.0, 0.0, 0.0], 1, 0).unwrap();
        c.step(&[vec![3.0, 1.0, 2.0]]).unwrap();
        assert_eq!(c.workers()[0].error.decoded(3).unwrap(), vec![0.0, 0.0, 2.0]);
        assert_eq!(c.aux_memory_report().per_worker, vec![8]);
        cfg.hefsgd_k = Some(Size::Count(0));
        let mut c = Cluster::new(cfg, vec![0.0, 0.0, 0.0], 1, 0).unwrap();
        c.step(&[vec![3.0, 1.0, 2.0]]).unwrap();
        assert_eq!(c.workers()[0].error, ErrorHolder::None);
    }

    #[test]
    fn heavy_ball_two_steps() {
        let mut cfg = OptimizerConfig::new(Algorithm::Sgd, 0.1);
        cfg.momentum = 0.9;
        let mut c = Cluster::new(cfg, vec![1.0], 1, 0).unwrap();
        c.step(&[vec![1.0]]).unwrap();
        assert!((c.x()[0] - 0.9).abs() < 1e-15);
        c.step(&[vec![c.x()[0]]]).unwrap();
        assert!((c.x()[0] - 0.72).abs() < 1e-15);
    }

    #[test]
    fn dense_error_reset_averages() {
        let mut cfg = OptimizerConfig::new(Algorithm::Efsgd, 1.0).with_grad(top1());
        cfg.error_reset_every = Some(1);
        let mut c = Cluster::new(cfg, vec![0.0, 0.0], 2, 0).unwrap();
        // worker 0 keeps e = [0, 2], worker 1 keeps e = [2, 0]
        c.step(&[vec![4.0, 2.0], vec![2.0, 4.0]]).unwrap();
        for w in c.workers() {
            assert_eq!(dense(&w.error), vec![1.0, 1.0]);
        }
    }

    #[test]
    fn invalid_configs_name_their_key() {
        let cfg = OptimizerConfig::new(Algorithm::Partial, 0.1).with_error(CompressorSpec::Identity).with_beta(1.0);
        match Cluster::new(cfg, vec![0.0; 4], 1, 0) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "optimizer.beta"),
            other => panic!("{other:?}"),
        }
        let mut cfg = OptimizerConfig::new(Algorithm::Conef, 0.1).with_error(CompressorSpec::StochasticQuantize {
            levels: 4,
            norm: Default::default(),
        });
        cfg.error_reset_every = Some(4);
        assert!(matches!(Cluster::new(cfg, vec![0.0; 4], 1, 0), Err(Error::Unsupported(_))));
    }
}
