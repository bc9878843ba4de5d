//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export takes plain numbers or TOML text and returns a JSON string, so
//! the page needs no generated type glue. The `*_json` functions hold the
//! logic and run natively too; the exported wrappers only map errors to
//! JavaScript exceptions.

use conef::compressors::{compress, decode, CompressorSpec};
use conef::harness::{RunConfig, Trainer};
use conef::linalg::{dist_sq, norm_sq};
use conef::numerics::{HashFamily, RngStream};
use conef::sketch::{CountSketch, SketchShape};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest vector the page may request, to keep the tab responsive.
pub const MAX_DIM: usize = 1 << 16;
/// Largest number of training steps the page may request.
pub const MAX_STEPS: u64 = 20_000;

fn check_dim(d: usize) -> Result<(), String> {
    if d == 0 || d > MAX_DIM {
        return Err(format!("dimension must be in 1..={MAX_DIM}, got {d}"));
    }
    Ok(())
}

/// A vector with `heavy` large entries at random positions over small
/// Gaussian noise of scale `noise`.
pub fn heavy_hitters(d: usize, heavy: usize, noise: f64, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0);
    let mut x: Vec<f64> = (0..d).map(|_| noise * rng.next_gaussian()).collect();
    for _ in 0..heavy.min(d) {
        let i = rng.next_below(d as u64) as usize;
        x[i] = 10.0 * rng.next_sign() * (1.0 + rng.next_uniform());
    }
    x
}

/// Sketch a heavy-hitter vector and decode it again.
///
/// Returns `{"input", "decoded", "relative_error", "table_bytes"}`.
pub fn sketch_recovery_json(d: usize, heavy: usize, rows: usize, width: usize, seed: u64) -> Result<String, String> {
    check_dim(d)?;
    let x = heavy_hitters(d, heavy, 0.1, seed);
    let shape = SketchShape::new(rows, width);
    shape.validate().map_err(|e| e.to_string())?;
    let family = HashFamily::new(seed ^ 0x5eed, rows, width);
    let s = CountSketch::compress(&x, family, &shape).map_err(|e| e.to_string())?;
    let y = s.decode_all();
    Ok(json!({
        "input": x,
        "relative_error": (dist_sq(&y, &x) / norm_sq(&x).max(f64::MIN_POSITIVE)).sqrt(),
        "table_bytes": s.bytes(),
        "decoded": y,
    })
    .to_string())
}

/// Compress a Gaussian vector with the compressor described by `spec_toml`,
/// e.g. `kind = "top_k"` and `k = 0.1`.
///
/// Returns `{"name", "input", "decoded", "relative_error", "wire_bytes", "dense_bytes"}`.
pub fn compressor_json(spec_toml: &str, d: usize, seed: u64) -> Result<String, String> {
    check_dim(d)?;
    let spec: CompressorSpec = toml::from_str(spec_toml).map_err(|e| e.to_string())?;
    let mut rng = RngStream::new(seed, 0);
    let x: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
    let msg = compress(&spec, &x, &mut RngStream::new(seed, 1), None).map_err(|e| e.to_string())?;
    let y = decode(&msg).map_err(|e| e.to_string())?;
    Ok(json!({
        "name": spec.name(),
        "input": x,
        "relative_error": (dist_sq(&y, &x) / norm_sq(&x).max(f64::MIN_POSITIVE)).sqrt(),
        "wire_bytes": msg.wire_bytes(),
        "dense_bytes": 4 * d,
        "decoded": y,
    })
    .to_string())
}

/// Run the training config in `config_toml` and return its evaluation rows
/// as `{"step", "loss", "grad_norm_sq", "comm_bytes", "aux_bytes", "diverged"}`,
/// each an array except the last. Training stops at the first non-finite loss.
pub fn train_json(config_toml: &str) -> Result<String, String> {
    let cfg = RunConfig::from_toml(config_toml).map_err(|e| e.to_string())?;
    if cfg.steps > MAX_STEPS {
        return Err(format!("steps must be at most {MAX_STEPS} in the browser"));
    }
    let mut t = Trainer::new(&cfg, cfg.seed).map_err(|e| e.to_string())?;
    let (mut step, mut loss, mut grad, mut comm, mut aux) = (vec![], vec![], vec![], vec![], vec![]);
    let mut diverged = false;
    for s in 0..=cfg.steps {
        if s > 0 {
            t.step().map_err(|e| e.to_string())?;
        }
        if s % cfg.eval_every == 0 || s == cfg.steps {
            let rec = t.record().map_err(|e| e.to_string())?;
            if !rec.train_loss.is_finite() || !rec.grad_norm_sq.is_finite() {
                diverged = true;
                break;
            }
            step.push(rec.step);
            loss.push(rec.train_loss);
            grad.push(rec.grad_norm_sq);
            comm.push(rec.comm_bytes_cum);
            aux.push(rec.aux_bytes);
        }
    }
    Ok(json!({
        "step": step,
        "loss": loss,
        "grad_norm_sq": grad,
        "comm_bytes": comm,
        "aux_bytes": aux,
        "diverged": diverged,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn sketch_recovery(d: usize, heavy: usize, rows: usize, width: usize, seed: u64) -> Result<String, JsError> {
    sketch_recovery_json(d, heavy, rows, width, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compressor(spec_toml: &str, d: usize, seed: u64) -> Result<String, JsError> {
    compressor_json(spec_toml, d, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn train(config_toml: &str) -> Result<String, JsError> {
    train_json(config_toml).map_err(|e| JsError::new(&e))
}
