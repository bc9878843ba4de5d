//! Communication-compressed data-parallel SGD with compressed error feedback.
//!
//! The crate simulates `N` workers training one model. Each worker compresses
//! its update before the collective and keeps the compression error for
//! later steps; that error can itself be stored compressed (as a count
//! sketch or a quantized vector) to save memory.
//!
//! * [`numerics`]: counter-based random streams and keyed hash families
//! * [`sketch`]: count sketch with median decoding
//! * [`compressors`]: gradient and error compressors and their wire format
//! * [`comm`]: simulated collectives with a byte ledger
//! * [`optim`]: training-step algorithms over a [`optim::Cluster`] of workers
//! * [`problems`]: synthetic objectives and verification oracles
//! * [`harness`]: run configs, CSV metrics, sweeps and verification suites

pub mod comm;
pub mod compressors;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod numerics;
pub mod optim;
pub mod problems;
pub mod sketch;

pub use error::{Error, Result};
