//! Fall detection from wrist sensor windows with a small LSTM.
//!
//! The crate covers the whole experimental loop:
//!
//! * [`data`]: CSV ingestion, stream alignment, windowing, normalisation,
//!   splitting and a synthetic generator;
//! * [`model`]: the LSTM → ReLU → sigmoid classifier and its file format;
//! * [`train`]: binary cross-entropy, backpropagation through time, Adam and
//!   finite-difference gradient checking;
//! * [`distill`]: teacher/student knowledge distillation onto fewer sensors
//!   and narrower networks;
//! * [`eval`]: accuracy reports, sensor ablation and latency benchmarks;
//! * [`power`]: sensor and compute power estimates and selection of the
//!   cheapest configuration that meets an accuracy floor.
//!
//! Every numeric routine is deterministic for a fixed seed.

pub mod config;
pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod model;
pub mod power;
pub mod tensor;
pub mod train;
pub mod util;
#[cfg(test)]
mod testutil;

pub use data::{SensorKind, SensorSet, WindowedDataset};
pub use error::{Error, ErrorCategory, Result};
pub use model::{LstmClassifier, ModelTopology};
