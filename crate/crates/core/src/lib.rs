//! Multi-task sequence tagging with a shared biGRU encoder and CRF decoders.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`], [`tape`], [`params`], [`gradcheck`] — dense `f64` tensors and
//!   a reverse-mode autodiff tape with a finite-difference checker.
//! * [`corpus`] — column files, IOBES conversion, vocabularies, embeddings,
//!   task registries, corpus statistics and a synthetic fixture.
//! * [`encoder`], [`decoder`], [`model`] — character/word biGRUs, linear
//!   projection + linear-chain CRF, and model assembly for the sharing modes.
//! * [`trainer`] — balanced multi-task batching, Adam, clipping, schedules
//!   and checkpoints.
//! * [`metrics`] — span extraction, micro-F1, seed aggregation and the
//!   `μ ± kσ` comparison rule.
//! * [`oracle`], [`checks`] — naive brute-force references and the
//!   self-check suites that compare the implementation against them.

pub mod error;
pub mod gradcheck;
pub mod init;
pub mod params;
mod serde_f64;
pub mod tape;
pub mod tensor;

pub mod checks;
pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod trainer;

pub use error::{Error, Result};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{Axis, Tape, Var};
pub use tensor::Tensor;
