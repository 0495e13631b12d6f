//! Experiment protocols for multi-task taggers: single-task baselines,
//! pairwise, all-task, all-but-one and oracle joint training; classification
//! of helper/test-task relations; report tables and task-embedding export.

pub mod config;
pub mod corpus_stats;
pub mod error;
pub mod export;
pub mod protocol;
pub mod relations;
pub mod report;
pub mod store;
pub mod table;

pub use error::{Error, Result};
