//! Dataset ingestion: column files, tagging schemes, vocabularies,
//! pretrained embeddings, task registries and corpus statistics.

pub mod column;
pub mod embeddings;
pub mod registry;
pub mod scheme;
pub mod stats;
pub mod synthetic;
pub mod vocab;

pub use column::{parse_column_text, read_column_file, write_column_file, TaggedSentence};
pub use embeddings::{load_pretrained, CoverageReport, DEFAULT_WORD_DIM};
pub use registry::{Registry, Split, SplitPaths, TaskData, TaskSpec};
pub use scheme::{to_iobes, Scheme, OUTSIDE};
pub use stats::{dataset_stats, entropy, DatasetStats, StatsOptions};
pub use vocab::{task_token, Vocabulary, PAD, UNK};
