//! Dataset ingestion: Bugzilla REST paging, Stack Overflow query exports and
//! requirement-pair files.

pub mod bugzilla;
pub mod error;
pub mod fixture;
pub mod mock;
pub mod pairs;
pub mod srs;
pub mod stackoverflow;

pub use bugzilla::{fetch_bugs, BugRecord, FetchConfig, FetchReport, IngestionWindow};
pub use error::{IngestError, Result};
pub use pairs::{bugzilla_dataset, build_dependency_pairs, build_duplicate_pairs, build_neutral_pairs, PairReport};
pub use srs::load_srs_pairs;
pub use stackoverflow::{ingest_stackoverflow_exports, QuestionRecord, SoOptions, SoReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
