//! Few-shot sentence-pair classification for software-engineering text.
//!
//! Three training strategies share one data model and one model-backend
//! contract: pattern-exploiting training with an ensemble of cloze models
//! distilled into a classifier ([`pet`]), contrastive sentence-encoder
//! training with a logistic head ([`setfit`]), and plain fine-tuning
//! ([`finetune`]).

pub mod backend;
pub mod data;
pub mod error;
pub mod finetune;
pub mod io;
pub mod metrics;
pub mod pet;
pub mod prompting;
pub mod rng;
pub mod setfit;
pub mod split;
pub mod synthetic;

pub use data::{Dataset, DatasetKind, LabelSet, LabeledExample, SentencePair, SoftLabeledExample};
pub use error::{Error, Result};

/// Hex SHA-256 of a value's JSON serialization.
pub fn config_hash<T: serde::Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
