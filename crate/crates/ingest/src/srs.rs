//! Requirement-pair files for conflict detection.
//!
//! One JSON object per line: `{"u": ..., "v": ..., "label": ...}`, where
//! `spec1`/`spec2` (any case) are accepted for `u`/`v`. Blank lines are
//! skipped.

use std::path::Path;

use serde::Deserialize;

use pairshot_core::prompting::Task;
use pairshot_core::{Dataset, DatasetKind, LabeledExample, SentencePair};

use crate::error::{IngestError, Result};

#[derive(Deserialize)]
struct Row {
    #[serde(alias = "spec1", alias = "Spec1", alias = "SPEC1")]
    u: String,
    #[serde(alias = "spec2", alias = "Spec2", alias = "SPEC2")]
    v: String,
    #[serde(alias = "Label")]
    label: String,
}

pub fn load_srs_pairs(path: &Path) -> Result<Dataset> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let labels = Task::SrsConflict.label_set();
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |detail: String| IngestError::Line {
            path: shown.clone(),
            line: i + 1,
            detail,
        };
        let row: Row = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if labels.index_of(&row.label).is_err() {
            return Err(err(format!(
                "unknown label `{}` (expected one of {})",
                row.label,
                labels.labels().join(", ")
            )));
        }
        let (u, v) = (row.u.trim(), row.v.trim());
        if u.is_empty() || v.is_empty() {
            return Err(err("empty requirement text".into()));
        }
        examples.push(LabeledExample::new(SentencePair::new(u, v), row.label));
    }
    Ok(Dataset::new(examples, labels, DatasetKind::Train)?)
}
