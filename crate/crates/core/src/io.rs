//! Dataset files: one JSON object per line (`u`, `v`, optional `label`) plus
//! a sidecar manifest carrying the label set, kind and source.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetKind, LabelSet, LabeledExample, SoftLabeledExample};
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "pairshot-dataset";
pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub task_id: String,
    pub labels: Vec<String>,
    pub kind: DatasetKind,
    pub n: usize,
    /// Free-form provenance, e.g. `bugzilla` or `synthetic`.
    #[serde(default)]
    pub source: String,
}

/// `data.jsonl` -> `data.jsonl.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_lines<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Dataset(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_dataset(d: &Dataset, path: &Path, source: &str) -> Result<()> {
    write_lines(path, d.examples())?;
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_FORMAT_VERSION,
        task_id: d.label_set().task_id().into(),
        labels: d.label_set().labels().to_vec(),
        kind: d.kind(),
        n: d.len(),
        source: source.into(),
    };
    std::fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let mp = manifest_path(path);
    let m: DatasetManifest = serde_json::from_str(
        &std::fs::read_to_string(&mp).map_err(|e| Error::Dataset(format!("{}: {e}", mp.display())))?,
    )?;
    if m.format != DATASET_FORMAT || m.version != DATASET_FORMAT_VERSION {
        return Err(Error::Format(format!("{}: {} v{}", mp.display(), m.format, m.version)));
    }
    Ok(m)
}

/// Read a dataset using its manifest for the label set and kind.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let m = read_manifest(path)?;
    let ls = LabelSet::new(m.task_id, m.labels)?;
    read_dataset_as(path, ls, m.kind)
}

/// Read the example lines of `path` with an explicit label set and kind.
pub fn read_dataset_as(path: &Path, label_set: LabelSet, kind: DatasetKind) -> Result<Dataset> {
    let examples: Vec<LabeledExample> = read_lines(path)?;
    Dataset::new(examples, label_set, kind)
}

pub fn write_soft_labels(rows: &[SoftLabeledExample], path: &Path) -> Result<()> {
    write_lines(path, rows)
}

pub fn read_soft_labels(path: &Path) -> Result<Vec<SoftLabeledExample>> {
    let rows: Vec<SoftLabeledExample> = read_lines(path)?;
    for r in &rows {
        crate::data::check_distribution(&r.distribution)?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SentencePair;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ls = LabelSet::new("t", ["A", "B"]).unwrap();
        let d = Dataset::new(
            vec![
                LabeledExample::new(SentencePair::new("a b", "c"), "B"),
                LabeledExample::new(SentencePair::new("", "d"), "A"),
            ],
            ls,
            DatasetKind::Test,
        )
        .unwrap();
        let p = dir.path().join("sub/test.jsonl");
        write_dataset(&d, &p, "unit").unwrap();
        assert_eq!(read_dataset(&p).unwrap(), d);
        assert_eq!(read_manifest(&p).unwrap().source, "unit");
    }

    #[test]
    fn bad_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        std::fs::write(&p, "{\"u\":\"a\",\"v\":\"b\",\"label\":\"A\"}\nnot json\n").unwrap();
        let ls = LabelSet::new("t", ["A", "B"]).unwrap();
        let err = read_dataset_as(&p, ls, DatasetKind::Train).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }
}
