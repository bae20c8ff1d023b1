//! Stack Overflow query exports (CSV, one header row).
//!
//! The duplicate export has columns `id, title, creationdate, tags, body,
//! closeddate, CloseReason, dupid, dupcreationdate, duptitle, dupbody`; the
//! neutral export has `id, title, creationdate, body`. Header matching is
//! case-insensitive. `tags` and `answercount` are checked only when present.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use pairshot_core::prompting::Task;
use pairshot_core::{Dataset, DatasetKind, LabeledExample, SentencePair};

use crate::bugzilla::IngestionWindow;
use crate::error::{IngestError, Result};
use crate::pairs::sample_neutral_pairs;

pub const DUPLICATE_COLUMNS: [&str; 11] = [
    "id",
    "title",
    "creationdate",
    "tags",
    "body",
    "closeddate",
    "closereason",
    "dupid",
    "dupcreationdate",
    "duptitle",
    "dupbody",
];

pub const NEUTRAL_COLUMNS: [&str; 4] = ["id", "title", "creationdate", "body"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: u64,
    pub title: String,
    pub creation_date: NaiveDateTime,
    pub tags: Vec<String>,
    pub related_duplicate_id: Option<u64>,
    pub answer_count: Option<u64>,
}

/// A duplicate-export row: the closed question and the question it
/// duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateRow {
    pub question: QuestionRecord,
    pub duplicate_id: u64,
    pub duplicate_title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoOptions {
    pub window: IngestionWindow,
    pub required_tag: String,
    /// Neutral pairs per duplicate pair.
    pub neutral_ratio: f64,
    pub seed: u64,
}

impl Default for SoOptions {
    fn default() -> Self {
        Self {
            window: IngestionWindow::stackoverflow(),
            required_tag: "python".into(),
            neutral_ratio: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SoReport {
    pub duplicate_rows: usize,
    pub neutral_rows: usize,
    pub rejected_tag: usize,
    pub rejected_window: usize,
    pub rejected_unanswered: usize,
    pub rejected_empty: usize,
    pub duplicates: usize,
    pub neutrals: usize,
}

/// Accepts `2019-03-05 12:34:56`, optional fractional seconds, RFC 3339, or
/// a bare date.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for f in [
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
        "%m/%d/%Y %H:%M:%S",
        "%m/%d/%Y %I:%M:%S %p",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Some(t);
        }
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// `<python><email>`, `python|email` or `python email`.
pub fn parse_tags(s: &str) -> Vec<String> {
    s.split(|c: char| c == '<' || c == '>' || c == '|' || c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

struct Table {
    path: String,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> Result<Self> {
        let shown = path.display().to_string();
        let bytes = std::fs::read(path)?;
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Ok(Self {
                path: shown,
                columns: HashMap::new(),
                rows: Vec::new(),
            });
        }
        let csv_err = |e: csv::Error| {
            let row = e.position().map(|p| p.line()).unwrap_or(0);
            IngestError::Csv {
                path: shown.clone(),
                row,
                detail: e.to_string(),
            }
        };
        let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(bytes.as_slice());
        let columns: HashMap<String, usize> = rdr
            .headers()
            .map_err(csv_err)?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_lowercase(), i))
            .collect();
        if let Some(missing) = required.iter().find(|c| !columns.contains_key(**c)) {
            return Err(IngestError::Csv {
                path: shown,
                row: 1,
                detail: format!("missing column `{missing}`"),
            });
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, rec));
        }
        Ok(Self {
            path: shown,
            columns,
            rows,
        })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, col: &str) -> Option<&'r str> {
        self.columns.get(col).and_then(|&i| rec.get(i))
    }

    fn err(&self, row: u64, detail: impl Into<String>) -> IngestError {
        IngestError::Csv {
            path: self.path.clone(),
            row,
            detail: detail.into(),
        }
    }

    fn id(&self, row: u64, rec: &csv::StringRecord, col: &str) -> Result<u64> {
        let raw = self.get(rec, col).unwrap_or("");
        raw.trim()
            .parse()
            .map_err(|_| self.err(row, format!("column `{col}`: `{raw}` is not an id")))
    }

    fn date(&self, row: u64, rec: &csv::StringRecord, col: &str) -> Result<NaiveDateTime> {
        let raw = self.get(rec, col).unwrap_or("");
        parse_timestamp(raw).ok_or_else(|| self.err(row, format!("column `{col}`: bad timestamp `{raw}`")))
    }

    fn question(&self, row: u64, rec: &csv::StringRecord) -> Result<QuestionRecord> {
        let answer_count = match self.get(rec, "answercount").map(str::trim) {
            None | Some("") => None,
            Some(v) => Some(
                v.parse()
                    .map_err(|_| self.err(row, format!("column `answercount`: `{v}`")))?,
            ),
        };
        Ok(QuestionRecord {
            id: self.id(row, rec, "id")?,
            title: self.get(rec, "title").unwrap_or("").trim().to_string(),
            creation_date: self.date(row, rec, "creationdate")?,
            tags: self.get(rec, "tags").map(parse_tags).unwrap_or_default(),
            related_duplicate_id: match self.get(rec, "dupid") {
                Some(_) => Some(self.id(row, rec, "dupid")?),
                None => None,
            },
            answer_count,
        })
    }
}

pub fn read_duplicate_export(path: &Path) -> Result<Vec<DuplicateRow>> {
    let t = Table::read(path, &DUPLICATE_COLUMNS)?;
    t.rows
        .iter()
        .map(|(row, rec)| {
            let question = t.question(*row, rec)?;
            Ok(DuplicateRow {
                duplicate_id: question.related_duplicate_id.unwrap_or_default(),
                duplicate_title: t.get(rec, "duptitle").unwrap_or("").trim().to_string(),
                question,
            })
        })
        .collect()
}

pub fn read_neutral_export(path: &Path) -> Result<Vec<QuestionRecord>> {
    let t = Table::read(path, &NEUTRAL_COLUMNS)?;
    t.rows.iter().map(|(row, rec)| t.question(*row, rec)).collect()
}

/// Shared acceptance checks; bumps the matching rejection counter.
fn accept(q: &QuestionRecord, has_tags: bool, opts: &SoOptions, report: &mut SoReport) -> bool {
    if has_tags && !q.tags.contains(&opts.required_tag) {
        report.rejected_tag += 1;
        return false;
    }
    if !opts.window.contains(q.creation_date.date()) {
        report.rejected_window += 1;
        return false;
    }
    if q.answer_count.is_some_and(|n| n == 0) {
        report.rejected_unanswered += 1;
        return false;
    }
    if q.title.is_empty() {
        report.rejected_empty += 1;
        return false;
    }
    true
}

/// Duplicate pairs `(title, duptitle)` plus neutral pairs sampled among the
/// accepted neutral-export questions, excluding any duplicate-linked pair.
pub fn ingest_stackoverflow_exports(
    duplicates: &Path,
    neutral: &Path,
    opts: &SoOptions,
) -> Result<(Dataset, SoReport)> {
    let task = Task::SoDuplicate;
    let dup_rows = read_duplicate_export(duplicates)?;
    let neutral_rows = read_neutral_export(neutral)?;
    let mut report = SoReport {
        duplicate_rows: dup_rows.len(),
        neutral_rows: neutral_rows.len(),
        ..Default::default()
    };

    let mut examples = Vec::new();
    let mut links = HashSet::new();
    for d in &dup_rows {
        if !accept(&d.question, true, opts, &mut report) {
            continue;
        }
        if d.duplicate_title.is_empty() {
            report.rejected_empty += 1;
            continue;
        }
        links.insert((d.question.id.min(d.duplicate_id), d.question.id.max(d.duplicate_id)));
        examples.push(LabeledExample::new(
            SentencePair::new(d.question.title.clone(), d.duplicate_title.clone()),
            "Duplicate",
        ));
    }
    report.duplicates = examples.len();

    let open: Vec<(u64, String)> = neutral_rows
        .iter()
        .filter(|q| accept(q, !q.tags.is_empty(), opts, &mut report))
        .map(|q| (q.id, q.title.clone()))
        .collect();
    let n = (opts.neutral_ratio * report.duplicates as f64).round() as usize;
    examples.extend(sample_neutral_pairs(&open, n, opts.seed, &links, task.neutral_label())?);
    report.neutrals = n;

    Ok((Dataset::new(examples, task.label_set(), DatasetKind::Train)?, report))
}
