//! Sentence pairs, label sets and datasets.

use std::collections::HashMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentencePair {
    pub u: String,
    pub v: String,
}

impl SentencePair {
    pub fn new(u: impl Into<String>, v: impl Into<String>) -> Self {
        Self {
            u: u.into(),
            v: v.into(),
        }
    }
}

/// Ordered, duplicate-free list of label names. A label's position is its
/// canonical id everywhere in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelSetRepr", into = "LabelSetRepr")]
pub struct LabelSet {
    task_id: String,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct LabelSetRepr {
    task_id: String,
    labels: Vec<String>,
}

impl TryFrom<LabelSetRepr> for LabelSet {
    type Error = Error;
    fn try_from(r: LabelSetRepr) -> Result<Self> {
        LabelSet::new(r.task_id, r.labels)
    }
}

impl From<LabelSet> for LabelSetRepr {
    fn from(l: LabelSet) -> Self {
        LabelSetRepr {
            task_id: l.task_id,
            labels: l.labels,
        }
    }
}

impl LabelSet {
    pub fn new<S: Into<String>>(task_id: impl Into<String>, labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let task_id = task_id.into();
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::LabelSet(format!(
                "{task_id}: need at least 2 labels, got {}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::LabelSet(format!("{task_id}: duplicate label `{l}`")));
            }
        }
        Ok(Self { task_id, labels })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel {
                label: label.to_string(),
                task_id: self.task_id.clone(),
            })
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn same_labels(&self, other: &LabelSet) -> bool {
        self.labels == other.labels
    }
}

/// A pair with an optional gold label. Examples in unlabeled datasets carry
/// `label: None`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    #[serde(flatten)]
    pub pair: SentencePair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl LabeledExample {
    pub fn new(pair: SentencePair, label: impl Into<String>) -> Self {
        Self {
            pair,
            label: Some(label.into()),
        }
    }

    pub fn unlabeled(pair: SentencePair) -> Self {
        Self { pair, label: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Train,
    Test,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    label_set: LabelSet,
    kind: DatasetKind,
}

impl Dataset {
    /// Labeled kinds require every example to carry a label from `label_set`;
    /// the unlabeled kind requires every label to be absent.
    pub fn new(examples: Vec<LabeledExample>, label_set: LabelSet, kind: DatasetKind) -> Result<Self> {
        for (i, ex) in examples.iter().enumerate() {
            match (&ex.label, kind) {
                (Some(l), DatasetKind::Train | DatasetKind::Test) => {
                    label_set.index_of(l)?;
                }
                (None, DatasetKind::Unlabeled) => {}
                (None, _) => {
                    return Err(Error::Dataset(format!("example {i} has no label")));
                }
                (Some(l), DatasetKind::Unlabeled) => {
                    return Err(Error::Dataset(format!(
                        "example {i} in unlabeled dataset carries label `{l}`"
                    )));
                }
            }
        }
        Ok(Self {
            examples,
            label_set,
            kind,
        })
    }

    pub fn empty(label_set: LabelSet, kind: DatasetKind) -> Self {
        Self {
            examples: Vec::new(),
            label_set,
            kind,
        }
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &SentencePair> {
        self.examples.iter().map(|e| &e.pair)
    }

    /// Gold label ids in example order. Fails on unlabeled datasets.
    pub fn label_ids(&self) -> Result<Vec<usize>> {
        self.examples
            .iter()
            .enumerate()
            .map(|(i, e)| match &e.label {
                Some(l) => self.label_set.index_of(l),
                None => Err(Error::Dataset(format!("example {i} has no label"))),
            })
            .collect()
    }

    /// Same examples, different kind. Labels are dropped when converting to
    /// `Unlabeled`.
    pub fn with_kind(&self, kind: DatasetKind) -> Result<Self> {
        let examples = if kind == DatasetKind::Unlabeled {
            self.pairs().cloned().map(LabeledExample::unlabeled).collect()
        } else {
            self.examples.clone()
        };
        Dataset::new(examples, self.label_set.clone(), kind)
    }

    pub(crate) fn subset(&self, indices: &[usize], kind: DatasetKind) -> Self {
        Self {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            label_set: self.label_set.clone(),
            kind,
        }
    }
}

/// A pair with a probability distribution over labels, in label-set order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabeledExample {
    #[serde(flatten)]
    pub pair: SentencePair,
    pub distribution: Vec<f64>,
}

pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

impl SoftLabeledExample {
    pub fn new(pair: SentencePair, distribution: Vec<f64>) -> Result<Self> {
        check_distribution(&distribution)?;
        Ok(Self { pair, distribution })
    }
}

pub fn check_distribution(p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Distribution(format!("entries must be finite and >= 0: {p:?}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::Distribution(format!("sums to {sum}")));
    }
    Ok(())
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Trim and collapse internal whitespace runs to a single space. Sentence
/// identity for leakage checks is equality of this form.
pub fn normalize_sentence(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Uniform sample of `n` distinct examples without replacement. The result
/// keeps the pool's order, so `n == pool.len()` returns the pool unchanged.
pub fn sample_training_set(pool: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if pool.kind != DatasetKind::Train {
        return Err(Error::Dataset(format!(
            "sampling requires a train pool, got {:?}",
            pool.kind
        )));
    }
    if n > pool.len() {
        return Err(Error::Size {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = rng::seeded(seed);
    let mut picked = index::sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    Ok(pool.subset(&picked, DatasetKind::Train))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WordStats {
    pub min: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub max: usize,
}

impl WordStats {
    /// Summary of word counts. `std` is the sample standard deviation (0 for
    /// fewer than two values).
    pub fn from_counts(counts: &[usize]) -> Self {
        if counts.is_empty() {
            return Self::default();
        }
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let mean = sorted.iter().sum::<usize>() as f64 / n as f64;
        let std = if n > 1 {
            let ss: f64 = sorted.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
        };
        Self {
            min: sorted[0],
            mean,
            std,
            median,
            max: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    /// Examples per label, in label-set order.
    pub label_counts: Vec<usize>,
    /// Labels of the label set with no example.
    pub missing_labels: Vec<String>,
    /// Extra occurrences of an already-seen (u, v) pair.
    pub duplicate_pairs: usize,
    /// Number of empty (after trimming) sentences across both slots.
    pub empty_sentences: usize,
    /// Word counts over the concatenation of u and v.
    pub word_counts: WordStats,
}

/// Words of `u` and `v` concatenated, split on whitespace.
pub fn pair_word_count(pair: &SentencePair) -> usize {
    pair.u.split_whitespace().count() + pair.v.split_whitespace().count()
}

pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    if d.is_empty() {
        return ValidationReport::default();
    }
    let mut label_counts = vec![0; d.label_set.len()];
    for ex in &d.examples {
        if let Some(i) = ex.label.as_deref().and_then(|l| d.label_set.index_of(l).ok()) {
            label_counts[i] += 1;
        }
    }
    let missing_labels = if d.kind == DatasetKind::Unlabeled {
        Vec::new()
    } else {
        label_counts
            .iter()
            .zip(d.label_set.labels())
            .filter(|(c, _)| **c == 0)
            .map(|(_, l)| l.clone())
            .collect()
    };
    let mut seen: HashMap<&SentencePair, usize> = HashMap::new();
    for p in d.pairs() {
        *seen.entry(p).or_default() += 1;
    }
    let duplicate_pairs = seen.values().map(|c| c - 1).sum();
    let empty_sentences = d
        .pairs()
        .map(|p| usize::from(p.u.trim().is_empty()) + usize::from(p.v.trim().is_empty()))
        .sum();
    let counts: Vec<usize> = d.pairs().map(pair_word_count).collect();
    ValidationReport {
        n: d.len(),
        label_counts,
        missing_labels,
        duplicate_pairs,
        empty_sentences,
        word_counts: WordStats::from_counts(&counts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> LabelSet {
        LabelSet::new("t", ["Neutral", "Duplicate"]).unwrap()
    }

    fn pool(n: usize) -> Dataset {
        let ex = (0..n)
            .map(|i| {
                LabeledExample::new(
                    SentencePair::new(format!("u{i}"), format!("v{i}")),
                    if i % 2 == 0 { "Neutral" } else { "Duplicate" },
                )
            })
            .collect();
        Dataset::new(ex, labels(), DatasetKind::Train).unwrap()
    }

    #[test]
    fn label_set_rejects_duplicates_and_singletons() {
        assert!(LabelSet::new("t", ["A"]).is_err());
        assert!(LabelSet::new("t", ["A", "B", "A"]).is_err());
        let ls = LabelSet::new("t", ["A", "B"]).unwrap();
        assert_eq!(ls.index_of("B").unwrap(), 1);
        assert!(ls.index_of("b").is_err());
    }

    #[test]
    fn dataset_kind_label_rules() {
        let p = SentencePair::new("a", "b");
        assert!(Dataset::new(vec![LabeledExample::unlabeled(p.clone())], labels(), DatasetKind::Train).is_err());
        assert!(Dataset::new(
            vec![LabeledExample::new(p.clone(), "Neutral")],
            labels(),
            DatasetKind::Unlabeled
        )
        .is_err());
        assert!(Dataset::new(vec![LabeledExample::new(p, "Other")], labels(), DatasetKind::Test).is_err());
    }

    #[test]
    fn sample_bugzilla_sized_pool() {
        let d = pool(4400);
        let s = sample_training_set(&d, 50, 1).unwrap();
        assert_eq!(s.len(), 50);
        let distinct: std::collections::HashSet<_> = s.examples().iter().collect();
        assert_eq!(distinct.len(), 50);
    }

    #[test]
    fn sample_full_pool_is_identity() {
        let d = pool(37);
        assert_eq!(sample_training_set(&d, 37, 9).unwrap(), d);
    }

    #[test]
    fn sample_too_many_is_size_error() {
        assert!(matches!(
            sample_training_set(&pool(3), 4, 0),
            Err(Error::Size {
                requested: 4,
                available: 3
            })
        ));
    }

    #[test]
    fn sample_is_deterministic_and_seed_sensitive() {
        let d = pool(400);
        let a = sample_training_set(&d, 25, 1).unwrap();
        let b = sample_training_set(&d, 25, 1).unwrap();
        let c = sample_training_set(&d, 25, 2).unwrap();
        assert_eq!(a, b);
        // Overlap of two 25-of-400 draws, expected 25*25/400 ~ 1.6.
        let overlap = a.examples().iter().filter(|e| c.examples().contains(e)).count();
        assert!(overlap < 25);
    }

    #[test]
    fn soft_label_must_sum_to_one() {
        let p = SentencePair::new("a", "b");
        assert!(SoftLabeledExample::new(p.clone(), vec![0.3, 0.7]).is_ok());
        assert!(SoftLabeledExample::new(p.clone(), vec![0.3, 0.6]).is_err());
        assert!(SoftLabeledExample::new(p, vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn normalize_collapses_whitespace() {
        assert_eq!(normalize_sentence("  a \t b\n c "), "a b c");
    }

    #[test]
    fn validate_empty_is_zero() {
        let d = Dataset::empty(labels(), DatasetKind::Train);
        assert_eq!(validate_dataset(&d), ValidationReport::default());
    }

    #[test]
    fn validate_counts_one_duplicate() {
        let mut ex = pool(4).examples().to_vec();
        ex.push(ex[1].clone());
        ex.push(LabeledExample::new(SentencePair::new("  ", "x y"), "Neutral"));
        let d = Dataset::new(ex, labels(), DatasetKind::Train).unwrap();
        let r = validate_dataset(&d);
        assert_eq!(r.duplicate_pairs, 1);
        assert_eq!(r.empty_sentences, 1);
        assert_eq!(r.label_counts, vec![3, 3]);
        assert!(r.missing_labels.is_empty());
    }

    #[test]
    fn word_stats_match_hand_values() {
        let w = WordStats::from_counts(&[12, 42, 72]);
        assert_eq!(w.min, 12);
        assert_eq!(w.max, 72);
        assert_eq!(w.median, 42.0);
        assert!((w.mean - 42.0).abs() < 1e-12);
        assert!((w.std - 30.0).abs() < 1e-12);
        assert_eq!(WordStats::from_counts(&[1, 2, 3, 10]).median, 2.5);
    }
}
