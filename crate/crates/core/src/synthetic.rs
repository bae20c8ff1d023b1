//! Synthetic pair datasets for tests, demos and the bundled sweep.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::data::{Dataset, DatasetKind, LabelSet, LabeledExample, SentencePair};
use crate::error::Result;
use crate::rng;

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "pu", "ra", "si", "to", "vu", "ze", "bo", "da", "fi", "gu", "he", "jo",
];

fn pseudo_word(r: &mut rng::Rng, syllables: usize) -> String {
    (0..syllables)
        .map(|_| *SYLLABLES.choose(r).expect("non-empty"))
        .collect()
}

fn distinct_words(r: &mut rng::Rng, n: usize, syllables: usize, taken: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(r, syllables);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// A pair task where each label owns a small keyword vocabulary. Every
/// sentence mixes a few keywords of its pair's label into filler words
/// shared by all labels, so bag-of-n-gram models can separate the classes.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    label_set: LabelSet,
    keywords: Vec<Vec<String>>,
    fillers: Vec<String>,
    pub keywords_per_sentence: usize,
    pub min_words: usize,
    pub max_words: usize,
}

impl SyntheticTask {
    /// The vocabulary depends only on `vocab_seed`; samples drawn with
    /// different seeds share it.
    pub fn new(label_set: LabelSet, vocab_seed: u64) -> Self {
        let mut r = rng::seeded(rng::derive_seed(vocab_seed, 0x5A17));
        let mut taken = HashSet::new();
        let keywords = (0..label_set.len())
            .map(|_| distinct_words(&mut r, 8, 3, &mut taken))
            .collect();
        let fillers = distinct_words(&mut r, 200, 2, &mut taken);
        Self {
            label_set,
            keywords,
            fillers,
            keywords_per_sentence: 2,
            min_words: 6,
            max_words: 14,
        }
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn keywords(&self, label: usize) -> &[String] {
        &self.keywords[label]
    }

    fn sentence(&self, label: usize, r: &mut rng::Rng) -> String {
        let n = r.random_range(self.min_words..=self.max_words);
        let mut words: Vec<&str> = (0..n)
            .map(|_| self.fillers.choose(r).expect("fillers").as_str())
            .collect();
        for _ in 0..self.keywords_per_sentence.min(n) {
            let at = r.random_range(0..words.len());
            words[at] = self.keywords[label].choose(r).expect("keywords");
        }
        words.join(" ")
    }

    /// `n` examples with labels cycling through the label set, then shuffled.
    pub fn sample(&self, n: usize, seed: u64, kind: DatasetKind) -> Result<Dataset> {
        let mut r = rng::seeded(seed);
        let k = self.label_set.len();
        let mut order: Vec<usize> = (0..n).map(|i| i % k).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut r);
        let examples = order
            .into_iter()
            .map(|y| {
                let pair = SentencePair::new(self.sentence(y, &mut r), self.sentence(y, &mut r));
                if kind == DatasetKind::Unlabeled {
                    LabeledExample::unlabeled(pair)
                } else {
                    LabeledExample::new(pair, self.label_set.name(y))
                }
            })
            .collect();
        Dataset::new(examples, self.label_set.clone(), kind)
    }
}

/// Word counts of the requirement-pair fixture. Summary: min 12, mean 42,
/// median 42, max 72, sample std about 17.4.
pub const SRS_FIXTURE_WORD_COUNTS: [usize; 7] = [12, 40, 41, 42, 43, 44, 72];

/// Requirement-style pairs with the word counts above, labeled with the
/// neutral / duplicate / conflict label set.
pub fn srs_fixture() -> Result<Dataset> {
    let ls = LabelSet::new("srs_conflict", ["Neutral", "Duplicate", "Conflict"])?;
    let labels = [
        "Conflict",
        "Neutral",
        "Duplicate",
        "Neutral",
        "Conflict",
        "Duplicate",
        "Neutral",
    ];
    let filler = [
        "the",
        "operator",
        "shall",
        "be",
        "able",
        "to",
        "reset",
        "the",
        "flight",
        "controller",
        "from",
        "ground",
        "station",
        "within",
        "five",
        "seconds",
        "of",
        "a",
        "fault",
        "report",
    ];
    let examples = SRS_FIXTURE_WORD_COUNTS
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&n, label))| {
            let words: Vec<String> = (0..n)
                .map(|j| {
                    format!(
                        "{}{}",
                        filler[j % filler.len()],
                        if j == 0 { i.to_string() } else { String::new() }
                    )
                })
                .collect();
            let cut = n / 2;
            LabeledExample::new(SentencePair::new(words[..cut].join(" "), words[cut..].join(" ")), label)
        })
        .collect();
    Dataset::new(examples, ls, DatasetKind::Train)
}

/// Random pairs over `n_sentences` sentences. Sentences are reused across
/// pairs, so the sentence graph has components of varied sizes. Labels are
/// drawn uniformly. No pair occurs twice.
pub fn random_pair_universe(label_set: &LabelSet, n_sentences: usize, n_pairs: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng::seeded(seed);
    let max_pairs = n_sentences * n_sentences.saturating_sub(1) / 2;
    let n_pairs = n_pairs.min(max_pairs);
    let mut seen = HashSet::new();
    let mut examples = Vec::with_capacity(n_pairs);
    while examples.len() < n_pairs {
        let a = r.random_range(0..n_sentences);
        let b = r.random_range(0..n_sentences);
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        let label = label_set.name(r.random_range(0..label_set.len()));
        examples.push(LabeledExample::new(
            SentencePair::new(format!("sentence number {a}"), format!("sentence number {b}")),
            label,
        ));
    }
    Dataset::new(examples, label_set.clone(), DatasetKind::Train)
}
