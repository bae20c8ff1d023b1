//! Model capability contracts.
//!
//! Three roles are needed by the engines: a masked-token scorer (PET
//! ensemble members), a sequence classifier (fine-tuning and the distilled
//! PET model) and a sentence encoder (SetFit). A [`Backend`] hands out fresh
//! instances of each. The [`toy`] backend is a hashed n-gram linear model
//! that trains in milliseconds; [`external`] forwards every call to a model
//! server over a JSON-lines protocol.

pub mod external;
pub mod features;
pub mod toy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::ClozeInput;
use crate::rng;

/// Raw (unnormalized) score per candidate token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScores(pub BTreeMap<String, f64>);

impl TokenScores {
    /// Scores in the order of `tokens`.
    pub fn ordered(&self, tokens: &[String]) -> Result<Vec<f64>> {
        tokens
            .iter()
            .map(|t| self.0.get(t).copied().ok_or_else(|| Error::Vocabulary(t.clone())))
            .collect()
    }
}

pub type EmbeddingVector = Vec<f64>;

/// Optimizer schedule shared by every training verb. `steps` counts
/// optimizer updates (mini-batches).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl TrainSchedule {
    /// Steps for `epochs` passes over `n` items: ceil(n / batch) * epochs.
    pub fn epochs_to_steps(n: usize, batch: usize, epochs: usize) -> usize {
        n.div_ceil(batch.max(1)) * epochs
    }
}

/// Similarity-labelled text pair used for encoder fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPairTarget {
    pub text_a: String,
    pub text_b: String,
    pub similarity: f64,
}

pub trait MaskedScorer: Send + Sync {
    /// One finite score per candidate, looking only at candidate tokens.
    fn masked_score(&self, cloze: &ClozeInput, candidates: &[String]) -> Result<TokenScores>;

    /// Cross-entropy training over the softmax restricted to `candidates`.
    /// Each target must be one of the candidates.
    fn train_mlm(
        &mut self,
        data: &[(ClozeInput, String)],
        candidates: &[String],
        schedule: &TrainSchedule,
    ) -> Result<()>;
}

pub trait SequenceClassifier: Send + Sync {
    fn num_labels(&self) -> usize;

    /// Soft-target cross-entropy. Every target has `num_labels` entries and
    /// sums to one.
    fn classify_train(&mut self, examples: &[(String, Vec<f64>)], schedule: &TrainSchedule) -> Result<()>;

    /// One score (logit) per label.
    fn classify_predict(&self, text: &str) -> Result<Vec<f64>>;

    fn save_state(&self) -> Result<serde_json::Value>;
}

pub trait SentenceEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Result<EmbeddingVector>;

    /// Minimize (cos(encode(a), encode(b)) - similarity)^2.
    fn encoder_fit(&mut self, pairs: &[TextPairTarget], schedule: &TrainSchedule) -> Result<()>;

    fn save_state(&self) -> Result<serde_json::Value>;
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;

    /// String rendered for the segment separator.
    fn separator(&self) -> &str;

    /// Token count used for truncation.
    fn count_tokens(&self, text: &str) -> usize;

    /// Default learning rate for this backend.
    fn default_lr(&self) -> f64;

    fn vocabulary_contains(&self, token: &str) -> bool;

    fn masked_scorer(&self, seed: u64) -> Result<Box<dyn MaskedScorer>>;

    fn classifier(&self, num_labels: usize, seed: u64) -> Result<Box<dyn SequenceClassifier>>;

    fn encoder(&self, seed: u64) -> Result<Box<dyn SentenceEncoder>>;
}

/// Softmax computed after subtracting the max, so adding a constant to every
/// score leaves the result unchanged.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Deterministic mini-batch order. Item positions are laid out epoch after
/// epoch; each epoch is a fresh permutation derived from the seed, so the
/// batch for step `k` depends only on `(n, batch, seed, k)`. A model that
/// remembers how many steps it has taken can resume mid-schedule.
#[derive(Debug, Clone)]
pub struct BatchSchedule {
    n: usize,
    batch: usize,
    seed: u64,
    perms: Vec<Vec<usize>>,
}

impl BatchSchedule {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        Self {
            n,
            batch: batch.max(1),
            seed,
            perms: Vec::new(),
        }
    }

    fn perm(&mut self, epoch: usize) -> &[usize] {
        use rand::seq::SliceRandom;
        while self.perms.len() <= epoch {
            let e = self.perms.len() as u64;
            let mut p: Vec<usize> = (0..self.n).collect();
            p.shuffle(&mut rng::seeded(rng::derive_seed(self.seed, e)));
            self.perms.push(p);
        }
        &self.perms[epoch]
    }

    pub fn batch_at(&mut self, step: usize) -> Vec<usize> {
        let (n, b) = (self.n, self.batch);
        (step * b..(step + 1) * b)
            .map(|pos| self.perm(pos / n)[pos % n])
            .collect()
    }
}
