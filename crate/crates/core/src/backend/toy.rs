//! Desk-scale reference backend.
//!
//! Every model here is linear over hashed word/char n-gram features:
//!
//! * [`ToyMaskedScorer`]: one weight row per vocabulary token; the score of a
//!   token at the mask is `w_token . x + b_token` where `x` is the L2-normalized
//!   feature vector of the whole cloze text.
//! * [`ToyClassifier`]: the same with one row per label.
//! * [`ToyEncoder`]: an embedding row per hash bucket, mean-pooled with the
//!   n-gram weights.
//!
//! All models start from a deterministic state (zeros for the linear models,
//! a seeded Gaussian table for the encoder) and train with plain mini-batch
//! SGD following [`BatchSchedule`].

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::{FeatureConfig, SparseFeatures};
use super::{
    softmax, Backend, BatchSchedule, EmbeddingVector, MaskedScorer, SentenceEncoder, SequenceClassifier,
    TextPairTarget, TokenScores, TrainSchedule,
};
use crate::data::check_distribution;
use crate::error::{Error, Result};
use crate::prompting::{builtin_pvps_for, Task};
use crate::rng;

pub const TOY_FORMAT: &str = "pairshot-toy";
pub const TOY_FORMAT_VERSION: u32 = 1;
pub const TOY_MASK: &str = "[MASK]";
pub const TOY_SEPARATOR: &str = "[SEP]";
/// Default toy learning rate. Far above the 1e-5 used for large pre-trained
/// networks; the linear toy models need it to converge in a few hundred steps.
pub const TOY_DEFAULT_LR: f64 = 0.1;

/// Cosine denominators use sqrt(|a|^2 + eps), which keeps the loss smooth at
/// zero-norm embeddings.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub vocabulary: Vec<String>,
    pub mask_token: String,
    pub separator: String,
    pub embedding_dim: usize,
    pub features: FeatureConfig,
    /// Scale of the initial encoder table entries.
    pub init_scale: f64,
    pub lr: f64,
    /// Mean pooling spreads each gradient over many table rows, so encoder
    /// steps use `lr * encoder_lr_scale`.
    #[serde(default = "default_encoder_lr_scale")]
    pub encoder_lr_scale: f64,
}

fn default_encoder_lr_scale() -> f64 {
    10.0
}

impl Default for ToyConfig {
    fn default() -> Self {
        let mut vocabulary = vec![TOY_MASK.to_string(), TOY_SEPARATOR.to_string()];
        for task in Task::ALL {
            for pvp in builtin_pvps_for(task) {
                for label in task.label_names() {
                    let tok = pvp.verbalizer.token(label).expect("total verbalizer").to_string();
                    if !vocabulary.contains(&tok) {
                        vocabulary.push(tok);
                    }
                }
            }
        }
        Self {
            vocabulary,
            mask_token: TOY_MASK.into(),
            separator: TOY_SEPARATOR.into(),
            embedding_dim: 32,
            features: FeatureConfig::default(),
            init_scale: 1.0,
            lr: TOY_DEFAULT_LR,
            encoder_lr_scale: default_encoder_lr_scale(),
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features.buckets == 0 {
            return Err(Error::Backend("bucket count must be >= 1".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Backend("embedding dimension must be >= 1".into()));
        }
        for t in [&self.mask_token, &self.separator] {
            if !self.vocabulary.contains(t) {
                return Err(Error::Vocabulary(t.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ToyBackend {
    config: Arc<ToyConfig>,
}

impl ToyBackend {
    pub fn new(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: Arc::new(config),
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn toy_masked_scorer(&self) -> ToyMaskedScorer {
        ToyMaskedScorer::new(self.config.clone())
    }

    pub fn toy_classifier(&self, num_labels: usize) -> ToyClassifier {
        ToyClassifier::new(self.config.clone(), num_labels)
    }

    pub fn toy_encoder(&self, seed: u64) -> ToyEncoder {
        ToyEncoder::new(self.config.clone(), seed)
    }
}

impl Backend for ToyBackend {
    fn name(&self) -> String {
        "toy".into()
    }

    fn separator(&self) -> &str {
        &self.config.separator
    }

    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn default_lr(&self) -> f64 {
        self.config.lr
    }

    fn vocabulary_contains(&self, token: &str) -> bool {
        self.config.vocabulary.iter().any(|t| t == token)
    }

    // Linear toy models start at zero, so the seed only drives batch order
    // (through the schedule) for the scorer and classifier.
    fn masked_scorer(&self, _seed: u64) -> Result<Box<dyn MaskedScorer>> {
        Ok(Box::new(self.toy_masked_scorer()))
    }

    fn classifier(&self, num_labels: usize, _seed: u64) -> Result<Box<dyn SequenceClassifier>> {
        Ok(Box::new(self.toy_classifier(num_labels)))
    }

    fn encoder(&self, seed: u64) -> Result<Box<dyn SentenceEncoder>> {
        Ok(Box::new(self.toy_encoder(seed)))
    }
}

/// Called with every vocabulary token whose weights are read while scoring.
pub type ScoreProbe = Arc<dyn Fn(&str) + Send + Sync>;

/// Dense rows with biases, one per output. Rows are allocated on first
/// update; an absent row is all zeros.
#[derive(Debug, Clone, Default, PartialEq)]
struct LinearRows {
    rows: BTreeMap<usize, Vec<f64>>,
    bias: BTreeMap<usize, f64>,
}

#[derive(Serialize, Deserialize)]
struct SparseRow {
    output: usize,
    bias: f64,
    weights: Vec<(usize, f64)>,
}

impl LinearRows {
    fn score(&self, output: usize, x: &SparseFeatures) -> f64 {
        let b = self.bias.get(&output).copied().unwrap_or(0.0);
        match self.rows.get(&output) {
            Some(row) => x.dot(row) + b,
            None => b,
        }
    }

    fn update(&mut self, output: usize, x: &SparseFeatures, step: f64, dim: usize) {
        if step == 0.0 {
            return;
        }
        let row = self.rows.entry(output).or_insert_with(|| vec![0.0; dim]);
        for &(i, w) in &x.entries {
            row[i] -= step * w;
        }
        *self.bias.entry(output).or_insert(0.0) -= step;
    }

    fn to_sparse(&self) -> Vec<SparseRow> {
        let outputs: std::collections::BTreeSet<usize> = self.rows.keys().chain(self.bias.keys()).copied().collect();
        outputs
            .into_iter()
            .map(|o| SparseRow {
                output: o,
                bias: self.bias.get(&o).copied().unwrap_or(0.0),
                weights: self
                    .rows
                    .get(&o)
                    .map(|r| r.iter().copied().enumerate().filter(|(_, w)| *w != 0.0).collect())
                    .unwrap_or_default(),
            })
            .collect()
    }

    fn from_sparse(rows: Vec<SparseRow>, dim: usize) -> Result<Self> {
        let mut out = LinearRows::default();
        for r in rows {
            let mut dense = vec![0.0; dim];
            for (i, w) in r.weights {
                *dense
                    .get_mut(i)
                    .ok_or_else(|| Error::Format(format!("weight index {i} >= {dim}")))? = w;
            }
            out.rows.insert(r.output, dense);
            out.bias.insert(r.output, r.bias);
        }
        Ok(out)
    }
}

/// One SGD pass of softmax cross-entropy over `outputs` with soft targets.
/// Returns the mean batch loss before the update.
fn softmax_sgd_step(
    params: &mut LinearRows,
    outputs: &[usize],
    batch: &[(&SparseFeatures, &[f64])],
    lr: f64,
    dim: usize,
) -> f64 {
    let scale = lr / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads: Vec<(usize, &SparseFeatures, f64)> = Vec::new();
    for &(x, target) in batch {
        let scores: Vec<f64> = outputs.iter().map(|&o| params.score(o, x)).collect();
        let p = softmax(&scores);
        for (k, &o) in outputs.iter().enumerate() {
            if target[k] > 0.0 {
                loss -= target[k] * p[k].max(f64::MIN_POSITIVE).ln();
            }
            grads.push((o, x, p[k] - target[k]));
        }
    }
    for (o, x, g) in grads {
        params.update(o, x, scale * g, dim);
    }
    loss / batch.len() as f64
}

fn state_header(kind: &str, config: &ToyConfig) -> serde_json::Map<String, serde_json::Value> {
    let mut m = serde_json::Map::new();
    m.insert("format".into(), TOY_FORMAT.into());
    m.insert("version".into(), TOY_FORMAT_VERSION.into());
    m.insert("kind".into(), kind.into());
    m.insert(
        "config".into(),
        serde_json::to_value(config).expect("config serializes"),
    );
    m
}

fn check_header(state: &serde_json::Value, kind: &str) -> Result<ToyConfig> {
    let format = state.get("format").and_then(|v| v.as_str());
    let version = state.get("version").and_then(|v| v.as_u64());
    let got_kind = state.get("kind").and_then(|v| v.as_str());
    if format != Some(TOY_FORMAT) || version != Some(u64::from(TOY_FORMAT_VERSION)) || got_kind != Some(kind) {
        return Err(Error::Format(format!(
            "expected {TOY_FORMAT} v{TOY_FORMAT_VERSION} {kind}, got {format:?} v{version:?} {got_kind:?}"
        )));
    }
    let config: ToyConfig = serde_json::from_value(state.get("config").cloned().unwrap_or_default())?;
    config.validate()?;
    Ok(config)
}

#[derive(Clone)]
pub struct ToyMaskedScorer {
    config: Arc<ToyConfig>,
    vocab: HashMap<String, usize>,
    params: LinearRows,
    steps_taken: usize,
    probe: Option<ScoreProbe>,
}

impl std::fmt::Debug for ToyMaskedScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToyMaskedScorer")
            .field("steps_taken", &self.steps_taken)
            .field("trained_rows", &self.params.rows.len())
            .finish()
    }
}

impl PartialEq for ToyMaskedScorer {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.steps_taken == other.steps_taken
    }
}

impl ToyMaskedScorer {
    pub fn new(config: Arc<ToyConfig>) -> Self {
        let vocab = config
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            config,
            vocab,
            params: LinearRows::default(),
            steps_taken: 0,
            probe: None,
        }
    }

    pub fn set_probe(&mut self, probe: Option<ScoreProbe>) {
        self.probe = probe;
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    fn token_ids(&self, candidates: &[String]) -> Result<Vec<usize>> {
        candidates
            .iter()
            .map(|t| self.vocab.get(t).copied().ok_or_else(|| Error::Vocabulary(t.clone())))
            .collect()
    }

    fn features(&self, text: &str) -> SparseFeatures {
        self.config.features.featurize(text).l2_normalized()
    }

    /// Mean restricted cross-entropy over `data`.
    pub fn loss(&self, data: &[(crate::prompting::ClozeInput, String)], candidates: &[String]) -> Result<f64> {
        let ids = self.token_ids(candidates)?;
        let mut total = 0.0;
        for (cloze, target) in data {
            let t = candidates
                .iter()
                .position(|c| c == target)
                .ok_or_else(|| Error::Vocabulary(target.clone()))?;
            let x = self.features(&cloze.text);
            let scores: Vec<f64> = ids.iter().map(|&o| self.params.score(o, &x)).collect();
            total -= softmax(&scores)[t].ln();
        }
        Ok(total / data.len().max(1) as f64)
    }

    pub fn save_state(&self) -> serde_json::Value {
        let mut m = state_header("masked_scorer", &self.config);
        m.insert("steps_taken".into(), self.steps_taken.into());
        m.insert(
            "rows".into(),
            serde_json::to_value(self.params.to_sparse()).expect("rows"),
        );
        serde_json::Value::Object(m)
    }

    pub fn from_state(state: &serde_json::Value) -> Result<Self> {
        let config = check_header(state, "masked_scorer")?;
        let dim = config.features.buckets;
        let mut s = Self::new(Arc::new(config));
        s.steps_taken = state.get("steps_taken").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
        let rows: Vec<SparseRow> = serde_json::from_value(state.get("rows").cloned().unwrap_or_default())?;
        s.params = LinearRows::from_sparse(rows, dim)?;
        Ok(s)
    }
}

impl MaskedScorer for ToyMaskedScorer {
    fn masked_score(&self, cloze: &crate::prompting::ClozeInput, candidates: &[String]) -> Result<TokenScores> {
        let ids = self.token_ids(candidates)?;
        let x = self.features(&cloze.text);
        let mut out = BTreeMap::new();
        for (tok, id) in candidates.iter().zip(ids) {
            if let Some(p) = &self.probe {
                p(tok);
            }
            out.insert(tok.clone(), self.params.score(id, &x));
        }
        Ok(TokenScores(out))
    }

    fn train_mlm(
        &mut self,
        data: &[(crate::prompting::ClozeInput, String)],
        candidates: &[String],
        schedule: &TrainSchedule,
    ) -> Result<()> {
        if data.is_empty() {
            return Err(Error::NoData);
        }
        let ids = self.token_ids(candidates)?;
        let feats: Vec<SparseFeatures> = data.iter().map(|(c, _)| self.features(&c.text)).collect();
        let targets: Vec<Vec<f64>> = data
            .iter()
            .map(|(_, t)| {
                candidates
                    .iter()
                    .position(|c| c == t)
                    .map(|k| crate::data::one_hot(k, candidates.len()))
                    .ok_or_else(|| Error::Vocabulary(t.clone()))
            })
            .collect::<Result<_>>()?;
        let mut order = BatchSchedule::new(data.len(), schedule.batch, schedule.seed);
        let dim = self.config.features.buckets;
        for _ in 0..schedule.steps {
            let idx = order.batch_at(self.steps_taken);
            let batch: Vec<(&SparseFeatures, &[f64])> =
                idx.iter().map(|&i| (&feats[i], targets[i].as_slice())).collect();
            softmax_sgd_step(&mut self.params, &ids, &batch, schedule.lr, dim);
            self.steps_taken += 1;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassifier {
    config: Arc<ToyConfig>,
    num_labels: usize,
    params: LinearRows,
    steps_taken: usize,
}

impl ToyClassifier {
    pub fn new(config: Arc<ToyConfig>, num_labels: usize) -> Self {
        Self {
            config,
            num_labels,
            params: LinearRows::default(),
            steps_taken: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    fn features(&self, text: &str) -> SparseFeatures {
        self.config.features.featurize(text).l2_normalized()
    }

    pub fn from_state(state: &serde_json::Value) -> Result<Self> {
        let config = check_header(state, "classifier")?;
        let dim = config.features.buckets;
        let num_labels = state
            .get("num_labels")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Format("missing num_labels".into()))? as usize;
        let mut c = Self::new(Arc::new(config), num_labels);
        c.steps_taken = state.get("steps_taken").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
        let rows: Vec<SparseRow> = serde_json::from_value(state.get("rows").cloned().unwrap_or_default())?;
        c.params = LinearRows::from_sparse(rows, dim)?;
        Ok(c)
    }
}

impl SequenceClassifier for ToyClassifier {
    fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn classify_train(&mut self, examples: &[(String, Vec<f64>)], schedule: &TrainSchedule) -> Result<()> {
        if examples.is_empty() {
            return Err(Error::NoData);
        }
        for (_, t) in examples {
            if t.len() != self.num_labels {
                return Err(Error::Shape {
                    expected: self.num_labels,
                    got: t.len(),
                });
            }
            check_distribution(t)?;
        }
        let feats: Vec<SparseFeatures> = examples.iter().map(|(t, _)| self.features(t)).collect();
        let outputs: Vec<usize> = (0..self.num_labels).collect();
        let mut order = BatchSchedule::new(examples.len(), schedule.batch, schedule.seed);
        let dim = self.config.features.buckets;
        for _ in 0..schedule.steps {
            let idx = order.batch_at(self.steps_taken);
            let batch: Vec<(&SparseFeatures, &[f64])> =
                idx.iter().map(|&i| (&feats[i], examples[i].1.as_slice())).collect();
            softmax_sgd_step(&mut self.params, &outputs, &batch, schedule.lr, dim);
            self.steps_taken += 1;
        }
        Ok(())
    }

    fn classify_predict(&self, text: &str) -> Result<Vec<f64>> {
        let x = self.features(text);
        Ok((0..self.num_labels).map(|o| self.params.score(o, &x)).collect())
    }

    fn save_state(&self) -> Result<serde_json::Value> {
        let mut m = state_header("classifier", &self.config);
        m.insert("num_labels".into(), self.num_labels.into());
        m.insert("steps_taken".into(), self.steps_taken.into());
        m.insert("rows".into(), serde_json::to_value(self.params.to_sparse())?);
        Ok(serde_json::Value::Object(m))
    }
}

/// Bucket-embedding table, mean-pooled over n-gram features.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    config: Arc<ToyConfig>,
    seed: u64,
    /// Row-major `buckets x dim`.
    table: Vec<f64>,
    steps_taken: usize,
}

impl ToyEncoder {
    pub fn new(config: Arc<ToyConfig>, seed: u64) -> Self {
        let dim = config.embedding_dim;
        let n = config.features.buckets * dim;
        let sd = config.init_scale / (dim as f64).sqrt();
        let normal = Normal::new(0.0, sd).expect("finite scale");
        let mut r = rng::seeded(rng::derive_seed(seed, 0x00E7_C0DE));
        let table = (0..n).map(|_| normal.sample(&mut r)).collect();
        Self {
            config,
            seed,
            table,
            steps_taken: 0,
        }
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }

    fn pool(&self, x: &SparseFeatures) -> Vec<f64> {
        let dim = self.config.embedding_dim;
        let mut out = vec![0.0; dim];
        for &(b, w) in &x.entries {
            let row = &self.table[b * dim..(b + 1) * dim];
            for (o, r) in out.iter_mut().zip(row) {
                *o += w * r;
            }
        }
        out
    }

    /// Mean squared cosine error over `batch` and its gradient with respect to
    /// the table rows touched by the batch.
    pub fn pair_loss_and_grad(&self, batch: &[TextPairTarget]) -> (f64, HashMap<usize, Vec<f64>>) {
        let dim = self.config.embedding_dim;
        let n = batch.len().max(1) as f64;
        let mut loss = 0.0;
        let mut grad: HashMap<usize, Vec<f64>> = HashMap::new();
        for t in batch {
            let fa = self.config.features.featurize(&t.text_a);
            let fb = self.config.features.featurize(&t.text_b);
            let (a, b) = (self.pool(&fa), self.pool(&fb));
            let (cos, da, db) = cosine_with_grad(&a, &b);
            let err = cos - t.similarity;
            loss += err * err / n;
            let coef = 2.0 * err / n;
            for (x, d) in [(&fa, &da), (&fb, &db)] {
                for &(bucket, w) in &x.entries {
                    let g = grad.entry(bucket).or_insert_with(|| vec![0.0; dim]);
                    for (gi, di) in g.iter_mut().zip(d.iter()) {
                        *gi += coef * w * di;
                    }
                }
            }
        }
        (loss, grad)
    }

    pub fn from_state(state: &serde_json::Value) -> Result<Self> {
        let config = check_header(state, "encoder")?;
        let seed = state.get("seed").and_then(|v| v.as_u64()).unwrap_or(0);
        let table: Vec<f64> = serde_json::from_value(state.get("table").cloned().unwrap_or_default())?;
        let expected = config.features.buckets * config.embedding_dim;
        if table.len() != expected {
            return Err(Error::Shape {
                expected,
                got: table.len(),
            });
        }
        Ok(Self {
            config: Arc::new(config),
            seed,
            table,
            steps_taken: state.get("steps_taken").and_then(|v| v.as_u64()).unwrap_or(0) as usize,
        })
    }
}

/// cos(a, b) with eps-guarded norms, and its gradients in a and b.
pub fn cosine_with_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = (a.iter().map(|x| x * x).sum::<f64>() + COSINE_EPS).sqrt();
    let nb = (b.iter().map(|x| x * x).sum::<f64>() + COSINE_EPS).sqrt();
    let cos = ab / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(x, y)| y / (na * nb) - cos * x / (na * na))
        .collect();
    let db = b
        .iter()
        .zip(a)
        .map(|(y, x)| x / (na * nb) - cos * y / (nb * nb))
        .collect();
    (cos, da, db)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    cosine_with_grad(a, b).0
}

impl SentenceEncoder for ToyEncoder {
    fn dim(&self) -> usize {
        self.config.embedding_dim
    }

    fn encode(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self.pool(&self.config.features.featurize(text)))
    }

    fn encoder_fit(&mut self, pairs: &[TextPairTarget], schedule: &TrainSchedule) -> Result<()> {
        if schedule.steps == 0 {
            return Ok(());
        }
        if pairs.is_empty() {
            return Err(Error::NoData);
        }
        if let Some(p) = pairs.iter().find(|p| !(0.0..=1.0).contains(&p.similarity)) {
            return Err(Error::Backend(format!("similarity {} outside [0, 1]", p.similarity)));
        }
        let dim = self.config.embedding_dim;
        let mut order = BatchSchedule::new(pairs.len(), schedule.batch, schedule.seed);
        for _ in 0..schedule.steps {
            let batch: Vec<TextPairTarget> = order
                .batch_at(self.steps_taken)
                .into_iter()
                .map(|i| pairs[i].clone())
                .collect();
            let (_, grad) = self.pair_loss_and_grad(&batch);
            let mut rows: Vec<_> = grad.into_iter().collect();
            rows.sort_unstable_by_key(|(b, _)| *b);
            for (bucket, g) in rows {
                for (t, gi) in self.table[bucket * dim..(bucket + 1) * dim].iter_mut().zip(g) {
                    *t -= schedule.lr * self.config.encoder_lr_scale * gi;
                }
            }
            self.steps_taken += 1;
        }
        Ok(())
    }

    fn save_state(&self) -> Result<serde_json::Value> {
        let mut m = state_header("encoder", &self.config);
        m.insert("seed".into(), self.seed.into());
        m.insert("steps_taken".into(), self.steps_taken.into());
        m.insert("table".into(), serde_json::to_value(&self.table)?);
        Ok(serde_json::Value::Object(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SentencePair;
    use crate::prompting::{render, whitespace_len, ClozeInput};

    fn small() -> ToyBackend {
        let mut c = ToyConfig::default();
        c.features.buckets = 512;
        c.embedding_dim = 8;
        ToyBackend::new(c).unwrap()
    }

    fn cloze(text: &str) -> ClozeInput {
        ClozeInput {
            text: text.into(),
            mask_position: 0,
            segment_boundary: None,
        }
    }

    fn yes_no() -> Vec<String> {
        vec!["No".into(), "Yes".into()]
    }

    #[test]
    fn untrained_scorer_is_zero() {
        let s = small().toy_masked_scorer();
        let r = s.masked_score(&cloze("anything <mask>"), &yes_no()).unwrap();
        assert_eq!(r.0.len(), 2);
        assert!(r.0.values().all(|v| *v == 0.0));
    }

    #[test]
    fn unknown_candidate_is_vocabulary_error() {
        let s = small().toy_masked_scorer();
        assert!(matches!(
            s.masked_score(&cloze("x"), &["Perhaps".to_string()]),
            Err(Error::Vocabulary(_))
        ));
    }

    #[test]
    fn scorer_learns_yes() {
        let b = small();
        let mut s = b.toy_masked_scorer();
        let pvp = &builtin_pvps_for(Task::SoDuplicate)[2];
        let data: Vec<(ClozeInput, String)> = (0..8)
            .map(|i| {
                let c = render(
                    pvp,
                    &SentencePair::new(format!("q{i}"), "z"),
                    TOY_SEPARATOR,
                    256,
                    &whitespace_len,
                )
                .unwrap();
                (c, "Yes".to_string())
            })
            .collect();
        let sched = TrainSchedule {
            steps: 50,
            batch: 4,
            lr: 0.1,
            seed: 1,
        };
        s.train_mlm(&data, &yes_no(), &sched).unwrap();
        let r = s.masked_score(&data[0].0, &yes_no()).unwrap();
        assert!(r.0["Yes"] > r.0["No"]);
    }

    #[test]
    fn zero_steps_leaves_state_and_empty_data_errors() {
        let b = small();
        let mut s = b.toy_masked_scorer();
        let before = s.clone();
        s.train_mlm(
            &[(cloze("a"), "Yes".into())],
            &yes_no(),
            &TrainSchedule {
                steps: 0,
                batch: 2,
                lr: 0.1,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(s, before);
        assert!(matches!(
            s.train_mlm(
                &[],
                &yes_no(),
                &TrainSchedule {
                    steps: 3,
                    batch: 2,
                    lr: 0.1,
                    seed: 0
                }
            ),
            Err(Error::NoData)
        ));
    }

    #[test]
    fn mlm_training_is_deterministic() {
        let b = small();
        let data = vec![
            (cloze("red apple"), "Yes".to_string()),
            (cloze("blue sky"), "No".to_string()),
        ];
        let sched = TrainSchedule {
            steps: 20,
            batch: 1,
            lr: 0.1,
            seed: 4,
        };
        let mut a = b.toy_masked_scorer();
        let mut c = b.toy_masked_scorer();
        a.train_mlm(&data, &yes_no(), &sched).unwrap();
        c.train_mlm(&data, &yes_no(), &sched).unwrap();
        assert_eq!(a.save_state(), c.save_state());
    }

    #[test]
    fn classifier_shape_checks() {
        let mut c = small().toy_classifier(2);
        let bad = vec![("t".to_string(), vec![1.0, 0.0, 0.0])];
        assert!(matches!(
            c.classify_train(
                &bad,
                &TrainSchedule {
                    steps: 1,
                    batch: 1,
                    lr: 0.1,
                    seed: 0
                }
            ),
            Err(Error::Shape { expected: 2, got: 3 })
        ));
        assert_eq!(c.classify_predict("x").unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn classifier_state_round_trip() {
        let mut c = small().toy_classifier(2);
        let data = vec![
            ("alpha beta".to_string(), vec![1.0, 0.0]),
            ("gamma delta".to_string(), vec![0.0, 1.0]),
        ];
        c.classify_train(
            &data,
            &TrainSchedule {
                steps: 10,
                batch: 2,
                lr: 0.1,
                seed: 0,
            },
        )
        .unwrap();
        let state = c.save_state().unwrap();
        let back = ToyClassifier::from_state(&state).unwrap();
        assert_eq!(
            back.classify_predict("alpha").unwrap(),
            c.classify_predict("alpha").unwrap()
        );
        assert!(ToyEncoder::from_state(&state).is_err());
    }

    #[test]
    fn encoder_degenerate_cases() {
        let e = small().toy_encoder(3);
        assert_eq!(e.encode("").unwrap(), vec![0.0; 8]);
        assert_eq!(e.encode("a b").unwrap(), e.encode("a b").unwrap());
        // Same n-gram multiset (case and spacing differ) -> same vector.
        assert_eq!(e.encode("Open  file").unwrap(), e.encode("open file").unwrap());
    }

    #[test]
    fn identical_texts_have_zero_loss_at_label_one() {
        let e = small().toy_encoder(3);
        let t = TextPairTarget {
            text_a: "same text".into(),
            text_b: "same text".into(),
            similarity: 1.0,
        };
        let (loss, _) = e.pair_loss_and_grad(&[t]);
        assert!(loss < 1e-18);
    }

    #[test]
    fn zero_norm_pair_is_finite() {
        let e = small().toy_encoder(3);
        let t = TextPairTarget {
            text_a: "".into(),
            text_b: "x".into(),
            similarity: 1.0,
        };
        let (loss, grad) = e.pair_loss_and_grad(&[t]);
        assert!((loss - 1.0).abs() < 1e-12);
        assert!(grad.values().flatten().all(|g| g.is_finite()));
    }

    #[test]
    fn encoder_zero_epochs_unchanged() {
        let mut e = small().toy_encoder(3);
        let before = e.clone();
        e.encoder_fit(
            &[],
            &TrainSchedule {
                steps: 0,
                batch: 16,
                lr: 0.1,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(e, before);
    }

    #[test]
    fn probe_sees_only_candidates() {
        let b = small();
        let mut s = b.toy_masked_scorer();
        let seen = Arc::new(std::sync::Mutex::new(Vec::<String>::new()));
        let sink = seen.clone();
        s.set_probe(Some(Arc::new(move |t: &str| sink.lock().unwrap().push(t.to_string()))));
        s.masked_score(&cloze("x"), &yes_no()).unwrap();
        assert_eq!(*seen.lock().unwrap(), yes_no());
    }
}
