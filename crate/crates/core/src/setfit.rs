//! SetFit-style training on sentence pairs.
//!
//! Pairs are joined into one text around the backend separator. A sentence
//! encoder is first fitted contrastively on (text, text, same-class?)
//! triplets with a cosine-MSE loss, the labeled pairs are then embedded, and a
//! multinomial logistic regression head is fitted on the embeddings.

use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{argmax, softmax, Backend, SentenceEncoder, TextPairTarget, TrainSchedule};
use crate::data::{Dataset, SentencePair};
use crate::error::{Error, Result};
use crate::finetune::{evaluate_with, Prediction};
use crate::metrics::EvalReport;
use crate::prompting::InputContext;
use crate::rng;

pub const SETFIT_FORMAT: &str = "pairshot-setfit";
pub const SETFIT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveTriplet {
    pub text_a: String,
    pub text_b: String,
    /// 1 when both source examples share a label, else 0.
    pub similarity: f64,
    /// Class whose bucket produced the triplet.
    pub anchor_label: usize,
    /// Indices of the source examples in the training set.
    pub source_a: usize,
    pub source_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub l2: f64,
    pub max_iter: usize,
    /// Stop when the largest absolute gradient entry falls below this.
    pub tol: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetFitConfig {
    /// Positive and negative triplets generated per class.
    pub r: usize,
    pub epochs: usize,
    pub batch: usize,
    /// `None` uses the backend's default.
    pub lr: Option<f64>,
    pub max_len: usize,
    pub seed: u64,
    pub head: HeadConfig,
}

impl Default for SetFitConfig {
    fn default() -> Self {
        Self {
            r: 10,
            epochs: 3,
            batch: 16,
            lr: None,
            max_len: 256,
            seed: 0,
            head: HeadConfig::default(),
        }
    }
}

/// The `k`-th unordered pair (i < j) of `0..n` in lexicographic order.
fn triangle_pair(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
        i += 1;
    }
}

/// `r` distinct indices from `0..total` when possible; once the bucket is
/// exhausted the remainder is drawn with replacement.
fn draw(total: usize, r: usize, rng: &mut rng::Rng, what: &str) -> Vec<usize> {
    use rand::Rng as _;
    if r <= total {
        return index::sample(rng, total, r).into_vec();
    }
    log::warn!("{what}: only {total} distinct pairs for {r} triplets; sampling with replacement");
    let mut out: Vec<usize> = index::sample(rng, total, total).into_vec();
    while out.len() < r {
        out.push(rng.random_range(0..total));
    }
    out
}

/// For every label in label-set order, `r` same-class pairs (similarity 1)
/// followed by `r` cross-class pairs (similarity 0), giving 2·r·|labels|
/// triplets in total.
pub fn generate_contrastive(
    train: &Dataset,
    r: usize,
    seed: u64,
    ctx: &InputContext<'_>,
) -> Result<Vec<ContrastiveTriplet>> {
    let labels = train.label_set();
    let ids = train.label_ids()?;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, &y) in ids.iter().enumerate() {
        buckets[y].push(i);
    }
    if r == 0 {
        return Ok(Vec::new());
    }
    if let Some(c) = buckets.iter().position(|b| b.len() < 2) {
        return Err(Error::InfeasiblePositive(labels.name(c).to_string()));
    }
    let texts: Vec<String> = train.pairs().map(|p| ctx.join(p)).collect();
    let triplet = |a: usize, b: usize, sim: f64, c: usize| ContrastiveTriplet {
        text_a: texts[a].clone(),
        text_b: texts[b].clone(),
        similarity: sim,
        anchor_label: c,
        source_a: a,
        source_b: b,
    };

    let mut out = Vec::with_capacity(2 * r * labels.len());
    for (c, bucket) in buckets.iter().enumerate() {
        let n = bucket.len();
        let mut prng = rng::seeded(rng::derive_seed(seed, 2 * c as u64));
        for k in draw(
            n * (n - 1) / 2,
            r,
            &mut prng,
            &format!("positives for `{}`", labels.name(c)),
        ) {
            let (i, j) = triangle_pair(k, n);
            out.push(triplet(bucket[i], bucket[j], 1.0, c));
        }
        let others: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] != c).collect();
        let mut nrng = rng::seeded(rng::derive_seed(seed, 2 * c as u64 + 1));
        for k in draw(
            n * others.len(),
            r,
            &mut nrng,
            &format!("negatives for `{}`", labels.name(c)),
        ) {
            out.push(triplet(bucket[k / others.len()], others[k % others.len()], 0.0, c));
        }
    }
    Ok(out)
}

/// Multinomial logistic regression: `softmax(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    pub num_labels: usize,
    pub dim: usize,
    /// Row-major `num_labels x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Trace of one head fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadFit {
    /// Objective before the first and after every accepted step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticHead {
    pub fn zeros(num_labels: usize, dim: usize) -> Self {
        Self {
            num_labels,
            dim,
            weights: vec![0.0; num_labels * dim],
            bias: vec![0.0; num_labels],
        }
    }

    /// Parameters flattened as weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let w = self.num_labels * self.dim;
        self.weights.copy_from_slice(&p[..w]);
        self.bias.copy_from_slice(&p[w..]);
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(logits_of(&self.params(), self.num_labels, x))
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn fit(&mut self, xs: &[Vec<f64>], ys: &[usize], config: &HeadConfig) -> Result<HeadFit> {
        if xs.is_empty() {
            return Err(Error::NoData);
        }
        if let Some(x) = xs.iter().find(|x| x.len() != self.dim) {
            return Err(Error::Shape {
                expected: self.dim,
                got: x.len(),
            });
        }
        if let Some(&y) = ys.iter().find(|&&y| y >= self.num_labels) {
            return Err(Error::Shape {
                expected: self.num_labels,
                got: y + 1,
            });
        }
        let k = self.num_labels;
        let mut theta = self.params();
        let mut f = head_objective(&theta, k, xs, ys, config.l2);
        let mut trace = vec![f];
        let mut step = 1.0;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < config.max_iter {
            let g = head_gradient(&theta, k, xs, ys, config.l2);
            if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < config.tol {
                converged = true;
                break;
            }
            let gg: f64 = g.iter().map(|v| v * v).sum();
            step *= 2.0;
            let mut accepted = None;
            while step > 1e-16 {
                let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, d)| t - step * d).collect();
                let fc = head_objective(&cand, k, xs, ys, config.l2);
                if fc <= f - 1e-4 * step * gg {
                    accepted = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, fc)) = accepted else { break };
            theta = cand;
            f = fc;
            trace.push(f);
            iterations += 1;
        }
        if !converged {
            log::debug!("logistic head stopped after {iterations} iterations without reaching tolerance");
        }
        self.set_params(&theta);
        Ok(HeadFit {
            objective: trace,
            iterations,
            converged,
        })
    }
}

fn logits_of(theta: &[f64], k: usize, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..k)
        .map(|c| theta[c * d..(c + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + theta[k * d + c])
        .collect()
}

/// Mean cross-entropy plus `l2 / 2 * |W|^2` (bias unregularized).
pub fn head_objective(theta: &[f64], k: usize, xs: &[Vec<f64>], ys: &[usize], l2: f64) -> f64 {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let ce: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = logits_of(theta, k, x);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - z[y]
        })
        .sum();
    ce / n + 0.5 * l2 * theta[..k * d].iter().map(|w| w * w).sum::<f64>()
}

pub fn head_gradient(theta: &[f64], k: usize, xs: &[Vec<f64>], ys: &[usize], l2: f64) -> Vec<f64> {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut g = vec![0.0; theta.len()];
    for (x, &y) in xs.iter().zip(ys) {
        let p = softmax(&logits_of(theta, k, x));
        for c in 0..k {
            let r = (p[c] - if c == y { 1.0 } else { 0.0 }) / n;
            for (gi, xi) in g[c * d..(c + 1) * d].iter_mut().zip(x) {
                *gi += r * xi;
            }
            g[k * d + c] += r;
        }
    }
    for (gi, w) in g[..k * d].iter_mut().zip(&theta[..k * d]) {
        *gi += l2 * w;
    }
    g
}

pub struct SetFitModel {
    pub encoder: Box<dyn SentenceEncoder>,
    pub head: LogisticHead,
    pub labels: Vec<String>,
    pub config: SetFitConfig,
    pub head_fit: HeadFit,
    pub triplets: usize,
}

pub fn embed_all(
    encoder: &dyn SentenceEncoder,
    pairs: &[&SentencePair],
    ctx: &InputContext<'_>,
) -> Result<Vec<Vec<f64>>> {
    pairs.par_iter().map(|p| encoder.encode(&ctx.join(p))).collect()
}

pub fn setfit_fit(config: &SetFitConfig, train: &Dataset, backend: &dyn Backend) -> Result<SetFitModel> {
    if train.is_empty() {
        return Err(Error::NoData);
    }
    let ctx = InputContext::for_backend(backend, config.max_len);
    let triplets = generate_contrastive(train, config.r, config.seed, &ctx)?;
    let mut encoder = backend.encoder(config.seed)?;
    let steps = TrainSchedule::epochs_to_steps(triplets.len(), config.batch, config.epochs);
    if steps > 0 {
        let pairs: Vec<TextPairTarget> = triplets
            .iter()
            .map(|t| TextPairTarget {
                text_a: t.text_a.clone(),
                text_b: t.text_b.clone(),
                similarity: t.similarity,
            })
            .collect();
        encoder.encoder_fit(
            &pairs,
            &TrainSchedule {
                steps,
                batch: config.batch,
                lr: config.lr.unwrap_or_else(|| backend.default_lr()),
                seed: config.seed,
            },
        )?;
    }
    let pairs: Vec<&SentencePair> = train.pairs().collect();
    let xs = embed_all(encoder.as_ref(), &pairs, &ctx)?;
    let mut head = LogisticHead::zeros(train.label_set().len(), encoder.dim());
    let head_fit = head.fit(&xs, &train.label_ids()?, &config.head)?;
    Ok(SetFitModel {
        encoder,
        head,
        labels: train.label_set().labels().to_vec(),
        config: config.clone(),
        head_fit,
        triplets: triplets.len(),
    })
}

pub fn setfit_predict(model: &SetFitModel, pair: &SentencePair, ctx: &InputContext<'_>) -> Result<Prediction> {
    let x = model.encoder.encode(&ctx.join(pair))?;
    let scores = model.head.logits(&x)?;
    Ok(Prediction {
        label: argmax(&scores),
        probabilities: softmax(&scores),
        scores,
    })
}

pub fn setfit_evaluate(model: &SetFitModel, test: &Dataset, ctx: &InputContext<'_>) -> Result<EvalReport> {
    evaluate_with(test, |p| Ok(setfit_predict(model, p, ctx)?.label))
}

/// Encoder state, head and label order in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetFitBundle {
    pub format: String,
    pub version: u32,
    pub config: SetFitConfig,
    pub labels: Vec<String>,
    pub head: LogisticHead,
    pub encoder: serde_json::Value,
}

impl SetFitModel {
    pub fn bundle(&self) -> Result<SetFitBundle> {
        Ok(SetFitBundle {
            format: SETFIT_FORMAT.into(),
            version: SETFIT_FORMAT_VERSION,
            config: self.config.clone(),
            labels: self.labels.clone(),
            head: self.head.clone(),
            encoder: self.encoder.save_state()?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.bundle()?)?)?;
        Ok(())
    }
}

impl SetFitBundle {
    pub fn load(path: &Path) -> Result<Self> {
        let b: SetFitBundle = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if b.format != SETFIT_FORMAT || b.version != SETFIT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "expected {SETFIT_FORMAT} v{SETFIT_FORMAT_VERSION}, found {} v{}",
                b.format, b.version
            )));
        }
        Ok(b)
    }

    /// Rebuild a model; `decode` restores the encoder from its saved state.
    pub fn into_model(
        self,
        decode: impl FnOnce(&serde_json::Value) -> Result<Box<dyn SentenceEncoder>>,
    ) -> Result<SetFitModel> {
        let encoder = decode(&self.encoder)?;
        if encoder.dim() != self.head.dim {
            return Err(Error::Shape {
                expected: self.head.dim,
                got: encoder.dim(),
            });
        }
        Ok(SetFitModel {
            encoder,
            head: self.head,
            labels: self.labels,
            config: self.config,
            head_fit: HeadFit {
                objective: Vec::new(),
                iterations: 0,
                converged: false,
            },
            triplets: 0,
        })
    }
}
