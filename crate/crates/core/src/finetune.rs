//! Plain fine-tuning of a sequence classifier on labeled pairs.

use serde::{Deserialize, Serialize};

use crate::backend::{argmax, softmax, Backend, SequenceClassifier, TrainSchedule};
use crate::data::{one_hot, Dataset, SentencePair};
use crate::error::{Error, Result};
use crate::metrics::{report, ConfusionMatrix, EvalReport};
use crate::prompting::InputContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    /// 1,000 for few-shot training sets, 5,000 for full-sized ones.
    pub steps: usize,
    pub batch: usize,
    /// `None` uses the backend's default.
    pub lr: Option<f64>,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch: 16,
            lr: None,
            max_len: 256,
            seed: 0,
        }
    }
}

/// Joined text and one-hot target for every labeled example, in dataset
/// order.
pub fn one_hot_targets(train: &Dataset, ctx: &InputContext<'_>) -> Result<Vec<(String, Vec<f64>)>> {
    let k = train.label_set().len();
    let ids = train.label_ids()?;
    Ok(train
        .pairs()
        .zip(ids)
        .map(|(p, y)| (ctx.join(p), one_hot(y, k)))
        .collect())
}

pub fn finetune(
    config: &FinetuneConfig,
    train: &Dataset,
    backend: &dyn Backend,
) -> Result<Box<dyn SequenceClassifier>> {
    if train.is_empty() {
        return Err(Error::NoData);
    }
    let mut clf = backend.classifier(train.label_set().len(), config.seed)?;
    if config.steps > 0 {
        let examples = one_hot_targets(train, &InputContext::for_backend(backend, config.max_len))?;
        clf.classify_train(
            &examples,
            &TrainSchedule {
                steps: config.steps,
                batch: config.batch,
                lr: config.lr.unwrap_or_else(|| backend.default_lr()),
                seed: config.seed,
            },
        )?;
    }
    Ok(clf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Argmax over the classifier's scores, ties to the lowest label index.
pub fn finetune_predict(
    classifier: &dyn SequenceClassifier,
    pair: &SentencePair,
    ctx: &InputContext<'_>,
) -> Result<Prediction> {
    let scores = classifier.classify_predict(&ctx.join(pair))?;
    if scores.len() != classifier.num_labels() {
        return Err(Error::Shape {
            expected: classifier.num_labels(),
            got: scores.len(),
        });
    }
    Ok(Prediction {
        label: argmax(&scores),
        probabilities: softmax(&scores),
        scores,
    })
}

/// Evaluate any pair -> label function on a labeled dataset.
pub fn evaluate_with(test: &Dataset, mut predict: impl FnMut(&SentencePair) -> Result<usize>) -> Result<EvalReport> {
    let golds = test.label_ids()?;
    let preds: Vec<usize> = test.pairs().map(&mut predict).collect::<Result<_>>()?;
    report(&ConfusionMatrix::from_ids(&golds, &preds, test.label_set())?)
}

pub fn evaluate(classifier: &dyn SequenceClassifier, test: &Dataset, ctx: &InputContext<'_>) -> Result<EvalReport> {
    evaluate_with(test, |p| Ok(finetune_predict(classifier, p, ctx)?.label))
}
