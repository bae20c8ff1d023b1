//! Pattern-exploiting training.
//!
//! 1. For every (PVP, seed) a fresh masked-token scorer is created, its
//!    accuracy on the labeled set is recorded as its weight while it is still
//!    untrained, and it is then trained on the PVP-rendered labeled set.
//! 2. Each unlabeled pair is scored by every member through its own PVP,
//!    restricted to the verbalizer tokens; scores are averaged with the
//!    member weights and turned into a distribution by softmax(score / T).
//! 3. A sequence classifier is trained on the labeled pairs (one-hot) and the
//!    soft-labeled pairs together.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{argmax, softmax, Backend, MaskedScorer, SequenceClassifier, TrainSchedule};
use crate::data::{Dataset, LabelSet, SentencePair, SoftLabeledExample};
use crate::error::{Error, Result};
use crate::finetune::{evaluate, evaluate_with, one_hot_targets};
use crate::metrics::EvalReport;
use crate::prompting::{builtin_pvps_for, verbalizer_tokens, ClozeInput, InputContext, Pvp, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetConfig {
    pub pvps: Vec<Pvp>,
    pub seeds: Vec<u64>,
    pub mlm_steps: usize,
    pub distill_steps: usize,
    pub batch: usize,
    /// `None` uses the backend's default.
    pub lr: Option<f64>,
    pub temperature: f64,
    pub max_len: usize,
    /// Seed of the distilled classifier.
    pub classifier_seed: u64,
}

impl PetConfig {
    /// Built-in PVPs for `task`, three seeds, and the standard schedule.
    pub fn for_task(task: Task) -> Self {
        Self {
            pvps: builtin_pvps_for(task),
            seeds: vec![1, 2, 3],
            mlm_steps: 1000,
            distill_steps: 5000,
            batch: 16,
            lr: None,
            temperature: 2.0,
            max_len: 256,
            classifier_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Numeric(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.pvps.is_empty() || self.seeds.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        Ok(())
    }
}

pub struct EnsembleMember {
    pub pvp: Pvp,
    pub seed: u64,
    pub model: Box<dyn MaskedScorer>,
    /// Verbalizer tokens in label-set order.
    pub tokens: Vec<String>,
    pub weight: f64,
}

impl std::fmt::Debug for EnsembleMember {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnsembleMember")
            .field("pvp", &self.pvp.id)
            .field("seed", &self.seed)
            .field("weight", &self.weight)
            .finish()
    }
}

impl EnsembleMember {
    /// Verbalizer-restricted scores in label-set order.
    pub fn label_scores(&self, pair: &SentencePair, ctx: &InputContext<'_>) -> Result<Vec<f64>> {
        let cloze = ctx.render(&self.pvp, pair)?;
        self.model.masked_score(&cloze, &self.tokens)?.ordered(&self.tokens)
    }
}

/// Fraction of `train` whose restricted argmax (ties to the lowest label
/// index) equals the gold label.
pub fn untrained_accuracy(member: &EnsembleMember, train: &Dataset, ctx: &InputContext<'_>) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::NoData);
    }
    let golds = train.label_ids()?;
    let mut correct = 0usize;
    for (pair, gold) in train.pairs().zip(golds) {
        if argmax(&member.label_scores(pair, ctx)?) == gold {
            correct += 1;
        }
    }
    Ok(correct as f64 / train.len() as f64)
}

fn check_vocabulary(pvps: &[Pvp], labels: &LabelSet, backend: &dyn Backend) -> Result<()> {
    for pvp in pvps {
        for t in verbalizer_tokens(pvp, labels)? {
            if !backend.vocabulary_contains(&t) {
                return Err(Error::Vocabulary(t));
            }
        }
    }
    Ok(())
}

pub fn train_ensemble(config: &PetConfig, train: &Dataset, backend: &dyn Backend) -> Result<Vec<EnsembleMember>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::NoData);
    }
    let labels = train.label_set();
    check_vocabulary(&config.pvps, labels, backend)?;
    let golds = train.label_ids()?;
    let ctx = InputContext::for_backend(backend, config.max_len);
    let lr = config.lr.unwrap_or_else(|| backend.default_lr());

    let jobs: Vec<(&Pvp, u64)> = config
        .pvps
        .iter()
        .flat_map(|p| config.seeds.iter().map(move |&s| (p, s)))
        .collect();
    jobs.into_par_iter()
        .map(|(pvp, seed)| {
            let build = || -> Result<EnsembleMember> {
                let tokens = verbalizer_tokens(pvp, labels)?;
                let mut member = EnsembleMember {
                    pvp: pvp.clone(),
                    seed,
                    model: backend.masked_scorer(seed)?,
                    tokens,
                    weight: 0.0,
                };
                member.weight = untrained_accuracy(&member, train, &ctx)?;
                let data: Vec<(ClozeInput, String)> = train
                    .pairs()
                    .zip(&golds)
                    .map(|(p, &g)| Ok((ctx.render(pvp, p)?, member.tokens[g].clone())))
                    .collect::<Result<_>>()?;
                let schedule = TrainSchedule {
                    steps: config.mlm_steps,
                    batch: config.batch,
                    lr,
                    seed,
                };
                member.model.train_mlm(&data, &member.tokens, &schedule)?;
                Ok(member)
            };
            build().map_err(|e| Error::Member {
                pvp_id: pvp.id,
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

/// `sum_m w_m s_m / sum_m w_m`, label-aligned. With all weights zero the
/// members are averaged uniformly.
pub fn weighted_mean(weights: &[f64], scores: &[Vec<f64>]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if weights.len() != scores.len() {
        return Err(Error::Shape {
            expected: weights.len(),
            got: scores.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::Numeric(format!("member weight {w}")));
    }
    let k = scores[0].len();
    if let Some(s) = scores.iter().find(|s| s.len() != k) {
        return Err(Error::Shape {
            expected: k,
            got: s.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    let uniform;
    let weights = if total > 0.0 {
        weights
    } else {
        log::warn!("all ensemble weights are zero; averaging members uniformly");
        uniform = vec![1.0; weights.len()];
        &uniform[..]
    };
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; k];
    for (w, s) in weights.iter().zip(scores) {
        for (o, x) in out.iter_mut().zip(s) {
            *o += w * x;
        }
    }
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

pub fn aggregate_scores(members: &[EnsembleMember], pair: &SentencePair, ctx: &InputContext<'_>) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let scores: Vec<Vec<f64>> = members
        .iter()
        .map(|m| m.label_scores(pair, ctx))
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = members.iter().map(|m| m.weight).collect();
    weighted_mean(&weights, &scores)
}

/// softmax(scores / temperature).
pub fn soften(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Numeric(format!("temperature must be > 0, got {temperature}")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("score {s}")));
    }
    Ok(softmax(&scores.iter().map(|s| s / temperature).collect::<Vec<_>>()))
}

pub fn soft_label(
    members: &[EnsembleMember],
    unlabeled: &Dataset,
    temperature: f64,
    ctx: &InputContext<'_>,
) -> Result<Vec<SoftLabeledExample>> {
    unlabeled
        .examples()
        .par_iter()
        .map(|ex| {
            let dist = soften(&aggregate_scores(members, &ex.pair, ctx)?, temperature)?;
            SoftLabeledExample::new(ex.pair.clone(), dist)
        })
        .collect()
}

pub struct Distilled {
    pub classifier: Box<dyn SequenceClassifier>,
    pub soft_labels: Vec<SoftLabeledExample>,
}

/// Train the final classifier on one-hot labeled pairs followed by the
/// soft-labeled unlabeled pairs; the batch schedule shuffles the union.
pub fn distill(
    members: &[EnsembleMember],
    train: &Dataset,
    unlabeled: &Dataset,
    config: &PetConfig,
    backend: &dyn Backend,
) -> Result<Distilled> {
    config.validate()?;
    let ctx = InputContext::for_backend(backend, config.max_len);
    let soft_labels = soft_label(members, unlabeled, config.temperature, &ctx)?;
    let mut examples = one_hot_targets(train, &ctx)?;
    examples.extend(soft_labels.iter().map(|s| (ctx.join(&s.pair), s.distribution.clone())));
    let mut classifier = backend.classifier(train.label_set().len(), config.classifier_seed)?;
    if config.distill_steps > 0 {
        classifier.classify_train(
            &examples,
            &TrainSchedule {
                steps: config.distill_steps,
                batch: config.batch,
                lr: config.lr.unwrap_or_else(|| backend.default_lr()),
                seed: config.classifier_seed,
            },
        )?;
    }
    Ok(Distilled {
        classifier,
        soft_labels,
    })
}

pub fn ensemble_predict(members: &[EnsembleMember], pair: &SentencePair, ctx: &InputContext<'_>) -> Result<usize> {
    Ok(argmax(&aggregate_scores(members, pair, ctx)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDiagnostic {
    pub pvp_id: u32,
    pub seed: u64,
    /// Accuracy on the labeled set before training.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvpDiagnostic {
    pub pvp_id: u32,
    pub mean_untrained_accuracy: f64,
    /// Test accuracy of this PVP's members averaged with their weights.
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetMetadata {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub classifier_seed: u64,
    pub temperature: f64,
    pub temperature_mode: String,
    pub distill_mixing: String,
    pub uniform_weight_fallback: bool,
    pub backend: String,
}

pub struct PetRun {
    pub classifier: Box<dyn SequenceClassifier>,
    pub report: EvalReport,
    pub ensemble_report: EvalReport,
    pub members: Vec<MemberDiagnostic>,
    pub pvps: Vec<PvpDiagnostic>,
    pub soft_labels: Vec<SoftLabeledExample>,
    pub metadata: PetMetadata,
}

pub fn run_pet(
    config: &PetConfig,
    train: &Dataset,
    unlabeled: &Dataset,
    test: &Dataset,
    backend: &dyn Backend,
) -> Result<PetRun> {
    let members = train_ensemble(config, train, backend).map_err(Error::in_stage("train_ensemble"))?;
    let ctx = InputContext::for_backend(backend, config.max_len);
    let ensemble_report =
        evaluate_with(test, |p| ensemble_predict(&members, p, &ctx)).map_err(Error::in_stage("evaluate_ensemble"))?;
    let mut pvps = Vec::new();
    for pvp in &config.pvps {
        let group: Vec<&EnsembleMember> = members.iter().filter(|m| m.pvp.id == pvp.id).collect();
        let mean_untrained_accuracy = group.iter().map(|m| m.weight).sum::<f64>() / group.len() as f64;
        let test_accuracy = evaluate_with(test, |p| {
            let scores: Vec<Vec<f64>> = group.iter().map(|m| m.label_scores(p, &ctx)).collect::<Result<_>>()?;
            let w: Vec<f64> = group.iter().map(|m| m.weight).collect();
            Ok(argmax(&weighted_mean(&w, &scores)?))
        })
        .map_err(Error::in_stage("evaluate_pvp"))?
        .accuracy;
        pvps.push(PvpDiagnostic {
            pvp_id: pvp.id,
            mean_untrained_accuracy,
            test_accuracy,
        });
    }
    let distilled = distill(&members, train, unlabeled, config, backend).map_err(Error::in_stage("distill"))?;
    let report = evaluate(distilled.classifier.as_ref(), test, &ctx).map_err(Error::in_stage("evaluate"))?;
    Ok(PetRun {
        classifier: distilled.classifier,
        report,
        ensemble_report,
        members: members
            .iter()
            .map(|m| MemberDiagnostic {
                pvp_id: m.pvp.id,
                seed: m.seed,
                weight: m.weight,
            })
            .collect(),
        pvps,
        soft_labels: distilled.soft_labels,
        metadata: PetMetadata {
            config_hash: crate::config_hash(config),
            seeds: config.seeds.clone(),
            classifier_seed: config.classifier_seed,
            temperature: config.temperature,
            temperature_mode: "softmax(score / T)".into(),
            distill_mixing: "uniformly shuffled union of one-hot labeled and soft-labeled rows".into(),
            uniform_weight_fallback: members.iter().all(|m| m.weight == 0.0),
            backend: backend.name(),
        },
    })
}

impl PetRun {
    /// Write member weights, per-PVP diagnostics, the soft-labeled set, the
    /// classifier state and run metadata into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = |name: &str, v: &dyn erased::Json| -> Result<()> {
            std::fs::write(dir.join(name), v.to_pretty()?)?;
            Ok(())
        };
        json("member_weights.json", &self.members)?;
        json("pvp_diagnostics.json", &self.pvps)?;
        json("report.json", &self.report)?;
        json("ensemble_report.json", &self.ensemble_report)?;
        json("metadata.json", &self.metadata)?;
        json("classifier.json", &self.classifier.save_state()?)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("soft_labels.jsonl"))?);
        for s in &self.soft_labels {
            serde_json::to_writer(&mut f, s)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }
}

mod erased {
    pub trait Json {
        fn to_pretty(&self) -> serde_json::Result<String>;
    }
    impl<T: serde::Serialize> Json for T {
        fn to_pretty(&self) -> serde_json::Result<String> {
            serde_json::to_string_pretty(self)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::TokenScores;
    use std::collections::BTreeMap;

    struct Fixed(Vec<f64>);

    impl MaskedScorer for Fixed {
        fn masked_score(&self, _: &ClozeInput, candidates: &[String]) -> Result<TokenScores> {
            Ok(TokenScores(
                candidates
                    .iter()
                    .cloned()
                    .zip(self.0.iter().copied())
                    .collect::<BTreeMap<_, _>>(),
            ))
        }
        fn train_mlm(&mut self, _: &[(ClozeInput, String)], _: &[String], _: &TrainSchedule) -> Result<()> {
            Ok(())
        }
    }

    fn member(scores: &[f64], weight: f64) -> EnsembleMember {
        EnsembleMember {
            pvp: builtin_pvps_for(Task::SoDuplicate)[2].clone(),
            seed: 0,
            model: Box::new(Fixed(scores.to_vec())),
            tokens: vec!["No".into(), "Yes".into()],
            weight,
        }
    }

    fn ctx() -> InputContext<'static> {
        InputContext::plain("[SEP]", 256)
    }

    #[test]
    fn hand_weighted_mean() {
        let m = [member(&[0.0, 1.0], 1.0), member(&[1.0, 0.0], 3.0)];
        let s = aggregate_scores(&m, &SentencePair::new("a", "b"), &ctx()).unwrap();
        assert_eq!(s, vec![0.75, 0.25]);
    }

    #[test]
    fn single_member_passthrough() {
        let m = [member(&[0.3, -1.2], 0.4)];
        let s = aggregate_scores(&m, &SentencePair::new("a", "b"), &ctx()).unwrap();
        assert!((s[0] - 0.3).abs() < 1e-15 && (s[1] + 1.2).abs() < 1e-15);
    }

    #[test]
    fn empty_ensemble_errors() {
        assert!(matches!(
            aggregate_scores(&[], &SentencePair::new("a", "b"), &ctx()),
            Err(Error::EmptyEnsemble)
        ));
    }

    #[test]
    fn zero_weights_fall_back_to_uniform() {
        let s = weighted_mean(&[0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(s, vec![0.5, 0.5]);
    }

    #[test]
    fn soften_hand_value() {
        let p = soften(&[2.0, 0.0], 2.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-12);
        assert!((p[1] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((p[0] - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn soften_rejects_bad_input() {
        assert!(soften(&[1.0, 0.0], 0.0).is_err());
        assert!(soften(&[f64::NAN, 0.0], 1.0).is_err());
        assert_eq!(soften(&[3.0, 3.0, 3.0], 0.5).unwrap(), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn config_validation() {
        let mut c = PetConfig::for_task(Task::SoDuplicate);
        assert_eq!(c.pvps.len() * c.seeds.len(), 9);
        c.temperature = 0.0;
        assert!(c.validate().is_err());
    }
}
