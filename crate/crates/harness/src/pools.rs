//! Train pool / test set preparation for a sweep.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use pairshot_core::data::sample_training_set;
use pairshot_core::rng;
use pairshot_core::split::{is_leakage_free, split_no_leakage, SplitOptions};
use pairshot_core::synthetic::SyntheticTask;
use pairshot_core::{Dataset, DatasetKind, LabeledExample, SentencePair};

use crate::config::{ExperimentConfig, Method};
use crate::error::{HarnessError, Result};

/// Stream id used to derive the split seed from the seed base.
const SPLIT_STREAM: u64 = 0x5917;
const SYNTHETIC_STREAM: u64 = 0x5e7;
const UNLABELED_STREAM: u64 = 0x0dd;

#[derive(Debug, Clone)]
pub enum DataSource {
    /// Separable keyword task generated for the configured label set.
    Synthetic,
    File(PathBuf),
    Dataset(Dataset),
}

impl DataSource {
    pub fn describe(&self) -> String {
        match self {
            DataSource::Synthetic => "synthetic".into(),
            DataSource::File(p) => format!("file:{}", p.display()),
            DataSource::Dataset(d) => format!("dataset:{}:{}", d.label_set().task_id(), d.len()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pools {
    pub train_pool: Dataset,
    pub test: Dataset,
    pub source: String,
}

fn default_pool(config: &ExperimentConfig) -> usize {
    let max = config.max_size();
    match config.method {
        Method::Pet => max + config.unlabeled_size,
        _ => 2 * max,
    }
}

fn load(config: &ExperimentConfig, source: &DataSource) -> Result<Dataset> {
    let task = config.task()?;
    let d = match source {
        DataSource::Synthetic => {
            let n = config.test_size + config.train_pool_size.unwrap_or_else(|| default_pool(config));
            let seed = rng::derive_seed(config.seed_base, SYNTHETIC_STREAM);
            return Ok(
                SyntheticTask::new(task.label_set(), config.synthetic_vocab_seed).sample(
                    n,
                    seed,
                    DatasetKind::Train,
                )?,
            );
        }
        DataSource::File(p) => read(p)?,
        DataSource::Dataset(d) => d.clone(),
    };
    if !d.label_set().same_labels(&task.label_set()) {
        return Err(HarnessError::Config(format!(
            "dataset labels {:?} do not match task {}",
            d.label_set().labels(),
            task.id()
        )));
    }
    Ok(d.with_kind(DatasetKind::Train)?)
}

fn read(path: &Path) -> Result<Dataset> {
    Ok(pairshot_core::io::read_dataset(path)?)
}

/// Split the source into a leakage-free train pool and test set sized for
/// `config`. With no explicit pool size the largest feasible pool is taken,
/// trying progressively smaller requests.
pub fn prepare_pools(config: &ExperimentConfig, source: &DataSource) -> Result<Pools> {
    config.validate()?;
    let all = load(config, source)?;
    let seed = rng::derive_seed(config.seed_base, SPLIT_STREAM);
    let max = config.max_size();
    if all.len() < config.test_size + max {
        return Err(HarnessError::Infeasible(format!(
            "{} pairs cannot hold a test set of {} plus a training sample of {max}",
            all.len(),
            config.test_size
        )));
    }
    let candidates: Vec<usize> = match config.train_pool_size {
        Some(p) => vec![p],
        None => {
            let rest = all.len() - config.test_size;
            let mut c = vec![rest, (rest + max) / 2, 2 * max, max];
            c.retain(|&p| p >= max && p <= rest);
            c.dedup();
            c
        }
    };
    let mut last = None;
    for pool in candidates {
        match split_no_leakage(&all, pool, config.test_size, seed, &SplitOptions::default()) {
            Ok(s) => {
                return Ok(Pools {
                    train_pool: s.train_pool,
                    test: s.test,
                    source: source.describe(),
                })
            }
            Err(e) => last = Some(e),
        }
    }
    Err(HarnessError::Infeasible(match last {
        Some(e) => e.to_string(),
        None => "no train pool size is feasible".into(),
    }))
}

impl Pools {
    /// Training sample of one cell; re-checked against the test set.
    pub fn training_sample(&self, size: usize, seed: u64, replicate: usize) -> Result<Dataset> {
        let train = sample_training_set(&self.train_pool, size, seed)?;
        if !is_leakage_free(&train, &self.test) {
            return Err(HarnessError::Leakage { size, replicate });
        }
        Ok(train)
    }

    /// Up to `n` unlabeled pairs from the pool, none of them in `train`.
    pub fn unlabeled_for(&self, train: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
        let used: HashSet<&SentencePair> = train.pairs().collect();
        let mut rest: Vec<LabeledExample> = self
            .train_pool
            .pairs()
            .filter(|p| !used.contains(p))
            .map(|p| LabeledExample::unlabeled(p.clone()))
            .collect();
        if rest.len() < n {
            log::warn!("only {} unlabeled pairs available, {n} requested", rest.len());
        }
        rest.shuffle(&mut rng::seeded(rng::derive_seed(seed, UNLABELED_STREAM)));
        rest.truncate(n);
        Ok(Dataset::new(
            rest,
            self.train_pool.label_set().clone(),
            DatasetKind::Unlabeled,
        )?)
    }

    /// Fail before training if any cell would be infeasible.
    pub fn check(&self, config: &ExperimentConfig) -> Result<()> {
        let max = config.max_size();
        if self.train_pool.len() < max {
            return Err(HarnessError::Infeasible(format!(
                "train pool has {} pairs, largest size is {max}",
                self.train_pool.len()
            )));
        }
        if !is_leakage_free(&self.train_pool, &self.test) {
            return Err(HarnessError::Infeasible(
                "train pool and test set share sentences".into(),
            ));
        }
        if config.method == Method::Pet && self.train_pool.len() - max < config.unlabeled_size {
            log::warn!(
                "unlabeled set will be {} pairs instead of {}",
                self.train_pool.len() - max,
                config.unlabeled_size
            );
        }
        Ok(())
    }
}
