//! Training-set-size sweeps.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pairshot_core::backend::{Backend, SequenceClassifier};
use pairshot_core::finetune::{evaluate, finetune, FinetuneConfig};
use pairshot_core::metrics::{aggregate_replicates, EvalReport, ReplicateSummary};
use pairshot_core::pet::{run_pet, PetConfig, PetRun};
use pairshot_core::prompting::{InputContext, Task};
use pairshot_core::rng::derive_seed;
use pairshot_core::setfit::{setfit_evaluate, setfit_fit, SetFitConfig, SetFitModel};
use pairshot_core::{Dataset, DatasetKind};

use crate::config::{ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::pools::Pools;

pub const SWEEP_FORMAT: &str = "pairshot-sweep";
pub const SWEEP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub size: usize,
    pub replicate: usize,
    /// Training-sample seed.
    pub seed: u64,
    pub report: Option<EvalReport>,
    /// PET only: the weighted ensemble before distillation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_report: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.report.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub size: usize,
    pub completed: usize,
    pub failed: usize,
    /// Over completed replicates; `None` when all failed.
    pub summary: Option<ReplicateSummary>,
}

/// Everything in here is a pure function of the config and data, so two
/// runs write identical files. Timings live in [`SweepOutcome`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub backend: String,
    pub data_source: String,
    pub train_pool_size: usize,
    pub test_size: usize,
    pub cells: Vec<CellResult>,
    pub summaries: Vec<SizeSummary>,
}

impl SweepResult {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.failed()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.failed_cells() == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if r.format != SWEEP_FORMAT || r.version != SWEEP_FORMAT_VERSION {
            return Err(HarnessError::Format(format!(
                "{}: {} v{} (expected {SWEEP_FORMAT} v{SWEEP_FORMAT_VERSION})",
                path.display(),
                r.format,
                r.version
            )));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub size: usize,
    pub replicate: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub result: SweepResult,
    pub timings: Vec<CellTiming>,
    pub wall_seconds: f64,
}

/// Trained model of one cell, kept for the single-cell `train` command.
pub enum TrainedModel {
    Finetune(Box<dyn SequenceClassifier>),
    Pet(Box<PetRun>),
    Setfit(Box<SetFitModel>),
}

impl TrainedModel {
    /// Write the model (and PET diagnostics) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        match self {
            TrainedModel::Finetune(clf) => std::fs::write(
                dir.join("classifier.json"),
                serde_json::to_string_pretty(&clf.save_state()?)? + "\n",
            )?,
            TrainedModel::Pet(run) => run.write_artifacts(dir)?,
            TrainedModel::Setfit(model) => model.save(&dir.join("setfit_model.json"))?,
        }
        Ok(())
    }
}

pub struct CellOutput {
    pub report: EvalReport,
    pub ensemble_report: Option<EvalReport>,
    pub model: TrainedModel,
}

/// Train and evaluate one method on one training sample.
pub fn train_cell(
    config: &ExperimentConfig,
    task: Task,
    train: &Dataset,
    unlabeled: Option<&Dataset>,
    test: &Dataset,
    model_seed: u64,
    backend: &dyn Backend,
) -> Result<CellOutput> {
    match config.method {
        Method::Finetune => {
            let defaults = FinetuneConfig::default();
            let fc = FinetuneConfig {
                steps: config.steps.unwrap_or(defaults.steps),
                seed: model_seed,
                ..defaults
            };
            let clf = finetune(&fc, train, backend)?;
            let ctx = InputContext::for_backend(backend, fc.max_len);
            Ok(CellOutput {
                report: evaluate(clf.as_ref(), test, &ctx)?,
                ensemble_report: None,
                model: TrainedModel::Finetune(clf),
            })
        }
        Method::Pet => {
            let defaults = PetConfig::for_task(task);
            let pc = PetConfig {
                seeds: defaults.seeds.iter().map(|&s| derive_seed(model_seed, s)).collect(),
                mlm_steps: config.steps.unwrap_or(defaults.mlm_steps),
                distill_steps: config.distill_steps.unwrap_or(defaults.distill_steps),
                classifier_seed: model_seed,
                ..defaults
            };
            let empty;
            let unlabeled = match unlabeled {
                Some(u) => u,
                None => {
                    empty = Dataset::empty(train.label_set().clone(), DatasetKind::Unlabeled);
                    &empty
                }
            };
            let run = run_pet(&pc, train, unlabeled, test, backend)?;
            Ok(CellOutput {
                report: run.report.clone(),
                ensemble_report: Some(run.ensemble_report.clone()),
                model: TrainedModel::Pet(Box::new(run)),
            })
        }
        Method::Setfit => {
            let defaults = SetFitConfig::default();
            let sc = SetFitConfig {
                epochs: config.epochs.unwrap_or(defaults.epochs),
                seed: model_seed,
                ..defaults
            };
            let model = setfit_fit(&sc, train, backend)?;
            let ctx = InputContext::for_backend(backend, sc.max_len);
            Ok(CellOutput {
                report: setfit_evaluate(&model, test, &ctx)?,
                ensemble_report: None,
                model: TrainedModel::Setfit(Box::new(model)),
            })
        }
    }
}

struct Cell {
    size: usize,
    replicate: usize,
    seed: u64,
    train: Dataset,
}

/// Run every (size, replicate) cell. Samples are drawn and leakage-checked
/// for all cells before any training; a cell whose training fails is kept
/// with its error and the sweep carries on.
pub fn run_sweep(config: &ExperimentConfig, pools: &Pools, backend: &dyn Backend) -> Result<SweepOutcome> {
    config.validate()?;
    let task = config.task()?;
    pools.check(config)?;
    let start = Instant::now();

    let mut cells = Vec::with_capacity(config.cell_count());
    for &size in &config.sizes {
        for replicate in 0..config.replicates {
            let seed = config.replicate_seed(replicate);
            let train = pools.training_sample(size, seed, replicate)?;
            cells.push(Cell {
                size,
                replicate,
                seed,
                train,
            });
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let done: Vec<(CellResult, CellTiming)> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| {
                let t0 = Instant::now();
                let model_seed = derive_seed(c.seed, c.size as u64);
                let out = (|| {
                    let unlabeled = match config.method {
                        Method::Pet => Some(pools.unlabeled_for(&c.train, config.unlabeled_size, c.seed)?),
                        _ => None,
                    };
                    train_cell(
                        config,
                        task,
                        &c.train,
                        unlabeled.as_ref(),
                        &pools.test,
                        model_seed,
                        backend,
                    )
                })();
                let seconds = t0.elapsed().as_secs_f64();
                let (report, ensemble_report, error) = match out {
                    Ok(o) => {
                        log::info!(
                            "size {} replicate {}: accuracy {:.4}",
                            c.size,
                            c.replicate,
                            o.report.accuracy
                        );
                        (Some(o.report), o.ensemble_report, None)
                    }
                    Err(e) => {
                        log::error!("size {} replicate {} failed: {e}", c.size, c.replicate);
                        (None, None, Some(e.to_string()))
                    }
                };
                (
                    CellResult {
                        size: c.size,
                        replicate: c.replicate,
                        seed: c.seed,
                        report,
                        ensemble_report,
                        error,
                    },
                    CellTiming {
                        size: c.size,
                        replicate: c.replicate,
                        seconds,
                    },
                )
            })
            .collect()
    });
    let (cells, timings): (Vec<CellResult>, Vec<CellTiming>) = done.into_iter().unzip();

    let summaries = config
        .sizes
        .iter()
        .map(|&size| {
            let reports: Vec<EvalReport> = cells
                .iter()
                .filter(|c| c.size == size)
                .filter_map(|c| c.report.clone())
                .collect();
            let failed = cells.iter().filter(|c| c.size == size && c.failed()).count();
            Ok(SizeSummary {
                size,
                completed: reports.len(),
                failed,
                summary: if reports.is_empty() {
                    None
                } else {
                    Some(aggregate_replicates(&reports)?)
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SweepOutcome {
        result: SweepResult {
            format: SWEEP_FORMAT.into(),
            version: SWEEP_FORMAT_VERSION,
            config: config.clone(),
            config_hash: pairshot_core::config_hash(config),
            backend: backend.name(),
            data_source: pools.source.clone(),
            train_pool_size: pools.train_pool.len(),
            test_size: pools.test.len(),
            cells,
            summaries,
        },
        timings,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
