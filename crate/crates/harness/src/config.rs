//! Declarative experiment description, loadable from TOML.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use pairshot_core::backend::external::{ExternalBackend, ExternalConfig};
use pairshot_core::backend::toy::ToyBackend;
use pairshot_core::backend::Backend;
use pairshot_core::prompting::Task;

use crate::error::{HarnessError, Result};

pub const DEFAULT_SIZES: [usize; 5] = [25, 50, 100, 200, 400];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Finetune,
    Pet,
    Setfit,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Finetune => "finetune",
            Method::Pet => "pet",
            Method::Setfit => "setfit",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "finetune" => Ok(Method::Finetune),
            "pet" => Ok(Method::Pet),
            "setfit" => Ok(Method::Setfit),
            _ => Err(format!("unknown method `{s}` (expected finetune, pet or setfit)")),
        }
    }
}

/// `toy`, `external` (address from the environment) or `external:HOST:PORT`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendSpec {
    Toy,
    External { addr: Option<String> },
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Toy => f.write_str("toy"),
            BackendSpec::External { addr: None } => f.write_str("external"),
            BackendSpec::External { addr: Some(a) } => write!(f, "external:{a}"),
        }
    }
}

impl FromStr for BackendSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            _ if s == "toy" => Ok(BackendSpec::Toy),
            _ if s == "external" => Ok(BackendSpec::External { addr: None }),
            Some(("external", addr)) if !addr.is_empty() => Ok(BackendSpec::External {
                addr: Some(addr.to_string()),
            }),
            _ => Err(format!(
                "unknown backend `{s}` (expected toy, external or external:HOST:PORT)"
            )),
        }
    }
}

impl TryFrom<String> for BackendSpec {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<BackendSpec> for String {
    fn from(b: BackendSpec) -> String {
        b.to_string()
    }
}

impl BackendSpec {
    pub fn connect(&self) -> Result<Box<dyn Backend>> {
        Ok(match self {
            BackendSpec::Toy => Box::new(ToyBackend::default()),
            BackendSpec::External { addr: None } => Box::new(ExternalBackend::from_env(ExternalConfig::default())?),
            BackendSpec::External { addr: Some(a) } => {
                Box::new(ExternalBackend::connect_tcp(a.as_str(), ExternalConfig::default())?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task_id: String,
    pub method: Method,
    pub backend: BackendSpec,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub test_size: usize,
    /// Used by PET only.
    pub unlabeled_size: usize,
    pub seed_base: u64,
    /// Train pool drawn from after the test split; `None` takes as much as
    /// the split allows.
    pub train_pool_size: Option<usize>,
    /// Parallel cells; 0 means one per available core.
    pub workers: usize,
    /// SetFit encoder epochs (1 and 3 are the usual checkpoint profiles).
    pub epochs: Option<usize>,
    /// Fine-tune steps, or PET per-member MLM steps.
    pub steps: Option<usize>,
    pub distill_steps: Option<usize>,
    /// Vocabulary seed of the bundled synthetic task.
    pub synthetic_vocab_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task_id: Task::SoDuplicate.id().into(),
            method: Method::Finetune,
            backend: BackendSpec::Toy,
            sizes: DEFAULT_SIZES.to_vec(),
            replicates: 3,
            test_size: 2000,
            unlabeled_size: 5000,
            seed_base: 0,
            train_pool_size: None,
            workers: 0,
            epochs: None,
            steps: None,
            distill_steps: None,
            synthetic_vocab_seed: 11,
        }
    }
}

impl ExperimentConfig {
    pub fn task(&self) -> Result<Task> {
        Ok(Task::from_id(&self.task_id)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.task()?;
        if self.sizes.is_empty() {
            return Err(HarnessError::Config("sizes must not be empty".into()));
        }
        if self.sizes.contains(&0) || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Config(format!(
                "sizes must be positive and strictly ascending, got {:?}",
                self.sizes
            )));
        }
        if self.replicates == 0 {
            return Err(HarnessError::Config("replicates must be >= 1".into()));
        }
        if self.test_size == 0 {
            return Err(HarnessError::Config("test_size must be >= 1".into()));
        }
        if let Some(p) = self.train_pool_size {
            if p < self.max_size() {
                return Err(HarnessError::Config(format!(
                    "train_pool_size {p} is smaller than the largest size {}",
                    self.max_size()
                )));
            }
        }
        Ok(())
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// Training-sample seed of a replicate.
    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        self.seed_base.wrapping_mul(1000).wrapping_add(replicate as u64)
    }

    pub fn cell_count(&self) -> usize {
        self.sizes.len() * self.replicates
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }
}
