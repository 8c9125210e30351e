use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::BackendSpec;
use crate::error::{Error, Result};
use crate::evaluation::{DEFAULT_CONTEXT_TURNS, DEFAULT_SEEDS};
use crate::trainer::TrainConfig;

/// Declarative experiment description, read from TOML.
///
/// ```toml
/// output_dir = "runs/dd"
/// seeds = [42, 43, 44, 45, 46]
/// c_values = [0, 1, 2, 3, 4]
///
/// [dataset]
/// name = "dailydialog"
/// corpus = "data/dailydialog.jsonl"
///
/// [train]
/// context_turns = 3
///
/// [backend]
/// kind = "pretrained"
/// checkpoint = "models/roberta-base"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub dataset: DatasetConfig,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub c_values: Vec<usize>,
    pub parallel: bool,
    pub train: TrainConfig,
    pub backend: BackendSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: Option<String>,
    /// Canonical corpus file.
    pub corpus: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            output_dir: PathBuf::from("runs"),
            seeds: DEFAULT_SEEDS.to_vec(),
            c_values: DEFAULT_CONTEXT_TURNS.to_vec(),
            parallel: false,
            train: TrainConfig::default(),
            backend: BackendSpec::tiny(),
        }
    }
}

impl CliConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.c_values.is_empty() {
            return Err(Error::Config("c_values must not be empty".into()));
        }
        if let BackendSpec::Pretrained { checkpoint } = &self.backend {
            if !checkpoint.is_dir() {
                return Err(Error::Config(format!(
                    "backend checkpoint {} is not a directory",
                    checkpoint.display()
                )));
            }
        }
        Ok(())
    }
}

/// `tiny` or a pre-trained checkpoint directory.
pub fn parse_backend(s: &str) -> BackendSpec {
    if s == "tiny" {
        BackendSpec::tiny()
    } else {
        BackendSpec::pretrained(s)
    }
}

/// `a..b` (inclusive) or a comma-separated list.
pub fn parse_c_values(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("invalid context-turn list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}
