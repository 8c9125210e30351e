use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use candle_core::Tensor;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::EmotionLabelSet;
use crate::encoder::{load_safetensors, BackendSpec, EncoderConfig, Tokenizer};
use crate::error::{Error, Result};
use crate::heads::HeadSpec;

use super::model::ErcModel;
use super::TrainConfig;

const WEIGHTS_FILE: &str = "weights.safetensors";
const CONFIG_FILE: &str = "config.json";
const LABELS_FILE: &str = "labels.json";
const METRICS_FILE: &str = "metrics.json";

/// Everything needed to rebuild the best model of a training run.
#[derive(Debug, Clone)]
pub struct CheckpointBundle {
    pub config: TrainConfig,
    pub backend: BackendSpec,
    pub encoder_config: EncoderConfig,
    pub head_spec: HeadSpec,
    pub label_set: EmotionLabelSet,
    pub metrics: BundleMetrics,
    pub weights: BTreeMap<String, Tensor>,
    pub tokenizer: Tokenizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleMetrics {
    pub best_val_macro_f1: f64,
    /// 1-based.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredConfig {
    train: TrainConfig,
    backend: BackendSpec,
    encoder: EncoderConfig,
    head: HeadSpec,
}

impl CheckpointBundle {
    pub fn from_model(
        model: &ErcModel,
        config: &TrainConfig,
        backend: &BackendSpec,
        metrics: BundleMetrics,
    ) -> Result<Self> {
        Ok(Self {
            config: config.clone(),
            backend: backend.clone(),
            encoder_config: model.encoder().config().clone(),
            head_spec: model.head().spec().clone(),
            label_set: model.label_set().clone(),
            metrics,
            weights: model.weights()?,
            tokenizer: model.tokenizer().clone(),
        })
    }

    pub fn model(&self) -> Result<ErcModel> {
        ErcModel::from_weights(
            self.encoder_config.clone(),
            self.head_spec.clone(),
            &self.weights,
            self.tokenizer.clone(),
            self.label_set.clone(),
            &self.config,
        )
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let map: std::collections::HashMap<String, Tensor> =
            self.weights.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        candle_core::safetensors::save(&map, dir.join(WEIGHTS_FILE))?;
        write_json(
            &dir.join(CONFIG_FILE),
            &StoredConfig {
                train: self.config.clone(),
                backend: self.backend.clone(),
                encoder: self.encoder_config.clone(),
                head: self.head_spec.clone(),
            },
        )?;
        write_json(&dir.join(LABELS_FILE), &self.label_set)?;
        write_json(&dir.join(METRICS_FILE), &self.metrics)?;
        self.tokenizer.save_to_dir(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.join(WEIGHTS_FILE).exists() {
            return Err(Error::Checkpoint(format!("{}: no {WEIGHTS_FILE}", dir.display())));
        }
        let stored: StoredConfig = read_json(&dir.join(CONFIG_FILE))?;
        let labels: EmotionLabelSet = read_json(&dir.join(LABELS_FILE))?;
        let label_set = EmotionLabelSet::new(labels.name(), labels.labels().to_vec())?;
        Ok(Self {
            config: stored.train,
            backend: stored.backend,
            encoder_config: stored.encoder,
            head_spec: stored.head,
            label_set,
            metrics: read_json(&dir.join(METRICS_FILE))?,
            weights: load_safetensors(&dir.join(WEIGHTS_FILE))?,
            tokenizer: Tokenizer::load_from_dir(dir)?,
        })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}
