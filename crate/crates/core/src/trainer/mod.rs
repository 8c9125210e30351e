//! Fine-tuning of encoder and head.
//!
//! Cross-entropy (or CRF likelihood) loss, Adam with separate encoder and
//! head learning rates, encoder frozen during the first epoch, encoder rate
//! decayed by 0.95 per epoch afterwards, global gradient-norm clipping, and
//! early stopping on validation macro-F1 keeping the best epoch.

mod checkpoint;
mod model;
mod optim;

use std::io::Write;

use candle_core::DType;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelId, Split};
use crate::encoder::{encoder_layer_index, BackendSpec, Dropout, ParamStore, PoolingStrategy};
use crate::error::{Error, Result};
use crate::evaluation::macro_f1;
use crate::heads::HeadKind;
use crate::windowing::EncodedInput;

pub use checkpoint::{BundleMetrics, CheckpointBundle};
pub(crate) use checkpoint::{read_json, write_json};
pub use model::{ErcModel, Predictions};
pub use optim::{clip_grad_norm, collect_grads, global_norm, Adam};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

/// How `epoch_decay` is applied to the encoder learning rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrDecay {
    /// Whole encoder multiplied by the decay after each epoch.
    #[default]
    Temporal,
    /// Fixed per-layer rates, `encoder_lr * decay^(top - layer)`, with the
    /// embeddings as layer 0.
    DepthWise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub context_turns: usize,
    pub encoder_lr: f64,
    pub head_lr: f64,
    pub epoch_decay: f64,
    pub lr_decay: LrDecay,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub freeze_encoder_first_epoch: bool,
    pub seed: u64,
    pub pooling: PoolingStrategy,
    pub head: HeadKind,
    pub max_len: usize,
    /// Stop after this many optimizer steps (the current epoch is still
    /// validated).
    pub max_steps: Option<usize>,
    pub eval_batch_size: usize,
    pub speaker_prefix: bool,
    /// Recurrent head width; the encoder hidden size when unset.
    pub sequence_hidden_size: Option<usize>,
    pub sequence_linear_after: bool,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            context_turns: 3,
            encoder_lr: 1e-5,
            head_lr: 5e-5,
            epoch_decay: 0.95,
            lr_decay: LrDecay::Temporal,
            batch_size: 4,
            clip_norm: 1.0,
            max_epochs: 10,
            patience: 5,
            freeze_encoder_first_epoch: true,
            seed: 42,
            pooling: PoolingStrategy::ClsLast,
            head: HeadKind::Linear,
            max_len: crate::windowing::DEFAULT_MAX_LEN,
            max_steps: None,
            eval_batch_size: 32,
            speaker_prefix: false,
            sequence_hidden_size: None,
            sequence_linear_after: true,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("encoder_lr", self.encoder_lr)?;
        positive("head_lr", self.head_lr)?;
        positive("clip_norm", self.clip_norm)?;
        if !(self.epoch_decay > 0.0 && self.epoch_decay <= 1.0) {
            return Err(Error::Config(format!("epoch_decay must be in (0, 1], got {}", self.epoch_decay)));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("eval_batch_size", self.eval_batch_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.max_len < 3 {
            return Err(Error::Config(format!("max_len {} is below 3", self.max_len)));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        if self.sequence_hidden_size == Some(0) {
            return Err(Error::Config("sequence_hidden_size must be positive".into()));
        }
        Ok(())
    }
}

/// `(encoder lr, head lr)` in effect during 1-based `epoch`.
///
/// With the first-epoch freeze: epoch 1 gives `(0, head_lr)` and epoch
/// `e >= 2` gives `(encoder_lr * decay^(e-2), head_lr)`. Without it the
/// exponent is `e - 1`. In depth-wise mode the encoder value is the rate of
/// the top layer and does not decay over epochs.
pub fn effective_lrs(epoch: usize, config: &TrainConfig) -> (f64, f64) {
    let epoch = epoch.max(1);
    if config.freeze_encoder_first_epoch && epoch == 1 {
        return (0.0, config.head_lr);
    }
    let encoder = match config.lr_decay {
        LrDecay::Temporal => {
            let exponent = if config.freeze_encoder_first_epoch { epoch - 2 } else { epoch - 1 };
            config.encoder_lr * config.epoch_decay.powi(exponent as i32)
        }
        LrDecay::DepthWise => config.encoder_lr,
    };
    (encoder, config.head_lr)
}

/// Learning rate of parameter `name` during `epoch`.
pub fn parameter_lr(name: &str, epoch: usize, config: &TrainConfig, num_layers: usize) -> f64 {
    let (encoder, head) = effective_lrs(epoch, config);
    if ParamStore::is_head(name) {
        return head;
    }
    match (config.lr_decay, encoder_layer_index(name)) {
        (LrDecay::DepthWise, Some(layer)) => {
            encoder * config.epoch_decay.powi(num_layers.saturating_sub(layer) as i32)
        }
        _ => encoder,
    }
}

/// One optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    pub encoder_lr: f64,
    pub head_lr: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    pub fn write_jsonl(&self, w: &mut dyn Write) -> std::io::Result<()> {
        for e in &self.epochs {
            writeln!(w, "{}", serde_json::to_string(e).map_err(std::io::Error::other)?)?;
        }
        Ok(())
    }
}

/// Training examples grouped into the units the head consumes.
pub type TrainUnit = Vec<(EncodedInput, LabelId)>;

/// Builds training units for `split` with `c` context turns.
pub fn training_units(model: &ErcModel, corpus: &Corpus, split: Split, c: usize) -> Result<Vec<TrainUnit>> {
    let sequence = model.head().spec().kind.is_sequence_level();
    let mut units = Vec::new();
    for d in corpus.split(split) {
        let mut unit = Vec::new();
        for (i, u) in d.turns.iter().enumerate() {
            if let Some(y) = u.label {
                unit.push((model.encode_turn(d, i, c)?, y));
            }
        }
        if sequence {
            if !unit.is_empty() {
                units.push(unit);
            }
        } else {
            units.extend(unit.into_iter().map(|p| vec![p]));
        }
    }
    Ok(units)
}

/// Forward, backward, clip and update on one batch. The encoder is
/// detached when its learning rate is zero.
pub fn training_step(
    model: &ErcModel,
    optimizer: &mut Adam,
    batch: &[&[(EncodedInput, LabelId)]],
    lr_of: &dyn Fn(&str) -> f64,
    clip_norm: f64,
    dropout: Option<&mut Dropout>,
) -> Result<(f64, f64, f64)> {
    let frozen = model
        .store()
        .iter()
        .all(|(name, _)| ParamStore::is_head(name) || lr_of(name) == 0.0);
    let loss = model.batch_loss(batch, dropout, frozen)?;
    let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("training loss is {value}")));
    }
    let grads = loss.backward()?;
    let mut grads = collect_grads(model.store(), &grads);
    let (before, after) = clip_grad_norm(&mut grads, clip_norm)?;
    optimizer.step(&grads, lr_of)?;
    Ok((value, before, after))
}

/// Scores the model on validation data after an epoch.
pub type Validator<'a> = Box<dyn FnMut(&ErcModel, usize) -> Result<f64> + 'a>;

pub struct Trainer<'a> {
    config: TrainConfig,
    backend: BackendSpec,
    validator: Option<Validator<'a>>,
    log: Option<Box<dyn Write + 'a>>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, backend: BackendSpec) -> Self {
        Self {
            config,
            backend,
            validator: None,
            log: None,
        }
    }

    /// Replaces validation macro-F1 with a custom score.
    pub fn with_validator(mut self, validator: Validator<'a>) -> Self {
        self.validator = Some(validator);
        self
    }

    /// Receives one JSON line per epoch.
    pub fn with_log(mut self, log: Box<dyn Write + 'a>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn run(self, corpus: &Corpus) -> Result<(CheckpointBundle, TrainHistory)> {
        self.config.validate()?;
        let model = ErcModel::build(corpus, &self.config, &self.backend)?;
        self.run_with_model(corpus, model)
    }

    /// Trains an already built model.
    pub fn run_with_model(mut self, corpus: &Corpus, model: ErcModel) -> Result<(CheckpointBundle, TrainHistory)> {
        let cfg = self.config.clone();
        cfg.validate()?;
        let c = cfg.context_turns;
        let units = training_units(&model, corpus, Split::Train, c)?;
        if units.is_empty() {
            return Err(Error::InvalidCorpus("training split has no labeled turns".into()));
        }
        if self.validator.is_none() && corpus.stats(Some(Split::Validation)).labeled_turns == 0 {
            return Err(Error::InvalidCorpus("validation split has no labeled turns".into()));
        }
        let num_layers = model.encoder().config().num_layers;
        let mut optimizer = Adam::default();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut dropout = Dropout::new(model.encoder().config().dropout, cfg.seed.wrapping_add(2));
        let mut order: Vec<usize> = (0..units.len()).collect();
        let mut history = TrainHistory {
            best_val_macro_f1: f64::NEG_INFINITY,
            ..TrainHistory::default()
        };
        let mut best = None;
        let mut since_best = 0;
        let mut total_steps = 0;

        for epoch in 1..=cfg.max_epochs {
            let lr_of = |name: &str| parameter_lr(name, epoch, &cfg, num_layers);
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut steps = 0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&[(EncodedInput, LabelId)]> = chunk.iter().map(|&i| units[i].as_slice()).collect();
                let (loss, before, after) = training_step(&model, &mut optimizer, &batch, &lr_of, cfg.clip_norm, Some(&mut dropout))
                    .map_err(|e| match e {
                        Error::NonFinite(m) => Error::NonFinite(format!("{m} at epoch {epoch}, step {}", steps + 1)),
                        other => other,
                    })?;
                steps += 1;
                total_steps += 1;
                loss_sum += loss;
                history.steps.push(StepRecord {
                    epoch,
                    step: total_steps,
                    loss,
                    grad_norm: before,
                    clipped_grad_norm: after,
                });
                if cfg.max_steps.is_some_and(|m| total_steps >= m) {
                    break;
                }
            }
            let score = match self.validator.as_mut() {
                Some(v) => v(&model, epoch)?,
                None => {
                    let p = model.evaluate(corpus, Split::Validation, c)?;
                    macro_f1(&p.gold, &p.pred, model.label_set().len())?
                }
            };
            let (encoder_lr, head_lr) = effective_lrs(epoch, &cfg);
            let record = EpochRecord {
                epoch,
                train_loss: loss_sum / steps as f64,
                val_macro_f1: score,
                encoder_lr,
                head_lr,
                steps,
            };
            if let Some(log) = self.log.as_mut() {
                writeln!(log, "{}", serde_json::to_string(&record)?).map_err(|e| Error::io("<training log>", e))?;
            }
            history.epochs.push(record);
            if score > history.best_val_macro_f1 {
                history.best_val_macro_f1 = score;
                history.best_epoch = epoch;
                best = Some(model.store().snapshot()?);
                since_best = 0;
            } else {
                since_best += 1;
            }
            if since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
            if cfg.max_steps.is_some_and(|m| total_steps >= m) {
                break;
            }
        }

        if let Some(snapshot) = &best {
            model.store().restore(snapshot)?;
        }
        let metrics = BundleMetrics {
            best_val_macro_f1: history.best_val_macro_f1,
            best_epoch: history.best_epoch,
            epochs_run: history.epochs.len(),
        };
        let bundle = CheckpointBundle::from_model(&model, &cfg, &self.backend, metrics)?;
        Ok((bundle, history))
    }
}

/// Trains with the default validator (macro-F1 on the validation split).
pub fn train(corpus: &Corpus, config: &TrainConfig, backend: &BackendSpec) -> Result<(CheckpointBundle, TrainHistory)> {
    Trainer::new(config.clone(), backend.clone()).run(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(effective_lrs(1, &cfg), (0.0, 5e-5));
        assert_eq!(effective_lrs(2, &cfg), (1e-5, 5e-5));
        let (enc, head) = effective_lrs(4, &cfg);
        assert!((enc - 1e-5 * 0.9025).abs() < 1e-18);
        assert_eq!(head, 5e-5);

        let unfrozen = TrainConfig {
            freeze_encoder_first_epoch: false,
            ..cfg.clone()
        };
        assert_eq!(effective_lrs(1, &unfrozen), (1e-5, 5e-5));

        let depth = TrainConfig {
            lr_decay: LrDecay::DepthWise,
            ..cfg
        };
        assert_eq!(parameter_lr("encoder.layer.1.output.dense.weight", 3, &depth, 2), 1e-5);
        assert!((parameter_lr("encoder.layer.0.output.dense.weight", 3, &depth, 2) - 0.95e-5).abs() < 1e-18);
        assert!((parameter_lr("embeddings.word_embeddings.weight", 3, &depth, 2) - 0.9025e-5).abs() < 1e-18);
        assert_eq!(parameter_lr("embeddings.word_embeddings.weight", 1, &depth, 2), 0.0);
        assert_eq!(parameter_lr("head.linear.bias", 1, &depth, 2), 5e-5);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { patience: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { encoder_lr: 0.0, ..Default::default() },
            TrainConfig { epoch_decay: 1.5, ..Default::default() },
            TrainConfig { max_len: 2, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: TrainConfig = serde_json::from_str(r#"{"context_turns": 1, "head": "crf"}"#).unwrap();
        assert_eq!(ok.context_turns, 1);
        assert_eq!(ok.head, HeadKind::Crf);
        assert_eq!(ok.batch_size, 4);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"learning_rate": 1.0}"#).is_err());
    }
}
