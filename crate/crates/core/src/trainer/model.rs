use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor};

use crate::corpus::{Corpus, Dialogue, EmotionLabelSet, LabelId, Split};
use crate::encoder::{
    pool_layers, BackendSpec, Dropout, EncoderConfig, PaddedBatch, ParamStore, PoolingStrategy, Tokenizer,
    TokenizerContract, TransformerEncoder, WordTokenizer,
};
use crate::error::{Error, Result};
use crate::heads::{ClassifierHead, HeadSpec, SequenceHeadConfig};
use crate::windowing::{assemble, build_window, AssembleOptions, EncodedInput};

use super::TrainConfig;

/// Encoder, head and tokenizer sharing one parameter store.
pub struct ErcModel {
    encoder: TransformerEncoder,
    head: ClassifierHead,
    store: ParamStore,
    tokenizer: Tokenizer,
    label_set: EmotionLabelSet,
    pooling: PoolingStrategy,
    options: AssembleOptions,
    eval_batch_size: usize,
}

/// Gold and predicted labels over the labeled turns of a split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub dialogue_ids: Vec<String>,
    pub turn_indices: Vec<usize>,
    pub gold: Vec<LabelId>,
    pub pred: Vec<LabelId>,
}

impl ErcModel {
    /// Fresh model for `corpus`. The tiny backend fits its word vocabulary
    /// on the training split.
    pub fn build(corpus: &Corpus, config: &TrainConfig, backend: &BackendSpec) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(Device::Cpu, config.precision.dtype());
        let (encoder, tokenizer) = match backend {
            BackendSpec::Tiny { .. } => {
                let texts = corpus.split(Split::Train).flat_map(|d| d.turns.iter().map(|u| u.text.as_str()));
                let tokenizer = WordTokenizer::fit(texts);
                let enc_config = backend
                    .tiny_config(tokenizer.vocab_size())
                    .ok_or_else(|| Error::Config("tiny backend without config".into()))?;
                let encoder = TransformerEncoder::init(enc_config, &mut store, config.seed)?;
                (encoder, Tokenizer::Word(tokenizer))
            }
            BackendSpec::Pretrained { checkpoint } => {
                let tokenizer = BackendSpec::pretrained_tokenizer(checkpoint)?;
                let encoder = TransformerEncoder::load_pretrained(checkpoint, &mut store)?;
                (encoder, Tokenizer::Pretrained(tokenizer))
            }
        };
        let spec = head_spec(config, encoder.config(), corpus.label_set().len())?;
        let head = ClassifierHead::init(spec, &mut store, config.seed.wrapping_add(1))?;
        Self::assemble_parts(encoder, head, store, tokenizer, corpus.label_set().clone(), config)
    }

    /// Rebuilds a model from stored weights.
    pub fn from_weights(
        encoder_config: EncoderConfig,
        head_spec: HeadSpec,
        weights: &BTreeMap<String, Tensor>,
        tokenizer: Tokenizer,
        label_set: EmotionLabelSet,
        config: &TrainConfig,
    ) -> Result<Self> {
        if head_spec.num_labels != label_set.len() {
            return Err(Error::LabelSetMismatch(format!(
                "head has {} outputs, label set '{}' has {} labels",
                head_spec.num_labels,
                label_set.name(),
                label_set.len()
            )));
        }
        let mut store = ParamStore::new(Device::Cpu, config.precision.dtype());
        let encoder = TransformerEncoder::from_tensors(encoder_config, weights, &mut store)?;
        for (name, t) in weights.iter().filter(|(n, _)| ParamStore::is_head(n)) {
            store.insert(name.clone(), t.clone())?;
        }
        let head = ClassifierHead::from_store(head_spec, &store)?;
        Self::assemble_parts(encoder, head, store, tokenizer, label_set, config)
    }

    fn assemble_parts(
        encoder: TransformerEncoder,
        head: ClassifierHead,
        store: ParamStore,
        tokenizer: Tokenizer,
        label_set: EmotionLabelSet,
        config: &TrainConfig,
    ) -> Result<Self> {
        config.pooling.validate(encoder.config().num_layers)?;
        let options = AssembleOptions {
            max_len: config.max_len.min(encoder.config().max_input_len()),
            speaker_prefix: config.speaker_prefix,
        };
        Ok(Self {
            encoder,
            head,
            store,
            tokenizer,
            label_set,
            pooling: config.pooling,
            options,
            eval_batch_size: config.eval_batch_size,
        })
    }

    pub fn encoder(&self) -> &TransformerEncoder {
        &self.encoder
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn label_set(&self) -> &EmotionLabelSet {
        &self.label_set
    }

    pub fn assemble_options(&self) -> AssembleOptions {
        self.options
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    /// Window for turn `i` of `dialogue` with `c` context turns, tokenized.
    pub fn encode_turn(&self, dialogue: &Dialogue, i: usize, c: usize) -> Result<EncodedInput> {
        assemble(&build_window(dialogue, i, c)?, &self.tokenizer, self.options)
    }

    /// `[B, D]` pooled embeddings. With `detach_encoder` no gradient reaches
    /// the encoder.
    pub fn pooled(&self, inputs: &[&EncodedInput], dropout: Option<&mut Dropout>, detach_encoder: bool) -> Result<Tensor> {
        let batch = PaddedBatch::new(inputs, self.tokenizer.pad_token_id(), self.store.device(), self.store.dtype())?;
        let layers = self.encoder.forward(&batch, dropout)?;
        let pooled = pool_layers(&layers, &batch.mask, self.pooling)?;
        Ok(if detach_encoder { pooled.detach() } else { pooled })
    }

    /// Mean loss over training units. A unit is one window for the linear
    /// head and the labeled windows of one dialogue for sequence heads.
    pub fn batch_loss(
        &self,
        units: &[&[(EncodedInput, LabelId)]],
        mut dropout: Option<&mut Dropout>,
        detach_encoder: bool,
    ) -> Result<Tensor> {
        if units.is_empty() || units.iter().any(|u| u.is_empty()) {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        if self.head.spec().kind.is_sequence_level() {
            let mut total: Option<Tensor> = None;
            for unit in units {
                let inputs: Vec<&EncodedInput> = unit.iter().map(|(x, _)| x).collect();
                let labels: Vec<LabelId> = unit.iter().map(|(_, y)| *y).collect();
                let pooled = self.pooled(&inputs, dropout.as_deref_mut(), detach_encoder)?;
                let loss = self.head.loss(&pooled, &labels)?;
                total = Some(match total {
                    Some(t) => (t + loss)?,
                    None => loss,
                });
            }
            let total = total.expect("non-empty batch");
            Ok((total / units.len() as f64)?)
        } else {
            let pairs: Vec<&(EncodedInput, LabelId)> = units.iter().flat_map(|u| u.iter()).collect();
            let inputs: Vec<&EncodedInput> = pairs.iter().map(|(x, _)| x).collect();
            let labels: Vec<LabelId> = pairs.iter().map(|(_, y)| *y).collect();
            let pooled = self.pooled(&inputs, dropout, detach_encoder)?;
            self.head.loss(&pooled, &labels)
        }
    }

    /// Predictions in evaluation mode. For sequence heads the inputs are
    /// treated as one dialogue in turn order.
    pub fn predict_inputs(&self, inputs: &[EncodedInput]) -> Result<Vec<LabelId>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let refs: Vec<&EncodedInput> = inputs.iter().collect();
        if self.head.spec().kind.is_sequence_level() {
            return self.head.decode(&self.pooled(&refs, None, true)?);
        }
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in refs.chunks(self.eval_batch_size) {
            out.extend(self.head.decode(&self.pooled(chunk, None, true)?)?);
        }
        Ok(out)
    }

    /// Predicted label for each turn index of `dialogue`, using `c` context turns.
    pub fn predict_turns(&self, dialogue: &Dialogue, indices: &[usize], c: usize) -> Result<Vec<LabelId>> {
        let inputs = indices
            .iter()
            .map(|&i| self.encode_turn(dialogue, i, c))
            .collect::<Result<Vec<_>>>()?;
        self.predict_inputs(&inputs)
    }

    /// Predictions for every labeled turn of `split`.
    pub fn evaluate(&self, corpus: &Corpus, split: Split, c: usize) -> Result<Predictions> {
        if corpus.label_set() != &self.label_set {
            return Err(Error::LabelSetMismatch(format!(
                "model uses '{}', corpus uses '{}'",
                self.label_set.name(),
                corpus.label_set().name()
            )));
        }
        let mut out = Predictions::default();
        let mut pending: Vec<EncodedInput> = Vec::new();
        for d in corpus.split(split) {
            let idx: Vec<usize> = d
                .turns
                .iter()
                .enumerate()
                .filter(|(_, u)| u.label.is_some())
                .map(|(i, _)| i)
                .collect();
            if idx.is_empty() {
                continue;
            }
            for &i in &idx {
                out.dialogue_ids.push(d.dialogue_id.clone());
                out.turn_indices.push(i);
                out.gold.push(d.turns[i].label.expect("filtered"));
            }
            if self.head.spec().kind.is_sequence_level() {
                out.pred.extend(self.predict_turns(d, &idx, c)?);
            } else {
                for &i in &idx {
                    pending.push(self.encode_turn(d, i, c)?);
                }
            }
        }
        if !pending.is_empty() {
            out.pred = self.predict_inputs(&pending)?;
        }
        Ok(out)
    }

    /// Values of every parameter, detached.
    pub fn weights(&self) -> Result<BTreeMap<String, Tensor>> {
        self.store.snapshot()
    }
}

pub(crate) fn head_spec(config: &TrainConfig, encoder: &EncoderConfig, num_labels: usize) -> Result<HeadSpec> {
    let sequence = config.head.sequence_kind().map(|kind| SequenceHeadConfig {
        kind,
        hidden_size: config.sequence_hidden_size.unwrap_or(encoder.hidden_size),
        linear_after: config.sequence_linear_after,
    });
    let spec = HeadSpec {
        kind: config.head,
        input_dim: config.pooling.output_dim(encoder.hidden_size),
        num_labels,
        sequence,
    };
    spec.validate()?;
    Ok(spec)
}
