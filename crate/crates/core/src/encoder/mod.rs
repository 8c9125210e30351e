//! Transformer encoder backends, tokenizers and pooling.

mod params;
mod pooling;
mod tokenizer;
mod transformer;

use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::windowing::EncodedInput;

pub use params::{load_safetensors, Initializer, ParamStore, HEAD_PREFIX};
pub use pooling::{pool, pool_layers, PooledEmbedding, PoolingStrategy};
pub use tokenizer::{PretrainedTokenizer, Tokenizer, TokenizerContract, WordTokenizer, WORD_BEGIN, WORD_PAD, WORD_SEP, WORD_UNK};
pub use transformer::{encoder_layer_index, Dropout, EncoderConfig, TransformerEncoder};

/// A text encoder producing per-layer hidden states for padded batches.
pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;
    fn num_layers(&self) -> usize;
    fn hidden_size(&self) -> usize;
    /// Longest accepted input in tokens.
    fn max_len(&self) -> usize;
    /// Hidden states of every layer, each `[batch, seq, hidden]`.
    fn forward(&self, batch: &PaddedBatch, dropout: Option<&mut Dropout>) -> Result<Vec<Tensor>>;
}

impl EncoderBackend for TransformerEncoder {
    fn name(&self) -> &str {
        "transformer"
    }

    fn num_layers(&self) -> usize {
        self.config().num_layers
    }

    fn hidden_size(&self) -> usize {
        self.config().hidden_size
    }

    fn max_len(&self) -> usize {
        self.config().max_input_len()
    }

    fn forward(&self, batch: &PaddedBatch, dropout: Option<&mut Dropout>) -> Result<Vec<Tensor>> {
        TransformerEncoder::forward(self, batch, dropout)
    }
}

/// Which encoder to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Randomly initialized small encoder with a word-level tokenizer fitted
    /// on the training corpus.
    Tiny {
        #[serde(default = "tiny_layers")]
        num_layers: usize,
        #[serde(default = "tiny_hidden")]
        hidden_size: usize,
        #[serde(default = "tiny_heads")]
        num_heads: usize,
        #[serde(default = "tiny_intermediate")]
        intermediate_size: usize,
        #[serde(default)]
        dropout: f64,
    },
    /// Pre-trained checkpoint directory with `config.json`,
    /// `model.safetensors` and `tokenizer.json`.
    Pretrained { checkpoint: PathBuf },
}

fn tiny_layers() -> usize {
    2
}
fn tiny_hidden() -> usize {
    16
}
fn tiny_heads() -> usize {
    2
}
fn tiny_intermediate() -> usize {
    64
}

impl BackendSpec {
    pub fn tiny() -> Self {
        BackendSpec::Tiny {
            num_layers: tiny_layers(),
            hidden_size: tiny_hidden(),
            num_heads: tiny_heads(),
            intermediate_size: tiny_intermediate(),
            dropout: 0.0,
        }
    }

    pub fn pretrained(checkpoint: impl Into<PathBuf>) -> Self {
        BackendSpec::Pretrained {
            checkpoint: checkpoint.into(),
        }
    }

    pub fn tiny_config(&self, vocab_size: usize) -> Option<EncoderConfig> {
        match *self {
            BackendSpec::Tiny {
                num_layers,
                hidden_size,
                num_heads,
                intermediate_size,
                dropout,
            } => Some(EncoderConfig {
                num_layers,
                hidden_size,
                num_heads,
                intermediate_size,
                dropout,
                ..EncoderConfig::tiny(vocab_size)
            }),
            BackendSpec::Pretrained { .. } => None,
        }
    }

    /// Loads the tokenizer for a pre-trained checkpoint.
    pub fn pretrained_tokenizer(dir: &Path) -> Result<PretrainedTokenizer> {
        PretrainedTokenizer::from_file(&dir.join("tokenizer.json"))
    }
}

/// Inputs padded to a common length.
#[derive(Debug, Clone)]
pub struct PaddedBatch {
    /// `[batch, seq]` token ids.
    pub ids: Tensor,
    /// `[batch, seq]` 1.0 for real tokens, 0.0 for padding.
    pub mask: Tensor,
    pub masks: Vec<Vec<u8>>,
    pub lengths: Vec<usize>,
    max_id: Option<u32>,
}

impl PaddedBatch {
    pub fn new(inputs: &[&EncodedInput], pad_id: u32, device: &Device, dtype: DType) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let t = inputs.iter().map(|x| x.len()).max().unwrap_or(0);
        if t == 0 {
            return Err(Error::InvalidArgument("batch of empty inputs".into()));
        }
        let b = inputs.len();
        let mut ids = Vec::with_capacity(b * t);
        let mut mask = Vec::with_capacity(b * t);
        let mut masks = Vec::with_capacity(b);
        for x in inputs {
            if x.attention_mask.len() != x.token_ids.len() {
                return Err(Error::Shape("attention mask and token ids differ in length".into()));
            }
            let pad = t - x.len();
            ids.extend_from_slice(&x.token_ids);
            ids.extend(std::iter::repeat_n(pad_id, pad));
            let mut row = x.attention_mask.clone();
            row.extend(std::iter::repeat_n(0u8, pad));
            mask.extend(row.iter().map(|&m| m as f64));
            masks.push(row);
        }
        let max_id = ids.iter().copied().max();
        Ok(Self {
            ids: Tensor::from_vec(ids, (b, t), device)?,
            mask: Tensor::from_vec(mask, (b, t), device)?.to_dtype(dtype)?,
            masks,
            lengths: inputs.iter().map(|x| x.len()).collect(),
            max_id,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn seq_len(&self) -> usize {
        self.masks.first().map_or(0, Vec::len)
    }

    pub(crate) fn max_token_id(&self) -> Option<u32> {
        self.max_id
    }
}

/// Per-input hidden states, padded to the batch length.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// One `[seq, hidden]` matrix per layer.
    pub layers: Vec<Tensor>,
    pub hidden_size: usize,
    /// 1 for real tokens, 0 for padding.
    pub mask: Vec<u8>,
}

impl EncoderOutput {
    pub fn num_tokens(&self) -> Result<usize> {
        let first = self.layers.first().ok_or_else(|| Error::Shape("no layers".into()))?;
        Ok(first.dims2()?.0)
    }

    /// Layer `layer` (0-based) as nested rows.
    pub fn layer_rows(&self, layer: usize) -> Result<Vec<Vec<f64>>> {
        let l = self.layers.get(layer).ok_or(Error::OutOfRange {
            index: layer,
            len: self.layers.len(),
        })?;
        Ok(l.to_dtype(DType::F64)?.to_vec2::<f64>()?)
    }
}

/// Evaluation-mode encoding of a batch; inputs are padded to the longest.
pub fn encode_batch(inputs: &[EncodedInput], backend: &TransformerEncoder, pad_id: u32) -> Result<Vec<EncoderOutput>> {
    if let Some(x) = inputs.iter().find(|x| x.len() > backend.max_len()) {
        return Err(Error::InvalidArgument(format!(
            "input of {} tokens exceeds backend limit {}",
            x.len(),
            backend.max_len()
        )));
    }
    let refs: Vec<&EncodedInput> = inputs.iter().collect();
    let batch = PaddedBatch::new(&refs, pad_id, backend.device(), backend.dtype())?;
    let layers = backend.forward(&batch, None)?;
    (0..inputs.len())
        .map(|i| {
            Ok(EncoderOutput {
                layers: layers
                    .iter()
                    .map(|l| Ok(l.get(i)?))
                    .collect::<Result<Vec<_>>>()?,
                hidden_size: backend.hidden_size(),
                mask: batch.masks[i].clone(),
            })
        })
        .collect()
}
