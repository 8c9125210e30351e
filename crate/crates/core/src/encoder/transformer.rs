//! Post-layer-norm transformer encoder with RoBERTa/BERT parameter layout.
//!
//! Parameter names follow the Hugging Face layout without the model prefix
//! (`embeddings.word_embeddings.weight`,
//! `encoder.layer.{i}.attention.self.query.weight`, ...), so pre-trained
//! safetensors checkpoints load directly.

use std::fs;
use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{load_safetensors, Initializer, ParamStore};
use super::PaddedBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub max_positions: usize,
    pub type_vocab_size: usize,
    /// Added to every position index (RoBERTa reserves `pad_id + 1` slots).
    pub position_offset: usize,
    pub layer_norm_eps: f64,
    pub dropout: f64,
}

impl EncoderConfig {
    /// Small encoder for desk-scale runs: 2 layers, hidden size 16.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden_size: 16,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 64,
            max_positions: 512,
            type_vocab_size: 1,
            position_offset: 0,
            layer_norm_eps: 1e-12,
            dropout: 0.0,
        }
    }

    /// Reads a Hugging Face `config.json` (BERT or RoBERTa family).
    pub fn from_hf_config(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Hf {
            model_type: Option<String>,
            vocab_size: usize,
            hidden_size: usize,
            num_hidden_layers: usize,
            num_attention_heads: usize,
            intermediate_size: usize,
            max_position_embeddings: usize,
            #[serde(default = "one")]
            type_vocab_size: usize,
            #[serde(default = "eps")]
            layer_norm_eps: f64,
            #[serde(default)]
            hidden_dropout_prob: f64,
            #[serde(default)]
            pad_token_id: Option<usize>,
            #[serde(default)]
            hidden_act: Option<String>,
        }
        fn one() -> usize {
            1
        }
        fn eps() -> f64 {
            1e-12
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let hf: Hf = serde_json::from_str(&text)?;
        if let Some(act) = hf.hidden_act.as_deref() {
            if act != "gelu" {
                return Err(Error::Config(format!("unsupported hidden_act '{act}' (only gelu)")));
            }
        }
        let roberta = matches!(hf.model_type.as_deref(), Some("roberta" | "xlm-roberta" | "camembert"));
        Ok(Self {
            vocab_size: hf.vocab_size,
            hidden_size: hf.hidden_size,
            num_layers: hf.num_hidden_layers,
            num_heads: hf.num_attention_heads,
            intermediate_size: hf.intermediate_size,
            max_positions: hf.max_position_embeddings,
            type_vocab_size: hf.type_vocab_size,
            position_offset: if roberta { hf.pad_token_id.unwrap_or(1) + 1 } else { 0 },
            layer_norm_eps: hf.layer_norm_eps,
            dropout: hf.hidden_dropout_prob,
        })
    }

    /// Longest input the position table supports.
    pub fn max_input_len(&self) -> usize {
        self.max_positions.saturating_sub(self.position_offset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_layers == 0 || self.num_heads == 0 {
            return Err(Error::Config("encoder sizes must be positive".into()));
        }
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "hidden_size {} not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Every parameter name with its shape.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.hidden_size;
        let i = self.intermediate_size;
        let mut out = vec![
            ("embeddings.word_embeddings.weight".to_string(), vec![self.vocab_size, h]),
            ("embeddings.position_embeddings.weight".to_string(), vec![self.max_positions, h]),
            ("embeddings.token_type_embeddings.weight".to_string(), vec![self.type_vocab_size, h]),
            ("embeddings.LayerNorm.weight".to_string(), vec![h]),
            ("embeddings.LayerNorm.bias".to_string(), vec![h]),
        ];
        for l in 0..self.num_layers {
            let p = format!("encoder.layer.{l}");
            for (name, shape) in [
                ("attention.self.query.weight", vec![h, h]),
                ("attention.self.query.bias", vec![h]),
                ("attention.self.key.weight", vec![h, h]),
                ("attention.self.key.bias", vec![h]),
                ("attention.self.value.weight", vec![h, h]),
                ("attention.self.value.bias", vec![h]),
                ("attention.output.dense.weight", vec![h, h]),
                ("attention.output.dense.bias", vec![h]),
                ("attention.output.LayerNorm.weight", vec![h]),
                ("attention.output.LayerNorm.bias", vec![h]),
                ("intermediate.dense.weight", vec![i, h]),
                ("intermediate.dense.bias", vec![i]),
                ("output.dense.weight", vec![h, i]),
                ("output.dense.bias", vec![h]),
                ("output.LayerNorm.weight", vec![h]),
                ("output.LayerNorm.bias", vec![h]),
            ] {
                out.push((format!("{p}.{name}"), shape));
            }
        }
        out
    }
}

/// Layer index used for depth-wise learning rates: 0 for embeddings,
/// `l + 1` for transformer layer `l`. `None` for non-encoder names.
pub fn encoder_layer_index(name: &str) -> Option<usize> {
    if name.starts_with("embeddings.") {
        return Some(0);
    }
    let rest = name.strip_prefix("encoder.layer.")?;
    let idx: usize = rest.split('.').next()?.parse().ok()?;
    Some(idx + 1)
}

/// Seeded inverted dropout.
pub struct Dropout {
    p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Self {
        Self {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn apply(&mut self, x: &Tensor) -> Result<Tensor> {
        if self.p <= 0.0 {
            return Ok(x.clone());
        }
        let scale = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> = (0..x.elem_count())
            .map(|_| if self.rng.random::<f64>() < self.p { 0.0 } else { scale })
            .collect();
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
        Ok(x.mul(&mask)?)
    }
}

struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    fn load(store: &ParamStore, prefix: &str) -> Result<Self> {
        Ok(Self {
            weight: store.get(&format!("{prefix}.weight"))?,
            bias: store.get(&format!("{prefix}.bias"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.broadcast_matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    fn load(store: &ParamStore, prefix: &str, eps: f64) -> Result<Self> {
        Ok(Self {
            weight: store.get(&format!("{prefix}.weight"))?,
            bias: store.get(&format!("{prefix}.bias"))?,
            eps,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

/// Softmax over the last dimension with the max-shift trick.
pub(crate) fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    out_norm: LayerNorm,
}

pub struct TransformerEncoder {
    config: EncoderConfig,
    word: Tensor,
    position: Tensor,
    token_type: Tensor,
    emb_norm: LayerNorm,
    layers: Vec<Layer>,
    device: Device,
    dtype: DType,
}

impl TransformerEncoder {
    /// Registers freshly initialized parameters in `store` and builds the
    /// encoder over them. Weights ~ N(0, 0.02), biases 0, layer norms 1/0.
    pub fn init(config: EncoderConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Initializer::new(seed);
        for (name, shape) in config.parameter_shapes() {
            let t = if name.contains("LayerNorm.weight") {
                Initializer::ones(&shape)?
            } else if name.contains("LayerNorm.bias") || name.ends_with(".bias") {
                Initializer::zeros(&shape)?
            } else {
                init.normal(&shape, 0.02)?
            };
            store.insert(name, t)?;
        }
        Self::from_store(config, store)
    }

    /// Loads a pre-trained checkpoint directory holding `config.json` and
    /// `model.safetensors`; a leading `roberta.`/`bert.` prefix is stripped
    /// and unrelated tensors (pooler, LM head) are ignored.
    pub fn load_pretrained(dir: &Path, store: &mut ParamStore) -> Result<Self> {
        let config = EncoderConfig::from_hf_config(&dir.join("config.json"))?;
        config.validate()?;
        let raw = load_safetensors(&dir.join("model.safetensors"))?;
        let stripped: std::collections::BTreeMap<String, Tensor> = raw
            .into_iter()
            .map(|(k, v)| {
                let k = ["roberta.", "bert."]
                    .iter()
                    .find_map(|p| k.strip_prefix(p))
                    .map(str::to_string)
                    .unwrap_or(k);
                (k, v)
            })
            .collect();
        Self::from_tensors(config, &stripped, store)
    }

    /// Builds the encoder from named tensors, registering them in `store`.
    pub fn from_tensors(
        config: EncoderConfig,
        tensors: &std::collections::BTreeMap<String, Tensor>,
        store: &mut ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let mut missing = Vec::new();
        for (name, shape) in config.parameter_shapes() {
            match tensors.get(&name) {
                Some(t) if t.dims() == shape.as_slice() => {
                    store.insert(name, t.clone())?;
                }
                Some(t) => {
                    return Err(Error::Shape(format!(
                        "parameter '{name}': expected {shape:?}, found {:?}",
                        t.dims()
                    )))
                }
                None => missing.push(name),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!(
                "{} encoder parameters missing, first: '{}'",
                missing.len(),
                missing[0]
            )));
        }
        Self::from_store(config, store)
    }

    fn from_store(config: EncoderConfig, store: &ParamStore) -> Result<Self> {
        let eps = config.layer_norm_eps;
        let layers = (0..config.num_layers)
            .map(|l| {
                let p = format!("encoder.layer.{l}");
                Ok(Layer {
                    query: Linear::load(store, &format!("{p}.attention.self.query"))?,
                    key: Linear::load(store, &format!("{p}.attention.self.key"))?,
                    value: Linear::load(store, &format!("{p}.attention.self.value"))?,
                    attn_out: Linear::load(store, &format!("{p}.attention.output.dense"))?,
                    attn_norm: LayerNorm::load(store, &format!("{p}.attention.output.LayerNorm"), eps)?,
                    intermediate: Linear::load(store, &format!("{p}.intermediate.dense"))?,
                    output: Linear::load(store, &format!("{p}.output.dense"))?,
                    out_norm: LayerNorm::load(store, &format!("{p}.output.LayerNorm"), eps)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            word: store.get("embeddings.word_embeddings.weight")?,
            position: store.get("embeddings.position_embeddings.weight")?,
            token_type: store.get("embeddings.token_type_embeddings.weight")?,
            emb_norm: LayerNorm::load(store, "embeddings.LayerNorm", eps)?,
            layers,
            device: store.device().clone(),
            dtype: store.dtype(),
            config,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Hidden states of every transformer layer, each `[batch, seq, hidden]`.
    /// `dropout` is `None` in evaluation mode, which is deterministic.
    pub fn forward(&self, batch: &PaddedBatch, mut dropout: Option<&mut Dropout>) -> Result<Vec<Tensor>> {
        let (b, t) = batch.ids.dims2()?;
        if t > self.config.max_input_len() {
            return Err(Error::InvalidArgument(format!(
                "input length {t} exceeds encoder limit {}",
                self.config.max_input_len()
            )));
        }
        if let Some(bad) = batch.max_token_id().filter(|&id| id as usize >= self.config.vocab_size) {
            return Err(Error::InvalidArgument(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let h = self.config.hidden_size;
        let nh = self.config.num_heads;
        let dh = h / nh;

        let words = self.word.index_select(&batch.ids.flatten_all()?, 0)?.reshape((b, t, h))?;
        let off = self.config.position_offset as u32;
        let pos_ids = Tensor::arange(off, off + t as u32, &self.device)?;
        let pos = self.position.index_select(&pos_ids, 0)?;
        let tt = self.token_type.narrow(0, 0, 1)?;
        let mut x = words.broadcast_add(&pos)?.broadcast_add(&tt)?;
        x = self.emb_norm.forward(&x)?;
        if let Some(d) = dropout.as_deref_mut() {
            x = d.apply(&x)?;
        }

        // additive mask: 0 for real tokens, -1e9 for padding; [b, 1, 1, t]
        let mask_bias = ((batch.mask.clone() - 1.0)? * 1e9)?.reshape((b, 1, 1, t))?;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut outputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let heads = |y: Tensor| -> Result<Tensor> { Ok(y.reshape((b, t, nh, dh))?.transpose(1, 2)?.contiguous()?) };
            let q = heads(layer.query.forward(&x)?)?;
            let k = heads(layer.key.forward(&x)?)?;
            let v = heads(layer.value.forward(&x)?)?;
            let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?.broadcast_add(&mask_bias)?;
            let probs = softmax_last(&scores)?;
            let ctx = probs.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, t, h))?;
            let mut attn = layer.attn_out.forward(&ctx)?;
            if let Some(d) = dropout.as_deref_mut() {
                attn = d.apply(&attn)?;
            }
            let y = layer.attn_norm.forward(&(attn + &x)?)?;
            let inner = layer.intermediate.forward(&y)?.gelu_erf()?;
            let mut out = layer.output.forward(&inner)?;
            if let Some(d) = dropout.as_deref_mut() {
                out = d.apply(&out)?;
            }
            x = layer.out_norm.forward(&(out + &y)?)?;
            outputs.push(x.clone());
        }
        Ok(outputs)
    }
}
