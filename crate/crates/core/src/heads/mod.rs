//! Classification heads over pooled window embeddings.
//!
//! The default head is a single linear layer applied to each window
//! independently. The recurrent and CRF heads consume all classifiable
//! windows of one dialogue in order and exist for ablation runs.

mod crf;
mod linear;
mod sequence;

use std::fmt;
use std::str::FromStr;

use candle_core::{DType, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::corpus::LabelId;
use crate::encoder::{Initializer, ParamStore};
use crate::error::{Error, Result};

pub use crf::{crf_log_partition, crf_negative_log_likelihood, crf_nll_tensor, crf_sequence_score, crf_viterbi, CrfParameters};
pub use linear::{linear_logits, log_softmax, log_sum_exp, predict, softmax, LinearHead};
pub use sequence::{sequence_head_forward, SequenceHead, SequenceHeadConfig, SequenceKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    #[default]
    Linear,
    Rnn,
    Lstm,
    #[serde(rename = "bilstm")]
    BiLstm,
    Crf,
}

impl HeadKind {
    /// True when the head consumes whole dialogues rather than single windows.
    pub fn is_sequence_level(self) -> bool {
        self != HeadKind::Linear
    }

    pub fn sequence_kind(self) -> Option<SequenceKind> {
        match self {
            HeadKind::Rnn => Some(SequenceKind::Rnn),
            HeadKind::Lstm => Some(SequenceKind::Lstm),
            HeadKind::BiLstm => Some(SequenceKind::BiLstm),
            HeadKind::Linear | HeadKind::Crf => None,
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Linear => "linear",
            HeadKind::Rnn => "rnn",
            HeadKind::Lstm => "lstm",
            HeadKind::BiLstm => "bilstm",
            HeadKind::Crf => "crf",
        })
    }
}

impl FromStr for HeadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(HeadKind::Linear),
            "rnn" => Ok(HeadKind::Rnn),
            "lstm" => Ok(HeadKind::Lstm),
            "bilstm" => Ok(HeadKind::BiLstm),
            "crf" => Ok(HeadKind::Crf),
            _ => Err(Error::InvalidArgument(format!("unknown head kind '{s}'"))),
        }
    }
}

/// Shapes and kind of a head; persisted in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadSpec {
    pub kind: HeadKind,
    pub input_dim: usize,
    pub num_labels: usize,
    #[serde(default)]
    pub sequence: Option<SequenceHeadConfig>,
}

impl HeadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_labels == 0 {
            return Err(Error::Config("head dimensions must be positive".into()));
        }
        match (self.kind.sequence_kind(), &self.sequence) {
            (Some(kind), Some(cfg)) if cfg.kind == kind => cfg.validate(self.num_labels),
            (Some(kind), _) => Err(Error::Config(format!("{kind} head needs a matching sequence config"))),
            (None, None) => Ok(()),
            (None, Some(_)) => Err(Error::Config(format!("{} head takes no sequence config", self.kind))),
        }
    }

    fn has_linear(&self) -> bool {
        self.sequence.is_none_or(|s| s.linear_after)
    }

    fn linear_input(&self) -> usize {
        self.sequence.map_or(self.input_dim, |s| s.output_dim())
    }
}

/// Trainable head whose parameters live in a [`ParamStore`] under `head.`.
pub struct ClassifierHead {
    spec: HeadSpec,
    linear: Option<(Tensor, Tensor)>,
    sequence: Option<SequenceHead>,
    crf: Option<(Tensor, Tensor, Tensor)>,
}

impl ClassifierHead {
    /// Fresh parameters: linear weights uniform in `±1/sqrt(fan_in)`, bias
    /// zero; CRF scores uniform in `±0.1`.
    pub fn init(spec: HeadSpec, store: &mut ParamStore, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut init = Initializer::new(seed);
        if let Some(cfg) = spec.sequence {
            SequenceHead::init(cfg, spec.input_dim, store, &mut init)?;
        }
        if spec.has_linear() {
            let d = spec.linear_input();
            store.insert("head.linear.weight", init.fan_in_uniform(&[spec.num_labels, d], d)?)?;
            store.insert("head.linear.bias", Initializer::zeros(&[spec.num_labels])?)?;
        }
        if spec.kind == HeadKind::Crf {
            let k = spec.num_labels;
            store.insert("head.crf.transitions", init.uniform(&[k, k], 0.1)?)?;
            store.insert("head.crf.start", init.uniform(&[k], 0.1)?)?;
            store.insert("head.crf.end", init.uniform(&[k], 0.1)?)?;
        }
        Self::from_store(spec, store)
    }

    pub fn from_store(spec: HeadSpec, store: &ParamStore) -> Result<Self> {
        spec.validate()?;
        let linear = if spec.has_linear() {
            Some((store.get("head.linear.weight")?, store.get("head.linear.bias")?))
        } else {
            None
        };
        let sequence = match spec.sequence {
            Some(cfg) => Some(SequenceHead::from_store(cfg, store)?),
            None => None,
        };
        let crf = if spec.kind == HeadKind::Crf {
            Some((
                store.get("head.crf.transitions")?,
                store.get("head.crf.start")?,
                store.get("head.crf.end")?,
            ))
        } else {
            None
        };
        Ok(Self {
            spec,
            linear,
            sequence,
            crf,
        })
    }

    pub fn spec(&self) -> &HeadSpec {
        &self.spec
    }

    /// `[N, D]` pooled embeddings to `[N, K]` logits (CRF: emissions). For
    /// sequence-level heads the rows must be one dialogue in turn order.
    pub fn logits(&self, pooled: &Tensor) -> Result<Tensor> {
        let (_, d) = pooled.dims2()?;
        if d != self.spec.input_dim {
            return Err(Error::Shape(format!("pooled width {d} != head input {}", self.spec.input_dim)));
        }
        let mut x = match &self.sequence {
            Some(seq) => seq.forward(pooled)?,
            None => pooled.clone(),
        };
        if let Some((w, b)) = &self.linear {
            x = x.matmul(&w.t()?)?.broadcast_add(b)?;
        }
        Ok(x)
    }

    /// Training loss: mean cross-entropy, or the CRF negative log-likelihood.
    pub fn loss(&self, pooled: &Tensor, labels: &[LabelId]) -> Result<Tensor> {
        let logits = self.logits(pooled)?;
        match &self.crf {
            Some((trans, start, end)) => crf_nll_tensor(&logits, labels, trans, start, end),
            None => cross_entropy(&logits, labels),
        }
    }

    /// Predicted labels for the rows of `pooled`.
    pub fn decode(&self, pooled: &Tensor) -> Result<Vec<LabelId>> {
        let logits = self.logits(pooled)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
        match self.crf_parameters()? {
            Some(params) => Ok(crf_viterbi(&logits, &params)?.0),
            None => logits.iter().map(|row| predict(row)).collect(),
        }
    }

    /// Plain copy of the linear layer, if the head has one.
    pub fn linear_head(&self) -> Result<Option<LinearHead>> {
        match &self.linear {
            Some((w, b)) => Ok(Some(LinearHead::new(
                w.to_dtype(DType::F64)?.to_vec2()?,
                b.to_dtype(DType::F64)?.to_vec1()?,
            )?)),
            None => Ok(None),
        }
    }

    pub fn crf_parameters(&self) -> Result<Option<CrfParameters>> {
        match &self.crf {
            Some((t, s, e)) => Ok(Some(CrfParameters {
                transitions: t.to_dtype(DType::F64)?.to_vec2()?,
                start_scores: s.to_dtype(DType::F64)?.to_vec1()?,
                end_scores: e.to_dtype(DType::F64)?.to_vec1()?,
            })),
            None => Ok(None),
        }
    }
}

/// Mean over rows of `-log softmax(logits)[gold]`.
pub fn cross_entropy(logits: &Tensor, labels: &[LabelId]) -> Result<Tensor> {
    let (n, k) = logits.dims2()?;
    if n == 0 || labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::OutOfRange { index: bad, len: k });
    }
    let max = logits.max_keepdim(D::Minus1)?.detach();
    let shifted = logits.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    let log_probs = shifted.broadcast_sub(&lse)?;
    let mut onehot = vec![0f64; n * k];
    for (i, &y) in labels.iter().enumerate() {
        onehot[i * k + y] = 1.0;
    }
    let onehot = Tensor::from_vec(onehot, (n, k), logits.device())?.to_dtype(logits.dtype())?;
    Ok((log_probs.mul(&onehot)?.sum_all()?.neg()? / n as f64)?)
}
