//! Recurrent heads over the dialogue-ordered pooled embeddings.

use std::fmt;
use std::str::FromStr;

use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use crate::encoder::{Initializer, ParamStore, PooledEmbedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Rnn,
    Lstm,
    #[serde(rename = "bilstm")]
    BiLstm,
}

impl SequenceKind {
    fn gates(self) -> usize {
        match self {
            SequenceKind::Rnn => 1,
            SequenceKind::Lstm | SequenceKind::BiLstm => 4,
        }
    }

    pub fn is_causal(self) -> bool {
        !matches!(self, SequenceKind::BiLstm)
    }

    fn directions(self) -> usize {
        if self == SequenceKind::BiLstm {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SequenceKind::Rnn => "rnn",
            SequenceKind::Lstm => "lstm",
            SequenceKind::BiLstm => "bilstm",
        })
    }
}

impl FromStr for SequenceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnn" => Ok(SequenceKind::Rnn),
            "lstm" => Ok(SequenceKind::Lstm),
            "bilstm" => Ok(SequenceKind::BiLstm),
            _ => Err(Error::InvalidArgument(format!("unknown sequence head '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceHeadConfig {
    pub kind: SequenceKind,
    pub hidden_size: usize,
    /// When false the recurrent outputs are the logits and their width
    /// (hidden size, doubled for bilstm) must equal the label count.
    pub linear_after: bool,
}

impl SequenceHeadConfig {
    pub fn output_dim(&self) -> usize {
        self.hidden_size * self.kind.directions()
    }

    pub fn validate(&self, num_labels: usize) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(Error::Config("sequence head hidden size must be positive".into()));
        }
        if !self.linear_after && self.output_dim() != num_labels {
            return Err(Error::Config(format!(
                "{} head without a linear layer must output {num_labels} values, has {}",
                self.kind,
                self.output_dim()
            )));
        }
        Ok(())
    }
}

struct Cell {
    w_ih: Tensor,
    w_hh: Tensor,
    b_ih: Tensor,
    b_hh: Tensor,
}

/// Elman RNN, LSTM or bidirectional LSTM, one layer.
pub struct SequenceHead {
    config: SequenceHeadConfig,
    forward_cell: Cell,
    backward_cell: Option<Cell>,
}

const PREFIX: &str = "head.seq";

impl SequenceHead {
    /// Registers `head.seq.{fwd,bwd}.*` parameters, uniform in
    /// `±1/sqrt(hidden)`.
    pub fn init(config: SequenceHeadConfig, input_dim: usize, store: &mut ParamStore, init: &mut Initializer) -> Result<Self> {
        let g = config.kind.gates() * config.hidden_size;
        let h = config.hidden_size;
        for dir in Self::dir_names(config.kind) {
            store.insert(format!("{PREFIX}.{dir}.w_ih"), init.fan_in_uniform(&[g, input_dim], h)?)?;
            store.insert(format!("{PREFIX}.{dir}.w_hh"), init.fan_in_uniform(&[g, h], h)?)?;
            store.insert(format!("{PREFIX}.{dir}.b_ih"), init.fan_in_uniform(&[g], h)?)?;
            store.insert(format!("{PREFIX}.{dir}.b_hh"), init.fan_in_uniform(&[g], h)?)?;
        }
        Self::from_store(config, store)
    }

    pub fn from_store(config: SequenceHeadConfig, store: &ParamStore) -> Result<Self> {
        let cell = |dir: &str| -> Result<Cell> {
            Ok(Cell {
                w_ih: store.get(&format!("{PREFIX}.{dir}.w_ih"))?,
                w_hh: store.get(&format!("{PREFIX}.{dir}.w_hh"))?,
                b_ih: store.get(&format!("{PREFIX}.{dir}.b_ih"))?,
                b_hh: store.get(&format!("{PREFIX}.{dir}.b_hh"))?,
            })
        };
        Ok(Self {
            config,
            forward_cell: cell("fwd")?,
            backward_cell: if config.kind == SequenceKind::BiLstm {
                Some(cell("bwd")?)
            } else {
                None
            },
        })
    }

    fn dir_names(kind: SequenceKind) -> &'static [&'static str] {
        if kind == SequenceKind::BiLstm {
            &["fwd", "bwd"]
        } else {
            &["fwd"]
        }
    }

    pub fn config(&self) -> &SequenceHeadConfig {
        &self.config
    }

    /// `[T, D]` inputs to `[T, output_dim]` hidden states.
    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let (t_len, _) = xs.dims2()?;
        if t_len == 0 {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        let fwd = self.run(&self.forward_cell, xs, false)?;
        match &self.backward_cell {
            Some(cell) => Ok(Tensor::cat(&[fwd, self.run(cell, xs, true)?], 1)?),
            None => Ok(fwd),
        }
    }

    fn run(&self, cell: &Cell, xs: &Tensor, reverse: bool) -> Result<Tensor> {
        let (t_len, _) = xs.dims2()?;
        let h_size = self.config.hidden_size;
        // input projections for every step at once: [T, G]
        let proj = xs.matmul(&cell.w_ih.t()?)?.broadcast_add(&cell.b_ih)?;
        let zeros = Tensor::zeros((1, h_size), xs.dtype(), xs.device())?;
        let mut h = zeros.clone();
        let mut c = zeros;
        let mut outs: Vec<Tensor> = Vec::with_capacity(t_len);
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..t_len).rev())
        } else {
            Box::new(0..t_len)
        };
        for t in order {
            let gates = proj
                .narrow(0, t, 1)?
                .add(&h.matmul(&cell.w_hh.t()?)?.broadcast_add(&cell.b_hh)?)?;
            match self.config.kind {
                SequenceKind::Rnn => {
                    h = gates.tanh()?;
                }
                SequenceKind::Lstm | SequenceKind::BiLstm => {
                    let chunk = |i: usize| gates.narrow(D::Minus1, i * h_size, h_size);
                    let i_g = sigmoid(&chunk(0)?)?;
                    let f_g = sigmoid(&chunk(1)?)?;
                    let g_g = chunk(2)?.tanh()?;
                    let o_g = sigmoid(&chunk(3)?)?;
                    c = (f_g.mul(&c)? + i_g.mul(&g_g)?)?;
                    h = o_g.mul(&c.tanh()?)?;
                }
            }
            outs.push(h.clone());
        }
        if reverse {
            outs.reverse();
        }
        Ok(Tensor::cat(&outs, 0)?)
    }
}

fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

/// Runs a sequence head over pooled embeddings of one dialogue, optionally
/// followed by a linear layer given as `(weight [K, H], bias [K])` tensors.
pub fn sequence_head_forward(
    pooled_seq: &[PooledEmbedding],
    head: &SequenceHead,
    linear: Option<(&Tensor, &Tensor)>,
) -> Result<Vec<Vec<f64>>> {
    let first = pooled_seq
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty sequence".into()))?;
    let d = first.len();
    if pooled_seq.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("pooled embeddings differ in length".into()));
    }
    let flat: Vec<f64> = pooled_seq.iter().flat_map(|p| p.vector.iter().copied()).collect();
    let dtype = head.forward_cell.w_ih.dtype();
    let device = head.forward_cell.w_ih.device();
    let xs = Tensor::from_vec(flat, (pooled_seq.len(), d), device)?.to_dtype(dtype)?;
    let mut out = head.forward(&xs)?;
    if let Some((w, b)) = linear {
        out = out.matmul(&w.t()?)?.broadcast_add(b)?;
    }
    Ok(out.to_dtype(candle_core::DType::F64)?.to_vec2::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn build(kind: SequenceKind, linear_after: bool, hidden: usize) -> (SequenceHead, ParamStore) {
        let mut store = ParamStore::new(Device::Cpu, DType::F64);
        let mut init = Initializer::new(11);
        let cfg = SequenceHeadConfig {
            kind,
            hidden_size: hidden,
            linear_after,
        };
        let head = SequenceHead::init(cfg, 4, &mut store, &mut init).unwrap();
        store
            .insert("head.linear.weight", init.fan_in_uniform(&[3, cfg.output_dim()], cfg.output_dim()).unwrap())
            .unwrap();
        store.insert("head.linear.bias", Initializer::zeros(&[3]).unwrap()).unwrap();
        (head, store)
    }

    fn seq(n: usize, seed: u64) -> Vec<PooledEmbedding> {
        let t = Initializer::new(seed).normal(&[n, 4], 1.0).unwrap().to_vec2::<f64>().unwrap();
        t.into_iter().map(|vector| PooledEmbedding { vector }).collect()
    }

    fn run(head: &SequenceHead, store: &ParamStore, xs: &[PooledEmbedding]) -> Vec<Vec<f64>> {
        let w = store.get("head.linear.weight").unwrap();
        let b = store.get("head.linear.bias").unwrap();
        sequence_head_forward(xs, head, Some((&w, &b))).unwrap()
    }

    #[test]
    fn shapes() {
        let (h, s) = build(SequenceKind::Rnn, true, 5);
        assert_eq!(run(&h, &s, &seq(1, 0)).len(), 1);
        let (h, s) = build(SequenceKind::BiLstm, true, 5);
        let out = run(&h, &s, &seq(3, 0));
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|r| r.len() == 3));
        assert!(sequence_head_forward(&[], &h, None).is_err());
    }

    #[test]
    fn causal_heads_ignore_the_future() {
        for kind in [SequenceKind::Rnn, SequenceKind::Lstm] {
            let (h, s) = build(kind, true, 6);
            let xs = seq(5, 1);
            let base = run(&h, &s, &xs);
            let mut perturbed = xs.clone();
            perturbed[3].vector.iter_mut().for_each(|v| *v += 2.5);
            let out = run(&h, &s, &perturbed);
            assert_eq!(&base[..3], &out[..3], "{kind}");
            assert_ne!(base[3], out[3]);
        }
    }

    #[test]
    fn bilstm_sees_the_future() {
        let (h, s) = build(SequenceKind::BiLstm, true, 6);
        let xs = seq(4, 2);
        let base = run(&h, &s, &xs);
        let mut perturbed = xs.clone();
        perturbed[3].vector[0] += 3.0;
        assert_ne!(base[0], run(&h, &s, &perturbed)[0]);
    }

    #[test]
    fn config_validation() {
        let cfg = SequenceHeadConfig {
            kind: SequenceKind::BiLstm,
            hidden_size: 4,
            linear_after: false,
        };
        assert!(cfg.validate(8).is_ok());
        assert!(cfg.validate(7).is_err());
        let zero = SequenceHeadConfig {
            hidden_size: 0,
            ..cfg
        };
        assert!(zero.validate(8).is_err());
    }
}
