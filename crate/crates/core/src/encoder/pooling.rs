use std::fmt;
use std::str::FromStr;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::EncoderOutput;
use crate::error::{Error, Result};

/// How an encoded window is reduced to one vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PoolingStrategy {
    /// First token of the last layer.
    #[default]
    ClsLast,
    /// Mask-aware mean over the last layer.
    Mean,
    /// Mask-aware max over the last layer.
    Max,
    /// First-token rows of the last `k` layers, outermost first.
    ConcatClsLastK(usize),
    /// `ClsLast` followed by `Mean`.
    ClsPlusMean,
}

impl PoolingStrategy {
    pub fn output_dim(self, hidden_size: usize) -> usize {
        match self {
            PoolingStrategy::ClsLast | PoolingStrategy::Mean | PoolingStrategy::Max => hidden_size,
            PoolingStrategy::ConcatClsLastK(k) => k * hidden_size,
            PoolingStrategy::ClsPlusMean => 2 * hidden_size,
        }
    }

    /// Checks the strategy against an encoder depth.
    pub fn validate(self, num_layers: usize) -> Result<()> {
        if let PoolingStrategy::ConcatClsLastK(k) = self {
            if k == 0 || k > num_layers {
                return Err(Error::InvalidArgument(format!(
                    "concat_cls_last_k needs 1 <= k <= {num_layers}, got {k}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PoolingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolingStrategy::ClsLast => f.write_str("cls_last"),
            PoolingStrategy::Mean => f.write_str("mean"),
            PoolingStrategy::Max => f.write_str("max"),
            PoolingStrategy::ConcatClsLastK(k) => write!(f, "concat_cls_last_k:{k}"),
            PoolingStrategy::ClsPlusMean => f.write_str("cls_plus_mean"),
        }
    }
}

impl FromStr for PoolingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls_last" | "cls" => Ok(PoolingStrategy::ClsLast),
            "mean" => Ok(PoolingStrategy::Mean),
            "max" => Ok(PoolingStrategy::Max),
            "cls_plus_mean" => Ok(PoolingStrategy::ClsPlusMean),
            "concat_cls_last_k" => Ok(PoolingStrategy::ConcatClsLastK(2)),
            other => match other.strip_prefix("concat_cls_last_k:") {
                Some(k) => k
                    .parse()
                    .map(PoolingStrategy::ConcatClsLastK)
                    .map_err(|_| Error::InvalidArgument(format!("bad layer count in '{other}'"))),
                None => Err(Error::InvalidArgument(format!("unknown pooling strategy '{other}'"))),
            },
        }
    }
}

impl TryFrom<String> for PoolingStrategy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PoolingStrategy> for String {
    fn from(p: PoolingStrategy) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding {
    pub vector: Vec<f64>,
}

impl PooledEmbedding {
    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }
}

/// Batched pooling over per-layer hidden states `[batch, seq, hidden]` with a
/// `[batch, seq]` 0/1 mask. Returns `[batch, dim]`; differentiable.
pub fn pool_layers(layers: &[Tensor], mask: &Tensor, strategy: PoolingStrategy) -> Result<Tensor> {
    strategy.validate(layers.len())?;
    let last = layers.last().ok_or_else(|| Error::Shape("encoder produced no layers".into()))?;
    let (_, t, _) = last.dims3()?;
    if mask.dims2()?.1 != t {
        return Err(Error::Shape(format!("mask length {} != {t} tokens", mask.dims2()?.1)));
    }
    let cls = |layer: &Tensor| -> Result<Tensor> { Ok(layer.narrow(1, 0, 1)?.squeeze(1)?) };
    let mean = || -> Result<Tensor> {
        let m = mask.unsqueeze(2)?;
        let summed = last.broadcast_mul(&m)?.sum(1)?;
        let count = m.sum(1)?;
        Ok(summed.broadcast_div(&count)?)
    };
    match strategy {
        PoolingStrategy::ClsLast => cls(last),
        PoolingStrategy::Mean => mean(),
        PoolingStrategy::Max => {
            let penalty = ((mask.unsqueeze(2)? - 1.0)? * 1e30)?;
            Ok(last.broadcast_add(&penalty)?.max(1)?)
        }
        PoolingStrategy::ConcatClsLastK(k) => {
            let rows = layers[layers.len() - k..]
                .iter()
                .rev()
                .map(cls)
                .collect::<Result<Vec<_>>>()?;
            Ok(Tensor::cat(&rows, 1)?)
        }
        PoolingStrategy::ClsPlusMean => Ok(Tensor::cat(&[cls(last)?, mean()?], 1)?),
    }
}

/// Pools a single encoder output.
pub fn pool(output: &EncoderOutput, mask: &[u8], strategy: PoolingStrategy) -> Result<PooledEmbedding> {
    let t = output.num_tokens()?;
    if mask.len() != t {
        return Err(Error::Shape(format!("mask length {} != {t} tokens", mask.len())));
    }
    if !mask.contains(&1) {
        return Err(Error::InvalidArgument("mask selects no tokens".into()));
    }
    let dtype = output.layers[0].dtype();
    let device = output.layers[0].device();
    let layers = output
        .layers
        .iter()
        .map(|l| Ok(l.unsqueeze(0)?))
        .collect::<Result<Vec<_>>>()?;
    let m: Vec<f64> = mask.iter().map(|&x| x as f64).collect();
    let m = Tensor::from_vec(m, (1, t), device)?.to_dtype(dtype)?;
    let pooled = pool_layers(&layers, &m, strategy)?.squeeze(0)?;
    let vector = pooled.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?;
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pooled embedding".into()));
    }
    Ok(PooledEmbedding { vector })
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn output(layers: Vec<Vec<Vec<f64>>>) -> EncoderOutput {
        let hidden = layers[0][0].len();
        EncoderOutput {
            layers: layers
                .into_iter()
                .map(|l| Tensor::new(l, &Device::Cpu).unwrap())
                .collect(),
            hidden_size: hidden,
            mask: vec![],
        }
    }

    #[test]
    fn two_by_two_oracle() {
        let out = output(vec![vec![vec![9.0, 9.0], vec![9.0, 9.0]], vec![vec![1.0, -2.0], vec![3.0, 0.0]]]);
        let full = [1, 1];
        assert_eq!(pool(&out, &full, PoolingStrategy::Max).unwrap().vector, vec![3.0, 0.0]);
        assert_eq!(pool(&out, &full, PoolingStrategy::Mean).unwrap().vector, vec![2.0, -1.0]);
        assert_eq!(pool(&out, &full, PoolingStrategy::ClsLast).unwrap().vector, vec![1.0, -2.0]);
        assert_eq!(
            pool(&out, &full, PoolingStrategy::ConcatClsLastK(2)).unwrap().vector,
            vec![1.0, -2.0, 9.0, 9.0]
        );
        assert_eq!(
            pool(&out, &full, PoolingStrategy::ClsPlusMean).unwrap().vector,
            vec![1.0, -2.0, 2.0, -1.0]
        );
        assert!(pool(&out, &full, PoolingStrategy::ConcatClsLastK(3)).is_err());
        assert!(pool(&out, &[1], PoolingStrategy::Mean).is_err());
    }

    #[test]
    fn padding_is_ignored() {
        let out = output(vec![vec![vec![1.0, -2.0], vec![3.0, 0.0], vec![100.0, 100.0]]]);
        let mask = [1, 1, 0];
        assert_eq!(pool(&out, &mask, PoolingStrategy::Max).unwrap().vector, vec![3.0, 0.0]);
        assert_eq!(pool(&out, &mask, PoolingStrategy::Mean).unwrap().vector, vec![2.0, -1.0]);
    }

    #[test]
    fn strategy_strings() {
        for s in [
            PoolingStrategy::ClsLast,
            PoolingStrategy::Mean,
            PoolingStrategy::Max,
            PoolingStrategy::ConcatClsLastK(3),
            PoolingStrategy::ClsPlusMean,
        ] {
            assert_eq!(s.to_string().parse::<PoolingStrategy>().unwrap(), s);
        }
        assert_eq!("concat_cls_last_k".parse::<PoolingStrategy>().unwrap(), PoolingStrategy::ConcatClsLastK(2));
        assert!("sum".parse::<PoolingStrategy>().is_err());
        assert_eq!(PoolingStrategy::ConcatClsLastK(3).output_dim(16), 48);
        assert_eq!(PoolingStrategy::ClsPlusMean.output_dim(16), 32);
    }
}
