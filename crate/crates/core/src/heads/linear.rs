use crate::corpus::LabelId;
use crate::encoder::PooledEmbedding;
use crate::error::{Error, Result};

/// Affine classifier `logits = W·x + b` with `W: [K × D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl LinearHead {
    pub fn new(weight: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        if weight.is_empty() || weight.len() != bias.len() {
            return Err(Error::Shape(format!(
                "weight has {} rows, bias has {} entries",
                weight.len(),
                bias.len()
            )));
        }
        let d = weight[0].len();
        if d == 0 || weight.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("weight rows must share a positive length".into()));
        }
        Ok(Self { weight, bias })
    }

    pub fn num_labels(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weight[0].len()
    }

    pub fn weight(&self) -> &[Vec<f64>] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

pub fn linear_logits(pooled: &PooledEmbedding, head: &LinearHead) -> Result<Vec<f64>> {
    if pooled.len() != head.input_dim() {
        return Err(Error::Shape(format!(
            "pooled length {} != head input {}",
            pooled.len(),
            head.input_dim()
        )));
    }
    Ok(head
        .weight
        .iter()
        .zip(&head.bias)
        .map(|(row, b)| row.iter().zip(&pooled.vector).map(|(w, x)| w * x).sum::<f64>() + b)
        .collect())
}

/// Argmax of the logits (equivalently of their softmax); ties go to the
/// lowest label id.
pub fn predict(logits: &[f64]) -> Result<LabelId> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("no logits".into()));
    }
    if logits.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("NaN logit".into()));
    }
    let mut best = 0;
    for (i, &x) in logits.iter().enumerate().skip(1) {
        if x > logits[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|x| x - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pooled(v: &[f64]) -> PooledEmbedding {
        PooledEmbedding { vector: v.to_vec() }
    }

    #[test]
    fn logits_examples() {
        let id = LinearHead::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(linear_logits(&pooled(&[0.5, -1.0]), &id).unwrap(), vec![0.5, -1.0]);

        let zero = LinearHead::new(vec![vec![0.0; 2]; 3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(linear_logits(&pooled(&[9.0, -4.0]), &zero).unwrap(), vec![1.0, 2.0, 3.0]);

        let h = LinearHead::new(vec![vec![1.0, 0.0], vec![0.0, 2.0]], vec![0.1, -0.1]).unwrap();
        let l = linear_logits(&pooled(&[2.0, 3.0]), &h).unwrap();
        assert!((l[0] - 2.1).abs() < 1e-12 && (l[1] - 5.9).abs() < 1e-12);

        assert!(linear_logits(&pooled(&[1.0]), &h).is_err());
        assert!(LinearHead::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&[0.1, 2.0, -1.0]).unwrap(), 1);
        assert_eq!(predict(&[3.0, 3.0]).unwrap(), 0);
        assert!(predict(&[0.0, f64::NAN]).is_err());
        assert!(predict(&[]).is_err());
    }

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        let lp = log_softmax(&[0.0; 7]);
        assert!((lp[0] + 7f64.ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn predict_shift_invariant(v in prop::collection::vec(-10.0f64..10.0, 1..10)) {
            let shifted: Vec<f64> = v.iter().map(|x| x + 7.5).collect();
            prop_assert_eq!(predict(&v).unwrap(), predict(&shifted).unwrap());
        }

        #[test]
        fn softmax_on_simplex(v in prop::collection::vec(-30.0f64..30.0, 1..10)) {
            let p = softmax(&v);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
            let argmax_p = predict(&p).unwrap();
            prop_assert_eq!(v[argmax_p], v[predict(&v).unwrap()]);
        }

        #[test]
        fn logits_are_affine(
            x in prop::collection::vec(-3.0f64..3.0, 3),
            y in prop::collection::vec(-3.0f64..3.0, 3),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let h = LinearHead::new(
                vec![vec![0.3, -1.0, 2.0], vec![1.5, 0.0, -0.5]],
                vec![0.25, -0.75],
            ).unwrap();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = linear_logits(&pooled(&mix), &h).unwrap();
            let lx = linear_logits(&pooled(&x), &h).unwrap();
            let ly = linear_logits(&pooled(&y), &h).unwrap();
            for k in 0..2 {
                let rhs = a * lx[k] + b * ly[k] - (a + b - 1.0) * h.bias()[k];
                prop_assert!((lhs[k] - rhs).abs() < 1e-9);
            }
        }
    }
}
