//! Linear-chain CRF over the classifiable turns of one dialogue.
//!
//! Emissions are `[T × K]`; `transitions[j][k]` scores moving from label `j`
//! to label `k`. The plain functions here work in `f64`; [`crf_nll_tensor`]
//! is the differentiable training loss and must agree with them.

use candle_core::{Tensor, D};

use super::linear::log_sum_exp;
use crate::corpus::LabelId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CrfParameters {
    pub transitions: Vec<Vec<f64>>,
    pub start_scores: Vec<f64>,
    pub end_scores: Vec<f64>,
}

impl CrfParameters {
    pub fn zeros(k: usize) -> Self {
        Self {
            transitions: vec![vec![0.0; k]; k],
            start_scores: vec![0.0; k],
            end_scores: vec![0.0; k],
        }
    }

    pub fn num_labels(&self) -> usize {
        self.start_scores.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.start_scores.len();
        if k == 0 || self.end_scores.len() != k || self.transitions.len() != k || self.transitions.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("inconsistent CRF parameter shapes for K = {k}")));
        }
        let all = self
            .transitions
            .iter()
            .flatten()
            .chain(&self.start_scores)
            .chain(&self.end_scores);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("CRF parameter".into()));
        }
        Ok(())
    }
}

fn check_emissions(emissions: &[Vec<f64>], params: &CrfParameters) -> Result<usize> {
    params.validate()?;
    let k = params.num_labels();
    if emissions.is_empty() {
        return Err(Error::InvalidArgument("CRF needs at least one position".into()));
    }
    if let Some(row) = emissions.iter().find(|r| r.len() != k) {
        return Err(Error::Shape(format!("emission row of length {} for K = {k}", row.len())));
    }
    Ok(k)
}

pub fn crf_sequence_score(emissions: &[Vec<f64>], labels: &[LabelId], params: &CrfParameters) -> Result<f64> {
    let k = check_emissions(emissions, params)?;
    if labels.len() != emissions.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} positions",
            labels.len(),
            emissions.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::OutOfRange { index: bad, len: k });
    }
    let mut score = params.start_scores[labels[0]] + params.end_scores[labels[labels.len() - 1]];
    for (t, &y) in labels.iter().enumerate() {
        score += emissions[t][y];
        if t + 1 < labels.len() {
            score += params.transitions[y][labels[t + 1]];
        }
    }
    Ok(score)
}

/// Forward algorithm in the log domain.
pub fn crf_log_partition(emissions: &[Vec<f64>], params: &CrfParameters) -> Result<f64> {
    let k = check_emissions(emissions, params)?;
    let mut alpha: Vec<f64> = (0..k).map(|y| params.start_scores[y] + emissions[0][y]).collect();
    let mut scratch = vec![0.0; k];
    for row in &emissions[1..] {
        let next: Vec<f64> = (0..k)
            .map(|y| {
                for (j, s) in scratch.iter_mut().enumerate() {
                    *s = alpha[j] + params.transitions[j][y];
                }
                log_sum_exp(&scratch) + row[y]
            })
            .collect();
        alpha = next;
    }
    for (a, e) in alpha.iter_mut().zip(&params.end_scores) {
        *a += e;
    }
    Ok(log_sum_exp(&alpha))
}

/// Highest-scoring label sequence and its score. Ties resolve to the lowest
/// label id at each backtracking step.
pub fn crf_viterbi(emissions: &[Vec<f64>], params: &CrfParameters) -> Result<(Vec<LabelId>, f64)> {
    let k = check_emissions(emissions, params)?;
    let t_len = emissions.len();
    let mut delta: Vec<f64> = (0..k).map(|y| params.start_scores[y] + emissions[0][y]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len.saturating_sub(1));
    for row in &emissions[1..] {
        let mut next = vec![0.0; k];
        let mut ptr = vec![0usize; k];
        for y in 0..k {
            let mut best = 0;
            let mut best_score = delta[0] + params.transitions[0][y];
            for j in 1..k {
                let s = delta[j] + params.transitions[j][y];
                if s > best_score {
                    best = j;
                    best_score = s;
                }
            }
            next[y] = best_score + row[y];
            ptr[y] = best;
        }
        delta = next;
        back.push(ptr);
    }
    let mut last = 0;
    let mut best_score = f64::NEG_INFINITY;
    for y in 0..k {
        let s = delta[y] + params.end_scores[y];
        if s > best_score {
            last = y;
            best_score = s;
        }
    }
    let mut path = vec![last; t_len];
    for t in (1..t_len).rev() {
        path[t - 1] = back[t - 1][path[t]];
    }
    Ok((path, best_score))
}

/// `log Z - score(labels)`, clamped at zero against rounding.
pub fn crf_negative_log_likelihood(emissions: &[Vec<f64>], labels: &[LabelId], params: &CrfParameters) -> Result<f64> {
    let score = crf_sequence_score(emissions, labels, params)?;
    let log_z = crf_log_partition(emissions, params)?;
    Ok((log_z - score).max(0.0))
}

fn logsumexp_dim0(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(0)?.detach();
    let s = x.broadcast_sub(&max)?.exp()?.sum_keepdim(0)?.log()?;
    Ok((s + max)?.squeeze(0)?)
}

/// Differentiable CRF negative log-likelihood for one sequence.
/// `emissions: [T, K]`, `transitions: [K, K]`, `start`, `end: [K]`.
pub fn crf_nll_tensor(
    emissions: &Tensor,
    labels: &[LabelId],
    transitions: &Tensor,
    start: &Tensor,
    end: &Tensor,
) -> Result<Tensor> {
    let (t_len, k) = emissions.dims2()?;
    if t_len == 0 || labels.len() != t_len {
        return Err(Error::Shape(format!("{} labels for {t_len} positions", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::OutOfRange { index: bad, len: k });
    }
    let device = emissions.device();

    // gold path score
    let mut onehot = vec![0f64; t_len * k];
    for (t, &y) in labels.iter().enumerate() {
        onehot[t * k + y] = 1.0;
    }
    let onehot = Tensor::from_vec(onehot, (t_len, k), device)?.to_dtype(emissions.dtype())?;
    let mut score = emissions.mul(&onehot)?.sum_all()?;
    let first = Tensor::new(&[labels[0] as u32], device)?;
    let last = Tensor::new(&[labels[t_len - 1] as u32], device)?;
    score = (score + start.index_select(&first, 0)?.sum_all()?)?;
    score = (score + end.index_select(&last, 0)?.sum_all()?)?;
    if t_len > 1 {
        let idx: Vec<u32> = labels.windows(2).map(|w| (w[0] * k + w[1]) as u32).collect();
        let idx = Tensor::new(idx.as_slice(), device)?;
        score = (score + transitions.flatten_all()?.index_select(&idx, 0)?.sum_all()?)?;
    }

    // forward algorithm
    let mut alpha = (start + emissions.get(0)?)?;
    for t in 1..t_len {
        let scores = alpha.unsqueeze(1)?.broadcast_add(transitions)?;
        alpha = (logsumexp_dim0(&scores)? + emissions.get(t)?)?;
    }
    let log_z = logsumexp_dim0(&(alpha + end)?.unsqueeze(1)?)?.squeeze(D::Minus1)?;
    Ok((log_z - score)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn hand_params() -> (Vec<Vec<f64>>, CrfParameters) {
        let emissions = vec![vec![1.0, 0.0], vec![0.0, 3.0], vec![2.0, 1.0]];
        let params = CrfParameters {
            transitions: vec![vec![1.0, -1.0], vec![2.0, 0.0]],
            start_scores: vec![1.0, 2.0],
            end_scores: vec![0.0, -1.0],
        };
        (emissions, params)
    }

    #[test]
    fn score_by_hand() {
        let (em, p) = hand_params();
        // start[0] + (1 + 3 + 1) + trans[0][1] + trans[1][1] + end[1] = 1 + 5 - 1 + 0 - 1
        assert_eq!(crf_sequence_score(&em, &[0, 1, 1], &p).unwrap(), 4.0);
        // start[1] + (0 + 3 + 2) + trans[1][1] + trans[1][0] + end[0] = 2 + 5 + 0 + 2 + 0
        assert_eq!(crf_sequence_score(&em, &[1, 1, 0], &p).unwrap(), 9.0);
        assert!(crf_sequence_score(&em, &[0, 2, 1], &p).is_err());
    }

    #[test]
    fn single_position_collapses() {
        let p = CrfParameters {
            transitions: vec![vec![5.0, 5.0], vec![5.0, 5.0]],
            start_scores: vec![0.5, -0.5],
            end_scores: vec![0.25, 1.0],
        };
        let em = vec![vec![2.0, 1.0]];
        assert_eq!(crf_sequence_score(&em, &[1], &p).unwrap(), -0.5 + 1.0 + 1.0);
        let (path, score) = crf_viterbi(&em, &p).unwrap();
        assert_eq!(path, vec![0]);
        assert_eq!(score, 0.5 + 2.0 + 0.25);
        let z = CrfParameters::zeros(2);
        let expect = (1f64.exp() + 3f64.exp()).ln();
        assert!((crf_log_partition(&[vec![1.0, 3.0]], &z).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_parameters() {
        let z = CrfParameters::zeros(3);
        let em = vec![vec![0.0; 3]; 4];
        assert_eq!(crf_sequence_score(&em, &[0, 1, 2, 0], &z).unwrap(), 0.0);
        assert!((crf_log_partition(&em, &z).unwrap() - 4.0 * 3f64.ln()).abs() < 1e-12);
        assert!((crf_negative_log_likelihood(&em, &[2, 2, 1, 0], &z).unwrap() - 4.0 * 3f64.ln()).abs() < 1e-12);
        let em = vec![vec![0.1, 0.9, -1.0], vec![3.0, 2.0, 2.5]];
        assert_eq!(crf_viterbi(&em, &z).unwrap().0, vec![1, 0]);
    }

    #[test]
    fn single_label_nll_is_zero() {
        let p = CrfParameters {
            transitions: vec![vec![0.7]],
            start_scores: vec![-0.3],
            end_scores: vec![1.1],
        };
        let em = vec![vec![0.2], vec![-4.0], vec![9.0]];
        assert!(crf_negative_log_likelihood(&em, &[0, 0, 0], &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn tensor_nll_matches_reference() {
        let (em, p) = hand_params();
        let dev = Device::Cpu;
        let et = Tensor::new(em.clone(), &dev).unwrap();
        let tt = Tensor::new(p.transitions.clone(), &dev).unwrap();
        let st = Tensor::new(p.start_scores.clone(), &dev).unwrap();
        let en = Tensor::new(p.end_scores.clone(), &dev).unwrap();
        for labels in [[0, 1, 1], [1, 0, 0], [1, 1, 1]] {
            let got = crf_nll_tensor(&et, &labels, &tt, &st, &en).unwrap().to_scalar::<f64>().unwrap();
            let want = crf_negative_log_likelihood(&em, &labels, &p).unwrap();
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        let one = Tensor::new(vec![vec![0.5, -0.5]], &dev).unwrap();
        let got = crf_nll_tensor(&one, &[1], &tt, &st, &en).unwrap().to_scalar::<f64>().unwrap();
        let want = crf_negative_log_likelihood(&[vec![0.5, -0.5]], &[1], &p).unwrap();
        assert!((got - want).abs() < 1e-10);
    }
}
