//! Viterbi decoding against independent per-turn argmax, and the CRF
//! negative log-likelihood of a labelling.

use erc_context::heads::{crf_log_partition, crf_negative_log_likelihood, crf_sequence_score, crf_viterbi, CrfParameters};

fn main() -> erc_context::Result<()> {
    let labels = ["neutral", "happy", "sad"];
    // turn 1 is ambiguous between happy and sad
    let emissions: Vec<Vec<f64>> = vec![
        vec![0.2, 1.5, 0.1],
        vec![0.0, 0.9, 1.0],
        vec![0.1, 1.2, 0.3],
    ];
    // emotions tend to persist across turns
    let mut params = CrfParameters {
        transitions: vec![vec![0.0; 3]; 3],
        start_scores: vec![0.0; 3],
        end_scores: vec![0.0; 3],
    };
    for k in 0..3 {
        params.transitions[k][k] = 0.8;
    }

    let greedy: Vec<usize> = emissions
        .iter()
        .map(|row| (0..3).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap())
        .collect();
    let (best, score) = crf_viterbi(&emissions, &params)?;
    let name = |ys: &[usize]| ys.iter().map(|&y| labels[y]).collect::<Vec<_>>().join(" ");
    println!("greedy : {}", name(&greedy));
    println!("viterbi: {}  score {score:.4}", name(&best));
    println!("score(greedy) {:.4}", crf_sequence_score(&emissions, &greedy, &params)?);
    println!("log Z {:.4}", crf_log_partition(&emissions, &params)?);
    for ys in [&best, &greedy] {
        let nll = crf_negative_log_likelihood(&emissions, ys, &params)?;
        println!("p({}) = {:.4}", name(ys), (-nll).exp());
    }
    Ok(())
}
