//! Trains a context-free and a contextual model and lists their
//! predictions side by side on test dialogues.

use erc_context::corpus::Split;
use erc_context::encoder::BackendSpec;
use erc_context::evaluation::case_study_report;
use erc_context::synthetic::keyword_context_corpus;
use erc_context::trainer::{train, TrainConfig};

fn main() -> erc_context::Result<()> {
    let corpus = keyword_context_corpus(200, 9)?;
    let cfg = |c| TrainConfig {
        context_turns: c,
        encoder_lr: 1e-3,
        head_lr: 5e-3,
        max_epochs: 6,
        ..TrainConfig::default()
    };
    let (baseline, _) = train(&corpus, &cfg(0), &BackendSpec::tiny())?;
    let (contextual, _) = train(&corpus, &cfg(1), &BackendSpec::tiny())?;
    let dialogues: Vec<_> = corpus.split(Split::Test).take(3).cloned().collect();
    let study = case_study_report(&baseline, &contextual, &dialogues)?;
    print!("{}", study.render());
    let fixed = study
        .rows
        .iter()
        .filter(|r| r.gold.as_deref() == Some(r.contextual.as_str()) && r.baseline != r.contextual)
        .count();
    println!("{fixed} turns corrected by context");
    Ok(())
}
