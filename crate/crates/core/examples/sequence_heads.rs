//! Trains each head type on the same corpus and compares test macro-F1.
//! Sequence heads see a whole dialogue of pooled windows at once.

use erc_context::corpus::Split;
use erc_context::encoder::BackendSpec;
use erc_context::evaluation::macro_f1;
use erc_context::heads::HeadKind;
use erc_context::synthetic::keyword_context_corpus;
use erc_context::trainer::{train, TrainConfig};

fn main() -> erc_context::Result<()> {
    let corpus = keyword_context_corpus(200, 5)?;
    for head in [HeadKind::Linear, HeadKind::Rnn, HeadKind::Lstm, HeadKind::BiLstm, HeadKind::Crf] {
        for c in [0, 1] {
            let cfg = TrainConfig {
                context_turns: c,
                head,
                encoder_lr: 1e-3,
                head_lr: 5e-3,
                max_epochs: 6,
                ..TrainConfig::default()
            };
            let (bundle, history) = train(&corpus, &cfg, &BackendSpec::tiny())?;
            let p = bundle.model()?.evaluate(&corpus, Split::Test, c)?;
            println!(
                "{:<7} c={c}  test macro-F1 {:.3}  ({} epochs)",
                head.to_string(),
                macro_f1(&p.gold, &p.pred, corpus.label_set().len())?,
                history.epochs.len()
            );
        }
    }
    Ok(())
}
