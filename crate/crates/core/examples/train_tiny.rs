//! Trains the tiny encoder with a linear head on a synthetic corpus whose
//! label is only visible in the preceding turn, then saves and reloads the
//! checkpoint.
//!
//! `cargo run --release --example train_tiny [-- <context turns>]`

use erc_context::corpus::Split;
use erc_context::encoder::BackendSpec;
use erc_context::evaluation::macro_f1;
use erc_context::synthetic::keyword_context_corpus;
use erc_context::trainer::{CheckpointBundle, TrainConfig, Trainer};

fn main() -> erc_context::Result<()> {
    let c: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let corpus = keyword_context_corpus(300, 7)?;
    let config = TrainConfig {
        context_turns: c,
        // a randomly initialized encoder needs larger steps than a pre-trained one
        encoder_lr: 1e-3,
        head_lr: 5e-3,
        ..TrainConfig::default()
    };
    let (bundle, history) = Trainer::new(config, BackendSpec::tiny())
        .with_log(Box::new(std::io::stderr()))
        .run(&corpus)?;

    println!("epoch  loss    val-F1  enc-lr    head-lr");
    for e in &history.epochs {
        println!(
            "{:>5}  {:.4}  {:.3}   {:.2e}  {:.2e}",
            e.epoch, e.train_loss, e.val_macro_f1, e.encoder_lr, e.head_lr
        );
    }
    println!(
        "best epoch {} (val {:.3}), early stop: {}",
        history.best_epoch, history.best_val_macro_f1, history.stopped_early
    );

    let dir = std::env::temp_dir().join(format!("erc_example_c{c}"));
    bundle.save(&dir)?;
    let model = CheckpointBundle::load(&dir)?.model()?;
    let p = model.evaluate(&corpus, Split::Test, c)?;
    println!(
        "test macro-F1 at c={c}: {:.3} ({} turns), checkpoint {}",
        macro_f1(&p.gold, &p.pred, model.label_set().len())?,
        p.gold.len(),
        dir.display()
    );
    Ok(())
}
