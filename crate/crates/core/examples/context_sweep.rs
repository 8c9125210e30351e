//! Sweeps the number of context turns over several seeds and prints the
//! aggregated table.
//!
//! `cargo run --release --example context_sweep`

use erc_context::encoder::BackendSpec;
use erc_context::evaluation::{context_sweep, per_label_table, sweep_table, write_sweep_report, SweepOptions};
use erc_context::synthetic::keyword_context_corpus;
use erc_context::trainer::TrainConfig;

fn main() -> erc_context::Result<()> {
    let corpus = keyword_context_corpus(200, 3)?;
    let base = TrainConfig {
        encoder_lr: 1e-3,
        head_lr: 5e-3,
        max_epochs: 6,
        patience: 3,
        ..TrainConfig::default()
    };
    let out = std::env::temp_dir().join("erc_example_sweep");
    let options = SweepOptions {
        parallel: true,
        output_dir: Some(out.clone()),
    };
    let report = context_sweep(&corpus, &base, &BackendSpec::tiny(), &[0, 1, 2], &[42, 43, 44], &options)?;
    print!("{}", sweep_table(&report));
    print!("{}", per_label_table(&report));
    write_sweep_report(&out, &report)?;
    println!("written to {}", out.display());
    Ok(())
}
