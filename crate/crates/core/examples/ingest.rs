//! Ingests the bundled DailyDialog- and EmoWOZ-format fixtures into the
//! canonical corpus format and prints their statistics.
//!
//! `cargo run --example ingest [-- <dailydialog dir>]`

use std::path::{Path, PathBuf};

use erc_context::corpus::{
    ingest_dailydialog, ingest_emowoz, label_distribution, read_canonical, write_canonical, Corpus, DailyDialogLayout,
    EmoWozLayout, Split,
};

fn summarize(name: &str, corpus: &Corpus) {
    let all = corpus.stats(None);
    println!("{name}: {} dialogues, {} turns, {} labeled", all.dialogues, all.turns, all.labeled_turns);
    for split in Split::ALL {
        let s = corpus.stats(Some(split));
        println!("  {:<10} {:>5} dialogues {:>6} turns", split.as_str(), s.dialogues, s.turns);
    }
    let dist = label_distribution(corpus, None);
    for ((label, n), p) in dist.labels.iter().zip(&dist.counts).zip(&dist.proportions) {
        println!("  {label:<13} {n:>6} {:>6.1}%", 100.0 * p);
    }
}

fn main() -> erc_context::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let dd_dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| fixtures.join("dailydialog"));

    let dd = ingest_dailydialog(&dd_dir, &DailyDialogLayout::standard())?;
    summarize("dailydialog", &dd.corpus);

    let ew = ingest_emowoz(
        &[fixtures.join("emowoz/dialogues.json")],
        &EmoWozLayout {
            split_file: Some(fixtures.join("emowoz/split.json")),
            ..EmoWozLayout::default()
        },
    )?;
    for w in &ew.warnings {
        eprintln!("warning: {w}");
    }
    summarize("emowoz", &ew.corpus);

    // system turns carry no label but stay in the dialogue as context
    let d = &ew.corpus.dialogues()[0];
    for (i, t) in d.turns.iter().enumerate() {
        let label = t.label.and_then(|l| ew.corpus.label_set().name_of(l)).unwrap_or("-");
        println!("  {i} {:<6} {label:<10} {}", t.speaker, t.text);
    }

    let out = std::env::temp_dir().join("erc_example_dailydialog.jsonl");
    write_canonical(&dd.corpus, &out)?;
    assert_eq!(read_canonical(&out)?, dd.corpus);
    println!("canonical round trip ok: {}", out.display());
    Ok(())
}
