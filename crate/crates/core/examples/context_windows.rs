//! Builds context windows for one dialogue and shows how they are laid out
//! and truncated.

use erc_context::corpus::{Dialogue, Split, Utterance};
use erc_context::encoder::WordTokenizer;
use erc_context::windowing::{assemble, build_window, dialogue_windows, AssembleOptions};

fn main() -> erc_context::Result<()> {
    let texts = [
        "did you see the final score",
        "no what happened",
        "we lost in the last minute",
        "oh no that is terrible",
    ];
    let dialogue = Dialogue {
        dialogue_id: "demo".into(),
        split: Split::Test,
        turns: texts
            .iter()
            .enumerate()
            .map(|(i, t)| Utterance::new(if i % 2 == 0 { "A" } else { "B" }, t, Some(0)))
            .collect(),
    };
    let tok = WordTokenizer::fit(texts.iter().copied().chain(["A:", "B:"]));

    for c in 0..=3 {
        let w = build_window(&dialogue, 3, c)?;
        let enc = assemble(&w, &tok, AssembleOptions::with_max_len(512))?;
        println!("c={c}: {} tokens", enc.len());
        print!("{}", enc.render_layout(&tok)?);
    }

    // budget pressure falls on the oldest context turn first
    for max_len in [20, 14, 8, 4] {
        let w = build_window(&dialogue, 3, 3)?;
        let enc = assemble(&w, &tok, AssembleOptions::with_max_len(max_len))?;
        println!("max_len={max_len}:");
        print!("{}", enc.render_layout(&tok)?);
    }

    let with_speakers = AssembleOptions {
        speaker_prefix: true,
        ..AssembleOptions::with_max_len(64)
    };
    let enc = assemble(&build_window(&dialogue, 2, 1)?, &tok, with_speakers)?;
    println!("speaker prefixes:");
    print!("{}", enc.render_layout(&tok)?);

    println!("windows over labeled turns at c=2:");
    for w in dialogue_windows(&dialogue, 2) {
        let ctx: Vec<&str> = w.context.iter().map(|u| u.text.as_str()).collect();
        println!("  turn {} <- {:?}", w.target_index, ctx);
    }
    Ok(())
}
