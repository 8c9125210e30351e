//! Parses an experiment config and drives the command-line entry point
//! in-process: writes a corpus, trains, evaluates, and predicts.

use erc_context::cli::{run, CliConfig};
use erc_context::corpus::write_canonical;
use erc_context::synthetic::keyword_context_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("erc_example_cli");
    std::fs::create_dir_all(&dir)?;
    let corpus = dir.join("corpus.jsonl");
    let synthetic = keyword_context_corpus(100, 1)?;
    write_canonical(&synthetic, &corpus)?;

    let toml = format!(
        r#"
output_dir = "{out}"
c_values = [0, 1]
seeds = [42]

[dataset]
name = "synthetic"
corpus = "{corpus}"

[train]
context_turns = 1
encoder_lr = 1e-3
head_lr = 5e-3
max_epochs = 5
"#,
        out = dir.join("runs").display(),
        corpus = corpus.display()
    );
    let config = CliConfig::from_toml(&toml)?;
    config.validate()?;
    println!("{config:#?}");
    let path = dir.join("experiment.toml");
    std::fs::write(&path, &toml)?;

    let ckpt = dir.join("runs/c1_seed42/checkpoint");
    let dialogue = dir.join("dialogue.txt");
    let turns: Vec<&str> = synthetic.dialogues().last().unwrap().turns.iter().map(|t| t.text.as_str()).collect();
    std::fs::write(&dialogue, turns.join("\n"))?;
    let p = |x: &std::path::Path| x.display().to_string();
    for args in [
        vec!["--config".to_string(), p(&path), "train".into()],
        vec!["eval".into(), "--corpus".into(), p(&corpus), "--checkpoint".into(), p(&ckpt)],
        vec!["predict".into(), "--checkpoint".into(), p(&ckpt), "--dialogue".into(), p(&dialogue), "--dump-layouts".into()],
    ] {
        println!("$ erc {}", args.join(" "));
        let code = run(
            std::iter::once("erc".to_string()).chain(args),
            &mut std::io::stdout(),
            &mut std::io::stderr(),
        );
        println!("exit {code}");
    }
    Ok(())
}
