use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use erc_context::cli::run;
use erc_context::corpus::write_canonical;
use erc_context::synthetic::keyword_context_corpus;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn erc(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("erc").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small synthetic corpus and a config with raised learning rates.
fn workspace(dir: &Path) -> (PathBuf, PathBuf) {
    let corpus = dir.join("corpus.jsonl");
    write_canonical(&keyword_context_corpus(60, 3).unwrap(), &corpus).unwrap();
    let config = dir.join("config.toml");
    fs::write(
        &config,
        format!(
            "output_dir = {:?}\n[dataset]\ncorpus = {:?}\n[train]\nencoder_lr = 1e-3\nhead_lr = 5e-3\nmax_epochs = 4\npatience = 2\n",
            s(&dir.join("runs")),
            s(&corpus)
        ),
    )
    .unwrap();
    (corpus, config)
}

fn number_after(text: &str, marker: &str) -> f64 {
    let rest = &text[text.find(marker).unwrap_or_else(|| panic!("'{marker}' not in {text}")) + marker.len()..];
    rest.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn ingest_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let dd = fixtures().join("dailydialog");
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    for out in [&a, &b] {
        let (code, stdout, stderr) = erc(&["ingest", "--format", "dailydialog", "--input", s(&dd), "--output", s(out)]);
        assert_eq!(code, 0, "{stderr}");
        assert!(stdout.contains("8 dialogues, 21 turns"), "{stdout}");
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let ew = fixtures().join("emowoz");
    let (code, stdout, stderr) = erc(&[
        "ingest",
        "--format",
        "emowoz",
        "--input",
        s(&ew.join("dialogues.json")),
        "--split-file",
        s(&ew.join("split.json")),
        "--output",
        s(&dir.path().join("ew.jsonl")),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("3 dialogues, 11 turns, 7 labeled"), "{stdout}");
}

#[test]
fn train_eval_predict_report() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, config) = workspace(dir.path());

    let (code, stdout, stderr) = erc(&["--config", s(&config), "--context-turns", "1", "train"]);
    assert_eq!(code, 0, "{stderr}");
    let ckpt = dir.path().join("runs/c1_seed42/checkpoint");
    assert!(ckpt.join("weights.safetensors").exists(), "{stdout}");
    assert!(dir.path().join("runs/c1_seed42/history.jsonl").exists());

    // eval on validation reproduces the stored best
    let (code, stdout, stderr) = erc(&["eval", "--corpus", s(&corpus), "--checkpoint", s(&ckpt)]);
    assert_eq!(code, 0, "{stderr}");
    let now = number_after(&stdout, "validation macro-F1");
    let stored = number_after(&stdout, "stored best validation macro-F1");
    assert!((now - stored).abs() <= 1e-6, "{stdout}");

    let eval_dir = dir.path().join("eval");
    let (code, _, stderr) = erc(&[
        "--output-dir",
        s(&eval_dir),
        "eval",
        "--corpus",
        s(&corpus),
        "--checkpoint",
        s(&ckpt),
        "--split",
        "test",
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(eval_dir.join("eval_test.json").exists() && eval_dir.join("confusion_test.csv").exists());

    let dialogue = dir.path().join("dialogue.txt");
    fs::write(&dialogue, "hello there\n\nI got the job today\nthat is great news\n").unwrap();
    let (code, stdout, stderr) = erc(&["predict", "--checkpoint", s(&ckpt), "--dialogue", s(&dialogue)]);
    assert_eq!(code, 0, "{stderr}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3, "{stdout}");
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields[0], i.to_string());
        assert!(["neutral", "happiness", "sadness", "anger"].contains(&fields[1]), "{line}");
    }
    let (code, stdout, _) = erc(&["predict", "--checkpoint", s(&ckpt), "--dialogue", s(&dialogue), "--dump-layouts"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("target") && stdout.contains("ctx1"), "{stdout}");

    // case study against a context-free model
    let (code, _, stderr) = erc(&["--config", s(&config), "--context-turns", "0", "train"]);
    assert_eq!(code, 0, "{stderr}");
    let base = dir.path().join("runs/c0_seed42/checkpoint");
    let (code, stdout, stderr) = erc(&[
        "report",
        "--baseline",
        s(&base),
        "--contextual",
        s(&ckpt),
        "--corpus",
        s(&corpus),
        "--limit",
        "1",
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("c=0") && stdout.contains("c=1"), "{stdout}");
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = workspace(dir.path());
    let (code, stdout, stderr) = erc(&["--config", s(&config), "sweep", "--c", "0,1", "--seeds", "1"]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("seed 42") && stdout.contains("best c:"), "{stdout}");
    let runs = dir.path().join("runs");
    for f in ["sweep.json", "sweep.txt", "per_label.txt", "runs.jsonl", "c0_seed42/result.json", "c1_seed42/confusion.csv"] {
        assert!(runs.join(f).exists(), "{f} missing");
    }
    assert_eq!(fs::read_to_string(runs.join("runs.jsonl")).unwrap().lines().count(), 2);

    let (code, report, stderr) = erc(&["report", "--sweep", s(&runs)]);
    assert_eq!(code, 0, "{stderr}");
    assert!(report.starts_with(&stdout), "{report}");
}

#[test]
fn config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[train]\nlearning_rate = 1.0\n").unwrap();
    let (code, _, err) = erc(&["--config", s(&bad), "train"]);
    assert_eq!(code, 1);
    assert!(err.contains("learning_rate"), "{err}");
    fs::write(&bad, "[train]\nbatch_size = 0\n").unwrap();
    assert_eq!(erc(&["--config", s(&bad), "train"]).0, 1);
    assert_eq!(erc(&["sweep", "--seeds", "2", "--seed-list", "1,2"]).0, 1);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_erc");
    let status = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(status.status.code(), Some(0));
    let status = Command::new(bin)
        .args(["eval", "--corpus", "/no/such.jsonl", "--checkpoint", "/no/ckpt"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    let status = Command::new(bin).arg("bogus").output().unwrap();
    assert_eq!(status.status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = erc_context::cli::CliConfig::from_toml(&fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.train.validate().unwrap();
        n += 1;
    }
    assert_eq!(n, 3);
}
