//! The `erc` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (unreadable or malformed input, missing checkpoint, label-set mismatch),
//! 3 runtime failure.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{
    ingest_dailydialog, ingest_emowoz, label_distribution, read_canonical, write_canonical, Corpus, DailyDialogLayout,
    Dialogue, EmoWozLayout, Ingestion, Split, Utterance,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    case_study_report, cell_dir_name, confusion, confusion_csv, context_sweep, per_label_f1, per_label_table,
    render_table, config_hash, sweep_table, write_sweep_report, SweepOptions, SweepReport, DEFAULT_SEEDS,
};
use crate::trainer::{read_json, write_json, CheckpointBundle, Trainer};

pub use config::{parse_backend, parse_c_values, CliConfig, DatasetConfig};

#[derive(Debug, Parser)]
#[command(name = "erc", version, about = "Emotion recognition in conversations with context windows")]
pub struct Cli {
    /// TOML experiment config; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of preceding turns c.
    #[arg(long, global = true)]
    pub context_turns: Option<usize>,
    /// `tiny` or a pre-trained checkpoint directory.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Token budget per window.
    #[arg(long, global = true)]
    pub max_len: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw dataset release to the canonical corpus format.
    Ingest(IngestArgs),
    /// Train one model and save its best checkpoint.
    Train(CorpusArgs),
    /// Score a checkpoint on a corpus split.
    Eval(EvalArgs),
    /// Train and test every (c, seed) combination.
    Sweep(SweepArgs),
    /// Label each line of a plain-text dialogue.
    Predict(PredictArgs),
    /// Render tables from a finished sweep or compare two checkpoints.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Dailydialog,
    Emowoz,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub format: Format,
    /// DailyDialog directory, or one or more EmoWOZ JSON files.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// EmoWOZ split assignment file.
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Canonical corpus file; defaults to `dataset.corpus` from the config.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "validation")]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Context sizes, `0..4` or `0,1,3`.
    #[arg(long = "c")]
    pub c_values: Option<String>,
    /// Number of seeds, taken from 42 upwards.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Explicit comma-separated seeds.
    #[arg(long, value_delimiter = ',', conflicts_with = "seeds")]
    pub seed_list: Option<Vec<u64>>,
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Text file with one turn per line; blank lines are skipped.
    #[arg(long)]
    pub dialogue: PathBuf,
    /// Also print each assembled encoder input.
    #[arg(long)]
    pub dump_layouts: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sweep output directory holding `sweep.json`.
    #[arg(long, conflicts_with_all = ["baseline", "contextual"])]
    pub sweep: Option<PathBuf>,
    /// Checkpoint of the context-free model.
    #[arg(long, requires = "contextual")]
    pub baseline: Option<PathBuf>,
    /// Checkpoint of the contextual model.
    #[arg(long, requires = "baseline")]
    pub contextual: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Dialogue ids for the case study; defaults to the first test dialogues.
    #[arg(long = "dialogue")]
    pub dialogues: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub limit: usize,
}

/// Failure of a command, with its exit code.
#[derive(Debug)]
pub enum CliError {
    Failed(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(Error::Config(_)) => 1,
            CliError::Failed(e) if e.is_data_error() || matches!(e, Error::Checkpoint(_)) => 2,
            CliError::Failed(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Failed(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Failed(e)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Config file merged with global flags.
pub fn resolve_config(cli: &Cli) -> Result<CliConfig> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    if let Some(c) = cli.context_turns {
        cfg.train.context_turns = c;
    }
    if let Some(b) = &cli.backend {
        cfg.backend = parse_backend(b);
    }
    if let Some(m) = cli.max_len {
        cfg.train.max_len = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> std::result::Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, out, err),
        Command::Train(a) => cmd_train(&cfg, a, out),
        Command::Eval(a) => {
            let save = (cli.output_dir.is_some() || cli.config.is_some()).then(|| cfg.output_dir.clone());
            cmd_eval(&cfg, cli.context_turns, save.as_deref(), a, out)
        }
        Command::Sweep(a) => cmd_sweep(&cfg, a, out),
        Command::Predict(a) => cmd_predict(cli.context_turns, a, out),
        Command::Report(a) => cmd_report(&cfg, a, out),
    }
    .map_err(CliError::from)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn corpus_path(cfg: &CliConfig, args: &CorpusArgs) -> Result<PathBuf> {
    args.corpus
        .clone()
        .or_else(|| cfg.dataset.corpus.clone())
        .ok_or_else(|| Error::Config("no corpus given: pass --corpus or set dataset.corpus".into()))
}

fn load_corpus(cfg: &CliConfig, args: &CorpusArgs) -> Result<Corpus> {
    read_canonical(&corpus_path(cfg, args)?)
}

pub fn cmd_ingest(args: &IngestArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let Ingestion { corpus, warnings } = match args.format {
        Format::Dailydialog => {
            let [dir] = args.input.as_slice() else {
                return Err(Error::Config("dailydialog ingestion takes exactly one input directory".into()));
            };
            if !dir.is_dir() {
                return Err(Error::io(dir, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
            ingest_dailydialog(dir, &DailyDialogLayout::standard())?
        }
        Format::Emowoz => {
            let layout = EmoWozLayout {
                split_file: args.split_file.clone(),
                ..EmoWozLayout::default()
            };
            ingest_emowoz(&args.input, &layout)?
        }
    };
    for w in &warnings {
        writeln!(err, "warning: {w}").map_err(io_err(Path::new("<stderr>")))?;
    }
    write_canonical(&corpus, &args.output)?;
    let w = |e| Error::io("<stdout>", e);
    let stats = corpus.stats(None);
    writeln!(
        out,
        "wrote {}: {} dialogues, {} turns, {} labeled",
        args.output.display(),
        stats.dialogues,
        stats.turns,
        stats.labeled_turns
    )
    .map_err(w)?;
    let dist = label_distribution(&corpus, None);
    for (name, p) in dist.labels.iter().zip(&dist.proportions) {
        writeln!(out, "  {name:<14} {:>6.2}%", 100.0 * p).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

pub fn cmd_train(cfg: &CliConfig, args: &CorpusArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load_corpus(cfg, args)?;
    let dir = cfg.output_dir.join(cell_dir_name(cfg.train.context_turns, cfg.train.seed));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let log_path = dir.join("history.jsonl");
    let log = fs::File::create(&log_path).map_err(io_err(&log_path))?;
    let (bundle, history) = Trainer::new(cfg.train.clone(), cfg.backend.clone())
        .with_log(Box::new(log))
        .run(&corpus)?;
    let ckpt = dir.join("checkpoint");
    bundle.save(&ckpt)?;
    write_json(&dir.join("history.json"), &history)?;
    writeln!(
        out,
        "best validation macro-F1 {:.4} at epoch {} of {}; checkpoint {}",
        history.best_val_macro_f1,
        history.best_epoch,
        history.epochs.len(),
        ckpt.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

/// Writes `eval_{split}.json` and `confusion_{split}.csv` into `save` when given.
pub fn cmd_eval(
    cfg: &CliConfig,
    c_override: Option<usize>,
    save: Option<&Path>,
    args: &EvalArgs,
    out: &mut dyn Write,
) -> Result<()> {
    let bundle = CheckpointBundle::load(&args.checkpoint)?;
    let corpus = load_corpus(cfg, &args.corpus)?;
    if !corpus.has_split(args.split) {
        return Err(Error::InvalidCorpus(format!("corpus has no {} split", args.split)));
    }
    let c = c_override.unwrap_or(bundle.config.context_turns);
    let model = bundle.model()?;
    let p = model.evaluate(&corpus, args.split, c)?;
    let k = corpus.label_set().len();
    let cm = confusion(&p.gold, &p.pred, k)?;
    let f1 = per_label_f1(&cm);
    let macro_ = crate::evaluation::macro_f1_from(&cm);
    let w = |e| Error::io("<stdout>", e);
    writeln!(out, "{} macro-F1 {macro_:.6} over {} turns (c={c})", args.split, p.gold.len()).map_err(w)?;
    if args.split == Split::Validation {
        writeln!(out, "stored best validation macro-F1 {:.6}", bundle.metrics.best_val_macro_f1)
            .map_err(|e| Error::io("<stdout>", e))?;
    }
    let headers: Vec<String> = (0..k).map(|l| corpus.label_set().short_name(l)).collect();
    let row: Vec<String> = f1.iter().map(|f| format!("{:.2}", 100.0 * f)).collect();
    write!(out, "{}", render_table(&headers, &[row])).map_err(|e| Error::io("<stdout>", e))?;
    if let Some(dir) = save {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let result = crate::evaluation::RunResult {
            seed: bundle.config.seed,
            c,
            macro_f1: macro_,
            per_label_f1: f1,
            confusion: cm.clone(),
            config_hash: config_hash(&bundle.config, &bundle.backend)?,
            checkpoint: Some(args.checkpoint.clone()),
        };
        write_json(&dir.join(format!("eval_{}.json", args.split)), &result)?;
        let grid = dir.join(format!("confusion_{}.csv", args.split));
        fs::write(&grid, confusion_csv(&cm, corpus.label_set())).map_err(io_err(&grid))?;
    }
    Ok(())
}

pub fn cmd_sweep(cfg: &CliConfig, args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load_corpus(cfg, &args.corpus)?;
    let c_values = match &args.c_values {
        Some(s) => parse_c_values(s)?,
        None => cfg.c_values.clone(),
    };
    let seeds: Vec<u64> = match (&args.seed_list, args.seeds) {
        (Some(list), _) => list.clone(),
        (None, Some(0)) => return Err(Error::Config("--seeds must be positive".into())),
        (None, Some(n)) => (0..n as u64).map(|i| DEFAULT_SEEDS[0] + i).collect(),
        (None, None) => cfg.seeds.clone(),
    };
    let options = SweepOptions {
        parallel: args.parallel || cfg.parallel,
        output_dir: Some(cfg.output_dir.clone()),
    };
    let report = context_sweep(&corpus, &cfg.train, &cfg.backend, &c_values, &seeds, &options)?;
    write_sweep_report(&cfg.output_dir, &report)?;
    write!(out, "{}", sweep_table(&report)).map_err(|e| Error::io("<stdout>", e))?;
    if report.failed_cells() > 0 {
        for cell in &report.cells {
            if let crate::evaluation::CellOutcome::Failed { error } = &cell.outcome {
                writeln!(out, "failed: c={} seed={}: {error}", cell.c, cell.seed).map_err(|e| Error::io("<stdout>", e))?;
            }
        }
    }
    Ok(())
}

/// Reads a plain-text dialogue: one turn per non-blank line, speakers
/// alternating A and B.
pub fn read_plain_dialogue(path: &Path) -> Result<Dialogue> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let turns: Vec<Utterance> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| Utterance::new(if i % 2 == 0 { "A" } else { "B" }, l, None))
        .collect();
    if turns.is_empty() {
        return Err(Error::ingest(path.display().to_string(), "dialogue has no turns"));
    }
    Ok(Dialogue {
        dialogue_id: path.file_stem().map_or("dialogue".into(), |s| s.to_string_lossy().into_owned()),
        split: Split::Test,
        turns,
    })
}

pub fn cmd_predict(c_override: Option<usize>, args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let bundle = CheckpointBundle::load(&args.checkpoint)?;
    let dialogue = read_plain_dialogue(&args.dialogue)?;
    let c = c_override.unwrap_or(bundle.config.context_turns);
    let model = bundle.model()?;
    let idx: Vec<usize> = (0..dialogue.turns.len()).collect();
    let pred = model.predict_turns(&dialogue, &idx, c)?;
    let w = |e| Error::io("<stdout>", e);
    for (i, label) in pred.iter().enumerate() {
        let name = model.label_set().name_of(*label).unwrap_or("?");
        writeln!(out, "{i}\t{name}\t{}", dialogue.turns[i].text).map_err(w)?;
        if args.dump_layouts {
            let input = model.encode_turn(&dialogue, i, c)?;
            for line in input.render_layout(model.tokenizer())?.lines() {
                writeln!(out, "\t{line}").map_err(|e| Error::io("<stdout>", e))?;
            }
        }
    }
    Ok(())
}

pub fn cmd_report(cfg: &CliConfig, args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let w = |e| Error::io("<stdout>", e);
    if let Some(dir) = &args.sweep {
        let report: SweepReport = read_json(&dir.join("sweep.json"))?;
        let rebuilt = SweepReport::from_cells(report.label_set.clone(), report.cells.clone())?;
        write_sweep_report(dir, &rebuilt)?;
        write!(out, "{}\n{}", sweep_table(&rebuilt), per_label_table(&rebuilt)).map_err(w)?;
        return Ok(());
    }
    let (Some(b), Some(c)) = (&args.baseline, &args.contextual) else {
        return Err(Error::Config("report needs --sweep or --baseline with --contextual".into()));
    };
    let baseline = CheckpointBundle::load(b)?;
    let contextual = CheckpointBundle::load(c)?;
    let corpus = load_corpus(cfg, &args.corpus)?;
    let dialogues: Vec<Dialogue> = if args.dialogues.is_empty() {
        corpus.split(Split::Test).take(args.limit).cloned().collect()
    } else {
        args.dialogues
            .iter()
            .map(|id| {
                corpus
                    .dialogue(id)
                    .cloned()
                    .ok_or_else(|| Error::InvalidCorpus(format!("no dialogue '{id}'")))
            })
            .collect::<Result<_>>()?
    };
    let study = case_study_report(&baseline, &contextual, &dialogues)?;
    write!(out, "{}", study.render()).map_err(w)?;
    Ok(())
}
