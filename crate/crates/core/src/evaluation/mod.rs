//! Metrics, multi-seed aggregation and the context-turn sweep.

mod metrics;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Dialogue, EmotionLabelSet, Split};
use crate::encoder::BackendSpec;
use crate::error::{Error, Result};
use crate::trainer::{write_json, CheckpointBundle, TrainConfig, Trainer};

pub use metrics::{confusion, macro_f1, macro_f1_from, per_label_f1, ConfusionMatrix};
pub(crate) use metrics::{mean, population_std};
pub use report::{confusion_csv, per_label_table, render_table, sweep_table, write_sweep_report};

/// The five seeds every configuration is run with.
pub const DEFAULT_SEEDS: [u64; 5] = [42, 43, 44, 45, 46];

/// Context sizes swept by default.
pub const DEFAULT_CONTEXT_TURNS: [usize; 5] = [0, 1, 2, 3, 4];

/// Outcome of one (c, seed) training run, scored on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub c: usize,
    pub macro_f1: f64,
    pub per_label_f1: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub config_hash: String,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

impl RunResult {
    pub fn from_predictions(
        seed: u64,
        c: usize,
        gold: &[usize],
        pred: &[usize],
        k: usize,
        config_hash: String,
    ) -> Result<Self> {
        let cm = confusion(gold, pred, k)?;
        let per_label = per_label_f1(&cm);
        Ok(Self {
            seed,
            c,
            macro_f1: mean(&per_label),
            per_label_f1: per_label,
            confusion: cm,
            config_hash,
            checkpoint: None,
        })
    }
}

/// Hash of everything in a run's configuration except seed and context
/// size; runs that may be averaged share it.
pub fn config_hash(config: &TrainConfig, backend: &BackendSpec) -> Result<String> {
    let neutral = TrainConfig {
        seed: 0,
        context_turns: 0,
        ..config.clone()
    };
    let text = serde_json::to_string(&(neutral, backend))?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub c: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub per_seed: Vec<(u64, f64)>,
    pub per_label_mean: Vec<f64>,
}

pub fn aggregate_seeds(results: &[RunResult]) -> Result<SeedAggregate> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidArgument("no results to aggregate".into()))?;
    for r in results {
        if r.c != first.c || r.config_hash != first.config_hash {
            return Err(Error::InvalidArgument(format!(
                "cannot aggregate c={} ({}) with c={} ({})",
                first.c, first.config_hash, r.c, r.config_hash
            )));
        }
        if r.per_label_f1.len() != first.per_label_f1.len() {
            return Err(Error::Shape("results differ in label count".into()));
        }
    }
    let mut per_seed: Vec<(u64, f64)> = results.iter().map(|r| (r.seed, r.macro_f1)).collect();
    per_seed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let values: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
    let per_label_mean = (0..first.per_label_f1.len())
        .map(|k| {
            let mut col: Vec<f64> = results.iter().map(|r| r.per_label_f1[k]).collect();
            col.sort_by(f64::total_cmp);
            mean(&col)
        })
        .collect();
    Ok(SeedAggregate {
        c: first.c,
        mean: mean(&values),
        std: population_std(&values),
        per_seed,
        per_label_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok { result: RunResult },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub c: usize,
    pub seed: u64,
    pub outcome: CellOutcome,
}

impl SweepCell {
    pub fn result(&self) -> Option<&RunResult> {
        match &self.outcome {
            CellOutcome::Ok { result } => Some(result),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: usize,
    /// `None` when every seed failed.
    pub aggregate: Option<SeedAggregate>,
    pub failed_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub label_set: EmotionLabelSet,
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
    /// Highest mean macro-F1; ties go to the smaller c.
    pub best_c: Option<usize>,
}

impl SweepReport {
    /// Aggregates cells per c, in ascending c.
    pub fn from_cells(label_set: EmotionLabelSet, cells: Vec<SweepCell>) -> Result<Self> {
        let mut by_c: BTreeMap<usize, (Vec<RunResult>, Vec<u64>)> = BTreeMap::new();
        for cell in &cells {
            let entry = by_c.entry(cell.c).or_default();
            match &cell.outcome {
                CellOutcome::Ok { result } => entry.0.push(result.clone()),
                CellOutcome::Failed { .. } => entry.1.push(cell.seed),
            }
        }
        let mut rows = Vec::new();
        for (c, (results, failed_seeds)) in by_c {
            let aggregate = if results.is_empty() {
                None
            } else {
                Some(aggregate_seeds(&results)?)
            };
            rows.push(SweepRow {
                c,
                aggregate,
                failed_seeds,
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for row in &rows {
            if let Some(a) = &row.aggregate {
                if best.is_none_or(|(_, m)| a.mean > m) {
                    best = Some((row.c, a.mean));
                }
            }
        }
        Ok(Self {
            label_set,
            cells,
            rows,
            best_c: best.map(|b| b.0),
        })
    }

    pub fn row(&self, c: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.c == c)
    }

    pub fn mean_for(&self, c: usize) -> Option<f64> {
        self.row(c).and_then(|r| r.aggregate.as_ref()).map(|a| a.mean)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.result().is_none()).count()
    }

    /// One JSON record per cell.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for cell in &self.cells {
            out.push_str(&serde_json::to_string(cell)?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Run cells concurrently on the rayon pool.
    pub parallel: bool,
    /// When set, each cell writes `c{c}_seed{seed}/` here.
    pub output_dir: Option<PathBuf>,
}

/// Runs every (c, seed) cell with `runner`; a failing cell is recorded as
/// failed and the others continue.
pub fn sweep_with<F>(label_set: EmotionLabelSet, c_values: &[usize], seeds: &[u64], parallel: bool, runner: F) -> Result<SweepReport>
where
    F: Fn(usize, u64) -> Result<RunResult> + Sync,
{
    if c_values.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one c and one seed".into()));
    }
    let grid: Vec<(usize, u64)> = c_values
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let run = |&(c, seed): &(usize, u64)| SweepCell {
        c,
        seed,
        outcome: match runner(c, seed) {
            Ok(result) => CellOutcome::Ok { result },
            Err(e) => CellOutcome::Failed { error: e.to_string() },
        },
    };
    let cells: Vec<SweepCell> = if parallel {
        grid.par_iter().map(run).collect()
    } else {
        grid.iter().map(run).collect()
    };
    SweepReport::from_cells(label_set, cells)
}

/// Trains and tests one model per (c, seed).
pub fn context_sweep(
    corpus: &Corpus,
    base: &TrainConfig,
    backend: &BackendSpec,
    c_values: &[usize],
    seeds: &[u64],
    options: &SweepOptions,
) -> Result<SweepReport> {
    for split in Split::ALL {
        if !corpus.has_split(split) {
            return Err(Error::InvalidCorpus(format!("sweep needs a {split} split")));
        }
    }
    base.validate()?;
    let hash = config_hash(base, backend)?;
    sweep_with(corpus.label_set().clone(), c_values, seeds, options.parallel, |c, seed| {
        let config = TrainConfig {
            context_turns: c,
            seed,
            ..base.clone()
        };
        run_cell(corpus, &config, backend, &hash, options.output_dir.as_deref())
    })
}

/// Trains one configuration and scores the best checkpoint on the test split.
pub fn run_cell(
    corpus: &Corpus,
    config: &TrainConfig,
    backend: &BackendSpec,
    hash: &str,
    output_dir: Option<&Path>,
) -> Result<RunResult> {
    let (c, seed) = (config.context_turns, config.seed);
    let cell_dir = output_dir.map(|d| d.join(cell_dir_name(c, seed)));
    let mut trainer = Trainer::new(config.clone(), backend.clone());
    if let Some(dir) = &cell_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let log = dir.join("history.jsonl");
        let file = fs::File::create(&log).map_err(|e| Error::io(&log, e))?;
        trainer = trainer.with_log(Box::new(file));
    }
    let (bundle, _) = trainer.run(corpus)?;
    let model = bundle.model()?;
    let p = model.evaluate(corpus, Split::Test, c)?;
    let mut result = RunResult::from_predictions(seed, c, &p.gold, &p.pred, corpus.label_set().len(), hash.to_string())?;
    if let Some(dir) = &cell_dir {
        let ckpt = dir.join("checkpoint");
        bundle.save(&ckpt)?;
        result.checkpoint = Some(ckpt);
        write_json(&dir.join("result.json"), &result)?;
        let grid = dir.join("confusion.csv");
        fs::write(&grid, confusion_csv(&result.confusion, corpus.label_set())).map_err(|e| Error::io(&grid, e))?;
    }
    Ok(result)
}

/// Directory name of one sweep cell.
pub fn cell_dir_name(c: usize, seed: u64) -> String {
    format!("c{c}_seed{seed}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyRow {
    pub dialogue_id: String,
    pub turn: usize,
    pub speaker: String,
    pub text: String,
    pub gold: Option<String>,
    pub baseline: String,
    pub contextual: String,
}

/// Side-by-side predictions of two checkpoints over whole dialogues.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CaseStudy {
    pub baseline_c: usize,
    pub contextual_c: usize,
    pub rows: Vec<CaseStudyRow>,
}

impl CaseStudy {
    pub fn render(&self) -> String {
        let headers = [
            "dialogue".to_string(),
            "turn".into(),
            "speaker".into(),
            "utterance".into(),
            "gold".into(),
            format!("c={}", self.baseline_c),
            format!("c={}", self.contextual_c),
        ];
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.dialogue_id.clone(),
                    r.turn.to_string(),
                    r.speaker.clone(),
                    r.text.clone(),
                    r.gold.clone().unwrap_or_else(|| "-".into()),
                    r.baseline.clone(),
                    r.contextual.clone(),
                ]
            })
            .collect();
        render_table(&headers, &rows)
    }
}

pub fn case_study_report(
    baseline: &CheckpointBundle,
    contextual: &CheckpointBundle,
    dialogues: &[Dialogue],
) -> Result<CaseStudy> {
    if baseline.label_set != contextual.label_set {
        return Err(Error::LabelSetMismatch(format!(
            "'{}' vs '{}'",
            baseline.label_set.name(),
            contextual.label_set.name()
        )));
    }
    let labels = &baseline.label_set;
    let (cb, cc) = (baseline.config.context_turns, contextual.config.context_turns);
    let mut study = CaseStudy {
        baseline_c: cb,
        contextual_c: cc,
        rows: Vec::new(),
    };
    if dialogues.is_empty() {
        return Ok(study);
    }
    let (mb, mc) = (baseline.model()?, contextual.model()?);
    for d in dialogues {
        let idx: Vec<usize> = (0..d.turns.len()).collect();
        let pb = mb.predict_turns(d, &idx, cb)?;
        let pc = mc.predict_turns(d, &idx, cc)?;
        for (i, u) in d.turns.iter().enumerate() {
            study.rows.push(CaseStudyRow {
                dialogue_id: d.dialogue_id.clone(),
                turn: i,
                speaker: u.speaker.clone(),
                text: u.text.clone(),
                gold: u.label.map(|l| labels.short_name(l)),
                baseline: labels.short_name(pb[i]),
                contextual: labels.short_name(pc[i]),
            });
        }
    }
    Ok(study)
}
