use std::fs;
use std::path::Path;

use super::{ConfusionMatrix, SweepReport};
use crate::corpus::EmotionLabelSet;
use crate::error::{Error, Result};
use crate::trainer::write_json;

/// Plain-text table with left-aligned, space-padded columns.
pub fn render_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = line(headers);
    out.push('\n');
    out.push_str(&line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>()));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Rows per c: mean and std of macro-F1 (percent) and the per-seed values.
pub fn sweep_table(report: &SweepReport) -> String {
    let mut seeds: Vec<u64> = report.cells.iter().map(|c| c.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut headers = vec!["c".to_string(), "mean".into(), "std".into()];
    headers.extend(seeds.iter().map(|s| format!("seed {s}")));
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![row.c.to_string()];
            match &row.aggregate {
                Some(a) => {
                    cells.push(pct(a.mean));
                    cells.push(pct(a.std));
                }
                None => cells.extend(["failed".to_string(), "-".into()]),
            }
            for s in &seeds {
                let v = report
                    .cells
                    .iter()
                    .find(|cell| cell.c == row.c && cell.seed == *s)
                    .map(|cell| cell.result().map_or("failed".to_string(), |r| pct(r.macro_f1)));
                cells.push(v.unwrap_or_else(|| "-".into()));
            }
            cells
        })
        .collect();
    let mut out = render_table(&headers, &rows);
    if let Some(best) = report.best_c {
        out.push_str(&format!("best c: {best}\n"));
    }
    out
}

/// Mean per-label F1 (percent) for each c, one column per label.
pub fn per_label_table(report: &SweepReport) -> String {
    let labels = &report.label_set;
    let mut headers = vec!["c".to_string()];
    headers.extend((0..labels.len()).map(|k| labels.short_name(k)));
    headers.push("macro".into());
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .filter_map(|row| {
            let a = row.aggregate.as_ref()?;
            let mut cells = vec![row.c.to_string()];
            cells.extend(a.per_label_mean.iter().map(|&f| pct(f)));
            cells.push(pct(a.mean));
            Some(cells)
        })
        .collect();
    render_table(&headers, &rows)
}

/// Comma-separated grid with a header row of predicted labels and a
/// leading column of gold labels.
pub fn confusion_csv(cm: &ConfusionMatrix, labels: &EmotionLabelSet) -> String {
    let mut out = String::from("gold\\pred");
    for name in labels.labels() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (g, row) in cm.counts().iter().enumerate() {
        out.push_str(labels.name_of(g).unwrap_or("?"));
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Writes `sweep.txt`, `per_label.txt`, `runs.jsonl` and `sweep.json`.
pub fn write_sweep_report(dir: &Path, report: &SweepReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("sweep.txt", sweep_table(report))?;
    write("per_label.txt", per_label_table(report))?;
    write("runs.jsonl", report.to_jsonl()?)?;
    write_json(&dir.join("sweep.json"), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{confusion, sweep_with, RunResult};

    #[test]
    fn table_alignment() {
        let t = render_table(&["a".into(), "bb".into()], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n---  --\nxyz  1\n");
    }

    #[test]
    fn csv_grid() {
        let labels = EmotionLabelSet::new("t", vec!["x".into(), "y".into()]).unwrap();
        let cm = confusion(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
        assert_eq!(confusion_csv(&cm, &labels), "gold\\pred,x,y\nx,1,0\ny,1,1\n");
    }

    #[test]
    fn sweep_tables_render() {
        let labels = EmotionLabelSet::dailydialog();
        let report = sweep_with(labels, &[0, 3], &[42, 43], false, |c, seed| {
            RunResult::from_predictions(seed, c, &[0, 1, 2, 3, 4, 5, 6], &[0, 1, 2, 3, 4, 5, if c == 3 { 6 } else { 0 }], 7, "h".into())
        })
        .unwrap();
        let table = sweep_table(&report);
        assert!(table.contains("seed 42") && table.contains("best c: 3"));
        let per_label = per_label_table(&report);
        assert!(per_label.starts_with("c  Neu"));
        assert_eq!(per_label.lines().count(), 4);
        let dir = tempfile::tempdir().unwrap();
        write_sweep_report(dir.path(), &report).unwrap();
        assert!(dir.path().join("runs.jsonl").exists());
    }
}
