use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{normalize_text, Corpus, Dialogue, EmotionLabelSet, Ingestion, Provenance, Split, Utterance};
use crate::error::{Error, Result};

const EOU: &str = "__eou__";
const SOURCE: &str = "dailydialog";

/// Dialogue-text and dialogue-emotion files for one split, relative to the
/// raw directory (or absolute).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitFiles {
    pub split: Split,
    pub dialogues: PathBuf,
    pub emotions: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyDialogLayout {
    pub splits: Vec<SplitFiles>,
}

impl DailyDialogLayout {
    /// The published archive layout: `train/dialogues_train.txt`,
    /// `train/dialogues_emotion_train.txt` and likewise for `validation`
    /// and `test`. A flat directory holding the same file names also works.
    pub fn standard() -> Self {
        Self::for_splits(&Split::ALL)
    }

    pub fn for_splits(splits: &[Split]) -> Self {
        Self {
            splits: splits
                .iter()
                .map(|&split| SplitFiles {
                    split,
                    dialogues: PathBuf::from(split.as_str()).join(format!("dialogues_{split}.txt")),
                    emotions: PathBuf::from(split.as_str()).join(format!("dialogues_emotion_{split}.txt")),
                })
                .collect(),
        }
    }

    fn resolve(raw_dir: &Path, rel: &Path) -> PathBuf {
        let nested = raw_dir.join(rel);
        if nested.exists() {
            return nested;
        }
        match rel.file_name() {
            Some(name) if raw_dir.join(name).exists() => raw_dir.join(name),
            _ => nested,
        }
    }
}

/// Reads DailyDialog split files: one dialogue per line, turns terminated by
/// `__eou__`, and a parallel line of space-separated integer labels.
pub fn ingest_dailydialog(raw_dir: &Path, layout: &DailyDialogLayout) -> Result<Ingestion> {
    let label_set = EmotionLabelSet::dailydialog();
    let mut dialogues = Vec::new();
    let mut options = BTreeMap::new();

    for files in &layout.splits {
        let text_path = DailyDialogLayout::resolve(raw_dir, &files.dialogues);
        let emo_path = DailyDialogLayout::resolve(raw_dir, &files.emotions);
        let texts = read_lines(&text_path)?;
        let emotions = read_lines(&emo_path)?;
        if texts.len() != emotions.len() {
            return Err(Error::ingest(
                SOURCE,
                format!(
                    "{} has {} dialogues but {} has {} label lines",
                    text_path.display(),
                    texts.len(),
                    emo_path.display(),
                    emotions.len()
                ),
            ));
        }
        options.insert(format!("{}.dialogues", files.split), files.dialogues.display().to_string());
        options.insert(format!("{}.emotions", files.split), files.emotions.display().to_string());

        for (idx, (text_line, emo_line)) in texts.iter().zip(&emotions).enumerate() {
            let line_no = idx + 1;
            let where_ = || format!("{} line {line_no}", text_path.display());
            let turns = split_turns(text_line).map_err(|m| Error::ingest(SOURCE, format!("{}: {m}", where_())))?;
            let labels = parse_labels(emo_line, &label_set)
                .map_err(|m| Error::ingest(SOURCE, format!("{} line {line_no}: {m}", emo_path.display())))?;
            if turns.len() != labels.len() {
                return Err(Error::ingest(
                    SOURCE,
                    format!("{}: dialogue has {} turns but {} labels", where_(), turns.len(), labels.len()),
                ));
            }
            let turns = turns
                .into_iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (text, label))| Utterance {
                    speaker: speaker_tag(i),
                    text,
                    label: Some(label),
                })
                .collect();
            dialogues.push(Dialogue {
                dialogue_id: format!("dd-{}-{line_no:05}", files.split),
                split: files.split,
                turns,
            });
        }
    }

    options.insert("label_order".into(), label_set.labels().join(","));
    let corpus = Corpus::new(
        label_set,
        dialogues,
        Provenance {
            source: SOURCE.into(),
            options,
        },
    )?;
    Ok(Ingestion {
        corpus,
        warnings: Vec::new(),
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines: Vec<String> = content.lines().map(str::to_string).collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    Ok(lines)
}

fn split_turns(line: &str) -> std::result::Result<Vec<String>, String> {
    let mut pieces: Vec<String> = line.split(EOU).map(normalize_text).collect();
    while pieces.last().is_some_and(|p| p.is_empty()) {
        pieces.pop();
    }
    if pieces.is_empty() {
        return Err("dialogue has no turns".into());
    }
    if let Some(i) = pieces.iter().position(|p| p.is_empty()) {
        return Err(format!("turn {i} is empty"));
    }
    Ok(pieces)
}

fn parse_labels(line: &str, label_set: &EmotionLabelSet) -> std::result::Result<Vec<usize>, String> {
    line.split_whitespace()
        .map(|tok| match tok.parse::<usize>() {
            Ok(v) if label_set.contains_id(v) => Ok(v),
            _ => Err(format!("unknown label value '{tok}'")),
        })
        .collect()
}

/// "A", "B", "A", ... by turn position.
fn speaker_tag(i: usize) -> String {
    if i.is_multiple_of(2) { "A" } else { "B" }.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_split(dir: &Path, split: Split, text: &str, emo: &str) {
        let sub = dir.join(split.as_str());
        fs::create_dir_all(&sub).unwrap();
        fs::write(sub.join(format!("dialogues_{split}.txt")), text).unwrap();
        fs::write(sub.join(format!("dialogues_emotion_{split}.txt")), emo).unwrap();
    }

    #[test]
    fn two_turn_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write_split(
            dir.path(),
            Split::Train,
            "Hello there . __eou__ Great to see you ! __eou__\n",
            "0 4\n",
        );
        let ing = ingest_dailydialog(dir.path(), &DailyDialogLayout::for_splits(&[Split::Train])).unwrap();
        let c = ing.corpus;
        assert_eq!(c.dialogues().len(), 1);
        let d = &c.dialogues()[0];
        assert_eq!(d.dialogue_id, "dd-train-00001");
        let labels: Vec<_> = d
            .turns
            .iter()
            .map(|t| c.label_set().name_of(t.label.unwrap()).unwrap())
            .collect();
        assert_eq!(labels, ["neutral", "happiness"]);
        assert_eq!(d.turns[0].text, "Hello there .");
        assert_eq!(d.turns[0].speaker, "A");
        assert_eq!(d.turns[1].speaker, "B");
    }

    #[test]
    fn flat_layout_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("dialogues_test.txt"), "a __eou__ b __eou__ c __eou__\n").unwrap();
        fs::write(dir.path().join("dialogues_emotion_test.txt"), "0 0 6\n").unwrap();
        let c = ingest_dailydialog(dir.path(), &DailyDialogLayout::for_splits(&[Split::Test]))
            .unwrap()
            .corpus;
        assert_eq!(c.stats(Some(Split::Test)).turns, 3);
        assert_eq!(c.dialogues()[0].turns[2].speaker, "A");
    }

    #[test]
    fn mismatched_counts_name_the_dialogue() {
        let dir = tempfile::tempdir().unwrap();
        write_split(
            dir.path(),
            Split::Train,
            "ok __eou__ ok __eou__\none __eou__ two __eou__ three __eou__\n",
            "0 0\n0 1\n",
        );
        let err = ingest_dailydialog(dir.path(), &DailyDialogLayout::for_splits(&[Split::Train])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("3 turns but 2 labels"), "{msg}");
    }

    #[test]
    fn unknown_label_names_the_value() {
        let dir = tempfile::tempdir().unwrap();
        write_split(dir.path(), Split::Train, "hi __eou__\n", "9\n");
        let err = ingest_dailydialog(dir.path(), &DailyDialogLayout::for_splits(&[Split::Train])).unwrap_err();
        assert!(err.to_string().contains("'9'"), "{err}");
    }

    #[test]
    fn missing_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = ingest_dailydialog(dir.path(), &DailyDialogLayout::standard()).unwrap_err();
        assert!(err.to_string().contains("dialogues_train.txt"), "{err}");
    }
}
