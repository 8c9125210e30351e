//! Dialogue corpora: the canonical data model, raw-dataset ingestion and
//! the line-delimited on-disk format.
//!
//! A [`Corpus`] is validated once at construction and immutable afterwards:
//! every labeled turn carries an id valid for the corpus label set, every
//! dialogue has at least one non-empty turn, and dialogue ids are unique
//! (so splits are disjoint by id).

mod canonical;
mod dailydialog;
mod emowoz;
mod labels;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use canonical::{read_canonical, write_canonical, CANONICAL_SCHEMA_VERSION};
pub use dailydialog::{ingest_dailydialog, DailyDialogLayout, SplitFiles};
pub use emowoz::{ingest_emowoz, EmoWozLayout, EMOWOZ_SYSTEM, EMOWOZ_USER};
pub use labels::{EmotionLabelSet, LabelId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "dev" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split '{other}'"))),
        }
    }
}

/// One conversational turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: String,
    pub text: String,
    pub label: Option<LabelId>,
}

impl Utterance {
    /// Builds an utterance with normalized text.
    pub fn new(speaker: impl Into<String>, text: &str, label: Option<LabelId>) -> Self {
        Self {
            speaker: speaker.into(),
            text: normalize_text(text),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub split: Split,
    pub turns: Vec<Utterance>,
}

impl Dialogue {
    pub fn labeled_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.label.is_some()).count()
    }
}

/// Where a corpus came from and how it was ingested.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    #[serde(default)]
    pub options: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    label_set: EmotionLabelSet,
    dialogues: Vec<Dialogue>,
    provenance: Provenance,
}

/// Result of a raw-dataset ingestion: the corpus plus non-fatal findings.
#[derive(Debug, Clone)]
pub struct Ingestion {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusStats {
    pub dialogues: usize,
    pub turns: usize,
    pub labeled_turns: usize,
}

impl CorpusStats {
    pub fn avg_turns(&self) -> f64 {
        if self.dialogues == 0 {
            0.0
        } else {
            self.turns as f64 / self.dialogues as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Dialogues with no labeled turn; kept as context-only material.
    pub context_only: Vec<String>,
}

impl Corpus {
    pub fn new(label_set: EmotionLabelSet, dialogues: Vec<Dialogue>, provenance: Provenance) -> Result<Self> {
        let k = label_set.len();
        let mut seen = HashSet::with_capacity(dialogues.len());
        for d in &dialogues {
            if !seen.insert(d.dialogue_id.as_str()) {
                return Err(Error::InvalidCorpus(format!("duplicate dialogue id '{}'", d.dialogue_id)));
            }
            if d.turns.is_empty() {
                return Err(Error::InvalidCorpus(format!("dialogue '{}' has no turns", d.dialogue_id)));
            }
            for (i, t) in d.turns.iter().enumerate() {
                if t.text.trim().is_empty() {
                    return Err(Error::InvalidCorpus(format!(
                        "dialogue '{}' turn {i} has empty text",
                        d.dialogue_id
                    )));
                }
                if let Some(l) = t.label {
                    if l >= k {
                        return Err(Error::InvalidCorpus(format!(
                            "dialogue '{}' turn {i} has label {l}, label set '{}' has {k} labels",
                            d.dialogue_id,
                            label_set.name()
                        )));
                    }
                }
            }
        }
        Ok(Self {
            label_set,
            dialogues,
            provenance,
        })
    }

    pub fn label_set(&self) -> &EmotionLabelSet {
        &self.label_set
    }

    pub fn dialogues(&self) -> &[Dialogue] {
        &self.dialogues
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Dialogue> + '_ {
        self.dialogues.iter().filter(move |d| d.split == split)
    }

    pub fn dialogue(&self, id: &str) -> Option<&Dialogue> {
        self.dialogues.iter().find(|d| d.dialogue_id == id)
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.dialogues.iter().any(|d| d.split == split)
    }

    /// Keeps only the dialogues for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&Dialogue) -> bool) -> Corpus {
        Corpus {
            label_set: self.label_set.clone(),
            dialogues: self.dialogues.iter().filter(|d| keep(d)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn stats(&self, split: Option<Split>) -> CorpusStats {
        let mut s = CorpusStats {
            dialogues: 0,
            turns: 0,
            labeled_turns: 0,
        };
        for d in self.dialogues.iter().filter(|d| split.is_none_or(|sp| d.split == sp)) {
            s.dialogues += 1;
            s.turns += d.turns.len();
            s.labeled_turns += d.labeled_turns();
        }
        s
    }

    pub fn validation_report(&self) -> ValidationReport {
        ValidationReport {
            context_only: self
                .dialogues
                .iter()
                .filter(|d| d.labeled_turns() == 0)
                .map(|d| d.dialogue_id.clone())
                .collect(),
        }
    }
}

/// Proportion of each label among labeled turns, indexed by label id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
    pub proportions: Vec<f64>,
}

impl LabelDistribution {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.proportions[i])
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Label proportions over labeled turns, optionally restricted to one split.
/// With no labeled turns every proportion is zero.
pub fn label_distribution(corpus: &Corpus, split: Option<Split>) -> LabelDistribution {
    let k = corpus.label_set().len();
    let mut counts = vec![0usize; k];
    for d in corpus.dialogues().iter().filter(|d| split.is_none_or(|s| d.split == s)) {
        for l in d.turns.iter().filter_map(|t| t.label) {
            counts[l] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let proportions = counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    LabelDistribution {
        labels: corpus.label_set().labels().to_vec(),
        counts,
        proportions,
    }
}

/// NFC, whitespace runs collapsed to one space, trimmed. Case is preserved.
pub fn normalize_text(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(labels: &[Option<usize>]) -> Corpus {
        let turns = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Utterance::new(if i % 2 == 0 { "A" } else { "B" }, &format!("turn {i}"), l))
            .collect();
        Corpus::new(
            EmotionLabelSet::dailydialog(),
            vec![Dialogue {
                dialogue_id: "d0".into(),
                split: Split::Train,
                turns,
            }],
            Provenance::default(),
        )
        .unwrap()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("  Hello \t  there\n "), "Hello there");
        // e + combining acute composes to a single code point
        assert_eq!(normalize_text("cafe\u{301}"), "caf\u{e9}");
        assert_eq!(normalize_text("I ' m FINE"), "I ' m FINE");
    }

    #[test]
    fn distribution_two_neutral() {
        let c = tiny(&[Some(0), Some(0)]);
        let d = label_distribution(&c, None);
        assert_eq!(d.get("neutral"), Some(1.0));
        for l in &d.labels[1..] {
            assert_eq!(d.get(l), Some(0.0));
        }
    }

    #[test]
    fn distribution_skips_unlabeled() {
        let c = tiny(&[None, Some(4), None, Some(0)]);
        let d = label_distribution(&c, Some(Split::Train));
        assert_eq!(d.total(), 2);
        assert_eq!(d.get("happiness"), Some(0.5));
        assert!(label_distribution(&c, Some(Split::Test)).proportions.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn rejects_invalid_corpora() {
        let ls = EmotionLabelSet::dailydialog();
        let bad_label = Dialogue {
            dialogue_id: "x".into(),
            split: Split::Train,
            turns: vec![Utterance::new("A", "hi", Some(7))],
        };
        assert!(Corpus::new(ls.clone(), vec![bad_label], Provenance::default()).is_err());

        let empty = Dialogue {
            dialogue_id: "x".into(),
            split: Split::Train,
            turns: vec![],
        };
        assert!(Corpus::new(ls.clone(), vec![empty], Provenance::default()).is_err());

        let blank = Dialogue {
            dialogue_id: "x".into(),
            split: Split::Train,
            turns: vec![Utterance::new("A", "   ", None)],
        };
        assert!(Corpus::new(ls.clone(), vec![blank], Provenance::default()).is_err());

        let d = |split| Dialogue {
            dialogue_id: "same".into(),
            split,
            turns: vec![Utterance::new("A", "hi", None)],
        };
        assert!(Corpus::new(ls, vec![d(Split::Train), d(Split::Test)], Provenance::default()).is_err());
    }

    #[test]
    fn context_only_dialogues_are_flagged() {
        let c = tiny(&[None, None]);
        assert_eq!(c.validation_report().context_only, vec!["d0".to_string()]);
        assert!(tiny(&[None, Some(1)]).validation_report().context_only.is_empty());
    }

    #[test]
    fn split_parsing() {
        assert_eq!("dev".parse::<Split>().unwrap(), Split::Validation);
        assert_eq!("TEST".parse::<Split>().unwrap(), Split::Test);
        assert!("holdout".parse::<Split>().is_err());
    }
}
