use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer id of an emotion label, `0..K`.
pub type LabelId = usize;

/// An ordered, named set of emotion labels. Ids are positions in `labels`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionLabelSet {
    name: String,
    labels: Vec<String>,
}

impl EmotionLabelSet {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("label set must not be empty".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.trim().is_empty() {
                return Err(Error::InvalidArgument(format!("label {i} has an empty name")));
            }
            if labels[..i].contains(l) {
                return Err(Error::InvalidArgument(format!("duplicate label '{l}'")));
            }
        }
        Ok(Self {
            name: name.into(),
            labels,
        })
    }

    /// The DailyDialog labels in the raw dataset's integer order.
    pub fn dailydialog() -> Self {
        Self::fixed(
            "dailydialog",
            &[
                "neutral",
                "anger",
                "disgust",
                "fear",
                "happiness",
                "sadness",
                "surprise",
            ],
        )
    }

    /// The EmoWOZ labels, neutral first.
    pub fn emowoz() -> Self {
        Self::fixed(
            "emowoz",
            &[
                "neutral",
                "fearful",
                "dissatisfied",
                "apologetic",
                "abusive",
                "excited",
                "satisfied",
            ],
        )
    }

    fn fixed(name: &str, labels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<LabelId> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn name_of(&self, id: LabelId) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn contains_id(&self, id: LabelId) -> bool {
        id < self.labels.len()
    }

    /// Three-letter display abbreviation ("Neu", "Hap", ...).
    pub fn short_name(&self, id: LabelId) -> String {
        match self.name_of(id) {
            Some(name) => {
                let mut chars = name.chars();
                let mut out: String = chars.next().map(|c| c.to_uppercase().collect()).unwrap_or_default();
                out.extend(chars.take(2));
                out
            }
            None => "?".to_string(),
        }
    }
}
