use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::{normalize_text, Corpus, Dialogue, EmotionLabelSet, Ingestion, LabelId, Provenance, Split, Utterance};
use crate::error::{Error, Result};

pub const EMOWOZ_USER: &str = "user";
pub const EMOWOZ_SYSTEM: &str = "system";
const SOURCE: &str = "emowoz";

/// How EmoWOZ dialogues are assigned to splits.
///
/// The split file is a JSON object keyed by split name (`train`, `dev` or
/// `validation`, `test`); each value is either a list of dialogue ids or an
/// object whose values are such lists (one list per sub-corpus). Without a
/// split file every dialogue goes to `default_split`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmoWozLayout {
    pub split_file: Option<PathBuf>,
    pub default_split: Split,
}

impl Default for EmoWozLayout {
    fn default() -> Self {
        Self {
            split_file: None,
            default_split: Split::Train,
        }
    }
}

/// Reads EmoWOZ annotation files.
///
/// Each data file is a JSON object mapping dialogue id to a dialogue, or an
/// array of dialogues carrying a `dialogue_id` field. A dialogue has a
/// `log`, either an array of turns `{"text", "emotion", ["speaker"]}` or a
/// column object `{"text": [...], "emotion": [...]}`. Turns alternate user
/// and system starting with the user unless a `speaker` field says
/// otherwise. `emotion` may be a label id (negative or null for none), a
/// label name, an object with an `emotion` field, or a list of annotator
/// objects; the entry with `"annotator": "final"` wins, otherwise the
/// majority label (ties to the lower id).
pub fn ingest_emowoz(data_files: &[PathBuf], layout: &EmoWozLayout) -> Result<Ingestion> {
    let label_set = EmotionLabelSet::emowoz();
    let assignment = match &layout.split_file {
        Some(path) => Some(read_split_file(path)?),
        None => None,
    };

    let mut warnings = Vec::new();
    let mut dialogues = Vec::new();
    for path in data_files {
        let root = read_json(path)?;
        let raw: Vec<(String, &Value)> = match &root {
            Value::Object(map) => map.iter().map(|(k, v)| (k.clone(), v)).collect(),
            Value::Array(items) => items
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let id = ["dialogue_id", "dial_id", "id"]
                        .iter()
                        .find_map(|k| v.get(*k).and_then(Value::as_str))
                        .ok_or_else(|| {
                            Error::ingest(SOURCE, format!("{}: dialogue #{i} has no dialogue_id", path.display()))
                        })?;
                    Ok((id.to_string(), v))
                })
                .collect::<Result<_>>()?,
            _ => {
                return Err(Error::ingest(
                    SOURCE,
                    format!("{}: expected a JSON object or array at top level", path.display()),
                ))
            }
        };

        for (id, value) in raw {
            let split = match &assignment {
                Some(map) => *map.get(&id).ok_or_else(|| {
                    Error::ingest(SOURCE, format!("dialogue '{id}' is not assigned to any split"))
                })?,
                None => layout.default_split,
            };
            let turns = parse_dialogue(&id, value, &label_set, &mut warnings)?;
            dialogues.push(Dialogue {
                dialogue_id: id,
                split,
                turns,
            });
        }
    }

    let mut options = BTreeMap::new();
    options.insert(
        "data_files".into(),
        data_files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
    );
    if let Some(p) = &layout.split_file {
        options.insert("split_file".into(), p.display().to_string());
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
    Ok(Ingestion { corpus, warnings })
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::ingest(SOURCE, format!("{}: {e}", path.display())))
}

fn read_split_file(path: &Path) -> Result<HashMap<String, Split>> {
    let root = read_json(path)?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::ingest(SOURCE, format!("{}: split file must be an object", path.display())))?;
    let mut map = HashMap::new();
    for (name, ids) in obj {
        let split: Split = name.parse()?;
        let mut push = |v: &Value| -> Result<()> {
            let list = v
                .as_array()
                .ok_or_else(|| Error::ingest(SOURCE, format!("split '{name}' must list dialogue ids")))?;
            for id in list {
                let id = id
                    .as_str()
                    .ok_or_else(|| Error::ingest(SOURCE, format!("split '{name}' has a non-string id")))?;
                if let Some(prev) = map.insert(id.to_string(), split) {
                    if prev != split {
                        return Err(Error::ingest(SOURCE, format!("dialogue '{id}' listed in both {prev} and {split}")));
                    }
                }
            }
            Ok(())
        };
        match ids {
            Value::Object(groups) => groups.values().try_for_each(&mut push)?,
            other => push(other)?,
        }
    }
    Ok(map)
}

struct RawTurn<'a> {
    text: &'a str,
    emotion: Option<&'a Value>,
    speaker: Option<&'a str>,
}

fn parse_dialogue(id: &str, value: &Value, labels: &EmotionLabelSet, warnings: &mut Vec<String>) -> Result<Vec<Utterance>> {
    let log = value
        .get("log")
        .ok_or_else(|| Error::ingest(SOURCE, format!("dialogue '{id}' has no log")))?;
    let bad = |m: String| Error::ingest(SOURCE, format!("dialogue '{id}': {m}"));

    let raw: Vec<RawTurn> = match log {
        Value::Array(turns) => turns
            .iter()
            .enumerate()
            .map(|(i, t)| {
                Ok(RawTurn {
                    text: t
                        .get("text")
                        .and_then(Value::as_str)
                        .ok_or_else(|| bad(format!("turn {i} has no text")))?,
                    emotion: t.get("emotion"),
                    speaker: ["speaker", "role", "author"].iter().find_map(|k| t.get(*k).and_then(Value::as_str)),
                })
            })
            .collect::<Result<_>>()?,
        Value::Object(cols) => {
            let texts = cols
                .get("text")
                .and_then(Value::as_array)
                .ok_or_else(|| bad("log has no text column".into()))?;
            let emotions = cols.get("emotion").and_then(Value::as_array);
            if emotions.is_some_and(|e| e.len() != texts.len()) {
                return Err(bad("text and emotion columns differ in length".into()));
            }
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    Ok(RawTurn {
                        text: t.as_str().ok_or_else(|| bad(format!("turn {i} text is not a string")))?,
                        emotion: emotions.map(|e| &e[i]),
                        speaker: None,
                    })
                })
                .collect::<Result<_>>()?
        }
        _ => return Err(bad("log must be an array or column object".into())),
    };
    if raw.is_empty() {
        return Err(bad("log is empty".into()));
    }

    let mut turns = Vec::with_capacity(raw.len());
    for (i, t) in raw.into_iter().enumerate() {
        let is_user = match t.speaker.map(str::to_ascii_lowercase).as_deref() {
            Some("user" | "usr" | "customer") => true,
            Some("system" | "sys" | "agent") => false,
            _ => i % 2 == 0,
        };
        let label = match t.emotion {
            Some(v) => parse_emotion(v, labels).map_err(|m| bad(format!("turn {i}: {m}")))?,
            None => None,
        };
        let text = normalize_text(t.text);
        if text.is_empty() {
            return Err(bad(format!("turn {i} has empty text")));
        }
        let label = if is_user {
            Some(label.ok_or_else(|| bad(format!("user turn {i} has no emotion annotation")))?)
        } else {
            if label.is_some() {
                warnings.push(format!("dialogue '{id}': system turn {i} carries an emotion label; label ignored"));
            }
            None
        };
        turns.push(Utterance {
            speaker: if is_user { EMOWOZ_USER } else { EMOWOZ_SYSTEM }.to_string(),
            text,
            label,
        });
    }
    Ok(turns)
}

fn parse_emotion(v: &Value, labels: &EmotionLabelSet) -> std::result::Result<Option<LabelId>, String> {
    match v {
        Value::Null => Ok(None),
        Value::Number(n) => match n.as_i64() {
            Some(x) if x < 0 => Ok(None),
            Some(x) if labels.contains_id(x as usize) => Ok(Some(x as usize)),
            _ => Err(format!("unknown emotion value {n}")),
        },
        Value::String(s) => {
            let s = s.trim().to_ascii_lowercase();
            if s.is_empty() {
                return Ok(None);
            }
            let canonical = match s.as_str() {
                "fear" => "fearful",
                "dissatisfaction" => "dissatisfied",
                "apology" => "apologetic",
                "abuse" => "abusive",
                "excitement" => "excited",
                "satisfaction" => "satisfied",
                other => other,
            };
            if let Some(id) = labels.index_of(canonical) {
                return Ok(Some(id));
            }
            match s.parse::<i64>() {
                Ok(x) => parse_emotion(&Value::from(x), labels),
                Err(_) => Err(format!("unknown emotion '{s}'")),
            }
        }
        Value::Object(obj) => match obj.get("emotion").or_else(|| obj.get("label")) {
            Some(inner) => parse_emotion(inner, labels),
            None => Err("emotion object has no 'emotion' field".into()),
        },
        Value::Array(items) => {
            if let Some(fin) = items
                .iter()
                .find(|it| it.get("annotator").and_then(Value::as_str) == Some("final"))
            {
                return parse_emotion(fin, labels);
            }
            let mut votes = vec![0usize; labels.len()];
            for it in items {
                if let Some(l) = parse_emotion(it, labels)? {
                    votes[l] += 1;
                }
            }
            let best = votes.iter().copied().max().unwrap_or(0);
            Ok((best > 0).then(|| votes.iter().position(|&c| c == best).unwrap()))
        }
        Value::Bool(_) => Err("boolean emotion value".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
        p
    }

    #[test]
    fn user_labeled_system_context() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(
            dir.path(),
            "d.json",
            &json!({"MUL001.json": {"log": [
                {"text": "i want a cheap hotel", "emotion": 0},
                {"text": "Sure, which area?", "emotion": null}
            ]}}),
        );
        let ing = ingest_emowoz(&[data], &EmoWozLayout::default()).unwrap();
        let d = &ing.corpus.dialogues()[0];
        assert_eq!(d.turns.len(), 2);
        assert_eq!(d.labeled_turns(), 1);
        assert_eq!(d.turns[0].label, Some(0));
        assert_eq!(d.turns[0].speaker, EMOWOZ_USER);
        assert_eq!(d.turns[1].label, None);
        assert_eq!(d.turns[1].speaker, EMOWOZ_SYSTEM);
        assert!(ing.warnings.is_empty());
    }

    #[test]
    fn missing_user_annotation_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(
            dir.path(),
            "d.json",
            &json!({"PMUL9": {"log": [
                {"text": "hello", "emotion": 6},
                {"text": "hi", "emotion": -1},
                {"text": "book it", "emotion": []}
            ]}}),
        );
        let err = ingest_emowoz(&[data], &EmoWozLayout::default()).unwrap_err().to_string();
        assert!(err.contains("PMUL9"), "{err}");
        assert!(err.contains("turn 2"), "{err}");
    }

    #[test]
    fn system_label_warns_and_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(
            dir.path(),
            "d.json",
            &json!([{"dialogue_id": "x1", "log": {"text": ["thanks!", "you're welcome"], "emotion": [6, 3]}}]),
        );
        let ing = ingest_emowoz(&[data], &EmoWozLayout::default()).unwrap();
        assert_eq!(ing.warnings.len(), 1);
        assert_eq!(ing.corpus.dialogues()[0].turns[1].label, None);
    }

    #[test]
    fn annotator_lists_and_names() {
        let ls = EmotionLabelSet::emowoz();
        let v = json!([{"annotator": "a1", "emotion": 2}, {"annotator": "final", "emotion": "satisfied"}]);
        assert_eq!(parse_emotion(&v, &ls).unwrap(), Some(6));
        let v = json!([{"emotion": 2}, {"emotion": 1}, {"emotion": 1}]);
        assert_eq!(parse_emotion(&v, &ls).unwrap(), Some(1));
        let v = json!([{"emotion": 2}, {"emotion": 1}]);
        assert_eq!(parse_emotion(&v, &ls).unwrap(), Some(1));
        assert_eq!(parse_emotion(&json!({"emotion": "fear"}), &ls).unwrap(), Some(1));
        assert!(parse_emotion(&json!(11), &ls).is_err());
    }

    #[test]
    fn split_file_assigns_dialogues() {
        let dir = tempfile::tempdir().unwrap();
        let turn = json!({"log": [{"text": "ok", "emotion": 0}]});
        let data = write(dir.path(), "d.json", &json!({"a": turn, "b": turn, "c": turn}));
        let split = write(
            dir.path(),
            "split.json",
            &json!({"train": {"multiwoz": ["a"], "dialmage": []}, "dev": ["b"], "test": ["c"]}),
        );
        let layout = EmoWozLayout {
            split_file: Some(split),
            ..Default::default()
        };
        let c = ingest_emowoz(std::slice::from_ref(&data), &layout).unwrap().corpus;
        assert_eq!(c.dialogue("b").unwrap().split, Split::Validation);
        assert_eq!(c.dialogue("c").unwrap().split, Split::Test);

        let partial = write(dir.path(), "p.json", &json!({"train": ["a"]}));
        let layout = EmoWozLayout {
            split_file: Some(partial),
            ..Default::default()
        };
        assert!(ingest_emowoz(&[data], &layout).unwrap_err().to_string().contains("'b'"));
    }
}
