//! Line-delimited canonical corpus files.
//!
//! The first line is a header record `{"schema_version", "label_set",
//! "provenance"}`; every following line is one dialogue
//! `{"dialogue_id", "split", "turns": [{"speaker", "text", "label"}]}` with
//! `label` a label id or `null`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, Dialogue, EmotionLabelSet, Provenance};
use crate::error::{Error, Result};

pub const CANONICAL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u32,
    label_set: EmotionLabelSet,
    provenance: Provenance,
}

pub fn write_canonical(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_canonical_to(corpus, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_canonical_to<W: Write>(corpus: &Corpus, w: &mut W) -> std::io::Result<()> {
    let header = Header {
        schema_version: CANONICAL_SCHEMA_VERSION,
        label_set: corpus.label_set().clone(),
        provenance: corpus.provenance().clone(),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for d in corpus.dialogues() {
        serde_json::to_writer(&mut *w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_canonical(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Schema(format!("{}: empty file", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let version = serde_json::from_str::<serde_json::Value>(&first)
        .ok()
        .and_then(|v| v.get("schema_version").and_then(serde_json::Value::as_u64));
    match version {
        Some(v) if v == CANONICAL_SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Schema(format!(
                "{}: schema version {v} is not supported (expected {CANONICAL_SCHEMA_VERSION})",
                path.display()
            )))
        }
        None => return Err(Error::Schema(format!("{}: missing header record", path.display()))),
    }
    let header: Header =
        serde_json::from_str(&first).map_err(|e| Error::Schema(format!("{}: header: {e}", path.display())))?;

    let mut dialogues = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("{} line {}: {e}", path.display(), i + 2)))?;
        dialogues.push(d);
    }
    Corpus::new(header.label_set, dialogues, header.provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{label_distribution, Split, Utterance};

    fn fixture() -> Corpus {
        Corpus::new(
            EmotionLabelSet::emowoz(),
            vec![
                Dialogue {
                    dialogue_id: "a".into(),
                    split: Split::Train,
                    turns: vec![
                        Utterance::new("user", "i want a cheap hotel", Some(0)),
                        Utterance::new("system", "Which área?", None),
                    ],
                },
                Dialogue {
                    dialogue_id: "b".into(),
                    split: Split::Test,
                    turns: vec![Utterance::new("user", "thanks \"a lot\"", Some(6))],
                },
            ],
            Provenance {
                source: "emowoz".into(),
                options: [("k".to_string(), "v".to_string())].into_iter().collect(),
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let c = fixture();
        write_canonical(&c, &p).unwrap();
        let back = read_canonical(&p).unwrap();
        assert_eq!(back, c);
        assert_eq!(label_distribution(&back, None), label_distribution(&c, None));
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn unknown_schema_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        write_canonical(&fixture(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replacen("\"schema_version\":1", "\"schema_version\":99", 1);
        std::fs::write(&p, text).unwrap();
        let err = read_canonical(&p).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn missing_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        std::fs::write(&p, "{\"dialogue_id\":\"a\"}\n").unwrap();
        assert!(matches!(read_canonical(&p), Err(Error::Schema(_))));
    }
}
