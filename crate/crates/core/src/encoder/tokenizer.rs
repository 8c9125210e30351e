use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What windowing and the encoder need from a tokenizer.
pub trait TokenizerContract: Send + Sync {
    fn begin_token_id(&self) -> u32;
    fn separator_token_id(&self) -> u32;
    fn pad_token_id(&self) -> u32;
    fn vocab_size(&self) -> usize;
    /// Token ids for `text`, without special tokens.
    fn encode(&self, text: &str) -> Result<Vec<u32>>;
    fn decode(&self, ids: &[u32]) -> Result<String>;
}

pub const WORD_PAD: u32 = 0;
pub const WORD_BEGIN: u32 = 1;
pub const WORD_SEP: u32 = 2;
pub const WORD_UNK: u32 = 3;
const WORD_SPECIALS: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Whitespace word-level tokenizer with a closed vocabulary, used with the
/// small randomly initialized encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordTokenizer {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl WordTokenizer {
    /// Vocabulary of every whitespace token in `texts`, sorted, after the
    /// four special tokens.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<&str> = texts.into_iter().flat_map(str::split_whitespace).collect();
        let tokens = WORD_SPECIALS
            .iter()
            .copied()
            .chain(words.into_iter().filter(|w| !WORD_SPECIALS.contains(w)))
            .map(str::to_string)
            .collect();
        Self::from_tokens(tokens).expect("specials are present")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < WORD_SPECIALS.len() || tokens[..4].iter().zip(WORD_SPECIALS).any(|(a, b)| a != b) {
            return Err(Error::Tokenizer(format!("vocabulary must start with {WORD_SPECIALS:?}")));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(Self { tokens, index })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: WordTokenizer = serde_json::from_str(&text)?;
        Self::from_tokens(raw.tokens)
    }
}

impl TokenizerContract for WordTokenizer {
    fn begin_token_id(&self) -> u32 {
        WORD_BEGIN
    }

    fn separator_token_id(&self) -> u32 {
        WORD_SEP
    }

    fn pad_token_id(&self) -> u32 {
        WORD_PAD
    }

    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>> {
        Ok(text
            .split_whitespace()
            .map(|w| self.index.get(w).copied().unwrap_or(WORD_UNK))
            .collect())
    }

    fn decode(&self, ids: &[u32]) -> Result<String> {
        let words = ids
            .iter()
            .map(|&id| {
                self.tokens
                    .get(id as usize)
                    .map(String::as_str)
                    .ok_or_else(|| Error::Tokenizer(format!("token id {id} out of vocabulary")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(words.join(" "))
    }
}

/// A pre-trained subword tokenizer loaded from a `tokenizer.json` file.
#[derive(Clone)]
pub struct PretrainedTokenizer {
    inner: tokenizers::Tokenizer,
    json: String,
    begin: u32,
    sep: u32,
    pad: u32,
}

impl std::fmt::Debug for PretrainedTokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PretrainedTokenizer")
            .field("begin", &self.begin)
            .field("sep", &self.sep)
            .field("pad", &self.pad)
            .finish_non_exhaustive()
    }
}

impl PretrainedTokenizer {
    pub fn from_file(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(json)
    }

    pub fn from_json(json: String) -> Result<Self> {
        let inner: tokenizers::Tokenizer = json.parse().map_err(|e| Error::Tokenizer(format!("{e}")))?;
        let find = |candidates: &[&str]| {
            candidates
                .iter()
                .find_map(|t| inner.token_to_id(t))
                .ok_or_else(|| Error::Tokenizer(format!("none of {candidates:?} in vocabulary")))
        };
        let begin = find(&["<s>", "[CLS]"])?;
        let sep = find(&["</s>", "[SEP]"])?;
        let pad = find(&["<pad>", "[PAD]"])?;
        if begin == sep || begin == pad || sep == pad {
            return Err(Error::Tokenizer("special token ids must be distinct".into()));
        }
        Ok(Self {
            inner,
            json,
            begin,
            sep,
            pad,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.json).map_err(|e| Error::io(path, e))
    }
}

impl TokenizerContract for PretrainedTokenizer {
    fn begin_token_id(&self) -> u32 {
        self.begin
    }

    fn separator_token_id(&self) -> u32 {
        self.sep
    }

    fn pad_token_id(&self) -> u32 {
        self.pad
    }

    fn vocab_size(&self) -> usize {
        self.inner.get_vocab_size(true)
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>> {
        let enc = self
            .inner
            .encode(text, false)
            .map_err(|e| Error::Tokenizer(format!("{e}")))?;
        Ok(enc.get_ids().to_vec())
    }

    fn decode(&self, ids: &[u32]) -> Result<String> {
        self.inner
            .decode(ids, false)
            .map_err(|e| Error::Tokenizer(format!("{e}")))
    }
}

/// Either tokenizer kind, persisted alongside checkpoints.
#[derive(Debug, Clone)]
pub enum Tokenizer {
    Word(WordTokenizer),
    Pretrained(PretrainedTokenizer),
}

impl Tokenizer {
    const WORD_FILE: &'static str = "vocab.json";
    const PRETRAINED_FILE: &'static str = "tokenizer.json";

    pub fn save_to_dir(&self, dir: &Path) -> Result<()> {
        match self {
            Tokenizer::Word(t) => t.save(&dir.join(Self::WORD_FILE)),
            Tokenizer::Pretrained(t) => t.save(&dir.join(Self::PRETRAINED_FILE)),
        }
    }

    pub fn load_from_dir(dir: &Path) -> Result<Self> {
        let word = dir.join(Self::WORD_FILE);
        if word.exists() {
            return Ok(Tokenizer::Word(WordTokenizer::load(&word)?));
        }
        let pre = dir.join(Self::PRETRAINED_FILE);
        if pre.exists() {
            return Ok(Tokenizer::Pretrained(PretrainedTokenizer::from_file(&pre)?));
        }
        Err(Error::Checkpoint(format!("{}: no tokenizer file", dir.display())))
    }

    fn inner(&self) -> &dyn TokenizerContract {
        match self {
            Tokenizer::Word(t) => t,
            Tokenizer::Pretrained(t) => t,
        }
    }
}

impl TokenizerContract for Tokenizer {
    fn begin_token_id(&self) -> u32 {
        self.inner().begin_token_id()
    }
    fn separator_token_id(&self) -> u32 {
        self.inner().separator_token_id()
    }
    fn pad_token_id(&self) -> u32 {
        self.inner().pad_token_id()
    }
    fn vocab_size(&self) -> usize {
        self.inner().vocab_size()
    }
    fn encode(&self, text: &str) -> Result<Vec<u32>> {
        self.inner().encode(text)
    }
    fn decode(&self, ids: &[u32]) -> Result<String> {
        self.inner().decode(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_tokenizer_round_trip() {
        let t = WordTokenizer::fit(["hello there", "there you are"]);
        assert_eq!(t.vocab_size(), 4 + 4);
        let ids = t.encode("hello you").unwrap();
        assert_eq!(t.decode(&ids).unwrap(), "hello you");
        assert_eq!(t.encode("stranger").unwrap(), vec![WORD_UNK]);
        assert!(t.decode(&[999]).is_err());
    }

    #[test]
    fn word_tokenizer_persists() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tokenizer::Word(WordTokenizer::fit(["a b c"]));
        t.save_to_dir(dir.path()).unwrap();
        let back = Tokenizer::load_from_dir(dir.path()).unwrap();
        assert_eq!(back.encode("c a").unwrap(), t.encode("c a").unwrap());
    }

    #[test]
    fn rejects_bad_vocab() {
        assert!(WordTokenizer::from_tokens(vec!["a".into()]).is_err());
    }

    #[test]
    fn pretrained_tokenizer_from_json() {
        // minimal word-level tokenizer.json with RoBERTa-style specials
        let json = r#"{
          "version": "1.0",
          "truncation": null, "padding": null,
          "added_tokens": [],
          "normalizer": null,
          "pre_tokenizer": {"type": "Whitespace"},
          "post_processor": null,
          "decoder": null,
          "model": {"type": "WordLevel", "vocab": {"<s>": 0, "<pad>": 1, "</s>": 2, "<unk>": 3, "hi": 4, "there": 5}, "unk_token": "<unk>"}
        }"#;
        let t = PretrainedTokenizer::from_json(json.to_string()).unwrap();
        assert_eq!((t.begin_token_id(), t.pad_token_id(), t.separator_token_id()), (0, 1, 2));
        assert_eq!(t.encode("hi there").unwrap(), vec![4, 5]);
    }
}
