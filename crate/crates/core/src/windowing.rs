//! Context windows: the target utterance plus up to `c` preceding turns,
//! and their assembly into encoder input under a token budget.
//!
//! Assembled layout:
//!
//! ```text
//! [begin] target [sep] u(i-1) [sep] u(i-2) [sep] ... u(i-c) [sep]
//! ```
//!
//! When the budget is exceeded, tokens are removed from the tail of the
//! oldest context turn first; a context turn left empty is dropped together
//! with its separator. The target is only cut when it alone does not fit.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue, LabelId, Split, Utterance};
use crate::encoder::TokenizerContract;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow {
    pub dialogue_id: String,
    pub target_index: usize,
    pub target: Utterance,
    /// Most recent first: `context[k]` is turn `target_index - 1 - k`.
    pub context: Vec<Utterance>,
    pub gold_label: Option<LabelId>,
}

pub fn build_window(dialogue: &Dialogue, i: usize, c: usize) -> Result<ContextWindow> {
    let turns = &dialogue.turns;
    if i >= turns.len() {
        return Err(Error::OutOfRange {
            index: i,
            len: turns.len(),
        });
    }
    let n = c.min(i);
    let context = (1..=n).map(|k| turns[i - k].clone()).collect();
    Ok(ContextWindow {
        dialogue_id: dialogue.dialogue_id.clone(),
        target_index: i,
        target: turns[i].clone(),
        context,
        gold_label: turns[i].label,
    })
}

/// One window per labeled turn of `split`, in corpus order.
pub fn enumerate_examples(corpus: &Corpus, c: usize, split: Split) -> impl Iterator<Item = ContextWindow> + '_ {
    corpus.split(split).flat_map(move |d| dialogue_windows(d, c))
}

/// Windows for the labeled turns of a single dialogue, in turn order.
pub fn dialogue_windows(dialogue: &Dialogue, c: usize) -> impl Iterator<Item = ContextWindow> + '_ {
    dialogue
        .turns
        .iter()
        .enumerate()
        .filter(|(_, t)| t.label.is_some())
        .map(move |(i, _)| build_window(dialogue, i, c).expect("index within dialogue"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Begin,
    Target,
    Separator,
    /// The k-th most recent context turn, `k >= 1`.
    Context(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Truncation {
    pub target_truncated: bool,
    pub context_turns_dropped: usize,
    pub context_tokens_dropped: usize,
}

impl Truncation {
    pub fn any(&self) -> bool {
        self.target_truncated || self.context_tokens_dropped > 0 || self.context_turns_dropped > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub token_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub segment_layout: Vec<Segment>,
    pub truncation: Truncation,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Decoded text of every target/context segment, in layout order.
    pub fn text_segments(&self, tokenizer: &dyn TokenizerContract) -> Result<Vec<(SegmentKind, String)>> {
        self.segment_layout
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::Target | SegmentKind::Context(_)))
            .map(|s| Ok((s.kind, tokenizer.decode(&self.token_ids[s.span.clone()])?)))
            .collect()
    }

    /// Human-readable dump of the segment layout, one segment per line.
    pub fn render_layout(&self, tokenizer: &dyn TokenizerContract) -> Result<String> {
        let mut out = String::new();
        for s in &self.segment_layout {
            let label = match s.kind {
                SegmentKind::Begin => "begin".to_string(),
                SegmentKind::Target => "target".to_string(),
                SegmentKind::Separator => "sep".to_string(),
                SegmentKind::Context(k) => format!("ctx{k}"),
            };
            let text = match s.kind {
                SegmentKind::Target | SegmentKind::Context(_) => tokenizer.decode(&self.token_ids[s.span.clone()])?,
                _ => String::new(),
            };
            let _ = writeln!(out, "{label:<6} {:>4}..{:<4} {text}", s.span.start, s.span.end);
        }
        if self.truncation.any() {
            let t = self.truncation;
            let _ = writeln!(
                out,
                "truncated: target={} context_turns_dropped={} context_tokens_dropped={}",
                t.target_truncated, t.context_turns_dropped, t.context_tokens_dropped
            );
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembleOptions {
    pub max_len: usize,
    /// Prefix each turn with `"<speaker>: "`. Off by default.
    pub speaker_prefix: bool,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            speaker_prefix: false,
        }
    }
}

impl AssembleOptions {
    pub fn with_max_len(max_len: usize) -> Self {
        Self {
            max_len,
            ..Self::default()
        }
    }
}

fn turn_text(u: &Utterance, speaker_prefix: bool) -> String {
    if speaker_prefix {
        format!("{}: {}", u.speaker, u.text)
    } else {
        u.text.clone()
    }
}

pub fn assemble(window: &ContextWindow, tokenizer: &dyn TokenizerContract, opts: AssembleOptions) -> Result<EncodedInput> {
    let max_len = opts.max_len;
    if max_len < 3 {
        return Err(Error::InvalidArgument(format!(
            "max_len {max_len} cannot hold begin, one target token and a separator"
        )));
    }
    let mut target = tokenizer.encode(&turn_text(&window.target, opts.speaker_prefix))?;
    let mut context = window
        .context
        .iter()
        .map(|u| tokenizer.encode(&turn_text(u, opts.speaker_prefix)))
        .collect::<Result<Vec<_>>>()?;

    let mut truncation = Truncation::default();
    if target.len() + 2 > max_len {
        target.truncate(max_len - 2);
        truncation.target_truncated = true;
        truncation.context_turns_dropped = context.len();
        truncation.context_tokens_dropped = context.iter().map(Vec::len).sum();
        context.clear();
    } else {
        let budget = max_len - 2 - target.len();
        let needed: usize = context.iter().map(|t| t.len() + 1).sum();
        let mut excess = needed.saturating_sub(budget);
        while excess > 0 {
            let oldest = context.last_mut().expect("excess implies remaining context");
            let cost = oldest.len() + 1;
            if excess >= cost || excess == oldest.len() {
                truncation.context_turns_dropped += 1;
                truncation.context_tokens_dropped += oldest.len();
                excess = excess.saturating_sub(cost);
                context.pop();
            } else {
                oldest.truncate(oldest.len() - excess);
                truncation.context_tokens_dropped += excess;
                excess = 0;
            }
        }
    }

    let sep = tokenizer.separator_token_id();
    let mut ids = Vec::with_capacity(max_len);
    let mut segments = Vec::new();
    let mut push = |kind: SegmentKind, tokens: &[u32], ids: &mut Vec<u32>| {
        let start = ids.len();
        ids.extend_from_slice(tokens);
        segments.push(Segment {
            kind,
            span: start..ids.len(),
        });
    };
    push(SegmentKind::Begin, &[tokenizer.begin_token_id()], &mut ids);
    push(SegmentKind::Target, &target, &mut ids);
    push(SegmentKind::Separator, &[sep], &mut ids);
    for (k, turn) in context.iter().enumerate() {
        push(SegmentKind::Context(k + 1), turn, &mut ids);
        push(SegmentKind::Separator, &[sep], &mut ids);
    }
    debug_assert!(ids.len() <= max_len);
    let attention_mask = vec![1; ids.len()];
    Ok(EncodedInput {
        token_ids: ids,
        attention_mask,
        segment_layout: segments,
        truncation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::encoder::WordTokenizer;

    fn dialogue(n: usize) -> Dialogue {
        Dialogue {
            dialogue_id: "d".into(),
            split: Split::Train,
            turns: (0..n)
                .map(|i| Utterance::new(if i % 2 == 0 { "A" } else { "B" }, &format!("u{i} w{i}"), Some(i % 7)))
                .collect(),
        }
    }

    fn texts(w: &ContextWindow) -> Vec<&str> {
        w.context.iter().map(|u| u.text.as_str()).collect()
    }

    #[test]
    fn window_examples() {
        let d = dialogue(4);
        let w = build_window(&d, 3, 3).unwrap();
        assert_eq!(texts(&w), ["u2 w2", "u1 w1", "u0 w0"]);
        assert_eq!(w.gold_label, Some(3));
        assert!(build_window(&d, 0, 5).unwrap().context.is_empty());
        assert_eq!(texts(&build_window(&d, 2, 4).unwrap()), ["u1 w1", "u0 w0"]);
        assert!(matches!(build_window(&d, 4, 1), Err(Error::OutOfRange { index: 4, len: 4 })));
    }

    #[test]
    fn assemble_no_context() {
        let tok = WordTokenizer::fit(["hello"]);
        let d = Dialogue {
            dialogue_id: "x".into(),
            split: Split::Train,
            turns: vec![Utterance::new("A", "hello", Some(0))],
        };
        let enc = assemble(&build_window(&d, 0, 0).unwrap(), &tok, AssembleOptions::default()).unwrap();
        let hello = tok.encode("hello").unwrap()[0];
        assert_eq!(enc.token_ids, vec![tok.begin_token_id(), hello, tok.separator_token_id()]);
        assert_eq!(enc.attention_mask, vec![1, 1, 1]);
        assert!(!enc.truncation.any());
    }

    #[test]
    fn oldest_context_goes_first() {
        let d = dialogue(3);
        let tok = WordTokenizer::fit(d.turns.iter().map(|t| t.text.as_str()));
        let w = build_window(&d, 2, 2).unwrap();
        // full: 1 + 2 + 1 + (2+1) + (2+1) = 10
        let full = assemble(&w, &tok, AssembleOptions::with_max_len(10)).unwrap();
        assert_eq!(full.len(), 10);
        // one token short: oldest turn loses its last word
        let cut = assemble(&w, &tok, AssembleOptions::with_max_len(9)).unwrap();
        let segs = cut.text_segments(&tok).unwrap();
        assert_eq!(segs[2], (SegmentKind::Context(2), "u0".to_string()));
        // two short: oldest turn emptied, dropped with its separator
        let cut = assemble(&w, &tok, AssembleOptions::with_max_len(8)).unwrap();
        let segs = cut.text_segments(&tok).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(cut.len(), 7);
        assert_eq!(cut.truncation.context_turns_dropped, 1);
        // then the most recent turn
        let cut = assemble(&w, &tok, AssembleOptions::with_max_len(6)).unwrap();
        assert_eq!(cut.text_segments(&tok).unwrap()[1].1, "u1");
    }

    #[test]
    fn long_target_is_truncated_and_flagged() {
        let text = (0..20).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
        let d = Dialogue {
            dialogue_id: "x".into(),
            split: Split::Train,
            turns: vec![Utterance::new("A", "before", None), Utterance::new("B", &text, Some(1))],
        };
        let tok = WordTokenizer::fit(d.turns.iter().map(|t| t.text.as_str()));
        let enc = assemble(&build_window(&d, 1, 1).unwrap(), &tok, AssembleOptions::with_max_len(8)).unwrap();
        assert_eq!(enc.len(), 8);
        assert!(enc.truncation.target_truncated);
        assert_eq!(enc.truncation.context_turns_dropped, 1);
        assert_eq!(enc.text_segments(&tok).unwrap(), vec![(SegmentKind::Target, "t0 t1 t2 t3 t4 t5".to_string())]);
    }

    #[test]
    fn speaker_prefix_option() {
        let d = dialogue(2);
        let tok = WordTokenizer::fit(["A: u0 w0", "B: u1 w1"]);
        let opts = AssembleOptions {
            speaker_prefix: true,
            ..Default::default()
        };
        let enc = assemble(&build_window(&d, 1, 1).unwrap(), &tok, opts).unwrap();
        let segs = enc.text_segments(&tok).unwrap();
        assert_eq!(segs[0].1, "B: u1 w1");
        assert_eq!(segs[1].1, "A: u0 w0");
    }

    #[test]
    fn tiny_budget_rejected() {
        let d = dialogue(1);
        let tok = WordTokenizer::fit(["u0 w0"]);
        assert!(assemble(&build_window(&d, 0, 0).unwrap(), &tok, AssembleOptions::with_max_len(2)).is_err());
    }
}
