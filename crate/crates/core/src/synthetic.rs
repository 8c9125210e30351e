//! Generated corpora for desk-scale experiments.
//!
//! Every dialogue alternates an unlabeled cue turn and a labeled target
//! turn. In the context corpus the target's label is fixed by a keyword in
//! the preceding cue while the target itself is label-independent filler,
//! so a classifier without context cannot beat chance. In the separable
//! corpus the keyword sits in the target itself.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Dialogue, EmotionLabelSet, Provenance, Split, Utterance};
use crate::error::Result;

const KEYWORDS: [&[&str]; 4] = [
    &["okay", "fine", "noted"],
    &["wonderful", "delighted", "great"],
    &["tragic", "heartbroken", "gloomy"],
    &["furious", "outraged", "livid"],
];

const FILLER: [&str; 24] = [
    "the", "a", "train", "left", "today", "we", "saw", "it", "near", "station", "then", "they", "spoke", "about",
    "weather", "and", "lunch", "at", "noon", "maybe", "later", "office", "call", "again",
];

pub fn synthetic_label_set() -> EmotionLabelSet {
    EmotionLabelSet::new(
        "synthetic",
        ["neutral", "happiness", "sadness", "anger"].iter().map(|s| s.to_string()).collect(),
    )
    .expect("static labels are valid")
}

/// Labels depend only on the previous turn.
pub fn keyword_context_corpus(dialogues: usize, seed: u64) -> Result<Corpus> {
    generate(dialogues, seed, false)
}

/// Labels depend only on the target turn.
pub fn separable_corpus(dialogues: usize, seed: u64) -> Result<Corpus> {
    generate(dialogues, seed, true)
}

/// Train / validation / test by position: 80% / 10% / 10%.
fn split_of(i: usize, n: usize) -> Split {
    let train = n * 8 / 10;
    let val = n / 10;
    if i < train {
        Split::Train
    } else if i < train + val {
        Split::Validation
    } else {
        Split::Test
    }
}

fn filler(rng: &mut ChaCha8Rng, words: usize) -> Vec<&'static str> {
    (0..words).map(|_| *FILLER.choose(rng).expect("non-empty")).collect()
}

fn with_keyword(rng: &mut ChaCha8Rng, label: usize) -> String {
    let n = rng.random_range(3..6);
    let mut words = filler(rng, n);
    let kw = *KEYWORDS[label].choose(rng).expect("non-empty");
    let at = rng.random_range(0..=words.len());
    words.insert(at, kw);
    words.join(" ")
}

fn generate(n: usize, seed: u64, separable: bool) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = KEYWORDS.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut turns = Vec::with_capacity(4);
        for pair in 0..2 {
            // balanced labels: cycle through classes, offset per dialogue
            let label = (2 * i + pair + rng.random_range(0..k)) % k;
            let (cue, target) = if separable {
                let w = rng.random_range(3..6);
                (filler(&mut rng, w).join(" "), with_keyword(&mut rng, label))
            } else {
                let cue = with_keyword(&mut rng, label);
                let w = rng.random_range(3..6);
                (cue, filler(&mut rng, w).join(" "))
            };
            turns.push(Utterance::new("A", &cue, None));
            turns.push(Utterance::new("B", &target, Some(label)));
        }
        out.push(Dialogue {
            dialogue_id: format!("syn-{i:04}"),
            split: split_of(i, n),
            turns,
        });
    }
    let mut provenance = Provenance {
        source: if separable { "synthetic-separable" } else { "synthetic-context" }.into(),
        ..Provenance::default()
    };
    provenance.options.insert("seed".into(), seed.to_string());
    provenance.options.insert("dialogues".into(), n.to_string());
    Corpus::new(synthetic_label_set(), out, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::label_distribution;

    #[test]
    fn structure() {
        let c = keyword_context_corpus(100, 1).unwrap();
        assert_eq!(c.stats(Some(Split::Train)).dialogues, 80);
        assert_eq!(c.stats(Some(Split::Validation)).dialogues, 10);
        assert_eq!(c.stats(Some(Split::Test)).dialogues, 10);
        for d in c.dialogues() {
            for pair in d.turns.chunks(2) {
                let label = pair[1].label.unwrap();
                assert!(pair[0].label.is_none());
                // keyword is in the cue, never in the target
                assert!(KEYWORDS[label].iter().any(|kw| pair[0].text.split(' ').any(|w| w == *kw)));
                assert!(KEYWORDS.iter().flat_map(|ks| ks.iter()).all(|kw| !pair[1].text.split(' ').any(|w| w == *kw)));
            }
        }
        let dist = label_distribution(&c, None);
        assert!(dist.proportions.iter().all(|&p| p > 0.15), "{:?}", dist.proportions);
    }

    #[test]
    fn separable_and_deterministic() {
        let a = separable_corpus(20, 3).unwrap();
        for d in a.dialogues() {
            let label = d.turns[1].label.unwrap();
            assert!(KEYWORDS[label].iter().any(|kw| d.turns[1].text.contains(kw)));
        }
        assert_eq!(a, separable_corpus(20, 3).unwrap());
        assert_ne!(a, separable_corpus(20, 4).unwrap());
    }
}
