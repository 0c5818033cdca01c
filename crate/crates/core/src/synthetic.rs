//! Small generated corpora with matching word vectors, for tests and demos
//! when the real SMS collection and pre-trained vectors are not at hand.
//!
//! Ham and spam draw most words from their own vocabularies, whose vectors
//! sit in opposite directions along the first few coordinates; a shared
//! neutral vocabulary and a per-word chance of borrowing from the other class
//! keep the task from being trivially separable.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::corpus::{Label, RawMessage};
use crate::{seed, Error, Result};

const VOCAB: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub messages: usize,
    pub spam_fraction: f64,
    /// Probability that a class word is taken from the other class.
    pub noise: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            messages: 400,
            spam_fraction: 0.15,
            noise: 0.15,
            dim: 8,
            seed: 7,
        }
    }
}

fn letters(mut i: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (i % 26) as u8);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    String::from_utf8(s).expect("ascii")
}

pub fn ham_word(i: usize) -> String {
    format!("hamx{}", letters(i))
}

pub fn spam_word(i: usize) -> String {
    format!("spamx{}", letters(i))
}

pub fn neutral_word(i: usize) -> String {
    format!("neutx{}", letters(i))
}

/// Every word of the three vocabularies with its vector.
pub fn embeddings(spec: &SyntheticSpec) -> Vec<(String, Vec<f64>)> {
    let mut rng = seed::rng(seed::derive(spec.seed, 1));
    let mut out = Vec::with_capacity(3 * VOCAB);
    for i in 0..VOCAB {
        for (word, sign) in [(ham_word(i), 1.0), (spam_word(i), -1.0), (neutral_word(i), 0.0)] {
            let v = (0..spec.dim)
                .map(|d| {
                    let centre = if d < spec.dim.div_ceil(2) { sign } else { 0.0 };
                    centre + rng.gen_range(-0.5..0.5)
                })
                .collect();
            out.push((word, v));
        }
    }
    out
}

/// Labelled messages. Words are occasionally capitalised or followed by
/// punctuation so the preprocessing path is exercised.
pub fn messages(spec: &SyntheticSpec) -> Vec<RawMessage> {
    let mut rng = seed::rng(seed::derive(spec.seed, 2));
    (0..spec.messages)
        .map(|_| {
            let label = if rng.gen_bool(spec.spam_fraction) {
                Label::Spam
            } else {
                Label::Ham
            };
            let len = rng.gen_range(3..14);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    let i = rng.gen_range(0..VOCAB);
                    let mut w = if rng.gen_bool(0.35) {
                        neutral_word(i)
                    } else {
                        let own = !rng.gen_bool(spec.noise);
                        match (label, own) {
                            (Label::Ham, true) | (Label::Spam, false) => ham_word(i),
                            _ => spam_word(i),
                        }
                    };
                    if rng.gen_bool(0.1) {
                        w = w.to_uppercase();
                    }
                    if rng.gen_bool(0.1) {
                        w.push('!');
                    }
                    w
                })
                .collect();
            RawMessage {
                label,
                text: words.join(" "),
            }
        })
        .collect()
}

/// Writes `label<TAB>text` lines, the layout [`crate::corpus::load_dataset`] reads.
pub fn write_dataset(path: impl AsRef<Path>, messages: &[RawMessage]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for m in messages {
        writeln!(f, "{}\t{}", m.label, m.text).map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

/// Writes `word v1 ... vd` lines.
pub fn write_embeddings(path: impl AsRef<Path>, entries: &[(String, Vec<f64>)]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for (w, v) in entries {
        let nums: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        writeln!(f, "{w} {}", nums.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

/// The embeddings as an in-memory table.
pub fn table(spec: &SyntheticSpec) -> crate::embedding::EmbeddingTable<f64> {
    let mut t = crate::embedding::EmbeddingTable::new(spec.dim).expect("dim > 0");
    for (w, v) in embeddings(spec) {
        t.insert(w, v).expect("consistent dim");
    }
    t
}
