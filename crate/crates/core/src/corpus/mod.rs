//! Labeled SMS corpus: loading, text normalization and deterministic splits.

mod stem;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;

use crate::{seed, Error, Result};

pub use stem::stem;

/// Binary class. Spam is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Ham = 0,
    Spam = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Ham),
            1 => Some(Label::Spam),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Ham => "ham",
            Label::Spam => "spam",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "ham" => Some(Label::Ham),
            "spam" => Some(Label::Spam),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMessage {
    pub label: Label,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedMessage {
    pub label: Label,
    pub tokens: Vec<String>,
}

/// Reads a `label<TAB>text` file (UCI SMS Spam Collection layout).
///
/// Blank lines are skipped. Invalid UTF-8 is replaced rather than rejected,
/// since the public corpus contains a handful of stray bytes.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<RawMessage>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let content = String::from_utf8_lossy(&bytes);
    parse_dataset(&content, path)
}

pub(crate) fn parse_dataset(content: &str, path: &Path) -> Result<Vec<RawMessage>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: &str| Error::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            reason: reason.to_string(),
        };
        let (label, text) = line.split_once('\t').ok_or_else(|| malformed("missing tab"))?;
        let label = Label::parse(label.trim())
            .ok_or_else(|| malformed(&format!("unknown label {:?}", label)))?;
        if text.trim().is_empty() {
            return Err(malformed("empty message text"));
        }
        out.push(RawMessage {
            label,
            text: text.to_string(),
        });
    }
    Ok(out)
}

/// Toggles for each normalization stage. Tokenization on punctuation always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub lowercase: bool,
    pub strip_digits: bool,
    pub remove_stop_words: bool,
    pub stem: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            lowercase: true,
            strip_digits: true,
            remove_stop_words: true,
            stem: true,
        }
    }
}

const STOP_WORDS_TXT: &str = include_str!("../../assets/stopwords_en.txt");

/// The shipped English stop-word list.
pub fn stop_words() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOP_WORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Splits `text` into normalized word tokens.
pub fn preprocess(text: &str, config: &PreprocessConfig) -> Vec<String> {
    let keep = |c: char| c.is_alphabetic() || (!config.strip_digits && c.is_numeric());
    let stops = stop_words();
    text.split(|c: char| !keep(c))
        .filter(|t| !t.is_empty())
        .map(|t| {
            if config.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .filter(|t| !config.remove_stop_words || !stops.contains(t.to_lowercase().as_str()))
        .map(|t| if config.stem { stem(&t) } else { t })
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn tokenize(message: &RawMessage, config: &PreprocessConfig) -> TokenizedMessage {
    TokenizedMessage {
        label: message.label,
        tokens: preprocess(&message.text, config),
    }
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = SplitRatios {
            train,
            validation,
            test,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(format!("split ratios must be nonnegative: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Sizes for `n` items: floor on train, then on validation, remainder to test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // the nudge keeps e.g. 10 * 0.8 from flooring to 7 on representation error
        let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let validation = floor(self.validation).min(n - train);
        (train, validation, n - train - validation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<M> {
    pub train: Vec<M>,
    pub validation: Vec<M>,
    pub test: Vec<M>,
    pub seed: u64,
}

impl<M> DatasetSplit<M> {
    /// Applies `f` to every member, keeping the partition.
    pub fn map<N>(&self, mut f: impl FnMut(&M) -> N) -> DatasetSplit<N> {
        DatasetSplit {
            train: self.train.iter().map(&mut f).collect(),
            validation: self.validation.iter().map(&mut f).collect(),
            test: self.test.iter().map(&mut f).collect(),
            seed: self.seed,
        }
    }
}

/// Seeded shuffle of `0..n` cut into contiguous train/validation/test ranges.
pub fn split_indices(
    n: usize,
    ratios: &SplitRatios,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    ratios.validate()?;
    if n == 0 {
        return Err(Error::Empty("dataset to split"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, seed::STREAM_SPLIT)));
    let (a, b, _) = ratios.sizes(n);
    let test = order.split_off(a + b);
    let validation = order.split_off(a);
    Ok((order, validation, test))
}

pub fn split_dataset<M: Clone>(
    messages: &[M],
    ratios: &SplitRatios,
    seed: u64,
) -> Result<DatasetSplit<M>> {
    let (train, validation, test) = split_indices(messages.len(), ratios, seed)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| messages[i].clone()).collect();
    Ok(DatasetSplit {
        train: pick(train),
        validation: pick(validation),
        test: pick(test),
        seed,
    })
}
