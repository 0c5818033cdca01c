//! Hand-crafted message features and a random-forest baseline over them.
//!
//! Pattern rules (all counts are non-overlapping matches):
//!
//! * email: `local@domain.tld`
//! * URL: `http(s)://…`, `www.…`, or a bare host ending in a common TLD,
//!   searched after emails are blanked out
//! * IPv4: four dot-separated octets 0-255
//! * phone: a run of digits, spaces and dashes (optional leading `+`)
//!   holding 7 to 15 digits
//! * currency: any of `$`, `£`, `€`
//!
//! Readability is the Flesch reading-ease score
//! `206.835 - 1.015 * words / sentences - 84.6 * syllables / words`, with
//! sentences counted as runs of `.`, `!` or `?` (at least one) and syllables
//! as vowel groups (`aeiouy`) per word, minus a trailing silent `e`, at
//! least one per word that has letters. Empty text scores 0.
//!
//! A word is spelled correctly when it, or the word left after removing one
//! of a few inflectional suffixes, is in the word list. For words with an
//! apostrophe only the part before it is checked.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::balance::smote_balance;
use crate::corpus::{DatasetSplit, Label, RawMessage};
use crate::forest::{Forest, ForestKind, ForestParams};
use crate::metrics::EvalReport;
use crate::{seed, Error, Result, Scalar};

pub const FEATURE_COUNT: usize = 10;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "characters_count",
    "words_count",
    "readability_score",
    "misspelled_count",
    "emails_count",
    "phones_count",
    "is_currency_found",
    "ip_address_count",
    "urls_count",
    "has_blacklist_url",
];

const STREAM_BASELINE_SMOTE: u64 = 999_999_101;
const STREAM_BASELINE_FOREST: u64 = 999_999_102;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ManualFeatures {
    pub characters_count: usize,
    pub words_count: usize,
    pub readability_score: f64,
    pub misspelled_count: usize,
    pub emails_count: usize,
    pub phones_count: usize,
    pub is_currency_found: bool,
    pub ip_address_count: usize,
    pub urls_count: usize,
    pub has_blacklist_url: bool,
}

impl ManualFeatures {
    pub fn to_vec<T: Scalar>(&self) -> Vec<T> {
        let c = T::from_count;
        let b = |v: bool| if v { T::one() } else { T::zero() };
        vec![
            c(self.characters_count),
            c(self.words_count),
            T::from_f64_lossy(self.readability_score),
            c(self.misspelled_count),
            c(self.emails_count),
            c(self.phones_count),
            b(self.is_currency_found),
            c(self.ip_address_count),
            c(self.urls_count),
            b(self.has_blacklist_url),
        ]
    }
}

const WORDLIST_TXT: &str = include_str!("../assets/wordlist_en.txt");

/// Word list and URL blacklist used by the extractor.
#[derive(Debug, Clone)]
pub struct Resources {
    words: HashSet<String>,
    blacklist: HashSet<String>,
}

fn read_lines(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

fn read_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

impl Resources {
    /// The shipped word list and an empty blacklist.
    pub fn shipped() -> &'static Resources {
        static R: OnceLock<Resources> = OnceLock::new();
        R.get_or_init(|| Resources {
            words: read_lines(WORDLIST_TXT),
            blacklist: HashSet::new(),
        })
    }

    pub fn new(words: impl IntoIterator<Item = String>, blacklist: impl IntoIterator<Item = String>) -> Self {
        Resources {
            words: words.into_iter().map(|w| w.to_lowercase()).collect(),
            blacklist: blacklist.into_iter().map(|h| h.to_lowercase()).collect(),
        }
    }

    /// Loads either file from disk, falling back to the shipped word list
    /// and an empty blacklist.
    pub fn load(wordlist: Option<&Path>, blacklist: Option<&Path>) -> Result<Self> {
        let words = match wordlist {
            Some(p) => read_lines(&read_file(p)?),
            None => Resources::shipped().words.clone(),
        };
        let blacklist = match blacklist {
            Some(p) => read_lines(&read_file(p)?),
            None => HashSet::new(),
        };
        Ok(Resources { words, blacklist })
    }

    fn known(&self, w: &str) -> bool {
        self.words.contains(w)
    }

    pub fn is_spelled(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        let w = match w.split_once('\'') {
            Some((head, _)) if !head.is_empty() => head.to_string(),
            _ => w,
        };
        if self.known(&w) {
            return true;
        }
        for (suffix, replacements) in [
            ("ies", &["y", "ie"][..]),
            ("ied", &["y"]),
            ("es", &["", "e"]),
            ("s", &[""]),
            ("ed", &["", "e"]),
            ("d", &[""]),
            ("ing", &["", "e"]),
            ("er", &["", "e"]),
            ("est", &["", "e"]),
            ("ly", &[""]),
        ] {
            let Some(stem) = w.strip_suffix(suffix) else {
                continue;
            };
            if stem.len() < 2 {
                continue;
            }
            if replacements.iter().any(|r| self.known(&format!("{stem}{r}"))) {
                return true;
            }
            // doubled final consonant: running -> run
            let b = stem.as_bytes();
            if b.len() >= 3 && b[b.len() - 1] == b[b.len() - 2] && self.known(&stem[..stem.len() - 1]) {
                return true;
            }
        }
        false
    }

    fn blacklisted(&self, host: &str) -> bool {
        let host = host.to_lowercase();
        let mut h = host.as_str();
        loop {
            if self.blacklist.contains(h) {
                return true;
            }
            match h.split_once('.') {
                Some((_, rest)) if rest.contains('.') => h = rest,
                _ => return false,
            }
        }
    }
}

struct Patterns {
    email: Regex,
    url: Regex,
    ip: Regex,
    phone: Regex,
    sentence_end: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        email: Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}").unwrap(),
        url: Regex::new(
            r"(?i)\b(?:https?://[^\s<>]+|www\.[^\s<>]+|[a-z0-9\-]+(?:\.[a-z0-9\-]+)*\.(?:com|net|org|biz|info|co\.uk|org\.uk|uk|mobi|tv)\b(?:/[^\s<>]*)?)",
        )
        .unwrap(),
        ip: Regex::new(r"\b(?:(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)\.){3}(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)\b").unwrap(),
        phone: Regex::new(r"\+?\d[\d \-]*\d").unwrap(),
        sentence_end: Regex::new(r"[.!?]+").unwrap(),
    })
}

/// Host part of a URL match: scheme, path, port and `www.` removed.
fn url_host(url: &str) -> &str {
    let rest = url
        .split_once("://")
        .map(|(_, r)| r)
        .unwrap_or(url);
    let end = rest.find(['/', ':', '?', '#']).unwrap_or(rest.len());
    let host = rest[..end].trim_end_matches(['.', ',', '!', ')']);
    host.strip_prefix("www.").or_else(|| host.strip_prefix("WWW.")).unwrap_or(host)
}

pub fn syllables(word: &str) -> usize {
    let letters: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    if letters.is_empty() {
        return 0;
    }
    let vowel = |c: char| "aeiouy".contains(c);
    let mut groups = 0;
    let mut prev = false;
    for &c in &letters {
        let v = vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    if letters.last() == Some(&'e') && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

pub fn readability(text: &str) -> f64 {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return 0.0;
    }
    let sentences = patterns().sentence_end.find_iter(text).count().max(1) as f64;
    let syl: usize = words.iter().map(|w| syllables(w)).sum();
    let n = words.len() as f64;
    206.835 - 1.015 * (n / sentences) - 84.6 * (syl as f64 / n)
}

fn count_phones(text: &str) -> usize {
    patterns()
        .phone
        .find_iter(text)
        .filter(|m| {
            let digits = m.as_str().chars().filter(char::is_ascii_digit).count();
            (7..=15).contains(&digits)
        })
        .count()
}

pub fn extract_manual_features(text: &str, resources: &Resources) -> ManualFeatures {
    let p = patterns();
    let emails_count = p.email.find_iter(text).count();
    let without_emails = p.email.replace_all(text, " ");
    let urls: Vec<&str> = p.url.find_iter(&without_emails).map(|m| m.as_str()).collect();
    let without_ips = p.ip.replace_all(text, " ");
    let misspelled_count = text
        .split(|c: char| !(c.is_alphabetic() || c == '\''))
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty())
        .filter(|w| !resources.is_spelled(w))
        .count();
    ManualFeatures {
        characters_count: text.chars().count(),
        words_count: text.split_whitespace().count(),
        readability_score: readability(text),
        misspelled_count,
        emails_count,
        phones_count: count_phones(&without_ips),
        is_currency_found: text.contains(['$', '£', '€']),
        ip_address_count: p.ip.find_iter(text).count(),
        urls_count: urls.len(),
        has_blacklist_url: urls.iter().any(|u| resources.blacklisted(url_host(u))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    pub n_trees: usize,
    pub smote_k: usize,
    pub seed: u64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            n_trees: 100,
            smote_k: 5,
            seed: 42,
        }
    }
}

/// Manual features, SMOTE, a random forest on the training part, evaluated
/// on the test part.
pub fn train_baseline<T: Scalar>(
    split: &DatasetSplit<RawMessage>,
    resources: &Resources,
    params: &BaselineParams,
) -> Result<(Forest<T>, EvalReport<T>)> {
    use rayon::prelude::*;
    let featurize = |msgs: &[RawMessage]| -> Vec<Vec<T>> {
        msgs.par_iter()
            .map(|m| extract_manual_features(&m.text, resources).to_vec())
            .collect()
    };
    let x = featurize(&split.train);
    let y: Vec<Label> = split.train.iter().map(|m| m.label).collect();
    if split.test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let balanced = smote_balance(&x, &y, params.smote_k, seed::derive(params.seed, STREAM_BASELINE_SMOTE))?;
    let forest = Forest::fit(
        &balanced.x,
        &balanced.y,
        ForestKind::RandomForest,
        &ForestParams {
            n_trees: params.n_trees,
            ..ForestParams::default()
        },
        seed::derive(params.seed, STREAM_BASELINE_FOREST),
    )?;
    let test_x = featurize(&split.test);
    let probs = forest.predict_proba_batch(&test_x)?;
    let truth: Vec<Label> = split.test.iter().map(|m| m.label).collect();
    let predicted: Vec<Label> = probs
        .iter()
        .map(|p| if p.p_ham > p.p_spam { Label::Ham } else { Label::Spam })
        .collect();
    let p_spam: Vec<T> = probs.iter().map(|p| p.p_spam).collect();
    let report = EvalReport::from_predictions(&truth, &predicted, &p_spam)?;
    Ok((forest, report))
}
