//! Run configuration and its flat `key = value` text form.
//!
//! The same keys are used by config files, `DCF_*` environment variables,
//! command-line flags (with `_` written as `-`) and model file headers.

use std::path::PathBuf;

use crate::convnet::Pooling;
use crate::corpus::{PreprocessConfig, SplitRatios};
use crate::forest::{ExtraTreesRule, ForestKind};
use crate::{Error, Result};

/// Everything that shapes a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    pub seed: u64,
    /// Filters per bank (`L`).
    pub filters: usize,
    /// Kernel height in words (`k`).
    pub kernel: usize,
    pub n_trees: usize,
    /// Minimum validation-accuracy gain for a new level to be kept.
    pub epsilon: f64,
    pub max_levels: usize,
    pub folds: usize,
    pub smote_k: usize,
    pub pooling: Pooling,
    pub forests: [ForestKind; 4],
    pub extra_rule: ExtraTreesRule,
    /// Pass out-of-fold rather than in-sample training probabilities to the next level.
    pub cross_fit: bool,
    pub preprocess: PreprocessConfig,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            seed: 42,
            filters: 64,
            kernel: 2,
            n_trees: 100,
            epsilon: 0.001,
            max_levels: 10,
            folds: 3,
            smote_k: 5,
            pooling: Pooling::Max,
            forests: [
                ForestKind::RandomForest,
                ForestKind::RandomForest,
                ForestKind::ExtraTrees,
                ForestKind::ExtraTrees,
            ],
            extra_rule: ExtraTreesRule::SingleFeature,
            cross_fit: true,
            // Stemmed forms mostly miss the embedding vocabulary.
            preprocess: PreprocessConfig {
                stem: false,
                ..PreprocessConfig::default()
            },
        }
    }
}

/// Full configuration of a CLI run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub model: PathBuf,
    pub report: Option<PathBuf>,
    pub embedding_dim: usize,
    pub split: SplitRatios,
    /// Also train and report the manual-feature baseline.
    pub baseline: bool,
    pub wordlist: Option<PathBuf>,
    pub blacklist: Option<PathBuf>,
    pub cascade: CascadeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            embeddings: None,
            model: PathBuf::from("dcf.model"),
            report: None,
            embedding_dim: 100,
            split: SplitRatios::default(),
            baseline: false,
            wordlist: None,
            blacklist: None,
            cascade: CascadeConfig::default(),
        }
    }
}

/// Keys whose values describe where files live rather than what was trained.
pub const PATH_KEYS: &[&str] = &["dataset", "embeddings", "model", "report", "wordlist", "blacklist"];

/// Every recognised key, in serialization order.
pub const KEYS: &[&str] = &[
    "dataset",
    "embeddings",
    "model",
    "report",
    "wordlist",
    "blacklist",
    "embedding_dim",
    "split",
    "baseline",
    "seed",
    "filters",
    "kernel",
    "n_trees",
    "epsilon",
    "max_levels",
    "folds",
    "smote_k",
    "pooling",
    "forests",
    "extra_trees_rule",
    "cross_fit",
    "lowercase",
    "strip_digits",
    "remove_stop_words",
    "stem",
];

/// Parses `key = value` lines. `#` starts a comment line; blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn parse_num<N: std::str::FromStr>(key: &str, v: &str) -> Result<N> {
    v.parse()
        .map_err(|_| Error::invalid(format!("{key}: cannot parse {v:?}")))
}

fn positive(key: &str, v: &str) -> Result<usize> {
    let n: usize = parse_num(key, v)?;
    if n == 0 {
        return Err(Error::invalid(format!("{key} must be at least 1")));
    }
    Ok(n)
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl CascadeConfig {
    /// Returns `Ok(false)` for keys that are not cascade settings.
    pub fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "filters" => self.filters = positive(key, v)?,
            "kernel" => self.kernel = positive(key, v)?,
            "n_trees" => self.n_trees = positive(key, v)?,
            "epsilon" => {
                let e: f64 = parse_num(key, v)?;
                if !e.is_finite() || e < 0.0 {
                    return Err(Error::invalid(format!("epsilon must be finite and >= 0, got {v}")));
                }
                self.epsilon = e;
            }
            "max_levels" => self.max_levels = positive(key, v)?,
            "folds" => {
                let f: usize = parse_num(key, v)?;
                if f < 2 {
                    return Err(Error::invalid("folds must be at least 2"));
                }
                self.folds = f;
            }
            "smote_k" => self.smote_k = positive(key, v)?,
            "pooling" => {
                self.pooling = Pooling::parse(v)
                    .ok_or_else(|| Error::invalid(format!("pooling: unknown mode {v:?}")))?
            }
            "forests" => {
                let kinds = v
                    .split(',')
                    .map(|s| {
                        ForestKind::parse(s.trim())
                            .ok_or_else(|| Error::invalid(format!("forests: unknown kind {s:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.forests = kinds.try_into().map_err(|k: Vec<ForestKind>| {
                    Error::invalid(format!("forests: need exactly 4 kinds, got {}", k.len()))
                })?;
            }
            "extra_trees_rule" => {
                self.extra_rule = ExtraTreesRule::parse(v)
                    .ok_or_else(|| Error::invalid(format!("extra_trees_rule: unknown rule {v:?}")))?
            }
            "cross_fit" => self.cross_fit = parse_bool(key, v)?,
            "lowercase" => self.preprocess.lowercase = parse_bool(key, v)?,
            "strip_digits" => self.preprocess.strip_digits = parse_bool(key, v)?,
            "remove_stop_words" => self.preprocess.remove_stop_words = parse_bool(key, v)?,
            "stem" => self.preprocess.stem = parse_bool(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let forests: Vec<&str> = self.forests.iter().map(|k| k.as_str()).collect();
        let p = &self.preprocess;
        [
            ("seed", self.seed.to_string()),
            ("filters", self.filters.to_string()),
            ("kernel", self.kernel.to_string()),
            ("n_trees", self.n_trees.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("max_levels", self.max_levels.to_string()),
            ("folds", self.folds.to_string()),
            ("smote_k", self.smote_k.to_string()),
            ("pooling", self.pooling.as_str().to_string()),
            ("forests", forests.join(",")),
            ("extra_trees_rule", self.extra_rule.as_str().to_string()),
            ("cross_fit", self.cross_fit.to_string()),
            ("lowercase", p.lowercase.to_string()),
            ("strip_digits", p.strip_digits.to_string()),
            ("remove_stop_words", p.remove_stop_words.to_string()),
            ("stem", p.stem.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = opt_path(v),
            "embeddings" => self.embeddings = opt_path(v),
            "model" => {
                self.model = opt_path(v).ok_or_else(|| Error::invalid("model path must not be empty"))?
            }
            "report" => self.report = opt_path(v),
            "wordlist" => self.wordlist = opt_path(v),
            "blacklist" => self.blacklist = opt_path(v),
            "embedding_dim" => self.embedding_dim = positive(key, v)?,
            "split" => {
                let parts = v
                    .split(',')
                    .map(|s| parse_num::<f64>(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                let [a, b, c] = parts[..] else {
                    return Err(Error::invalid("split: expected train,validation,test"));
                };
                self.split = SplitRatios::new(a, b, c)?;
            }
            "baseline" => self.baseline = parse_bool(key, v)?,
            _ => {
                if !self.cascade.set(key, v)? {
                    return Err(Error::invalid(format!("unknown configuration key {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply(&parse_kv(text)?)?;
        Ok(c)
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let s = &self.split;
        let mut out: Vec<(String, String)> = [
            ("dataset", path_str(&self.dataset)),
            ("embeddings", path_str(&self.embeddings)),
            ("model", self.model.display().to_string()),
            ("report", path_str(&self.report)),
            ("wordlist", path_str(&self.wordlist)),
            ("blacklist", path_str(&self.blacklist)),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("split", format!("{},{},{}", s.train, s.validation, s.test)),
            ("baseline", self.baseline.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        out.extend(self.cascade.to_kv());
        out
    }

    pub fn to_kv_text(&self) -> String {
        self.to_kv()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
