//! Layered configuration: defaults < config file < `DCF_*` environment < flags.

use std::path::PathBuf;

use clap::Args;

use dcf_core::cascade::CascadeModel;
use dcf_core::config::{parse_kv, RunConfig, KEYS, PATH_KEYS};

pub const ENV_PREFIX: &str = "DCF_";

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }

    pub fn model(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 3,
            message: e.to_string(),
        }
    }
}

/// Flags mirroring the configuration keys.
#[derive(Args, Debug, Default)]
pub struct Overrides {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "FILE", env = "DCF_CONFIG")]
    pub config: Option<PathBuf>,
    /// Labelled messages, `label<TAB>text` per line.
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<String>,
    /// Word vectors, `word v1 ... vd` per line.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub model: Option<String>,
    /// Where to write the training or evaluation report.
    #[arg(long, value_name = "FILE")]
    pub report: Option<String>,
    /// Baseline spelling word list (one word per line).
    #[arg(long, value_name = "FILE")]
    pub wordlist: Option<String>,
    /// Baseline URL host blacklist (one host per line).
    #[arg(long, value_name = "FILE")]
    pub blacklist: Option<String>,
    #[arg(long, value_name = "N")]
    pub embedding_dim: Option<String>,
    /// Train, validation and test fractions, e.g. `0.8,0.1,0.1`.
    #[arg(long, value_name = "A,B,C")]
    pub split: Option<String>,
    /// Also train the manual-feature baseline (`true`/`false`).
    #[arg(long, value_name = "BOOL")]
    pub baseline: Option<String>,
    #[arg(long, value_name = "N")]
    pub seed: Option<String>,
    /// Filters per bank.
    #[arg(long, value_name = "N")]
    pub filters: Option<String>,
    /// Filter height in words.
    #[arg(long, value_name = "N")]
    pub kernel: Option<String>,
    #[arg(long, value_name = "N")]
    pub n_trees: Option<String>,
    /// Minimum validation accuracy gain to keep a level.
    #[arg(long, value_name = "X")]
    pub epsilon: Option<String>,
    #[arg(long, value_name = "N")]
    pub max_levels: Option<String>,
    #[arg(long, value_name = "N")]
    pub folds: Option<String>,
    #[arg(long, value_name = "N")]
    pub smote_k: Option<String>,
    /// `max`, `min` or `average`.
    #[arg(long, value_name = "MODE")]
    pub pooling: Option<String>,
    /// Four forest kinds, e.g. `rf,rf,ert,ert`.
    #[arg(long, value_name = "LIST")]
    pub forests: Option<String>,
    /// `single` or `geurts`.
    #[arg(long, value_name = "RULE")]
    pub extra_trees_rule: Option<String>,
    #[arg(long, value_name = "BOOL")]
    pub cross_fit: Option<String>,
    #[arg(long, value_name = "BOOL")]
    pub lowercase: Option<String>,
    #[arg(long, value_name = "BOOL")]
    pub strip_digits: Option<String>,
    #[arg(long, value_name = "BOOL")]
    pub remove_stop_words: Option<String>,
    #[arg(long, value_name = "BOOL")]
    pub stem: Option<String>,
}

pub struct Resolved {
    pub config: RunConfig,
    /// Keys set by file, environment or flag, with the winning value.
    pub explicit: Vec<(String, String)>,
}

impl Overrides {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("dataset", &self.dataset),
            ("embeddings", &self.embeddings),
            ("model", &self.model),
            ("report", &self.report),
            ("wordlist", &self.wordlist),
            ("blacklist", &self.blacklist),
            ("embedding_dim", &self.embedding_dim),
            ("split", &self.split),
            ("baseline", &self.baseline),
            ("seed", &self.seed),
            ("filters", &self.filters),
            ("kernel", &self.kernel),
            ("n_trees", &self.n_trees),
            ("epsilon", &self.epsilon),
            ("max_levels", &self.max_levels),
            ("folds", &self.folds),
            ("smote_k", &self.smote_k),
            ("pooling", &self.pooling),
            ("forests", &self.forests),
            ("extra_trees_rule", &self.extra_trees_rule),
            ("cross_fit", &self.cross_fit),
            ("lowercase", &self.lowercase),
            ("strip_digits", &self.strip_digits),
            ("remove_stop_words", &self.remove_stop_words),
            ("stem", &self.stem),
        ]
    }

    pub fn resolve(&self) -> Result<Resolved, Failure> {
        let mut layers: Vec<(String, String)> = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("config file {}: {e}", path.display())))?;
            layers.extend(parse_kv(&text).map_err(|e| Failure::usage(format!("config file {}: {e}", path.display())))?);
        }
        for key in KEYS {
            let var = format!("{ENV_PREFIX}{}", key.to_uppercase());
            match std::env::var(&var) {
                Ok(v) => layers.push((key.to_string(), v)),
                Err(std::env::VarError::NotPresent) => {}
                Err(e) => return Err(Failure::usage(format!("{var}: {e}"))),
            }
        }
        for (key, v) in self.flags() {
            if let Some(v) = v {
                layers.push((key.to_string(), v.clone()));
            }
        }
        let mut config = RunConfig::default();
        config.apply(&layers).map_err(Failure::usage)?;
        let mut explicit: Vec<(String, String)> = Vec::new();
        for (k, v) in layers {
            explicit.retain(|(e, _)| *e != k);
            explicit.push((k, v));
        }
        Ok(Resolved { config, explicit })
    }
}

/// Run settings that are not cascade settings, for the model header.
pub fn metadata(config: &RunConfig) -> Vec<(String, String)> {
    let cascade: Vec<String> = config.cascade.to_kv().into_iter().map(|(k, _)| k).collect();
    config
        .to_kv()
        .into_iter()
        .filter(|(k, _)| !cascade.contains(k))
        .collect()
}

/// Configuration for `eval` and `predict`: settings recorded in the model win
/// over anything the user passed, with a warning when they differ. File
/// locations given by the user still win over recorded ones.
pub fn merge_model_header(resolved: &Resolved, model: &CascadeModel<f64>) -> Result<RunConfig, Failure> {
    let mut header = RunConfig::default();
    header
        .apply(&model.metadata)
        .map_err(|e| Failure::model(format!("model header: {e}")))?;
    header.cascade = model.config.clone();
    header.embedding_dim = model.embedding_dim;

    let recorded = header.to_kv();
    let mut merged = header.clone();
    for (key, value) in &resolved.explicit {
        if PATH_KEYS.contains(&key.as_str()) {
            merged.set(key, value).map_err(Failure::usage)?;
            continue;
        }
        let mut probe = header.clone();
        probe.set(key, value).map_err(Failure::usage)?;
        if probe != header {
            let kept = recorded
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .unwrap_or("");
            eprintln!("warning: model was trained with {key} = {kept}; ignoring {key} = {value}");
        }
    }
    merged.model = resolved.config.model.clone();
    Ok(merged)
}
