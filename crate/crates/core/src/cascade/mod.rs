//! The level-wise cascade: convolutional features, four forests per level,
//! probability augmentation and accuracy-gated growth.

mod persist;

pub use persist::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};

use rayon::prelude::*;

use crate::balance::smote_balance;
use crate::config::CascadeConfig;
use crate::convnet::{extract_features_pooled, update_features_pooled, FeatureVector, FilterBank};
use crate::corpus::{tokenize, DatasetSplit, Label, RawMessage, TokenizedMessage};
use crate::embedding::{build_word_matrix, EmbeddingTable};
use crate::forest::{cross_fit_proba, ClassProbabilities, Forest, ForestParams};
use crate::metrics::log_loss;
use crate::seed::{self, LEVEL_STRIDE, STREAM_BANK, STREAM_FOREST, STREAM_SMOTE};
use crate::{Error, Result, Scalar};

/// Forests per level.
pub const FORESTS_PER_LEVEL: usize = 4;
/// Probabilities a level hands to the next one.
pub const LEVEL_PROBS: usize = 2 * FORESTS_PER_LEVEL;

/// `P(ham)` of forests 1-4, then `P(spam)` of forests 1-4.
pub type LevelProbs<T> = [T; LEVEL_PROBS];

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeLevel<T> {
    /// 1-based.
    pub index: usize,
    /// Word-embedding bank at level 1, a one-dimensional bank afterwards.
    pub bank: FilterBank<T>,
    pub forests: Vec<Forest<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    NoImprovement,
    MaxLevels,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::NoImprovement => "no-improvement",
            StopReason::MaxLevels => "max-levels",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "no-improvement" => Some(StopReason::NoImprovement),
            "max-levels" => Some(StopReason::MaxLevels),
            _ => None,
        }
    }
}

/// A trained cascade. Immutable; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel<T> {
    pub config: CascadeConfig,
    pub embedding_dim: usize,
    pub levels: Vec<CascadeLevel<T>>,
    pub stop_reason: StopReason,
    /// Extra header entries carried through the model file untouched.
    pub metadata: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelScore {
    pub accuracy: f64,
    pub log_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// One entry per retained level.
    pub levels: Vec<LevelScore>,
    /// The level that failed the gate, if growth stopped that way.
    pub rejected: Option<LevelScore>,
    pub stop_reason: StopReason,
    pub synthetic_count: usize,
}

impl TrainReport {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, l) in self.levels.iter().enumerate() {
            s.push_str(&format!(
                "level {}: validation accuracy {:.4}, log-loss {:.4}\n",
                i + 1,
                l.accuracy,
                l.log_loss
            ));
        }
        if let Some(r) = &self.rejected {
            s.push_str(&format!(
                "level {} rejected: validation accuracy {:.4}, log-loss {:.4}\n",
                self.levels.len() + 1,
                r.accuracy,
                r.log_loss
            ));
        }
        s.push_str(&format!(
            "levels: {} (stopped: {}), synthetic training rows: {}\n",
            self.levels.len(),
            self.stop_reason.as_str(),
            self.synthetic_count
        ));
        s
    }
}

/// Classifier input for one row: the features, followed at levels after the
/// first by the previous level's eight probabilities.
pub fn level_input<T: Scalar>(features: &FeatureVector<T>, prev: Option<&[T]>) -> Result<Vec<T>> {
    let mut out = features.0.clone();
    if let Some(p) = prev {
        if p.len() != LEVEL_PROBS {
            return Err(Error::DimensionMismatch {
                expected: LEVEL_PROBS,
                found: p.len(),
            });
        }
        out.extend_from_slice(p);
    }
    Ok(out)
}

fn pack<T: Scalar>(probs: &[ClassProbabilities<T>]) -> LevelProbs<T> {
    let mut out = [T::zero(); LEVEL_PROBS];
    for (i, p) in probs.iter().enumerate() {
        out[i] = p.p_ham;
        out[FORESTS_PER_LEVEL + i] = p.p_spam;
    }
    out
}

/// Averages the four `P(ham)` and four `P(spam)` values; ham only when its
/// mean is strictly larger. Returns the label and the mean `P(spam)`.
pub fn final_decision<T: Scalar>(probs: &LevelProbs<T>) -> (Label, T) {
    let n = T::from_count(FORESTS_PER_LEVEL);
    let ham = probs[..FORESTS_PER_LEVEL].iter().copied().sum::<T>() / n;
    let spam = probs[FORESTS_PER_LEVEL..].iter().copied().sum::<T>() / n;
    (if ham > spam { Label::Ham } else { Label::Spam }, spam)
}

fn bank_seed(master: u64, level: usize) -> u64 {
    seed::derive(master, level as u64 * LEVEL_STRIDE + STREAM_BANK)
}

fn forest_seed(master: u64, level: usize, position: usize) -> u64 {
    seed::derive(master, level as u64 * LEVEL_STRIDE + STREAM_FOREST + position as u64)
}

fn level_bank<T: Scalar>(config: &CascadeConfig, level: usize, embedding_dim: usize) -> Result<FilterBank<T>> {
    let input_dim = if level == 1 { embedding_dim } else { 1 };
    FilterBank::random(bank_seed(config.seed, level), config.filters, input_dim, config.kernel)
}

fn level_features<T: Scalar>(
    bank: &FilterBank<T>,
    pooling: crate::convnet::Pooling,
    rows: &[FeatureVector<T>],
) -> Result<Vec<FeatureVector<T>>> {
    rows.par_iter()
        .map(|f| update_features_pooled(f, bank, pooling))
        .collect()
}

fn embed_all<T: Scalar>(
    messages: &[TokenizedMessage],
    table: &EmbeddingTable<T>,
    bank: &FilterBank<T>,
    config: &CascadeConfig,
) -> Result<Vec<FeatureVector<T>>> {
    messages
        .par_iter()
        .map(|m| {
            let wm = build_word_matrix(&m.tokens, table, config.kernel);
            extract_features_pooled(&wm, bank, config.pooling)
        })
        .collect()
}

fn inputs<T: Scalar>(features: &[FeatureVector<T>], prev: Option<&[LevelProbs<T>]>) -> Result<Vec<Vec<T>>> {
    features
        .iter()
        .enumerate()
        .map(|(i, f)| level_input(f, prev.map(|p| &p[i][..])))
        .collect()
}

fn score<T: Scalar>(truth: &[Label], probs: &[LevelProbs<T>]) -> Result<LevelScore> {
    let decisions: Vec<(Label, T)> = probs.iter().map(final_decision).collect();
    let correct = decisions
        .iter()
        .zip(truth)
        .filter(|((pred, _), t)| pred == *t)
        .count();
    let pairs: Vec<(Label, T)> = truth.iter().zip(&decisions).map(|(&t, &(_, p))| (t, p)).collect();
    Ok(LevelScore {
        accuracy: correct as f64 / truth.len() as f64,
        log_loss: log_loss(&pairs)?.to_f64_lossless(),
    })
}

struct FittedLevel<T> {
    level: CascadeLevel<T>,
    train_probs: Vec<LevelProbs<T>>,
    val_probs: Vec<LevelProbs<T>>,
}

fn fit_level<T: Scalar>(
    config: &CascadeConfig,
    index: usize,
    bank: FilterBank<T>,
    train_x: &[Vec<T>],
    y: &[Label],
    val_x: &[Vec<T>],
) -> Result<FittedLevel<T>> {
    let params = ForestParams {
        n_trees: config.n_trees,
        extra_rule: config.extra_rule,
    };
    let fitted = (0..FORESTS_PER_LEVEL)
        .into_par_iter()
        .map(|i| {
            let kind = config.forests[i];
            let s = forest_seed(config.seed, index, i);
            if config.cross_fit {
                let cf = cross_fit_proba(train_x, y, kind, &params, config.folds, s)?;
                Ok((cf.forest, cf.out_of_fold))
            } else {
                let forest = Forest::fit(train_x, y, kind, &params, s)?;
                let probs = forest.predict_proba_batch(train_x)?;
                Ok((forest, probs))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let per_row = |n: usize, get: &dyn Fn(usize, usize) -> ClassProbabilities<T>| -> Vec<LevelProbs<T>> {
        (0..n)
            .map(|r| pack(&(0..FORESTS_PER_LEVEL).map(|f| get(f, r)).collect::<Vec<_>>()))
            .collect()
    };
    let val_each = fitted
        .iter()
        .map(|(forest, _)| forest.predict_proba_batch(val_x))
        .collect::<Result<Vec<_>>>()?;
    let train_probs = per_row(train_x.len(), &|f, r| fitted[f].1[r]);
    let val_probs = per_row(val_x.len(), &|f, r| val_each[f][r]);
    Ok(FittedLevel {
        level: CascadeLevel {
            index,
            bank,
            forests: fitted.into_iter().map(|(f, _)| f).collect(),
        },
        train_probs,
        val_probs,
    })
}

fn check_config(config: &CascadeConfig) -> Result<()> {
    if config.filters == 0 || config.kernel == 0 || config.n_trees == 0 || config.max_levels == 0 {
        return Err(Error::invalid("filters, kernel, n_trees and max_levels must be positive"));
    }
    if config.kernel > config.filters {
        // later levels convolve over an L-vector
        return Err(Error::invalid(format!(
            "kernel {} exceeds filter count {}",
            config.kernel, config.filters
        )));
    }
    Ok(())
}

/// Grows the cascade on `split.train`, gating each level on `split.validation`.
/// The test part of the split is not touched.
pub fn train_cascade<T: Scalar>(
    split: &DatasetSplit<TokenizedMessage>,
    table: &EmbeddingTable<T>,
    config: &CascadeConfig,
) -> Result<(CascadeModel<T>, TrainReport)> {
    check_config(config)?;
    if split.train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if split.validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let dim = table.dim();
    let val_y: Vec<Label> = split.validation.iter().map(|m| m.label).collect();
    let train_y: Vec<Label> = split.train.iter().map(|m| m.label).collect();

    let bank1 = level_bank::<T>(config, 1, dim)?;
    let train_feats = embed_all(&split.train, table, &bank1, config)?;
    let mut val_feats = embed_all(&split.validation, table, &bank1, config)?;

    let raw: Vec<Vec<T>> = train_feats.into_iter().map(|f| f.0).collect();
    let balanced = smote_balance(&raw, &train_y, config.smote_k, seed::derive(config.seed, STREAM_SMOTE))?;
    let y = balanced.y;
    let mut train_feats: Vec<FeatureVector<T>> = balanced.x.into_iter().map(FeatureVector).collect();

    let mut levels: Vec<CascadeLevel<T>> = Vec::new();
    let mut scores: Vec<LevelScore> = Vec::new();
    let mut rejected = None;
    // train and validation probabilities of the last kept level
    let mut prev: Option<[Vec<LevelProbs<T>>; 2]> = None;
    let mut best = f64::NEG_INFINITY;
    let mut pending_bank = Some(bank1);
    let stop_reason = loop {
        let index = levels.len() + 1;
        let bank = match pending_bank.take() {
            Some(b) => b,
            None => {
                let b = level_bank::<T>(config, index, dim)?;
                train_feats = level_features(&b, config.pooling, &train_feats)?;
                val_feats = level_features(&b, config.pooling, &val_feats)?;
                b
            }
        };
        let train_x = inputs(&train_feats, prev.as_ref().map(|p| &p[0][..]))?;
        let val_x = inputs(&val_feats, prev.as_ref().map(|p| &p[1][..]))?;
        let fitted = fit_level(config, index, bank, &train_x, &y, &val_x)?;
        let s = score(&val_y, &fitted.val_probs)?;
        if index > 1 && s.accuracy - best <= config.epsilon {
            rejected = Some(s);
            break StopReason::NoImprovement;
        }
        best = s.accuracy;
        scores.push(s);
        levels.push(fitted.level);
        if levels.len() >= config.max_levels {
            break StopReason::MaxLevels;
        }
        prev = Some([fitted.train_probs, fitted.val_probs]);
    };

    let model = CascadeModel {
        config: config.clone(),
        embedding_dim: dim,
        levels,
        stop_reason,
        metadata: Vec::new(),
    };
    let report = TrainReport {
        levels: scores,
        rejected,
        stop_reason,
        synthetic_count: balanced.synthetic_count,
    };
    Ok((model, report))
}

impl<T: Scalar> CascadeModel<T> {
    /// Checks the structural invariants of a model assembled by hand or read from disk.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        if self.levels.is_empty() {
            return Err(Error::Corrupt("model has no levels".into()));
        }
        for (i, level) in self.levels.iter().enumerate() {
            let index = i + 1;
            let input_dim = if index == 1 { self.embedding_dim } else { 1 };
            let b = &level.bank;
            if level.index != index
                || b.count() != c.filters
                || b.kernel() != c.kernel
                || b.input_dim() != input_dim
            {
                return Err(Error::Corrupt(format!("level {index} does not match the configuration")));
            }
            if level.forests.len() != FORESTS_PER_LEVEL {
                return Err(Error::Corrupt(format!(
                    "level {index} has {} forests",
                    level.forests.len()
                )));
            }
            let width = if index == 1 { c.filters } else { c.filters + LEVEL_PROBS };
            for (f, kind) in level.forests.iter().zip(c.forests) {
                if f.feature_count() != width || f.kind() != kind {
                    return Err(Error::Corrupt(format!("level {index} forest does not match the configuration")));
                }
            }
        }
        Ok(())
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Per-level probabilities for one tokenized message.
    pub fn forward<S: AsRef<str>>(&self, tokens: &[S], table: &EmbeddingTable<T>) -> Result<Vec<LevelProbs<T>>> {
        if table.dim() != self.embedding_dim {
            return Err(Error::DimensionMismatch {
                expected: self.embedding_dim,
                found: table.dim(),
            });
        }
        let wm = build_word_matrix(tokens, table, self.config.kernel);
        let mut features = extract_features_pooled(&wm, &self.levels[0].bank, self.config.pooling)?;
        let mut out: Vec<LevelProbs<T>> = Vec::with_capacity(self.levels.len());
        for (i, level) in self.levels.iter().enumerate() {
            if i > 0 {
                features = update_features_pooled(&features, &level.bank, self.config.pooling)?;
            }
            let x = level_input(&features, out.last().map(|p| &p[..]))?;
            let probs = level
                .forests
                .iter()
                .map(|f| f.predict_proba(&x))
                .collect::<Result<Vec<_>>>()?;
            out.push(pack(&probs));
        }
        Ok(out)
    }

    /// Label and mean `P(spam)` at the last level.
    pub fn predict_tokens<S: AsRef<str>>(&self, tokens: &[S], table: &EmbeddingTable<T>) -> Result<(Label, T)> {
        let probs = self.forward(tokens, table)?;
        Ok(final_decision(probs.last().expect("validated model has levels")))
    }

    /// Preprocesses `text` with the model's own settings, then predicts.
    pub fn predict_text(&self, text: &str, table: &EmbeddingTable<T>) -> Result<(Label, T)> {
        let msg = RawMessage {
            label: Label::Ham,
            text: text.to_string(),
        };
        let tokens = tokenize(&msg, &self.config.preprocess).tokens;
        self.predict_tokens(&tokens, table)
    }

    pub fn predict_batch(&self, messages: &[TokenizedMessage], table: &EmbeddingTable<T>) -> Result<Vec<(Label, T)>> {
        messages
            .par_iter()
            .map(|m| self.predict_tokens(&m.tokens, table))
            .collect()
    }
}

pub fn predict_message<T: Scalar, S: AsRef<str>>(
    model: &CascadeModel<T>,
    tokens: &[S],
    table: &EmbeddingTable<T>,
) -> Result<(Label, T)> {
    model.predict_tokens(tokens, table)
}
