//! Random forests and extremely randomized trees for the binary spam task.
//!
//! Both ensembles soft-vote: a forest's class probabilities are the mean of
//! the leaf distributions its trees reach. Every tree draws from its own
//! generator seeded from `(forest seed, tree index)`, so training in parallel
//! yields the same forest as training serially.

mod tree;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::Label;
use crate::{seed, Error, Result, Scalar};

pub use tree::{fit_tree, find_split, gini_impurity, SplitChoice, SplitRule, Tree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForestKind {
    /// Bootstrap resamples, best Gini split over `ceil(sqrt(F))` features.
    RandomForest,
    /// Full sample, randomized split choice.
    ExtraTrees,
}

impl ForestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ForestKind::RandomForest => "rf",
            ForestKind::ExtraTrees => "ert",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rf" | "random_forest" | "randomforest" => Some(ForestKind::RandomForest),
            "ert" | "et" | "extra_trees" | "extratrees" => Some(ForestKind::ExtraTrees),
            _ => None,
        }
    }
}

/// Split rule used by extremely randomized trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExtraTreesRule {
    /// One random feature and one random threshold per node.
    #[default]
    SingleFeature,
    /// `ceil(sqrt(F))` random (feature, threshold) candidates, best Gini wins.
    Geurts,
}

impl ExtraTreesRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtraTreesRule::SingleFeature => "single",
            ExtraTreesRule::Geurts => "geurts",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single" => Some(ExtraTreesRule::SingleFeature),
            "geurts" => Some(ExtraTreesRule::Geurts),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub extra_rule: ExtraTreesRule,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            extra_rule: ExtraTreesRule::default(),
        }
    }
}

/// `(P(ham), P(spam))`; the components sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassProbabilities<T> {
    pub p_ham: T,
    pub p_spam: T,
}

impl<T: Scalar> ClassProbabilities<T> {
    pub fn from_spam(p_spam: T) -> Self {
        ClassProbabilities {
            p_ham: T::one() - p_spam,
            p_spam,
        }
    }

    pub fn get(&self, label: Label) -> T {
        match label {
            Label::Ham => self.p_ham,
            Label::Spam => self.p_spam,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest<T> {
    kind: ForestKind,
    extra_rule: ExtraTreesRule,
    seed: u64,
    feature_count: usize,
    trees: Vec<Tree<T>>,
}

pub(crate) fn max_features(width: usize) -> usize {
    ((width as f64).sqrt().ceil() as usize).max(1)
}

impl<T: Scalar> Forest<T> {
    pub fn fit(
        x: &[Vec<T>],
        y: &[Label],
        kind: ForestKind,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self> {
        let width = tree::validate(x, y)?;
        if params.n_trees == 0 {
            return Err(Error::invalid("a forest needs at least one tree"));
        }
        let rule = match (kind, params.extra_rule) {
            (ForestKind::RandomForest, _) => SplitRule::Best {
                max_features: max_features(width),
            },
            (ForestKind::ExtraTrees, ExtraTreesRule::SingleFeature) => SplitRule::RandomSingle,
            (ForestKind::ExtraTrees, ExtraTreesRule::Geurts) => SplitRule::RandomBest {
                max_features: max_features(width),
            },
        };
        let n = x.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed::derive(seed, t as u64));
                let indices = match kind {
                    ForestKind::RandomForest => (0..n).map(|_| rng.gen_range(0..n)).collect(),
                    ForestKind::ExtraTrees => (0..n).collect(),
                };
                tree::fit_tree_on(x, y, indices, rule, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest {
            kind,
            extra_rule: params.extra_rule,
            seed,
            feature_count: width,
            trees,
        })
    }

    pub fn from_parts(
        kind: ForestKind,
        extra_rule: ExtraTreesRule,
        seed: u64,
        feature_count: usize,
        trees: Vec<Tree<T>>,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Corrupt("forest without trees".into()));
        }
        for t in &trees {
            for node in t.nodes() {
                if let TreeNode::Internal { feature, .. } = node {
                    if *feature >= feature_count {
                        return Err(Error::Corrupt(format!(
                            "split on feature {feature} of {feature_count}"
                        )));
                    }
                }
            }
        }
        Ok(Forest {
            kind,
            extra_rule,
            seed,
            feature_count,
            trees,
        })
    }

    pub fn kind(&self) -> ForestKind {
        self.kind
    }

    pub fn extra_rule(&self) -> ExtraTreesRule {
        self.extra_rule
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn trees(&self) -> &[Tree<T>] {
        &self.trees
    }

    fn check_width(&self, x: &[T]) -> Result<()> {
        if x.len() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Mean leaf distribution over all trees.
    pub fn predict_proba(&self, x: &[T]) -> Result<ClassProbabilities<T>> {
        self.check_width(x)?;
        let spam: T = self.trees.iter().map(|t| t.distribution(x)[1]).sum();
        Ok(ClassProbabilities::from_spam(spam / T::from_count(self.trees.len())))
    }

    pub fn predict_proba_batch(&self, rows: &[Vec<T>]) -> Result<Vec<ClassProbabilities<T>>> {
        rows.par_iter().map(|r| self.predict_proba(r)).collect()
    }

    /// Hard vote: each tree votes its leaf's majority class, ties go to spam.
    pub fn predict_majority(&self, x: &[T]) -> Result<Label> {
        self.check_width(x)?;
        let spam_votes = self
            .trees
            .iter()
            .filter(|t| {
                let d = t.distribution(x);
                d[1] >= d[0]
            })
            .count();
        Ok(if 2 * spam_votes >= self.trees.len() {
            Label::Spam
        } else {
            Label::Ham
        })
    }
}

pub fn fit_forest<T: Scalar>(
    x: &[Vec<T>],
    y: &[Label],
    kind: ForestKind,
    params: &ForestParams,
    seed: u64,
) -> Result<Forest<T>> {
    Forest::fit(x, y, kind, params, seed)
}

pub fn predict_proba<T: Scalar>(forest: &Forest<T>, x: &[T]) -> Result<ClassProbabilities<T>> {
    forest.predict_proba(x)
}

/// Out-of-fold probabilities for every training row, plus a forest fit on all rows.
#[derive(Debug, Clone)]
pub struct CrossFit<T> {
    pub out_of_fold: Vec<ClassProbabilities<T>>,
    /// Fold index of each row.
    pub folds: Vec<usize>,
    /// Identical to `fit_forest` with the same arguments.
    pub forest: Forest<T>,
}

const FOLD_STREAM: u64 = 0xF01D;
const FOLD_FOREST_STREAM: u64 = 0xF01D_0000;

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn assign_folds(y: &[Label], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed::derive(seed, FOLD_STREAM));
    let mut out = vec![0; y.len()];
    let mut next = 0;
    for class in [Label::Ham, Label::Spam] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            out[i] = next % folds;
            next += 1;
        }
    }
    out
}

pub fn cross_fit_proba<T: Scalar>(
    x: &[Vec<T>],
    y: &[Label],
    kind: ForestKind,
    params: &ForestParams,
    folds: usize,
    seed: u64,
) -> Result<CrossFit<T>> {
    tree::validate(x, y)?;
    if folds < 2 {
        return Err(Error::invalid(format!("cross-fitting needs at least 2 folds, got {folds}")));
    }
    if folds > x.len() {
        return Err(Error::invalid(format!(
            "{folds} folds requested for {} rows",
            x.len()
        )));
    }
    let assignment = assign_folds(y, folds, seed);
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (train_x, train_y): (Vec<Vec<T>>, Vec<Label>) = (0..x.len())
                .filter(|&i| assignment[i] != f)
                .map(|i| (x[i].clone(), y[i]))
                .unzip();
            let forest = Forest::fit(
                &train_x,
                &train_y,
                kind,
                params,
                seed::derive(seed, FOLD_FOREST_STREAM + f as u64),
            )?;
            (0..x.len())
                .filter(|&i| assignment[i] == f)
                .map(|i| forest.predict_proba(&x[i]).map(|p| (i, p)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out_of_fold = vec![ClassProbabilities::from_spam(T::zero()); x.len()];
    for (i, p) in per_fold.into_iter().flatten() {
        out_of_fold[i] = p;
    }
    let forest = Forest::fit(x, y, kind, params, seed)?;
    Ok(CrossFit {
        out_of_fold,
        folds: assignment,
        forest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy_separable() -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut rng = seed::rng(5);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let a: f64 = rng.gen_range(0.0..1.0);
            let b: f64 = rng.gen_range(0.0..1.0);
            let spam = i % 2 == 0;
            // classes on either side of a + b = 1 with a margin
            let shift = if spam { 0.6 } else { -0.6 };
            x.push(vec![a + shift, b + shift]);
            y.push(if spam { Label::Spam } else { Label::Ham });
        }
        (x, y)
    }

    fn accuracy(f: &Forest<f64>, x: &[Vec<f64>], y: &[Label]) -> f64 {
        let correct = x
            .iter()
            .zip(y)
            .filter(|(r, l)| {
                let p = f.predict_proba(r).unwrap();
                let pred = if p.p_ham > p.p_spam { Label::Ham } else { Label::Spam };
                pred == **l
            })
            .count();
        correct as f64 / x.len() as f64
    }

    #[test]
    fn default_forest_has_100_trees() {
        let (x, y) = toy_separable();
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let f = fit_forest(&x, &y, kind, &ForestParams::default(), 1).unwrap();
            assert_eq!(f.trees().len(), 100);
            assert_eq!(f.kind(), kind);
            assert_eq!(accuracy(&f, &x, &y), 1.0);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = toy_separable();
        let params = ForestParams {
            n_trees: 20,
            ..Default::default()
        };
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let a = fit_forest(&x, &y, kind, &params, 9).unwrap();
            let b = fit_forest(&x, &y, kind, &params, 9).unwrap();
            assert_eq!(a, b);
            let probe = vec![0.3, 0.9];
            assert_eq!(
                a.predict_proba(&probe).unwrap(),
                b.predict_proba(&probe).unwrap()
            );
        }
    }

    #[test]
    fn parallel_and_serial_training_agree() {
        let (x, y) = toy_separable();
        let params = ForestParams {
            n_trees: 12,
            ..Default::default()
        };
        let parallel = fit_forest(&x, &y, ForestKind::RandomForest, &params, 4).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool
            .install(|| fit_forest(&x, &y, ForestKind::RandomForest, &params, 4))
            .unwrap();
        assert_eq!(parallel, serial);
    }

    fn stump(p_spam_leaf: [usize; 2]) -> Tree<f64> {
        Tree::from_nodes(vec![TreeNode::leaf(p_spam_leaf)]).unwrap()
    }

    #[test]
    fn soft_vote_averages_leaves() {
        let mut trees = vec![stump([0, 1]); 60];
        trees.extend(vec![stump([1, 0]); 40]);
        let f = Forest::from_parts(ForestKind::RandomForest, ExtraTreesRule::default(), 0, 1, trees).unwrap();
        let p = f.predict_proba(&[0.0]).unwrap();
        assert!((p.p_ham - 0.4).abs() < 1e-12);
        assert!((p.p_spam - 0.6).abs() < 1e-12);
        assert_eq!(f.predict_majority(&[0.0]).unwrap(), Label::Spam);

        let all_spam = Forest::from_parts(
            ForestKind::ExtraTrees,
            ExtraTreesRule::default(),
            0,
            1,
            vec![stump([0, 3]); 5],
        )
        .unwrap();
        let p = all_spam.predict_proba(&[1.0]).unwrap();
        assert_eq!((p.p_ham, p.p_spam), (0.0, 1.0));
        assert!(all_spam.predict_proba(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn cross_fit_rows_are_scored_out_of_fold() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y = vec![Label::Ham, Label::Ham, Label::Ham, Label::Spam, Label::Spam, Label::Spam];
        let params = ForestParams {
            n_trees: 10,
            ..Default::default()
        };
        let cf = cross_fit_proba(&x, &y, ForestKind::RandomForest, &params, 3, 2).unwrap();
        assert_eq!(cf.out_of_fold.len(), 6);
        for f in 0..3 {
            let members = cf.folds.iter().filter(|&&g| g == f).count();
            assert_eq!(members, 2);
        }
        assert_eq!(cf.forest, fit_forest(&x, &y, ForestKind::RandomForest, &params, 2).unwrap());
        assert!(cross_fit_proba(&x, &y, ForestKind::RandomForest, &params, 7, 2).is_err());
        assert!(cross_fit_proba(&x, &y, ForestKind::RandomForest, &params, 1, 2).is_err());
    }

    #[test]
    fn cross_fit_on_separable_data_is_accurate() {
        let (x, y) = toy_separable();
        let params = ForestParams {
            n_trees: 30,
            ..Default::default()
        };
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let cf = cross_fit_proba(&x, &y, kind, &params, 3, 8).unwrap();
            let correct = cf
                .out_of_fold
                .iter()
                .zip(&y)
                .filter(|(p, l)| (if p.p_ham > p.p_spam { Label::Ham } else { Label::Spam }) == **l)
                .count();
            assert_eq!(correct, y.len(), "{kind:?}");
        }
    }

    #[test]
    fn geurts_rule_trains() {
        let (x, y) = toy_separable();
        let params = ForestParams {
            n_trees: 25,
            extra_rule: ExtraTreesRule::Geurts,
        };
        let f = fit_forest(&x, &y, ForestKind::ExtraTrees, &params, 3).unwrap();
        assert_eq!(accuracy(&f, &x, &y), 1.0);
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(seed in any::<u64>(), probe in proptest::collection::vec(-2.0f64..2.0, 3)) {
            let mut rng = seed::rng(seed);
            let x: Vec<Vec<f64>> = (0..25).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let y: Vec<Label> = (0..25).map(|i| if i % 3 == 0 { Label::Spam } else { Label::Ham }).collect();
            let params = ForestParams { n_trees: 7, ..Default::default() };
            for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
                let f = fit_forest(&x, &y, kind, &params, seed).unwrap();
                let p = f.predict_proba(&probe).unwrap();
                prop_assert!((p.p_ham + p.p_spam - 1.0).abs() <= 1e-9);
                prop_assert!(p.p_spam >= 0.0 && p.p_spam <= 1.0);
            }
        }
    }
}
