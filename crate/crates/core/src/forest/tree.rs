//! Binary classification trees grown to purity.

use rand::Rng;

use crate::corpus::Label;
use crate::seed::Rng as SeededRng;
use crate::{Error, Result, Scalar};

/// 1 - sum of squared class frequencies.
pub fn gini_impurity<T: Scalar>(counts: [usize; 2]) -> Result<T> {
    if counts[0] + counts[1] == 0 {
        return Err(Error::Empty("class counts"));
    }
    Ok(T::from_f64_lossy(gini(counts)))
}

pub(crate) fn gini(counts: [usize; 2]) -> f64 {
    let total = (counts[0] + counts[1]) as f64;
    let p0 = counts[0] as f64 / total;
    let p1 = counts[1] as f64 / total;
    1.0 - p0 * p0 - p1 * p1
}

/// Size-weighted Gini of a two-way partition.
pub(crate) fn weighted_gini(left: [usize; 2], right: [usize; 2]) -> f64 {
    let nl = (left[0] + left[1]) as f64;
    let nr = (right[0] + right[1]) as f64;
    let n = nl + nr;
    (nl / n) * gini(left) + (nr / n) * gini(right)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<T> {
    /// Samples with `x[feature] <= threshold` go left.
    Internal {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [usize; 2],
        distribution: [T; 2],
    },
}

impl<T: Scalar> TreeNode<T> {
    pub fn leaf(counts: [usize; 2]) -> Self {
        let total = T::from_count(counts[0] + counts[1]);
        TreeNode::Leaf {
            counts,
            distribution: [
                T::from_count(counts[0]) / total,
                T::from_count(counts[1]) / total,
            ],
        }
    }
}

/// Nodes in an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<T> {
    nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn from_nodes(nodes: Vec<TreeNode<T>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Corrupt("tree without nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if let TreeNode::Internal { left, right, .. } = node {
                let in_range = |c: usize| c > i && c < nodes.len();
                if !in_range(*left) || !in_range(*right) {
                    return Err(Error::Corrupt("child index out of range".into()));
                }
            }
        }
        Ok(Tree { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode<T> {
        &self.nodes[0]
    }

    /// Leaf reached by `x`.
    pub fn leaf(&self, x: &[T]) -> &TreeNode<T> {
        let mut i = 0;
        // child indices always point forward, so this terminates
        loop {
            match &self.nodes[i] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    pub fn distribution(&self, x: &[T]) -> [T; 2] {
        match self.leaf(x) {
            TreeNode::Leaf { distribution, .. } => *distribution,
            TreeNode::Internal { .. } => unreachable!("leaf() returns leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[TreeNode<T>], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Internal { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

/// How a node picks its split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRule {
    /// Exhaustive threshold search over `max_features` randomly drawn
    /// non-constant features; minimum weighted Gini wins.
    Best { max_features: usize },
    /// One uniformly drawn non-constant feature, one uniform threshold in
    /// its node-local `[min, max)`.
    RandomSingle,
    /// `max_features` random (feature, uniform threshold) candidates; the
    /// lowest weighted Gini among them wins.
    RandomBest { max_features: usize },
}

/// Chosen split and the features that were examined to find it.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitChoice<T> {
    pub feature: usize,
    pub threshold: T,
    pub score: f64,
    pub examined: Vec<usize>,
}

struct Grower<'a, T> {
    x: &'a [Vec<T>],
    y: &'a [Label],
    rule: SplitRule,
    width: usize,
    scratch: Vec<(T, Label)>,
    features: Vec<usize>,
}

pub(crate) fn validate<T>(x: &[Vec<T>], y: &[Label]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let width = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != width) {
        return Err(Error::DimensionMismatch {
            expected: width,
            found: bad.len(),
        });
    }
    if width == 0 {
        return Err(Error::invalid("rows need at least one feature"));
    }
    Ok(width)
}

/// Grows a tree on all rows of `x`.
pub fn fit_tree<T: Scalar>(
    x: &[Vec<T>],
    y: &[Label],
    rule: SplitRule,
    rng: &mut SeededRng,
) -> Result<Tree<T>> {
    validate(x, y)?;
    let indices: Vec<usize> = (0..x.len()).collect();
    fit_tree_on(x, y, indices, rule, rng)
}

/// Grows a tree on the rows listed in `indices` (repeats allowed).
pub(crate) fn fit_tree_on<T: Scalar>(
    x: &[Vec<T>],
    y: &[Label],
    mut indices: Vec<usize>,
    rule: SplitRule,
    rng: &mut SeededRng,
) -> Result<Tree<T>> {
    let width = validate(x, y)?;
    if indices.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    let mut g = Grower {
        x,
        y,
        rule,
        width,
        scratch: Vec::with_capacity(indices.len()),
        features: (0..width).collect(),
    };
    let mut nodes: Vec<TreeNode<T>> = vec![TreeNode::leaf([1, 0])];
    // (node id, lo, hi) over `indices`
    let mut stack = vec![(0usize, 0usize, indices.len())];
    while let Some((id, lo, hi)) = stack.pop() {
        let counts = g.counts(&indices[lo..hi]);
        let n = hi - lo;
        if n < 2 || counts[0] == 0 || counts[1] == 0 {
            nodes[id] = TreeNode::leaf(counts);
            continue;
        }
        let Some(split) = g.choose(&indices[lo..hi], rng) else {
            nodes[id] = TreeNode::leaf(counts);
            continue;
        };
        let mid = lo + partition(&mut indices[lo..hi], |i| x[i][split.feature] <= split.threshold);
        if mid == lo || mid == hi {
            nodes[id] = TreeNode::leaf(counts);
            continue;
        }
        let left = nodes.len();
        let right = left + 1;
        nodes.push(TreeNode::leaf([1, 0]));
        nodes.push(TreeNode::leaf([1, 0]));
        nodes[id] = TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, mid, hi));
        stack.push((left, lo, mid));
    }
    Ok(Tree { nodes })
}

/// Stable-enough in-place partition; returns the count of elements satisfying `pred`.
fn partition(v: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut store = 0;
    for i in 0..v.len() {
        if pred(v[i]) {
            v.swap(store, i);
            store += 1;
        }
    }
    store
}

impl<T: Scalar> Grower<'_, T> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let mut c = [0usize; 2];
        for &i in idx {
            c[self.y[i].index()] += 1;
        }
        c
    }

    fn choose(&mut self, idx: &[usize], rng: &mut SeededRng) -> Option<SplitChoice<T>> {
        match self.rule {
            SplitRule::Best { max_features } => self.best_split(idx, max_features, rng),
            SplitRule::RandomSingle => self.random_split(idx, 1, rng),
            SplitRule::RandomBest { max_features } => self.random_split(idx, max_features, rng),
        }
    }

    fn min_max(&self, idx: &[usize], f: usize) -> (T, T) {
        idx.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &i| {
            let v = self.x[i][f];
            (lo.min(v), hi.max(v))
        })
    }

    fn best_split(&mut self, idx: &[usize], max_features: usize, rng: &mut SeededRng) -> Option<SplitChoice<T>> {
        let wanted = max_features.clamp(1, self.width);
        let mut examined = Vec::new();
        let mut useful = 0;
        let mut best: Option<(f64, usize, T)> = None;
        // lazily shuffled feature order: position p picks from the unvisited tail
        for p in 0..self.width {
            if useful == wanted {
                break;
            }
            let q = rng.gen_range(p..self.width);
            self.features.swap(p, q);
            let f = self.features[p];
            examined.push(f);
            if let Some((score, threshold)) = self.best_threshold(idx, f) {
                useful += 1;
                let better = match best {
                    None => true,
                    Some((s, bf, _)) => score < s || (score == s && f < bf),
                };
                if better {
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(score, feature, threshold)| SplitChoice {
            feature,
            threshold,
            score,
            examined,
        })
    }

    /// Lowest-Gini midpoint threshold for feature `f`; `None` if constant.
    fn best_threshold(&mut self, idx: &[usize], f: usize) -> Option<(f64, T)> {
        self.scratch.clear();
        self.scratch.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
        self.scratch
            .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let n = self.scratch.len();
        if self.scratch[0].0 == self.scratch[n - 1].0 {
            return None;
        }
        let mut total = [0usize; 2];
        for &(_, l) in &self.scratch {
            total[l.index()] += 1;
        }
        let mut left = [0usize; 2];
        let mut best: Option<(f64, T)> = None;
        for i in 0..n - 1 {
            left[self.scratch[i].1.index()] += 1;
            let (a, b) = (self.scratch[i].0, self.scratch[i + 1].0);
            if a == b {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = weighted_gini(left, right);
            if best.is_none_or(|(s, _)| score < s) {
                best = Some((score, midpoint(a, b)));
            }
        }
        best
    }

    fn random_split(&mut self, idx: &[usize], draws: usize, rng: &mut SeededRng) -> Option<SplitChoice<T>> {
        let wanted = draws.clamp(1, self.width);
        let mut examined = Vec::new();
        let mut useful = 0;
        let mut best: Option<(f64, usize, T)> = None;
        for p in 0..self.width {
            if useful == wanted {
                break;
            }
            let q = rng.gen_range(p..self.width);
            self.features.swap(p, q);
            let f = self.features[p];
            examined.push(f);
            let (lo, hi) = self.min_max(idx, f);
            if lo >= hi {
                continue;
            }
            useful += 1;
            let mut t = T::from_f64_lossy(rng.gen_range(lo.to_f64_lossless()..hi.to_f64_lossless()));
            if t >= hi || t < lo {
                t = lo;
            }
            let score = if wanted == 1 {
                0.0
            } else {
                let mut left = [0usize; 2];
                let mut right = [0usize; 2];
                for &i in idx {
                    let side = if self.x[i][f] <= t { &mut left } else { &mut right };
                    side[self.y[i].index()] += 1;
                }
                weighted_gini(left, right)
            };
            let better = match best {
                None => true,
                Some((s, bf, _)) => score < s || (score == s && f < bf),
            };
            if better {
                best = Some((score, f, t));
            }
        }
        best.map(|(score, feature, threshold)| SplitChoice {
            feature,
            threshold,
            score,
            examined,
        })
    }
}

/// Midpoint of `a < b`, falling back to `a` when rounding lands on `b`.
fn midpoint<T: Scalar>(a: T, b: T) -> T {
    let two = T::one() + T::one();
    let m = a + (b - a) / two;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

/// Runs one split search as the tree grower would at the root. Exposed so
/// the split choice can be checked against an exhaustive search.
pub fn find_split<T: Scalar>(
    x: &[Vec<T>],
    y: &[Label],
    rule: SplitRule,
    rng: &mut SeededRng,
) -> Result<Option<SplitChoice<T>>> {
    let width = validate(x, y)?;
    let idx: Vec<usize> = (0..x.len()).collect();
    let mut g = Grower {
        x,
        y,
        rule,
        width,
        scratch: Vec::new(),
        features: (0..width).collect(),
    };
    Ok(g.choose(&idx, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    /// Direct enumeration: probability two draws with replacement differ.
    fn gini_by_enumeration(counts: [usize; 2]) -> f64 {
        let labels: Vec<usize> = std::iter::repeat_n(0, counts[0])
            .chain(std::iter::repeat_n(1, counts[1]))
            .collect();
        let n = labels.len();
        let mut differ = 0usize;
        for a in &labels {
            for b in &labels {
                if a != b {
                    differ += 1;
                }
            }
        }
        differ as f64 / (n * n) as f64
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_impurity::<f64>([5, 5]).unwrap(), 0.5);
        assert_eq!(gini_impurity::<f64>([10, 0]).unwrap(), 0.0);
        assert!((gini_impurity::<f64>([7, 3]).unwrap() - 0.42).abs() < 1e-15);
        assert!(gini_impurity::<f64>([0, 0]).is_err());
    }

    #[test]
    fn gini_matches_enumeration_up_to_20() {
        for total in 1..=20usize {
            for a in 0..=total {
                let c = [a, total - a];
                let got = gini_impurity::<f64>(c).unwrap();
                let want = gini_by_enumeration(c);
                // both are exact rationals with denominator total^2
                assert!((got - want).abs() <= 1e-15, "{c:?}: {got} vs {want}");
                assert_eq!((got * (total * total) as f64).round(), (want * (total * total) as f64).round());
            }
        }
    }

    #[test]
    fn single_class_is_one_leaf() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![Label::Spam; 3];
        let t: Tree<f64> = fit_tree(&x, &y, SplitRule::Best { max_features: 1 }, &mut seed::rng(0)).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(
            t.root(),
            &TreeNode::Leaf {
                counts: [0, 3],
                distribution: [0.0, 1.0]
            }
        );
    }

    #[test]
    fn two_points_give_depth_one() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![Label::Ham, Label::Spam];
        for rule in [SplitRule::Best { max_features: 1 }, SplitRule::RandomSingle] {
            let t: Tree<f64> = fit_tree(&x, &y, rule, &mut seed::rng(3)).unwrap();
            assert_eq!(t.depth(), 1);
            assert_eq!(t.distribution(&[0.0]), [1.0, 0.0]);
            assert_eq!(t.distribution(&[1.0]), [0.0, 1.0]);
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        let x: Vec<Vec<f64>> = vec![];
        assert!(fit_tree(&x, &[], SplitRule::RandomSingle, &mut seed::rng(0)).is_err());
    }

    #[test]
    fn fits_random_labels_perfectly() {
        let mut rng = seed::rng(77);
        let x: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<Label> = (0..40).map(|_| if rng.gen_bool(0.5) { Label::Spam } else { Label::Ham }).collect();
        let t: Tree<f64> = fit_tree(&x, &y, SplitRule::Best { max_features: 2 }, &mut rng).unwrap();
        for (row, label) in x.iter().zip(&y) {
            let d = t.distribution(row);
            assert_eq!(d[label.index()], 1.0);
        }
    }

    #[test]
    fn duplicate_rows_with_conflicting_labels_become_mixed_leaf() {
        let x = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let y = vec![Label::Ham, Label::Spam, Label::Spam];
        for rule in [SplitRule::Best { max_features: 1 }, SplitRule::RandomSingle] {
            let t: Tree<f64> = fit_tree(&x, &y, rule, &mut seed::rng(1)).unwrap();
            assert_eq!(t.nodes().len(), 1);
            let d = t.distribution(&[1.0, 1.0]);
            assert!((d[1] - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    /// Every partition `x[f] <= t` over midpoints, for every examined feature.
    fn exhaustive_best(x: &[Vec<f64>], y: &[Label], features: &[usize]) -> Option<f64> {
        let mut best: Option<f64> = None;
        for &f in features {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let mut l = [0usize; 2];
                let mut r = [0usize; 2];
                for (row, lab) in x.iter().zip(y) {
                    if row[f] <= t {
                        l[lab.index()] += 1;
                    } else {
                        r[lab.index()] += 1;
                    }
                }
                let nl = (l[0] + l[1]) as f64;
                let nr = (r[0] + r[1]) as f64;
                let n = nl + nr;
                let g = |c: [usize; 2], m: f64| 1.0 - (c[0] as f64 / m).powi(2) - (c[1] as f64 / m).powi(2);
                let score = nl / n * g(l, nl) + nr / n * g(r, nr);
                best = Some(best.map_or(score, |b: f64| b.min(score)));
            }
        }
        best
    }

    proptest! {
        #[test]
        fn best_split_is_optimal_on_small_sets(
            rows in 2usize..=8,
            cols in 1usize..=3,
            seed in any::<u64>(),
        ) {
            let mut rng = seed::rng(seed);
            let x: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| f64::from(rng.gen_range(0..4u8))).collect())
                .collect();
            let y: Vec<Label> = (0..rows).map(|_| if rng.gen_bool(0.5) { Label::Spam } else { Label::Ham }).collect();
            let max_features = (cols as f64).sqrt().ceil() as usize;
            let choice = find_split(&x, &y, SplitRule::Best { max_features }, &mut rng).unwrap();
            match choice {
                Some(c) => {
                    let oracle = exhaustive_best(&x, &y, &c.examined).unwrap();
                    prop_assert!((c.score - oracle).abs() <= 1e-12, "{} vs {}", c.score, oracle);
                    prop_assert!(c.examined.contains(&c.feature));
                }
                None => {
                    // no examined feature varies, so nothing can be split
                    prop_assert!(exhaustive_best(&x, &y, &(0..cols).collect::<Vec<_>>()).is_none());
                }
            }
        }
    }
}
