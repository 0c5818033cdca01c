//! SMOTE oversampling of the minority class.

use rand::Rng;

use crate::corpus::Label;
use crate::{seed, Error, Result, Scalar};

/// Where a synthetic row came from: `base + delta * (neighbor - base)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOrigin {
    pub base: usize,
    pub neighbor: usize,
    pub delta: f64,
}

/// Originals first, unchanged, then synthetic minority rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedSet<T> {
    pub x: Vec<Vec<T>>,
    pub y: Vec<Label>,
    pub synthetic_count: usize,
    /// One entry per synthetic row, indices into the input rows.
    pub origins: Vec<SyntheticOrigin>,
}

fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| (p - q) * (p - q))
        .fold(T::zero(), |acc, v| acc + v)
}

/// The `k` nearest other minority rows of each minority row, closest first,
/// equal distances ordered by row index.
fn neighbor_lists<T: Scalar>(x: &[Vec<T>], minority: &[usize], k: usize) -> Vec<Vec<usize>> {
    minority
        .iter()
        .map(|&i| {
            let mut cands: Vec<(T, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (squared_distance(&x[i], &x[j]), j))
                .collect();
            cands.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            });
            cands.truncate(k);
            cands.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Appends synthetic minority rows until both classes have equal counts.
pub fn smote_balance<T: Scalar>(
    x: &[Vec<T>],
    y: &[Label],
    k_neighbors: usize,
    seed: u64,
) -> Result<BalancedSet<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be at least 1"));
    }
    let spam: Vec<usize> = (0..y.len()).filter(|&i| y[i] == Label::Spam).collect();
    let ham: Vec<usize> = (0..y.len()).filter(|&i| y[i] == Label::Ham).collect();
    if spam.is_empty() {
        return Err(Error::SingleClass("ham"));
    }
    if ham.is_empty() {
        return Err(Error::SingleClass("spam"));
    }
    let (minority, majority_len, minority_label) = if spam.len() <= ham.len() {
        (spam, ham.len(), Label::Spam)
    } else {
        (ham, spam.len(), Label::Ham)
    };
    if minority.len() < 2 {
        return Err(Error::invalid("SMOTE needs at least 2 minority rows"));
    }
    let needed = majority_len - minority.len();
    let k = k_neighbors.min(minority.len() - 1);
    let neighbors = neighbor_lists(x, &minority, k);

    let mut rng = seed::rng(seed);
    let mut out_x = x.to_vec();
    let mut out_y = y.to_vec();
    let mut origins = Vec::with_capacity(needed);
    for _ in 0..needed {
        let pick = rng.gen_range(0..minority.len());
        let base = minority[pick];
        let neighbor = neighbors[pick][rng.gen_range(0..k)];
        let delta: f64 = rng.gen_range(0.0..=1.0);
        let d = T::from_f64_lossy(delta);
        let row = x[base]
            .iter()
            .zip(&x[neighbor])
            .map(|(&a, &b)| a + d * (b - a))
            .collect();
        out_x.push(row);
        out_y.push(minority_label);
        origins.push(SyntheticOrigin {
            base,
            neighbor,
            delta,
        });
    }
    Ok(BalancedSet {
        x: out_x,
        y: out_y,
        synthetic_count: needed,
        origins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn labels(ham: usize, spam: usize) -> Vec<Label> {
        let mut y = vec![Label::Ham; ham];
        y.extend(vec![Label::Spam; spam]);
        y
    }

    #[test]
    fn balances_counts() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y = labels(9, 3);
        let b = smote_balance(&x, &y, 5, 1).unwrap();
        assert_eq!(b.synthetic_count, 6);
        assert_eq!(b.y.iter().filter(|&&l| l == Label::Ham).count(), 9);
        assert_eq!(b.y.iter().filter(|&&l| l == Label::Spam).count(), 9);
        assert_eq!(&b.x[..12], &x[..]);
    }

    #[test]
    fn identical_minority_points_reproduce_themselves() {
        let mut x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        x.push(vec![2.5]);
        x.push(vec![2.5]);
        let y = labels(6, 2);
        let b = smote_balance(&x, &y, 5, 3).unwrap();
        for row in &b.x[8..] {
            assert_eq!(row, &vec![2.5]);
        }
    }

    #[test]
    fn minority_can_be_ham() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y = vec![Label::Ham, Label::Ham, Label::Spam, Label::Spam, Label::Spam];
        let b = smote_balance(&x, &y, 5, 0).unwrap();
        assert_eq!(b.synthetic_count, 1);
        assert_eq!(b.y[5], Label::Ham);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        assert!(matches!(
            smote_balance(&x, &labels(4, 0), 5, 0),
            Err(Error::SingleClass(_))
        ));
        assert!(smote_balance(&x, &labels(3, 1), 5, 0).is_err());
    }

    #[test]
    fn synthetic_points_lie_on_recorded_segments() {
        let mut rng = seed::rng(12);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..40 {
            x.push(vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]);
            y.push(Label::Ham);
        }
        for _ in 0..8 {
            x.push(vec![rng.gen_range(1.0..2.0), rng.gen_range(3.0..4.0)]);
            y.push(Label::Spam);
        }
        let b = smote_balance(&x, &y, 5, 99).unwrap();
        assert_eq!(b.origins.len(), 32);
        for (row, o) in b.x[48..].iter().zip(&b.origins) {
            assert_eq!(y[o.base], Label::Spam);
            assert_eq!(y[o.neighbor], Label::Spam);
            assert_ne!(o.base, o.neighbor);
            assert!((0.0..=1.0).contains(&o.delta));
            for c in 0..2 {
                let (a, z) = (x[o.base][c], x[o.neighbor][c]);
                let want = a + o.delta * (z - a);
                assert!((row[c] - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn neighbors_are_nearest_with_index_ties() {
        let x = vec![vec![0.0], vec![1.0], vec![-1.0], vec![5.0]];
        let lists = neighbor_lists(&x, &[0, 1, 2, 3], 2);
        assert_eq!(lists[0], vec![1, 2]);
        assert_eq!(lists[3], vec![1, 0]);
    }

    proptest! {
        #[test]
        fn synthetics_stay_within_minority_bounds(seed in any::<u64>(), minority in 2usize..10, majority in 10usize..30) {
            let mut rng = seed::rng(seed);
            let mut x = Vec::new();
            let mut y = Vec::new();
            for _ in 0..majority { x.push(vec![rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)]); y.push(Label::Ham); }
            for _ in 0..minority { x.push(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]); y.push(Label::Spam); }
            let before = x.clone();
            let b = smote_balance(&x, &y, 5, seed).unwrap();
            prop_assert_eq!(&b.x[..x.len()], &before[..]);
            let ham = b.y.iter().filter(|&&l| l == Label::Ham).count();
            prop_assert_eq!(ham * 2, b.y.len());
            for c in 0..2 {
                let lo = x[majority..].iter().map(|r| r[c]).fold(f64::INFINITY, f64::min);
                let hi = x[majority..].iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
                for row in &b.x[x.len()..] {
                    prop_assert!(row[c] >= lo - 1e-12 && row[c] <= hi + 1e-12);
                }
            }
        }
    }
}
