//! Random-filter convolution, ReLU and global pooling.
//!
//! Filters are never trained. Each bank is a fixed random projection drawn
//! from its seed, so a bank is fully described by `(seed, count, input_dim,
//! kernel)` plus the weights themselves, which the model file stores anyway.

use rand::distributions::{Distribution, Uniform};

use crate::embedding::WordMatrix;
use crate::{seed, Error, Result, Scalar};

/// Reduction applied to each feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    #[default]
    Max,
    Min,
    Average,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Max => "max",
            Pooling::Min => "min",
            Pooling::Average => "average",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max" => Some(Pooling::Max),
            "min" => Some(Pooling::Min),
            "average" | "avg" => Some(Pooling::Average),
            _ => None,
        }
    }
}

/// `count` filters of shape `input_dim x kernel`, stride 1, no bias.
///
/// Weights are stored filter-major; within a filter, kernel row `r` holds the
/// `input_dim` weights applied to word `i + r` of the window. That layout lines
/// a window of a row-major [`WordMatrix`] up with the filter as one flat dot
/// product.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<T> {
    count: usize,
    input_dim: usize,
    kernel: usize,
    seed: u64,
    weights: Vec<T>,
}

impl<T: Scalar> FilterBank<T> {
    /// Draws weights i.i.d. from `U[-a, a]`, `a = sqrt(6 / (input_dim * kernel + count))`.
    ///
    /// Samples are drawn in `f64` and rounded, so `f32` and `f64` banks built
    /// from the same seed agree to within `f32` rounding.
    pub fn random(seed: u64, count: usize, input_dim: usize, kernel: usize) -> Result<Self> {
        if count == 0 || input_dim == 0 || kernel == 0 {
            return Err(Error::invalid(format!(
                "filter bank dimensions must be positive (count={count}, input_dim={input_dim}, kernel={kernel})"
            )));
        }
        let fan_in = (input_dim * kernel) as f64;
        let fan_out = count as f64;
        let a = (6.0 / (fan_in + fan_out)).sqrt();
        let dist = Uniform::new_inclusive(-a, a);
        let mut rng = seed::rng(seed);
        let weights = (0..count * input_dim * kernel)
            .map(|_| T::from_f64_lossy(dist.sample(&mut rng)))
            .collect();
        Ok(FilterBank {
            count,
            input_dim,
            kernel,
            seed,
            weights,
        })
    }

    /// Rebuilds a bank from stored weights.
    pub fn from_weights(
        seed: u64,
        count: usize,
        input_dim: usize,
        kernel: usize,
        weights: Vec<T>,
    ) -> Result<Self> {
        if count == 0 || input_dim == 0 || kernel == 0 {
            return Err(Error::invalid("filter bank dimensions must be positive"));
        }
        if weights.len() != count * input_dim * kernel {
            return Err(Error::DimensionMismatch {
                expected: count * input_dim * kernel,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("filter weights must be finite"));
        }
        Ok(FilterBank {
            count,
            input_dim,
            kernel,
            seed,
            weights,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Filter `j` flattened as `[kernel row][input dim]`.
    pub fn filter(&self, j: usize) -> Filter<'_, T> {
        let size = self.input_dim * self.kernel;
        Filter {
            input_dim: self.input_dim,
            kernel: self.kernel,
            weights: &self.weights[j * size..(j + 1) * size],
        }
    }

    pub fn filters(&self) -> impl Iterator<Item = Filter<'_, T>> + '_ {
        (0..self.count).map(move |j| self.filter(j))
    }
}

pub fn init_filter_bank<T: Scalar>(
    seed: u64,
    count: usize,
    input_dim: usize,
    kernel: usize,
) -> Result<FilterBank<T>> {
    FilterBank::random(seed, count, input_dim, kernel)
}

#[derive(Debug, Clone, Copy)]
pub struct Filter<'a, T> {
    pub input_dim: usize,
    pub kernel: usize,
    pub weights: &'a [T],
}

impl<T: Scalar> Filter<'_, T> {
    /// Weight applied to column `col` of window row `r`.
    pub fn weight(&self, col: usize, r: usize) -> T {
        self.weights[r * self.input_dim + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T>(pub Vec<T>);

/// Pooled features, one per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T>(pub Vec<T>);

impl<T> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

fn check_compatible<T: Scalar>(m: &WordMatrix<T>, input_dim: usize, kernel: usize) -> Result<()> {
    if m.dim() != input_dim {
        return Err(Error::DimensionMismatch {
            expected: input_dim,
            found: m.dim(),
        });
    }
    if m.rows() < kernel {
        return Err(Error::DimensionMismatch {
            expected: kernel,
            found: m.rows(),
        });
    }
    Ok(())
}

/// Slides `filter` over the rows of `m`; output length `rows - kernel + 1`.
pub fn convolve<T: Scalar>(m: &WordMatrix<T>, filter: Filter<'_, T>) -> Result<FeatureMap<T>> {
    check_compatible(m, filter.input_dim, filter.kernel)?;
    Ok(FeatureMap(convolve_unchecked(m, filter.weights, filter.kernel)))
}

fn convolve_unchecked<T: Scalar>(m: &WordMatrix<T>, weights: &[T], kernel: usize) -> Vec<T> {
    (0..=m.rows() - kernel)
        .map(|i| {
            m.window(i, kernel)
                .iter()
                .zip(weights)
                .fold(T::zero(), |acc, (&x, &w)| acc + x * w)
        })
        .collect()
}

pub fn relu<T: Scalar>(o: &FeatureMap<T>) -> FeatureMap<T> {
    FeatureMap(o.0.iter().map(|&v| v.max(T::zero())).collect())
}

pub fn global_max_pool<T: Scalar>(o: &FeatureMap<T>) -> Result<T> {
    global_pool(o, Pooling::Max)
}

pub fn global_pool<T: Scalar>(o: &FeatureMap<T>, mode: Pooling) -> Result<T> {
    let values = &o.0;
    if values.is_empty() {
        return Err(Error::Empty("feature map"));
    }
    Ok(pool_slice(values, mode))
}

fn pool_slice<T: Scalar>(values: &[T], mode: Pooling) -> T {
    match mode {
        Pooling::Max => values.iter().copied().fold(T::neg_infinity(), T::max),
        Pooling::Min => values.iter().copied().fold(T::infinity(), T::min),
        Pooling::Average => {
            values.iter().copied().sum::<T>() / T::from_count(values.len())
        }
    }
}

/// Convolution, ReLU and global max-pooling for every filter of `bank`.
pub fn extract_features<T: Scalar>(m: &WordMatrix<T>, bank: &FilterBank<T>) -> Result<FeatureVector<T>> {
    extract_features_pooled(m, bank, Pooling::Max)
}

pub fn extract_features_pooled<T: Scalar>(
    m: &WordMatrix<T>,
    bank: &FilterBank<T>,
    pooling: Pooling,
) -> Result<FeatureVector<T>> {
    check_compatible(m, bank.input_dim, bank.kernel)?;
    let mut map = Vec::with_capacity(m.rows() - bank.kernel + 1);
    let features = bank
        .filters()
        .map(|f| {
            map.clear();
            map.extend(
                convolve_unchecked(m, f.weights, f.kernel)
                    .into_iter()
                    .map(|v| v.max(T::zero())),
            );
            pool_slice(&map, pooling)
        })
        .collect();
    Ok(FeatureVector(features))
}

/// Re-extracts features from a previous level's vector, read as a sequence
/// of one-dimensional words. `bank` must have `input_dim == 1`.
pub fn update_features<T: Scalar>(prev: &FeatureVector<T>, bank: &FilterBank<T>) -> Result<FeatureVector<T>> {
    update_features_pooled(prev, bank, Pooling::Max)
}

pub fn update_features_pooled<T: Scalar>(
    prev: &FeatureVector<T>,
    bank: &FilterBank<T>,
    pooling: Pooling,
) -> Result<FeatureVector<T>> {
    if bank.input_dim != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: bank.input_dim,
        });
    }
    let m = WordMatrix::from_flat(prev.len(), 1, prev.0.clone())
        .map_err(|_| Error::Empty("feature vector"))?;
    extract_features_pooled(&m, bank, pooling)
}
