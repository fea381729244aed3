//! Uniform without-replacement mini-batches and their exact variance law.
//!
//! Batches are size-`B` subsets of `{0, ..., n-1}`, drawn uniformly over all
//! `C(n, B)` subsets by a partial Fisher-Yates shuffle and reported in
//! ascending order, so every consumer iterates examples in a canonical
//! sequence and repeated runs agree bitwise.
//!
//! For vectors `g_1, ..., g_n` with mean `g-bar`, the mini-batch mean over a
//! uniform subset satisfies the finite-population identity
//!
//! ```text
//! E || (1/B) sum_{i in batch} g_i - g_bar ||^2
//!   = (n - B) / (B (n - 1)) * (1/n) sum_i ||g_i - g_bar||^2,
//! ```
//!
//! which [`subsample_variance`] evaluates in closed form.

use rand::Rng;
use thiserror::Error;

use crate::vecops;

/// Violations of the batch-sampling preconditions.
#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    /// The population must be nonempty.
    #[error("cannot sample from an empty population")]
    EmptyPopulation,
    /// Batches must contain at least one index.
    #[error("batch size must be at least 1")]
    ZeroBatch,
    /// Without-replacement batches cannot exceed the population.
    #[error("batch size {b} exceeds population size {n}")]
    BatchTooLarge { b: usize, n: usize },
    /// Variance inputs must share one dimension.
    #[error("vector {index} has {got} entries, expected {expected}")]
    MixedDimensions {
        index: usize,
        expected: usize,
        got: usize,
    },
}

/// A sorted batch of distinct example indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    indices: Vec<usize>,
}

impl MiniBatch {
    /// The selected indices, strictly increasing.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Draws a uniform size-`b` subset of `{0, ..., n-1}`.
pub fn sample<R: Rng>(n: usize, b: usize, rng: &mut R) -> Result<MiniBatch, SamplingError> {
    if n == 0 {
        return Err(SamplingError::EmptyPopulation);
    }
    if b == 0 {
        return Err(SamplingError::ZeroBatch);
    }
    if b > n {
        return Err(SamplingError::BatchTooLarge { b, n });
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..b {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    let mut indices = pool[..b].to_vec();
    indices.sort_unstable();
    Ok(MiniBatch { indices })
}

/// Exact expected squared deviation of the batch mean from the full mean.
///
/// Returns `(n - B) / (B (n - 1))` times the mean squared deviation of the
/// inputs. A single-vector population has no subsampling randomness, so its
/// variance is zero.
pub fn subsample_variance(vectors: &[Vec<f64>], b: usize) -> Result<f64, SamplingError> {
    let n = vectors.len();
    if n == 0 {
        return Err(SamplingError::EmptyPopulation);
    }
    if b == 0 {
        return Err(SamplingError::ZeroBatch);
    }
    if b > n {
        return Err(SamplingError::BatchTooLarge { b, n });
    }
    let dim = vectors[0].len();
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(SamplingError::MixedDimensions {
                index,
                expected: dim,
                got: v.len(),
            });
        }
    }
    if n == 1 {
        return Ok(0.0);
    }

    let mut mean = vec![0.0; dim];
    for v in vectors {
        vecops::add_scaled(&mut mean, v, 1.0);
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let msd = vectors
        .iter()
        .map(|v| {
            let d = vecops::l2_dist(v, &mean);
            d * d
        })
        .sum::<f64>()
        / n as f64;

    let (n, b) = (n as f64, b as f64);
    Ok((n - b) / (b * (n - 1.0)) * msd)
}
