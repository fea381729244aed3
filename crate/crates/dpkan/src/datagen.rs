//! Synthetic linearly separable datasets on the unit ball.
//!
//! Both modes draw a hidden unit direction `w*` and alternate labels
//! `+1, -1, +1, ...`, so counts balance within one example. Points are
//! produced by rejection sampling with a margin filter: an example with
//! label `y` is accepted only when `y * <w*, x> >= gap/2`, which makes the
//! advertised separation exact by construction rather than approximate.
//!
//! * `random-halfspace` draws uniformly from the unit ball and filters.
//! * `two-cluster` draws Gaussian blobs centred at `+-(1/2 + gap/4) w*`
//!   (spread shrinking with dimension), filtered to the ball and the margin.
//!
//! Rejection is capped at one million draws per call; a gap too close to 1
//! exhausts the budget and errors instead of spinning.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::objective::{Dataset, Example, ObjectiveError};
use crate::rng;
use crate::vecops;

/// Total rejection-sampling draws allowed per generated dataset.
const RESAMPLE_BUDGET: usize = 1_000_000;

/// Violations of the generation preconditions.
#[derive(Debug, Error)]
pub enum DataGenError {
    /// At least one example is required.
    #[error("dataset size must be at least 1")]
    ZeroExamples,
    /// Inputs need at least one coordinate.
    #[error("input dimension must be at least 1")]
    ZeroDimension,
    /// Unit-ball data cannot support a margin of 1 or more.
    #[error("separation gap must lie in [0, 1), got {gap}")]
    InfeasibleGap { gap: f64 },
    /// The margin filter rejected too many draws.
    #[error("rejection sampling exhausted its budget of {budget} draws after accepting {accepted} examples")]
    ResampleBudgetExhausted { budget: usize, accepted: usize },
    /// Generated data failed dataset validation (unreachable by design).
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// How the two label clouds are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginMode {
    /// Gaussian blobs at mirrored centres along the hidden direction.
    TwoCluster,
    /// Uniform unit-ball draws filtered to the margin.
    RandomHalfspace,
}

impl MarginMode {
    pub fn name(self) -> &'static str {
        match self {
            MarginMode::TwoCluster => "two-cluster",
            MarginMode::RandomHalfspace => "random-halfspace",
        }
    }
}

impl std::str::FromStr for MarginMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "two-cluster" => Ok(MarginMode::TwoCluster),
            "random-halfspace" => Ok(MarginMode::RandomHalfspace),
            other => Err(format!(
                "unknown margin mode '{other}' (expected 'two-cluster' or 'random-halfspace')"
            )),
        }
    }
}

/// Full description of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub n: usize,
    pub d: usize,
    pub mode: MarginMode,
    /// Guaranteed separation: every example satisfies `y <w*, x> >= gap/2`.
    pub gap: f64,
    pub seed: u64,
}

impl GenSpec {
    fn validate(&self) -> Result<(), DataGenError> {
        if self.n == 0 {
            return Err(DataGenError::ZeroExamples);
        }
        if self.d == 0 {
            return Err(DataGenError::ZeroDimension);
        }
        if !(0.0..1.0).contains(&self.gap) {
            return Err(DataGenError::InfeasibleGap { gap: self.gap });
        }
        Ok(())
    }
}

/// The hidden separating direction of `spec`, as the generator will draw it.
pub fn separator(spec: &GenSpec) -> Result<Vec<f64>, DataGenError> {
    spec.validate()?;
    let mut gen = rng::stream(spec.seed, rng::DATAGEN);
    Ok(draw_direction(spec.d, &mut gen))
}

/// Generates the dataset described by `spec`, deterministically in the seed.
pub fn generate(spec: &GenSpec) -> Result<Dataset, DataGenError> {
    spec.validate()?;
    let mut gen = rng::stream(spec.seed, rng::DATAGEN);
    let w_star = draw_direction(spec.d, &mut gen);
    sample_dataset(spec, &w_star, spec.n, &mut gen)
}

/// Generates `n` further examples from the same hidden direction as
/// [`generate`], with point randomness from the stream `label` of the seed.
///
/// Held-out evaluation sets and stability-probe replacements come from here:
/// they follow the training distribution exactly but never share draws with
/// the training set.
pub fn generate_auxiliary(
    spec: &GenSpec,
    n: usize,
    label: u64,
) -> Result<Dataset, DataGenError> {
    spec.validate()?;
    if n == 0 {
        return Err(DataGenError::ZeroExamples);
    }
    let w_star = separator(spec)?;
    let mut gen = rng::stream(spec.seed, label);
    sample_dataset(spec, &w_star, n, &mut gen)
}

fn sample_dataset<R: Rng>(
    spec: &GenSpec,
    w_star: &[f64],
    n: usize,
    gen: &mut R,
) -> Result<Dataset, DataGenError> {
    let mut budget = RESAMPLE_BUDGET;
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        let x = sample_point(spec, w_star, y, gen, &mut budget).ok_or(
            DataGenError::ResampleBudgetExhausted {
                budget: RESAMPLE_BUDGET,
                accepted: examples.len(),
            },
        )?;
        examples.push(Example { x, y });
    }
    Ok(Dataset::new(examples)?)
}

fn sample_point<R: Rng>(
    spec: &GenSpec,
    w_star: &[f64],
    y: f64,
    gen: &mut R,
    budget: &mut usize,
) -> Option<Vec<f64>> {
    let threshold = spec.gap / 2.0;
    while *budget > 0 {
        *budget -= 1;
        let x = match spec.mode {
            MarginMode::RandomHalfspace => unit_ball_point(spec.d, gen),
            MarginMode::TwoCluster => {
                let rho = 0.5 + spec.gap / 4.0;
                let spread = 0.12f64.min(0.25 / (spec.d as f64).sqrt());
                let mut x: Vec<f64> = (0..spec.d).map(|_| gen.sample(StandardNormal)).collect();
                for (xi, wi) in x.iter_mut().zip(w_star) {
                    *xi = y * rho * wi + spread * *xi;
                }
                x
            }
        };
        if vecops::l2_norm(&x) <= 1.0 && y * vecops::dot(w_star, &x) >= threshold {
            return Some(x);
        }
    }
    None
}

/// A unit vector, uniform on the sphere.
fn draw_direction<R: Rng>(d: usize, gen: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| gen.sample(StandardNormal)).collect();
        let norm = vecops::l2_norm(&v);
        if norm > 1e-12 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// A point uniform in the unit ball: spherical direction with radius
/// `U^(1/d)`.
fn unit_ball_point<R: Rng>(d: usize, gen: &mut R) -> Vec<f64> {
    let dir = draw_direction(d, gen);
    let u: f64 = gen.gen_range(0.0..1.0);
    let radius = u.powf(1.0 / d as f64);
    dir.iter().map(|x| radius * x).collect()
}
