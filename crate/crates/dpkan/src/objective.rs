//! Logistic loss on margin-labelled data, gradients, clipping, and the
//! on-disk dataset format.
//!
//! Datasets are binary-labelled points in the closed unit ball: every
//! invariant (nonempty, consistent dimension, labels in `{-1, +1}`, norms at
//! most one) is enforced at construction, so downstream consumers never
//! re-validate. The empirical objective is the mean logistic loss
//! `l(y * f_W(x))` with `l(z) = ln(1 + exp(-z))`, evaluated in the
//! numerically stable branch form.
//!
//! The CSV layout is one example per line, `x_1,...,x_d,y`, no header; the
//! writer prints shortest round-trip decimal floats, so a write/read cycle
//! reproduces a dataset exactly.

use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{KanModel, ModelError};
use crate::vecops;

/// Slack allowed on the unit-ball check, absorbing decimal round-trips.
const BALL_TOLERANCE: f64 = 1e-9;

/// Errors from dataset validation, parsing, and gradient clipping.
#[derive(Debug, Error)]
pub enum ObjectiveError {
    /// Datasets must contain at least one example.
    #[error("dataset contains no examples")]
    EmptyDataset,
    /// An example's input length disagrees with the dataset dimension.
    #[error("example {row} has {got} coordinates, expected {expected}")]
    InconsistentDimension {
        row: usize,
        expected: usize,
        got: usize,
    },
    /// Labels must be exactly -1 or +1.
    #[error("example {row} has label {value}, expected -1 or +1")]
    BadLabel { row: usize, value: f64 },
    /// Inputs must lie in the closed unit ball.
    #[error("example {row} has norm {norm:.6}, outside the unit ball")]
    OutsideUnitBall { row: usize, norm: f64 },
    /// A CSV field failed to parse as a float.
    #[error("line {row}: cannot parse '{field}' as a number")]
    BadField { row: usize, field: String },
    /// A CSV line has too few fields to hold one coordinate and a label.
    #[error("line {row}: expected at least 2 comma-separated fields, got {got}")]
    TooFewFields { row: usize, got: usize },
    /// Example index out of range.
    #[error("example index {index} out of range for dataset of size {len}")]
    BadIndex { index: usize, len: usize },
    /// Clipping thresholds must be strictly positive.
    #[error("clipping threshold must be positive, got {threshold}")]
    NonPositiveClip { threshold: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One labelled example: a unit-ball input and a sign label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    /// Exactly `-1.0` or `+1.0`.
    pub y: f64,
}

/// A validated, nonempty collection of examples of a common dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<Example>,
    d: usize,
}

impl Dataset {
    /// Validates and wraps a list of examples.
    pub fn new(examples: Vec<Example>) -> Result<Self, ObjectiveError> {
        let first = examples.first().ok_or(ObjectiveError::EmptyDataset)?;
        let d = first.x.len();
        for (row, ex) in examples.iter().enumerate() {
            validate_example(ex, d, row)?;
        }
        Ok(Dataset { examples, d })
    }

    /// Number of examples.
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    /// Always false; kept for container-interface symmetry.
    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Input dimension shared by all examples.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, index: usize) -> Result<&Example, ObjectiveError> {
        self.examples.get(index).ok_or(ObjectiveError::BadIndex {
            index,
            len: self.examples.len(),
        })
    }

    /// Returns a copy with example `index` swapped for `replacement` — the
    /// neighbouring dataset used by stability probes.
    pub fn replace(&self, index: usize, replacement: Example) -> Result<Self, ObjectiveError> {
        if index >= self.examples.len() {
            return Err(ObjectiveError::BadIndex {
                index,
                len: self.examples.len(),
            });
        }
        validate_example(&replacement, self.d, index)?;
        let mut examples = self.examples.clone();
        examples[index] = replacement;
        Ok(Dataset {
            examples,
            d: self.d,
        })
    }

    /// Parses the CSV layout, validating every dataset invariant.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, ObjectiveError> {
        let mut examples = Vec::new();
        let mut dim = None;
        for (idx, line) in reader.lines().enumerate() {
            let row = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() < 2 {
                return Err(ObjectiveError::TooFewFields {
                    row,
                    got: fields.len(),
                });
            }
            let mut values = Vec::with_capacity(fields.len());
            for field in &fields {
                let v: f64 =
                    field
                        .trim()
                        .parse()
                        .map_err(|_| ObjectiveError::BadField {
                            row,
                            field: field.trim().to_string(),
                        })?;
                values.push(v);
            }
            let y = values.pop().expect("at least two fields");
            let ex = Example { x: values, y };
            let d = *dim.get_or_insert(ex.x.len());
            validate_example(&ex, d, row)?;
            examples.push(ex);
        }
        Self::new(examples)
    }

    /// Writes the CSV layout with round-trip float formatting.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<(), ObjectiveError> {
        for ex in &self.examples {
            for xi in &ex.x {
                write!(out, "{xi},")?;
            }
            writeln!(out, "{}", ex.y)?;
        }
        Ok(())
    }

    /// Reads a dataset from a file path.
    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self, ObjectiveError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// Writes a dataset to a file path.
    pub fn to_path<P: AsRef<Path>>(&self, path: P) -> Result<(), ObjectiveError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut file)
    }
}

fn validate_example(ex: &Example, d: usize, row: usize) -> Result<(), ObjectiveError> {
    if ex.x.len() != d {
        return Err(ObjectiveError::InconsistentDimension {
            row,
            expected: d,
            got: ex.x.len(),
        });
    }
    if ex.y != 1.0 && ex.y != -1.0 {
        return Err(ObjectiveError::BadLabel { row, value: ex.y });
    }
    let norm = vecops::l2_norm(&ex.x);
    if !norm.is_finite() || norm > 1.0 + BALL_TOLERANCE {
        return Err(ObjectiveError::OutsideUnitBall { row, norm });
    }
    Ok(())
}

/// Logistic loss `ln(1 + exp(-z))`, branch-stable across the whole line.
pub fn loss(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Derivative of [`loss`]: `-sigmoid(-z)`, always in `(-1, 0)`.
pub fn loss_deriv(z: f64) -> f64 {
    -1.0 / (1.0 + z.exp())
}

/// Loss of `model` on one example, `l(y * f_W(x))`.
pub fn per_example_loss(model: &KanModel, ex: &Example) -> Result<f64, ModelError> {
    Ok(loss(ex.y * model.forward(&ex.x)?))
}

/// Gradient of the per-example loss in the first-layer weights.
pub fn per_example_grad(model: &KanModel, ex: &Example) -> Result<Vec<f64>, ModelError> {
    let trace = model.forward_trace(&ex.x)?;
    let mut grad = model.grad_f_from_trace(&trace);
    let scale = ex.y * loss_deriv(ex.y * trace.value);
    for g in &mut grad {
        *g *= scale;
    }
    Ok(grad)
}

/// Mean loss of `model` over the dataset.
pub fn empirical_risk(model: &KanModel, data: &Dataset) -> Result<f64, ModelError> {
    let mut acc = 0.0;
    for ex in data.examples() {
        acc += per_example_loss(model, ex)?;
    }
    Ok(acc / data.len() as f64)
}

/// Mean per-example gradient over the dataset, accumulated in index order so
/// repeated runs agree bitwise.
pub fn full_gradient(model: &KanModel, data: &Dataset) -> Result<Vec<f64>, ModelError> {
    let mut acc = vec![0.0; model.dim()];
    for ex in data.examples() {
        let g = per_example_grad(model, ex)?;
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a += gi;
        }
    }
    let inv = 1.0 / data.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    Ok(acc)
}

/// Rescales `g` onto the ball of radius `threshold` when its norm exceeds the
/// threshold, returning whether the clip fired. Vectors already inside pass
/// through untouched, so an infinite threshold is an exact no-op.
pub fn clip_in_place(g: &mut [f64], threshold: f64) -> Result<bool, ObjectiveError> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(ObjectiveError::NonPositiveClip { threshold });
    }
    let norm = vecops::l2_norm(g);
    if norm <= threshold {
        return Ok(false);
    }
    let scale = threshold / norm;
    for gi in g.iter_mut() {
        *gi *= scale;
    }
    Ok(true)
}

/// Copying variant of [`clip_in_place`].
pub fn clip(g: &[f64], threshold: f64) -> Result<(Vec<f64>, bool), ObjectiveError> {
    let mut out = g.to_vec();
    let fired = clip_in_place(&mut out, threshold)?;
    Ok((out, fired))
}
