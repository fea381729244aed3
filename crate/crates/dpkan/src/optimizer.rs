//! Projected mini-batch SGD with per-example clipping and injected noise.
//!
//! One step samples a batch without replacement, clips each per-example
//! gradient to `c_clip`, averages, adds `(c_clip / batch) * xi_t` from the
//! noise recursion, takes a step of size `eta`, and projects back onto the
//! ball of radius `r_star` around the initial weights. With `kappa = 0`,
//! an infinite clip threshold, and an infinite radius the loop reduces
//! bitwise to plain mini-batch SGD: the reduction is load-bearing for the
//! coupled-run probes and guarded by tests, so the special cases skip the
//! respective arithmetic entirely instead of multiplying by
//! one-or-infinity sentinels.
//!
//! When `track_auxiliary` is set, the run simultaneously advances two
//! analysis-side trajectories driven by the same batches and the same
//! Gaussian draws: the unprojected, unclipped iterate and its shifted
//! companion `u_t = w_tilde_t + eta * c_priv * z_t`. The shifted iterate
//! obeys a one-step recursion whose numerical residual is recorded and
//! should sit at rounding error; it is the quantity the run certifies.
//!
//! Batch sampling and noise use separately labeled streams of the run
//! seed, so two runs with the same seed share both, and runs that differ
//! only in the dataset still sample identical index sequences.

use std::io::Write;

use thiserror::Error;

use crate::model::{KanModel, ModelError};
use crate::noise::NoiseState;
use crate::objective::{self, Dataset, ObjectiveError};
use crate::rng;
use crate::sampling::{self, SamplingError};
use crate::vecops;

/// Violations of the training preconditions, plus propagated failures.
#[derive(Debug, Error)]
pub enum OptimizerError {
    /// Step sizes must be positive and finite.
    #[error("step size must be positive and finite, got {eta}")]
    BadStepSize { eta: f64 },
    /// At least one iteration is required.
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    /// Batch sizes must fit the dataset.
    #[error("batch size must lie in 1..=n; got batch {batch} for {n} examples")]
    BadBatch { batch: usize, n: usize },
    /// Clip thresholds must be positive (infinity disables clipping).
    #[error("clip threshold must be positive, got {c_clip}")]
    BadClip { c_clip: f64 },
    /// The injected noise is scaled by `c_clip * kappa / batch`, so noise
    /// without a finite clip threshold would be infinite.
    #[error("noise injection (kappa > 0) requires a finite clip threshold")]
    UnclippedNoise,
    /// The noise correlation parameter must lie in `[0, 1)`.
    #[error("correlation parameter must lie in [0, 1), got {lambda}")]
    BadLambda { lambda: f64 },
    /// The noise multiplier must be finite and non-negative.
    #[error("noise multiplier must be finite and non-negative, got {kappa}")]
    BadKappa { kappa: f64 },
    /// Projection radii must be positive (infinity disables projection).
    #[error("projection radius must be positive, got {r_star}")]
    BadRadius { r_star: f64 },
    /// The model and dataset disagree on the input dimension.
    #[error("model input dimension {model} does not match data dimension {data}")]
    DimensionMismatch { model: usize, data: usize },
    /// Per-step diagnostics are indexed by iteration `1..=steps`.
    #[error("iteration index must lie in 1..={steps}, got {t}")]
    BadIteration { t: usize, steps: usize },
    /// The requested quantity needs the auxiliary trajectory.
    #[error("auxiliary-trajectory diagnostics were not recorded; enable track_auxiliary")]
    DiagnosticsDisabled,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Step size.
    pub eta: f64,
    /// Number of iterations.
    pub steps: usize,
    /// Mini-batch size.
    pub batch: usize,
    /// Per-example clip threshold; `f64::INFINITY` disables clipping.
    pub c_clip: f64,
    /// Noise correlation parameter in `[0, 1)`.
    pub lambda: f64,
    /// Noise multiplier; zero disables injection entirely.
    pub kappa: f64,
    /// Projection radius around the initial weights; `f64::INFINITY`
    /// disables projection.
    pub r_star: f64,
    /// Run seed; batch sampling and noise use separate labeled streams.
    pub seed: u64,
    /// Advance the auxiliary and shifted trajectories alongside the run.
    /// Doubles the gradient work: the shifted recursion needs the full
    /// dataset gradient at the auxiliary iterate every step.
    pub track_auxiliary: bool,
    /// Held-out examples a front end should generate for risk reporting;
    /// the training loop itself takes the held-out set as an argument.
    pub holdout_size: usize,
}

impl TrainConfig {
    /// Checks every field against a dataset of `n` examples.
    pub fn validate(&self, n: usize) -> Result<(), OptimizerError> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(OptimizerError::BadStepSize { eta: self.eta });
        }
        if self.steps == 0 {
            return Err(OptimizerError::ZeroIterations);
        }
        if self.batch == 0 || self.batch > n {
            return Err(OptimizerError::BadBatch {
                batch: self.batch,
                n,
            });
        }
        if !(self.c_clip > 0.0) {
            return Err(OptimizerError::BadClip {
                c_clip: self.c_clip,
            });
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(OptimizerError::BadLambda {
                lambda: self.lambda,
            });
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(OptimizerError::BadKappa { kappa: self.kappa });
        }
        if self.kappa > 0.0 && !self.c_clip.is_finite() {
            return Err(OptimizerError::UnclippedNoise);
        }
        if !(self.r_star > 0.0) {
            return Err(OptimizerError::BadRadius {
                r_star: self.r_star,
            });
        }
        Ok(())
    }
}

/// Per-iteration measurements of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    /// Iteration index, starting at 1.
    pub t: usize,
    /// Empirical risk at the post-step weights.
    pub risk: f64,
    /// Held-out risk at the post-step weights, when a held-out set was given.
    pub holdout_risk: Option<f64>,
    /// Distance of the post-step weights from the initial weights.
    pub dist_from_init: f64,
    /// How many per-example gradients the clip rescaled this step.
    pub clip_fired: usize,
    /// Whether the projection moved the iterate this step.
    pub projection_active: bool,
    /// Norm of the injected noise vector.
    pub noise_norm: f64,
    /// Norm of the running sum of injected noise vectors.
    pub cumulative_noise_norm: f64,
    /// Full-dataset gradient norm at the post-step weights.
    pub grad_norm: f64,
}

/// The measurements of a full run, one row per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Empirical risk at the initial weights.
    pub initial_risk: f64,
    /// Held-out risk at the initial weights, when a held-out set was given.
    pub initial_holdout_risk: Option<f64>,
    /// Rows for iterations `1..=steps`.
    pub rows: Vec<RunRow>,
    /// Mean empirical risk over the first `steps` states of the run
    /// (initial weights through the penultimate iterate), the average the
    /// optimization-risk analysis controls.
    pub averaged_risk: f64,
}

impl RunRecord {
    /// Writes the record as CSV: a header, then one row per iteration.
    /// Missing held-out risks become empty cells; the projection flag is
    /// written as 0 or 1.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "t,empirical_risk,holdout_risk,dist_from_init,clip_fired,\
             projection_active,noise_norm,cumulative_noise_norm,grad_norm"
        )?;
        for row in &self.rows {
            write!(out, "{},{},", row.t, row.risk)?;
            if let Some(h) = row.holdout_risk {
                write!(out, "{h}")?;
            }
            writeln!(
                out,
                ",{},{},{},{},{},{}",
                row.dist_from_init,
                row.clip_fired,
                u8::from(row.projection_active),
                row.noise_norm,
                row.cumulative_noise_norm,
                row.grad_norm
            )?;
        }
        Ok(())
    }
}

/// The analysis-side trajectories of a run: the unprojected, unclipped
/// auxiliary iterate and the shifted iterate, advanced with the very same
/// batches and Gaussian draws as the released weights.
#[derive(Debug, Clone)]
pub struct ShiftedDiag {
    eta: f64,
    lambda: f64,
    c_priv: f64,
    w_tilde: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    g_full: Vec<Vec<f64>>,
    delta_tilde: Vec<Vec<f64>>,
    z_prev: Vec<Vec<f64>>,
    max_residual: f64,
    max_coupling_gap: f64,
}

impl ShiftedDiag {
    /// Privacy-noise scale in the shifted recursion: `c_clip * kappa / batch`,
    /// or exactly zero when no noise is injected.
    pub fn c_priv(&self) -> f64 {
        self.c_priv
    }

    /// Number of recorded iterations.
    pub fn steps(&self) -> usize {
        self.g_full.len()
    }

    /// Auxiliary iterate after iteration `t` (index 0 is the initial point).
    pub fn auxiliary_iterate(&self, t: usize) -> &[f64] {
        &self.w_tilde[t]
    }

    /// Shifted iterate after iteration `t` (index 0 is the initial point).
    pub fn shifted_iterate(&self, t: usize) -> &[f64] {
        &self.u[t]
    }

    /// Mini-batch fluctuation of iteration `t`: the gap between the batch
    /// mean of unclipped gradients and the full gradient, both at the
    /// auxiliary iterate the step started from.
    pub fn batch_fluctuation(&self, t: usize) -> Result<&[f64], OptimizerError> {
        self.check_iteration(t)?;
        Ok(&self.delta_tilde[t - 1])
    }

    /// Numerical residual of the shifted one-step recursion at iteration
    /// `t`: the distance between `u_t` and
    /// `u_{t-1} - eta * (g_t + delta_t + (1 - lambda) * c_priv * z_{t-1})`.
    /// The recursion is an exact algebraic identity, so the residual is
    /// pure rounding error.
    pub fn step_identity_residual(&self, t: usize) -> Result<f64, OptimizerError> {
        self.check_iteration(t)?;
        let dim = self.u[t].len();
        let mut predicted = self.u[t - 1].clone();
        let g = &self.g_full[t - 1];
        let delta = &self.delta_tilde[t - 1];
        let z = &self.z_prev[t - 1];
        let noise_coeff = (1.0 - self.lambda) * self.c_priv;
        for k in 0..dim {
            predicted[k] -= self.eta * (g[k] + delta[k] + noise_coeff * z[k]);
        }
        Ok(vecops::l2_dist(&self.u[t], &predicted))
    }

    /// Largest recursion residual over the run.
    pub fn max_identity_residual(&self) -> f64 {
        self.max_residual
    }

    /// Largest distance between the released and auxiliary iterates over
    /// the run; zero whenever clipping and projection never act.
    pub fn max_coupling_gap(&self) -> f64 {
        self.max_coupling_gap
    }

    fn check_iteration(&self, t: usize) -> Result<(), OptimizerError> {
        if t == 0 || t > self.steps() {
            return Err(OptimizerError::BadIteration {
                t,
                steps: self.steps(),
            });
        }
        Ok(())
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// The trained model, holding the final weights.
    pub model: KanModel,
    /// Weight vectors of every state of the run, initial weights first;
    /// `steps + 1` entries.
    pub trajectory: Vec<Vec<f64>>,
    /// Per-iteration measurements.
    pub record: RunRecord,
    /// Analysis-side trajectories, when `track_auxiliary` was set.
    pub diag: Option<ShiftedDiag>,
    eta: f64,
    vhats: Vec<Vec<f64>>,
}

impl TrainOutput {
    /// The noisy stepped directions, one per iteration: clipped batch mean
    /// plus scaled noise, exactly as stepped.
    pub fn stepped_directions(&self) -> &[Vec<f64>] {
        &self.vhats
    }

    /// Residual of the shifted one-step recursion at iteration `t`; errors
    /// when the run did not track the auxiliary trajectory.
    pub fn shifted_step_identity_residual(&self, t: usize) -> Result<f64, OptimizerError> {
        let diag = self
            .diag
            .as_ref()
            .ok_or(OptimizerError::DiagnosticsDisabled)?;
        diag.step_identity_residual(t)
    }

    /// Per-iteration slack of the projected-step inequality
    /// `<v, w - w*> <= (|w - w*|^2 - |w+ - w*|^2) / (2 eta) + eta |v|^2 / 2`
    /// against a fixed comparator inside the feasible ball. Non-negative up
    /// to rounding for every comparator the projection keeps feasible.
    pub fn mirror_descent_slacks(&self, comparator: &[f64]) -> Vec<f64> {
        assert_eq!(
            comparator.len(),
            self.trajectory[0].len(),
            "comparator dimension mismatch"
        );
        (0..self.vhats.len())
            .map(|i| {
                let w = &self.trajectory[i];
                let w_next = &self.trajectory[i + 1];
                let v = &self.vhats[i];
                let before = vecops::l2_dist(w, comparator);
                let after = vecops::l2_dist(w_next, comparator);
                let gain = (before * before - after * after) / (2.0 * self.eta);
                let step_cost = self.eta * vecops::dot(v, v) / 2.0;
                let mut inner = 0.0;
                for k in 0..v.len() {
                    inner += v[k] * (w[k] - comparator[k]);
                }
                gain + step_cost - inner
            })
            .collect()
    }
}

/// Projects `w` onto the closed ball of radius `r_star` around `w0`.
/// Returns the projected point and whether the projection moved it. Points
/// already inside the ball (and every point, when the radius is infinite)
/// come back unchanged, without any arithmetic. The scaled point is
/// re-checked and re-scaled until its computed distance actually sits
/// within the radius, so the localization guarantee holds for the returned
/// floats, not just in exact arithmetic.
pub fn project_ball(w: &[f64], w0: &[f64], r_star: f64) -> (Vec<f64>, bool) {
    assert_eq!(w.len(), w0.len(), "projection dimension mismatch");
    assert!(r_star > 0.0, "projection radius must be positive");
    if r_star.is_infinite() {
        return (w.to_vec(), false);
    }
    let mut dist = vecops::l2_dist(w, w0);
    if dist <= r_star {
        return (w.to_vec(), false);
    }
    let mut out = w.to_vec();
    let mut shrink = 0.0;
    loop {
        let scale = (r_star / dist) * (1.0 - shrink);
        for (o, w0k) in out.iter_mut().zip(w0) {
            *o = w0k + scale * (*o - w0k);
        }
        dist = vecops::l2_dist(&out, w0);
        if dist <= r_star {
            return (out, true);
        }
        // The plain rescale can leave the computed distance an ulp above
        // the radius, and when a center coordinate dwarfs its offset the
        // rounded sum refuses to move at all; back off exponentially until
        // every coordinate actually shifts on its own float grid. The
        // factor is capped so the scale stays positive, and a half-shrink
        // pass lands well inside the ball, so the loop always terminates.
        shrink = if shrink == 0.0 {
            f64::EPSILON
        } else {
            (shrink * 2.0).min(0.5)
        };
    }
}

/// Mean of the per-example gradients at `model` over `indices`, each
/// clipped to `c_clip` first. Returns the averaged direction and how many
/// gradients the clip rescaled. Gradients accumulate in index order with a
/// fixed scale per example, so the result is deterministic and, when no
/// clip fires, bitwise equal to the unclipped batch mean.
pub fn clipped_batch_gradient(
    model: &KanModel,
    data: &Dataset,
    indices: &[usize],
    c_clip: f64,
) -> Result<(Vec<f64>, usize), OptimizerError> {
    if indices.is_empty() {
        return Err(OptimizerError::BadBatch {
            batch: 0,
            n: data.len(),
        });
    }
    if !(c_clip > 0.0) {
        return Err(OptimizerError::BadClip { c_clip });
    }
    let inv_b = 1.0 / indices.len() as f64;
    let mut v = vec![0.0; model.dim()];
    let mut fired = 0;
    for &idx in indices {
        let g = objective::per_example_grad(model, data.get(idx)?)?;
        let norm = vecops::l2_norm(&g);
        let scale = if norm > c_clip {
            fired += 1;
            c_clip / norm
        } else {
            1.0
        };
        vecops::add_scaled(&mut v, &g, scale * inv_b);
    }
    Ok((v, fired))
}

struct AuxState {
    scratch: KanModel,
    w_tilde: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    g_full: Vec<Vec<f64>>,
    delta_tilde: Vec<Vec<f64>>,
    z_prev: Vec<Vec<f64>>,
}

/// Runs the full training loop from `model0` on `data`.
///
/// The run is a pure function of its inputs: batch indices come from one
/// labeled stream of `config.seed` and Gaussian draws from another, so
/// identical calls produce bitwise-identical trajectories. The held-out
/// set, when given, is only ever evaluated, never sampled from.
pub fn train(
    model0: &KanModel,
    data: &Dataset,
    holdout: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutput, OptimizerError> {
    config.validate(data.len())?;
    if model0.d() != data.dim() {
        return Err(OptimizerError::DimensionMismatch {
            model: model0.d(),
            data: data.dim(),
        });
    }
    if let Some(h) = holdout {
        if h.dim() != model0.d() {
            return Err(OptimizerError::DimensionMismatch {
                model: model0.d(),
                data: h.dim(),
            });
        }
    }

    let mut model = model0.clone();
    let w0 = model.weights().to_vec();
    let dim = model.dim();
    let n = data.len();
    let inv_b = 1.0 / config.batch as f64;
    let noise_scale = if config.kappa == 0.0 {
        0.0
    } else {
        config.c_clip * inv_b
    };
    let c_priv = if config.kappa == 0.0 {
        0.0
    } else {
        config.c_clip * config.kappa * inv_b
    };

    let mut batch_rng = rng::stream(config.seed, rng::BATCH);
    let mut noise_rng = rng::stream(config.seed, rng::NOISE);
    let mut noise = NoiseState::new(dim, config.lambda, config.kappa)
        .expect("noise parameters were validated with the config");

    let mut aux = if config.track_auxiliary {
        Some(AuxState {
            scratch: model.clone(),
            w_tilde: vec![w0.clone()],
            u: vec![w0.clone()],
            g_full: Vec::with_capacity(config.steps),
            delta_tilde: Vec::with_capacity(config.steps),
            z_prev: Vec::with_capacity(config.steps),
        })
    } else {
        None
    };

    let initial_risk = objective::empirical_risk(&model, data)?;
    let initial_holdout_risk = match holdout {
        Some(h) => Some(objective::empirical_risk(&model, h)?),
        None => None,
    };

    let mut trajectory = Vec::with_capacity(config.steps + 1);
    trajectory.push(w0.clone());
    let mut vhats = Vec::with_capacity(config.steps);
    let mut rows = Vec::with_capacity(config.steps);
    let mut cumulative = vec![0.0; dim];
    let mut early_risk_sum = initial_risk;

    for t in 1..=config.steps {
        let batch = sampling::sample(n, config.batch, &mut batch_rng)?;
        let (v, clip_fired) =
            clipped_batch_gradient(&model, data, batch.indices(), config.c_clip)?;

        let z_before = aux.as_ref().map(|_| noise.last_gaussian().to_vec());
        let xi = noise.next_noise(&mut noise_rng);
        let noise_norm = vecops::l2_norm(&xi);
        vecops::add_scaled(&mut cumulative, &xi, 1.0);

        if let Some(state) = aux.as_mut() {
            let w_prev = state.w_tilde.last().expect("auxiliary start state");
            state.scratch.set_weights(w_prev);
            let g_full = objective::full_gradient(&state.scratch, data)?;
            let mut v_aux = vec![0.0; dim];
            for &idx in batch.indices() {
                let g = objective::per_example_grad(&state.scratch, data.get(idx)?)?;
                vecops::add_scaled(&mut v_aux, &g, inv_b);
            }
            let delta: Vec<f64> = v_aux.iter().zip(&g_full).map(|(a, b)| a - b).collect();
            let mut w_next = w_prev.clone();
            if config.kappa == 0.0 {
                for k in 0..dim {
                    w_next[k] -= config.eta * v_aux[k];
                }
            } else {
                for k in 0..dim {
                    w_next[k] -= config.eta * (v_aux[k] + noise_scale * xi[k]);
                }
            }
            let shifted = if c_priv == 0.0 {
                w_next.clone()
            } else {
                let z_now = noise.last_gaussian();
                w_next
                    .iter()
                    .zip(z_now)
                    .map(|(w, z)| w + config.eta * c_priv * z)
                    .collect()
            };
            state.w_tilde.push(w_next);
            state.u.push(shifted);
            state.g_full.push(g_full);
            state.delta_tilde.push(delta);
            state
                .z_prev
                .push(z_before.expect("gaussian snapshot precedes the draw"));
        }

        let vhat: Vec<f64> = if config.kappa == 0.0 {
            v
        } else {
            v.iter().zip(&xi).map(|(a, x)| a + noise_scale * x).collect()
        };
        let prev = trajectory.last().expect("trajectory starts at the init");
        let mut proposed = prev.clone();
        for k in 0..dim {
            proposed[k] -= config.eta * vhat[k];
        }
        let (w_next, projection_active) = project_ball(&proposed, &w0, config.r_star);
        model.set_weights(&w_next);

        let risk = objective::empirical_risk(&model, data)?;
        let holdout_risk = match holdout {
            Some(h) => Some(objective::empirical_risk(&model, h)?),
            None => None,
        };
        let grad_norm = vecops::l2_norm(&objective::full_gradient(&model, data)?);
        rows.push(RunRow {
            t,
            risk,
            holdout_risk,
            dist_from_init: vecops::l2_dist(&w_next, &w0),
            clip_fired,
            projection_active,
            noise_norm,
            cumulative_noise_norm: vecops::l2_norm(&cumulative),
            grad_norm,
        });
        if t < config.steps {
            early_risk_sum += risk;
        }
        trajectory.push(w_next);
        vhats.push(vhat);
    }

    let diag = aux.map(|state| {
        let mut diag = ShiftedDiag {
            eta: config.eta,
            lambda: config.lambda,
            c_priv,
            w_tilde: state.w_tilde,
            u: state.u,
            g_full: state.g_full,
            delta_tilde: state.delta_tilde,
            z_prev: state.z_prev,
            max_residual: 0.0,
            max_coupling_gap: 0.0,
        };
        for t in 1..=config.steps {
            let residual = diag
                .step_identity_residual(t)
                .expect("iteration index is in range");
            diag.max_residual = diag.max_residual.max(residual);
            let gap = vecops::l2_dist(&trajectory[t], &diag.w_tilde[t]);
            diag.max_coupling_gap = diag.max_coupling_gap.max(gap);
        }
        diag
    });

    let record = RunRecord {
        initial_risk,
        initial_holdout_risk,
        rows,
        averaged_risk: early_risk_sum / config.steps as f64,
    };
    Ok(TrainOutput {
        model,
        trajectory,
        record,
        diag,
        eta: config.eta,
        vhats,
    })
}
