//! The two-layer B-spline network and its first-layer gradient.
//!
//! A model with widths `(m, d, p)` maps `x` in the unit ball of `R^d` to
//!
//! ```text
//! f_W(x) = (1/sqrt(m)) * sum_j <c_j, h(sigma(pre_j))>,
//! pre_j  = (1/sqrt(d)) * <w_j, h(x)>,
//! ```
//!
//! where `h(x)` stacks the `p` basis values of every input coordinate
//! (`d * p` entries), `h(u)` on a scalar is the length-`p` basis vector, and
//! `sigma` is a bounded smooth activation. The first-layer weights `W` (one
//! length-`d * p` block per hidden unit) are trainable; the second-layer
//! coefficients `c` are drawn at initialization and frozen, which is what
//! makes the closed-form gradient-norm and curvature bounds possible.
//!
//! Weight layout: entry `(j, i, k)` — hidden unit `j`, input coordinate `i`,
//! basis function `k` — lives at flat index `j*d*p + i*p + k`, and `h(x)`
//! uses the matching `i*p + k` layout, so each hidden block pairs with the
//! stacked basis vector by straight dot product.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng;
use crate::spline::{SplineBasis, SplineError};
use crate::vecops;

/// Leading bytes of the checkpoint format.
const CKPT_MAGIC: &[u8; 8] = b"KANCKPT1";

/// Errors from model construction, evaluation, and checkpoint handling.
#[derive(Debug, Error)]
pub enum ModelError {
    /// All three widths must be at least 1.
    #[error("network dimensions must be positive, got m = {m}, d = {d}, p = {p}")]
    BadDimensions { m: usize, d: usize, p: usize },
    /// Input length does not match the model's input dimension.
    #[error("input has {got} coordinates but the model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    /// Supplied parameter vectors have the wrong length.
    #[error("{name} has {got} entries but the model shape requires {expected}")]
    BadParameterLength {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    /// Activation name not in the catalogue.
    #[error("unknown activation '{name}' (expected 'sigmoid' or 'tanh')")]
    UnknownActivation { name: String },
    /// Basis construction failed.
    #[error(transparent)]
    Basis(#[from] SplineError),
    /// Underlying I/O failure while reading or writing a checkpoint.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// The bytes do not form a valid checkpoint.
    #[error("invalid checkpoint: {reason}")]
    BadCheckpoint { reason: String },
}

/// Bounded smooth activations with closed-form derivative bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

/// Sup-norm bounds `(|sigma|, |sigma'|, |sigma''|)` of an activation.
#[derive(Debug, Clone, Copy)]
pub struct ActivationBounds {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

impl Activation {
    /// Applies the activation.
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// First derivative.
    pub fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = self.eval(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    /// Second derivative.
    pub fn second_deriv(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = self.eval(z);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }

    /// Exact sup-norm bounds over the real line.
    pub fn bounds(self) -> ActivationBounds {
        match self {
            Activation::Sigmoid => ActivationBounds {
                value: 1.0,
                first: 0.25,
                second: 3f64.sqrt() / 18.0,
            },
            Activation::Tanh => ActivationBounds {
                value: 1.0,
                first: 1.0,
                second: 4.0 / (3.0 * 3f64.sqrt()),
            },
        }
    }

    /// The spline interval that covers both layers' inputs: raw coordinates
    /// from the unit ball and post-activation values, padded by 0.01.
    pub fn basis_interval(self) -> (f64, f64) {
        let lo = (-1.0f64).min(match self {
            Activation::Sigmoid => 0.0,
            Activation::Tanh => -1.0,
        }) - 0.01;
        let hi = 1.0f64.max(1.0) + 0.01;
        (lo, hi)
    }

    /// Stable one-byte tag used by the checkpoint format.
    pub fn tag(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Tanh => 1,
        }
    }

    /// Inverse of [`tag`](Activation::tag).
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Sigmoid),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    /// Canonical lowercase name.
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(ModelError::UnknownActivation {
                name: s.to_string(),
            }),
        }
    }
}

/// Intermediate quantities of one forward pass, reused by the gradient.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Network output `f_W(x)`.
    pub value: f64,
    /// Stacked first-layer basis values `h(x)`, length `d * p`.
    pub hx: Vec<f64>,
    /// Pre-activations, length `m`.
    pub pre: Vec<f64>,
    /// Post-activations `sigma(pre)`, length `m`.
    pub hidden: Vec<f64>,
}

/// Outcome of checking the second-layer concentration event.
///
/// The event asks the frozen coefficients to look like a typical Gaussian
/// draw: full norm at most `4*sqrt(p*m) + 2*sqrt(ln(2/delta))` and every
/// per-unit row at most `4*sqrt(p) + 2*sqrt(ln(2m/delta))`. All closed-form
/// gradient and curvature bounds are certified only on this event.
#[derive(Debug, Clone, Copy)]
pub struct InitEvent {
    pub c_norm: f64,
    pub c_norm_cap: f64,
    pub row_max: f64,
    pub row_max_cap: f64,
}

impl InitEvent {
    /// Whether both concentration inequalities hold.
    pub fn holds(&self) -> bool {
        self.c_norm <= self.c_norm_cap && self.row_max <= self.row_max_cap
    }
}

/// The two-layer spline network.
#[derive(Debug, Clone)]
pub struct KanModel {
    m: usize,
    d: usize,
    p: usize,
    w: Vec<f64>,
    c: Vec<f64>,
    c_norm: f64,
    c_row_max: f64,
    basis: SplineBasis,
    activation: Activation,
}

impl KanModel {
    /// Draws a fresh model: `W` then `c`, entrywise standard normal, from the
    /// initialization stream of `seed`.
    pub fn init(
        m: usize,
        d: usize,
        p: usize,
        degree: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if m == 0 || d == 0 || p == 0 {
            return Err(ModelError::BadDimensions { m, d, p });
        }
        let basis = SplineBasis::clamped_uniform(degree, p, activation.basis_interval())?;
        let mut gen = rng::stream(seed, rng::INIT);
        let w: Vec<f64> = (0..m * d * p).map(|_| gen.sample(StandardNormal)).collect();
        let c: Vec<f64> = (0..m * p).map(|_| gen.sample(StandardNormal)).collect();
        Self::assemble(m, d, p, w, c, basis, activation)
    }

    /// Builds a model from explicit parameter vectors.
    pub fn from_parts(
        m: usize,
        d: usize,
        p: usize,
        degree: usize,
        activation: Activation,
        w: Vec<f64>,
        c: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if m == 0 || d == 0 || p == 0 {
            return Err(ModelError::BadDimensions { m, d, p });
        }
        let basis = SplineBasis::clamped_uniform(degree, p, activation.basis_interval())?;
        Self::assemble(m, d, p, w, c, basis, activation)
    }

    fn assemble(
        m: usize,
        d: usize,
        p: usize,
        w: Vec<f64>,
        c: Vec<f64>,
        basis: SplineBasis,
        activation: Activation,
    ) -> Result<Self, ModelError> {
        if w.len() != m * d * p {
            return Err(ModelError::BadParameterLength {
                name: "first-layer weight vector",
                expected: m * d * p,
                got: w.len(),
            });
        }
        if c.len() != m * p {
            return Err(ModelError::BadParameterLength {
                name: "second-layer coefficient vector",
                expected: m * p,
                got: c.len(),
            });
        }
        let c_norm = vecops::l2_norm(&c);
        let c_row_max = c
            .chunks_exact(p)
            .map(vecops::l2_norm)
            .fold(0.0f64, f64::max);
        Ok(KanModel {
            m,
            d,
            p,
            w,
            c,
            c_norm,
            c_row_max,
            basis,
            activation,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of trainable parameters, `m * d * p`.
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    /// Trainable first-layer weights, flattened as documented on the module.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Mutable access for the optimizer; the layout contract is unchanged.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    /// Overwrites the first-layer weights.
    pub fn set_weights(&mut self, w: &[f64]) {
        assert_eq!(w.len(), self.w.len(), "weight vector length mismatch");
        self.w.copy_from_slice(w);
    }

    /// Frozen second-layer coefficients.
    pub fn second_layer(&self) -> &[f64] {
        &self.c
    }

    /// Runs the forward pass, returning intermediates for gradient reuse.
    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace, ModelError> {
        if x.len() != self.d {
            return Err(ModelError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let (m, d, p) = (self.m, self.d, self.p);
        let mut hx = vec![0.0; d * p];
        for (i, &xi) in x.iter().enumerate() {
            self.basis.eval_basis_into(xi, 0, &mut hx[i * p..(i + 1) * p]);
        }

        let inv_sqrt_d = 1.0 / (d as f64).sqrt();
        let mut pre = vec![0.0; m];
        let mut hidden = vec![0.0; m];
        for j in 0..m {
            let block = &self.w[j * d * p..(j + 1) * d * p];
            pre[j] = inv_sqrt_d * vecops::dot(block, &hx);
            hidden[j] = self.activation.eval(pre[j]);
        }

        let mut scratch = vec![0.0; p];
        let mut acc = 0.0;
        for j in 0..m {
            self.basis.eval_basis_into(hidden[j], 0, &mut scratch);
            acc += vecops::dot(&self.c[j * p..(j + 1) * p], &scratch);
        }
        let value = acc / (m as f64).sqrt();

        // |f| <= B_b * sqrt(p) * ||c|| holds unconditionally by
        // Cauchy-Schwarz across hidden units; catch any evaluator regression.
        debug_assert!(
            value.abs()
                <= self.basis.sup_bounds().value * (p as f64).sqrt() * self.c_norm + 1e-9,
            "output {value} escaped its closed-form scale bound"
        );

        Ok(ForwardTrace {
            value,
            hx,
            pre,
            hidden,
        })
    }

    /// Network output at `x`.
    pub fn forward(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(self.forward_trace(x)?.value)
    }

    /// Gradient of `f_W(x)` in the first-layer weights, length `m * d * p`.
    ///
    /// Block `j` equals `(1/sqrt(m d)) * sigma'(pre_j) * <c_j, h'(x1_j)> *
    /// h(x)` with `x1_j` the post-activation of unit `j`.
    pub fn grad_f(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let trace = self.forward_trace(x)?;
        Ok(self.grad_f_from_trace(&trace))
    }

    /// As [`grad_f`](KanModel::grad_f), reusing an existing forward trace.
    pub fn grad_f_from_trace(&self, trace: &ForwardTrace) -> Vec<f64> {
        let (m, d, p) = (self.m, self.d, self.p);
        let inv_sqrt_md = 1.0 / ((m * d) as f64).sqrt();
        let mut grad = vec![0.0; m * d * p];
        let mut hp = vec![0.0; p];
        for j in 0..m {
            self.basis.eval_basis_into(trace.hidden[j], 1, &mut hp);
            let s = inv_sqrt_md
                * self.activation.deriv(trace.pre[j])
                * vecops::dot(&self.c[j * p..(j + 1) * p], &hp);
            vecops::add_scaled(&mut grad[j * d * p..(j + 1) * d * p], &trace.hx, s);
        }
        grad
    }

    /// Closed-form bound on `||grad f_W(x)||` valid for every `W` and every
    /// unit-ball `x`, on the initialization event at level `delta`.
    ///
    /// Equals `B'_sigma * B_b * B'_b * p * (4*sqrt(p) +
    /// 2*sqrt(ln(2/delta)/m))`. Since the logistic loss has `|l'| <= 1`, the
    /// same value bounds every per-example loss gradient.
    pub fn grad_norm_bound(&self, delta: f64) -> f64 {
        let act = self.activation.bounds();
        let spl = self.basis.sup_bounds();
        act.first * spl.value * spl.first * second_layer_factor(self.p, self.m, delta)
    }

    /// Closed-form bound on the spectral norm of the Hessian of `f_W(x)` in
    /// `W`, on the initialization event at level `delta`.
    ///
    /// The Hessian is block diagonal across hidden units, and each block is a
    /// scaled outer product `h(x) h(x)^T`, which gives
    /// `p^{3/2} * B_b^2 * (B''_sigma B'_b + (B'_sigma)^2 B''_b) / sqrt(m)`
    /// times the per-row coefficient cap `4*sqrt(p) + 2*sqrt(ln(2m/delta))`.
    pub fn hessian_norm_bound(&self, delta: f64) -> f64 {
        assert!(
            delta > 0.0 && delta < 1.0,
            "confidence level must lie in (0, 1), got {delta}"
        );
        let act = self.activation.bounds();
        let spl = self.basis.sup_bounds();
        let p = self.p as f64;
        let m = self.m as f64;
        let row_cap = 4.0 * p.sqrt() + 2.0 * ((2.0 * m / delta).ln()).sqrt();
        p.powf(1.5) * spl.value * spl.value * (act.second * spl.first + act.first * act.first * spl.second)
            / m.sqrt()
            * row_cap
    }

    /// Evaluates the second-layer concentration event at level `delta`.
    pub fn check_init_event(&self, delta: f64) -> InitEvent {
        assert!(
            delta > 0.0 && delta < 1.0,
            "confidence level must lie in (0, 1), got {delta}"
        );
        let p = self.p as f64;
        let m = self.m as f64;
        InitEvent {
            c_norm: self.c_norm,
            c_norm_cap: 4.0 * (p * m).sqrt() + 2.0 * ((2.0 / delta).ln()).sqrt(),
            row_max: self.c_row_max,
            row_max_cap: 4.0 * p.sqrt() + 2.0 * ((2.0 * m / delta).ln()).sqrt(),
        }
    }

    /// Serializes shape, activation, seed, and both parameter layers.
    pub fn write_checkpoint<W: Write>(&self, out: &mut W, seed: u64) -> Result<(), ModelError> {
        out.write_all(CKPT_MAGIC)?;
        for dim in [self.m, self.d, self.p, self.basis.degree()] {
            out.write_all(&(dim as u32).to_le_bytes())?;
        }
        out.write_all(&[self.activation.tag()])?;
        out.write_all(&seed.to_le_bytes())?;
        for &x in self.w.iter().chain(self.c.iter()) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a checkpoint back, returning the model and the recorded seed.
    pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<(Self, u64), ModelError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CKPT_MAGIC {
            return Err(ModelError::BadCheckpoint {
                reason: "magic bytes do not match".to_string(),
            });
        }
        let mut quad = [0u8; 4];
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            input.read_exact(&mut quad)?;
            *d = u32::from_le_bytes(quad) as usize;
        }
        let [m, d, p, degree] = dims;
        let mut tag = [0u8; 1];
        input.read_exact(&mut tag)?;
        let activation = Activation::from_tag(tag[0]).ok_or_else(|| ModelError::BadCheckpoint {
            reason: format!("unknown activation tag {}", tag[0]),
        })?;
        let mut eight = [0u8; 8];
        input.read_exact(&mut eight)?;
        let seed = u64::from_le_bytes(eight);

        let mut read_vec = |len: usize| -> Result<Vec<f64>, ModelError> {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                input.read_exact(&mut eight)?;
                let x = f64::from_le_bytes(eight);
                if !x.is_finite() {
                    return Err(ModelError::BadCheckpoint {
                        reason: "non-finite parameter value".to_string(),
                    });
                }
                v.push(x);
            }
            Ok(v)
        };
        let w = read_vec(m * d * p)?;
        let c = read_vec(m * p)?;
        let model = Self::from_parts(m, d, p, degree, activation, w, c)?;
        Ok((model, seed))
    }
}

/// The dimension-dependent factor `p * (4*sqrt(p) + 2*sqrt(ln(2/delta)/m))`
/// multiplying the activation and basis constants in the gradient bound.
fn second_layer_factor(p: usize, m: usize, delta: f64) -> f64 {
    assert!(
        delta > 0.0 && delta < 1.0,
        "confidence level must lie in (0, 1), got {delta}"
    );
    let p = p as f64;
    let m = m as f64;
    p * (4.0 * p.sqrt() + 2.0 * ((2.0 / delta).ln() / m).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn desk_model() -> KanModel {
        KanModel::from_parts(
            1,
            1,
            4,
            3,
            Activation::Tanh,
            vec![0.3, -0.2, 0.5, 0.1],
            vec![0.7, -0.4, 0.2, 0.1],
        )
        .unwrap()
    }

    #[test]
    fn desk_forward_matches_hand_computation() {
        let trace = desk_model().forward_trace(&[0.35]).unwrap();
        let hx_expect = [
            0.03488009814607578,
            0.2156224249030139,
            0.4443128755577253,
            0.305184601393185,
        ];
        for (got, want) in trace.hx.iter().zip(hx_expect) {
            assert!((got - want).abs() <= 1e-12, "basis value {got} vs {want}");
        }
        assert!((trace.pre[0] - 0.2200144423814011).abs() <= 1e-12);
        assert!((trace.hidden[0] - 0.2165318267715196).abs() <= 1e-12);
        assert!((trace.value - 0.03927969998462991).abs() <= 1e-12);
    }

    #[test]
    fn desk_gradient_matches_hand_computation() {
        let grad = desk_model().grad_f(&[0.35]).unwrap();
        let expect = [
            0.0039309395386623635,
            0.02430035351173097,
            0.05007345572114257,
            0.03439388877815853,
        ];
        for (got, want) in grad.iter().zip(expect) {
            assert!((got - want).abs() <= 1e-12, "gradient entry {got} vs {want}");
        }
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        let eps = 1e-6;
        for act in [Activation::Sigmoid, Activation::Tanh] {
            for g in -20..=20 {
                let z = g as f64 * 0.25;
                let fd1 = (act.eval(z + eps) - act.eval(z - eps)) / (2.0 * eps);
                let fd2 = (act.eval(z + eps) - 2.0 * act.eval(z) + act.eval(z - eps)) / (eps * eps);
                assert_relative_eq!(act.deriv(z), fd1, epsilon = 1e-8, max_relative = 1e-6);
                assert!((act.second_deriv(z) - fd2).abs() <= 1e-3 * (1.0 + fd2.abs()));
            }
        }
    }

    #[test]
    fn activation_bounds_dominate_dense_sweep() {
        for act in [Activation::Sigmoid, Activation::Tanh] {
            let b = act.bounds();
            for g in -4000..=4000 {
                let z = g as f64 * 0.005;
                assert!(act.eval(z).abs() <= b.value + 1e-15);
                assert!(act.deriv(z).abs() <= b.first + 1e-15);
                assert!(act.second_deriv(z).abs() <= b.second + 1e-12);
            }
        }
    }

    #[test]
    fn sigmoid_curvature_peak_is_attained() {
        // The second derivative of the sigmoid peaks at ln(2 +- sqrt(3)) with
        // value sqrt(3)/18; the certified constant must be tight, not padded.
        let z = (2.0 + 3f64.sqrt()).ln();
        let peak = Activation::Sigmoid.second_deriv(z).abs();
        assert!((peak - 3f64.sqrt() / 18.0).abs() <= 1e-12);
        // Tanh curvature peaks at atanh(1/sqrt(3)) with value 4/(3*sqrt(3)).
        let peak_t = Activation::Tanh.second_deriv((1.0f64 / 3.0).sqrt().atanh());
        assert!((peak_t.abs() - 4.0 / (3.0 * 3f64.sqrt())).abs() <= 1e-12);
    }

    #[test]
    fn basis_interval_covers_inputs_and_activations() {
        for act in [Activation::Sigmoid, Activation::Tanh] {
            let (lo, hi) = act.basis_interval();
            assert_eq!((lo, hi), (-1.01, 1.01));
        }
    }

    #[test]
    fn init_is_seed_deterministic_and_layered() {
        let a = KanModel::init(3, 2, 5, 3, Activation::Sigmoid, 99).unwrap();
        let b = KanModel::init(3, 2, 5, 3, Activation::Sigmoid, 99).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.second_layer(), b.second_layer());
        let c = KanModel::init(3, 2, 5, 3, Activation::Sigmoid, 100).unwrap();
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn gradient_matches_central_differences_on_random_models() {
        let mut gen = rng::stream(5, rng::TRIAL);
        for trial in 0..10 {
            let m = gen.gen_range(1..=4);
            let d = gen.gen_range(1..=3);
            let p = gen.gen_range(4..=6);
            let mut model = KanModel::init(m, d, p, 3, Activation::Tanh, 1000 + trial).unwrap();
            let x: Vec<f64> = (0..d).map(|_| gen.gen_range(-0.5..0.5)).collect();
            let grad = model.grad_f(&x).unwrap();
            let eps = 1e-5;
            for idx in 0..model.dim() {
                let orig = model.weights()[idx];
                model.weights_mut()[idx] = orig + eps;
                let up = model.forward(&x).unwrap();
                model.weights_mut()[idx] = orig - eps;
                let down = model.forward(&x).unwrap();
                model.weights_mut()[idx] = orig;
                let fd = (up - down) / (2.0 * eps);
                assert!(
                    (grad[idx] - fd).abs() <= 1e-7 * (1.0 + fd.abs()),
                    "trial {trial} entry {idx}: analytic {} vs fd {fd}",
                    grad[idx]
                );
            }
        }
    }

    #[test]
    fn second_layer_factor_plug_in_value() {
        // With p = 1, m = 4, delta = 2/e the log term is exactly 1 and the
        // factor collapses to 4 + 2*sqrt(1/4) = 5.
        let delta = 2.0 / std::f64::consts::E;
        assert_eq!(second_layer_factor(1, 4, delta), 5.0);
    }

    #[test]
    fn grad_norm_bound_composes_constants() {
        let model = KanModel::init(8, 2, 6, 3, Activation::Sigmoid, 0).unwrap();
        let delta = 0.1;
        let act = model.activation().bounds();
        let spl = model.basis().sup_bounds();
        let expect = act.first * spl.value * spl.first * second_layer_factor(6, 8, delta);
        assert_eq!(model.grad_norm_bound(delta), expect);
    }

    #[test]
    fn gradient_norms_respect_closed_form_bound_on_good_event() {
        let mut gen = rng::stream(17, rng::TRIAL);
        for seed in 0..20 {
            let model = KanModel::init(24, 3, 6, 3, Activation::Sigmoid, seed).unwrap();
            let delta = 0.05;
            if !model.check_init_event(delta).holds() {
                continue;
            }
            let cap = model.grad_norm_bound(delta);
            for _ in 0..50 {
                let mut x: Vec<f64> = (0..3).map(|_| gen.gen_range(-1.0..1.0)).collect();
                let norm = crate::vecops::l2_norm(&x);
                if norm > 1.0 {
                    for xi in &mut x {
                        *xi /= norm;
                    }
                }
                let g = crate::vecops::l2_norm(&model.grad_f(&x).unwrap());
                assert!(g <= cap, "gradient norm {g} exceeded bound {cap}");
            }
        }
    }

    #[test]
    fn init_event_holds_for_typical_draws_and_fails_for_inflated_coefs() {
        for seed in 0..20 {
            let model = KanModel::init(64, 2, 6, 3, Activation::Sigmoid, seed).unwrap();
            assert!(
                model.check_init_event(0.1).holds(),
                "typical draw at seed {seed} should satisfy the event"
            );
        }
        let bad = KanModel::from_parts(
            2,
            1,
            4,
            3,
            Activation::Sigmoid,
            vec![0.0; 8],
            vec![100.0; 8],
        )
        .unwrap();
        assert!(!bad.check_init_event(0.1).holds());
    }

    #[test]
    fn hessian_bound_is_positive_and_shrinks_with_width() {
        let narrow = KanModel::init(4, 2, 6, 3, Activation::Tanh, 1).unwrap();
        let wide = KanModel::init(400, 2, 6, 3, Activation::Tanh, 1).unwrap();
        let (hn, hw) = (narrow.hessian_norm_bound(0.1), wide.hessian_norm_bound(0.1));
        assert!(hn > 0.0 && hw > 0.0);
        assert!(hw < hn, "curvature bound should shrink as width grows");
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let model = KanModel::init(2, 3, 5, 3, Activation::Sigmoid, 0).unwrap();
        match model.forward(&[0.1, 0.2]) {
            Err(ModelError::DimensionMismatch { expected: 3, got: 2 }) => {}
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn from_parts_validates_lengths() {
        let err = KanModel::from_parts(2, 2, 4, 3, Activation::Tanh, vec![0.0; 5], vec![0.0; 8]);
        assert!(matches!(
            err,
            Err(ModelError::BadParameterLength { expected: 16, got: 5, .. })
        ));
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let model = KanModel::init(3, 2, 5, 3, Activation::Tanh, 4242).unwrap();
        let mut buf = Vec::new();
        model.write_checkpoint(&mut buf, 4242).unwrap();
        let (back, seed) = KanModel::read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(seed, 4242);
        assert_eq!(back.weights(), model.weights());
        assert_eq!(back.second_layer(), model.second_layer());
        assert_eq!(
            (back.m(), back.d(), back.p(), back.basis().degree()),
            (3, 2, 5, 3)
        );
        assert_eq!(back.activation(), Activation::Tanh);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let model = KanModel::init(2, 1, 4, 3, Activation::Sigmoid, 1).unwrap();
        let mut buf = Vec::new();
        model.write_checkpoint(&mut buf, 1).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] ^= 0xFF;
        assert!(matches!(
            KanModel::read_checkpoint(&mut bad_magic.as_slice()),
            Err(ModelError::BadCheckpoint { .. })
        ));

        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(
            KanModel::read_checkpoint(&mut &truncated[..]),
            Err(ModelError::Io(_))
        ));

        let mut bad_float = buf.clone();
        let tail = bad_float.len() - 8;
        bad_float[tail..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            KanModel::read_checkpoint(&mut bad_float.as_slice()),
            Err(ModelError::BadCheckpoint { .. })
        ));
    }

    #[test]
    fn out_of_ball_inputs_stay_finite_via_clamping() {
        let model = KanModel::init(3, 2, 5, 3, Activation::Sigmoid, 8).unwrap();
        let value = model.forward(&[5.0, -7.0]).unwrap();
        assert!(value.is_finite());
        let grad = model.grad_f(&[5.0, -7.0]).unwrap();
        assert!(grad.iter().all(|g| g.is_finite()));
    }
}
