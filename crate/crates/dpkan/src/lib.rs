//! Differentially private mini-batch SGD with temporally correlated Gaussian
//! noise, specialized to two-layer B-spline Kolmogorov-Arnold networks.
//!
//! The crate is organized around a desk-scale experimental loop:
//!
//! * [`spline`] — clamped uniform B-spline bases with derivative evaluation
//!   and certified sup-norm bounds;
//! * [`model`] — the two-layer network `f_W`, its gradient in the trainable
//!   first layer, and closed-form norm bounds;
//! * [`objective`] — logistic loss, per-example gradients, clipping, and the
//!   CSV dataset format;
//! * [`sampling`] — without-replacement mini-batches and the exact
//!   subsampling variance factor;
//! * [`noise`] — the first-order autoregressive noise stream `ξ_t = κ(Z_t −
//!   λZ_{t−1})` and its dense encoder/decoder matrices;
//! * [`optimizer`] — the private training loop, ball projection, and the
//!   shifted-iterate tracking diagnostics;
//! * [`privacy`] — closed-form noise calibration for the independent and
//!   correlated mechanisms, plus a small RDP toolbox;
//! * [`diagnostics`] — margin estimation, coupled-run stability probes, and
//!   Gaussian concentration checks;
//! * [`datagen`] — synthetic linearly separable datasets on the unit ball.
//!
//! Everything is deterministic given a master seed: each stochastic component
//! draws from its own labelled ChaCha stream (see [`rng`]), so runs replay
//! bit-for-bit regardless of which diagnostics are enabled.

pub mod datagen;
pub mod diagnostics;
pub mod model;
pub mod noise;
pub mod objective;
pub mod optimizer;
pub mod privacy;
pub mod rng;
pub mod sampling;
pub mod spline;

mod vecops;
