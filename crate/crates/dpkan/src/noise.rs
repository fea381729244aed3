//! The temporally correlated Gaussian noise process.
//!
//! At each step the mechanism injects `xi_t = kappa * (Z_t - lambda *
//! Z_{t-1})` with `Z_t` i.i.d. standard normal vectors and `Z_0 = 0`. A
//! positive `lambda` anti-correlates consecutive perturbations: each draw
//! partially cancels its predecessor, so the cumulative injected noise
//! telescopes to `kappa * (Z_t + (1 - lambda) * sum_{s<t} Z_s)` and grows
//! with the damped factor `1 - lambda` instead of accumulating at full
//! scale. Coordinates have stationary variance `kappa^2 (1 + lambda^2)` and
//! lag-one covariance `-kappa^2 * lambda`.
//!
//! The process is the matrix factorization `xi = kappa * D Z` with the
//! bidiagonal decoder `D = I - lambda * L` (`L` the one-step shift); its
//! inverse, the lower-triangular encoder with entries `lambda^(t-u)`,
//! reconstructs `Z` from the emitted noise. Dense materializations of both
//! are available for small horizons.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng;
use crate::vecops;

/// Largest horizon for which dense encoder/decoder matrices are built.
const DENSE_LIMIT: usize = 4096;

/// Violations of the noise-process preconditions.
#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    /// The correlation weight must satisfy `0 <= lambda < 1`.
    #[error("correlation weight must lie in [0, 1), got {lambda}")]
    BadLambda { lambda: f64 },
    /// The noise scale must be finite and nonnegative.
    #[error("noise scale must be finite and nonnegative, got {kappa}")]
    BadKappa { kappa: f64 },
    /// Vectors must have at least one coordinate.
    #[error("noise dimension must be at least 1")]
    ZeroDimension,
    /// Horizons must cover at least one step.
    #[error("horizon must be at least 1 step")]
    ZeroHorizon,
    /// Dense matrices are capped to keep memory desk-scale.
    #[error("dense matrices support horizons up to {max}, got {t}")]
    DenseTooLarge { t: usize, max: usize },
}

/// Streaming state of the correlated noise process.
#[derive(Debug, Clone)]
pub struct NoiseState {
    dim: usize,
    lambda: f64,
    kappa: f64,
    z_prev: Vec<f64>,
    steps: usize,
}

impl NoiseState {
    /// Starts the process at `Z_0 = 0`.
    pub fn new(dim: usize, lambda: f64, kappa: f64) -> Result<Self, NoiseError> {
        if dim == 0 {
            return Err(NoiseError::ZeroDimension);
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(NoiseError::BadLambda { lambda });
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(NoiseError::BadKappa { kappa });
        }
        Ok(NoiseState {
            dim,
            lambda,
            kappa,
            z_prev: vec![0.0; dim],
            steps: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of draws emitted so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// The Gaussian vector `Z_t` behind the most recent draw (zeros before
    /// the first call). Shifted-iterate tracking reads it to reconstruct the
    /// smoothed trajectory.
    pub fn last_gaussian(&self) -> &[f64] {
        &self.z_prev
    }

    /// Draws `Z_t` from `gen` and emits `xi_t = kappa * (Z_t - lambda *
    /// Z_{t-1})`.
    ///
    /// With `lambda == 0` the expression is evaluated literally as
    /// `kappa * Z_t`, so the uncorrelated path reproduces the independent
    /// Gaussian mechanism bit for bit.
    pub fn next_noise<R: Rng>(&mut self, gen: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim).map(|_| gen.sample(StandardNormal)).collect();
        let xi = if self.lambda == 0.0 {
            z.iter().map(|&zk| self.kappa * zk).collect()
        } else {
            z.iter()
                .zip(&self.z_prev)
                .map(|(&zk, &zp)| self.kappa * (zk - self.lambda * zp))
                .collect()
        };
        self.z_prev = z;
        self.steps += 1;
        xi
    }
}

/// Dense row-major square matrix for small-horizon noise algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    t: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Horizon (the matrix is `t x t`).
    pub fn size(&self) -> usize {
        self.t
    }

    /// Entry at `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.t && col < self.t, "index out of range");
        self.data[row * self.t + col]
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.t, "vector length mismatch");
        self.data
            .chunks_exact(self.t)
            .map(|row| vecops::dot(row, v))
            .collect()
    }

    /// Matrix-matrix product.
    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.t, other.t, "size mismatch");
        let t = self.t;
        let mut data = vec![0.0; t * t];
        for r in 0..t {
            for k in 0..t {
                let a = self.data[r * t + k];
                if a == 0.0 {
                    continue;
                }
                for c in 0..t {
                    data[r * t + c] += a * other.data[k * t + c];
                }
            }
        }
        DenseMatrix { t, data }
    }
}

fn check_dense(t: usize, lambda: f64) -> Result<(), NoiseError> {
    if t == 0 {
        return Err(NoiseError::ZeroHorizon);
    }
    if t > DENSE_LIMIT {
        return Err(NoiseError::DenseTooLarge {
            t,
            max: DENSE_LIMIT,
        });
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(NoiseError::BadLambda { lambda });
    }
    Ok(())
}

/// Lower-triangular encoder with entries `lambda^(row - col)`: maps emitted
/// noise (scaled by `1/kappa`) back to the underlying Gaussians.
pub fn encoder_matrix(t: usize, lambda: f64) -> Result<DenseMatrix, NoiseError> {
    check_dense(t, lambda)?;
    let mut data = vec![0.0; t * t];
    for col in 0..t {
        let mut power = 1.0;
        for row in col..t {
            data[row * t + col] = power;
            power *= lambda;
        }
    }
    Ok(DenseMatrix { t, data })
}

/// Bidiagonal decoder `I - lambda * L`: maps stacked Gaussians to the
/// emitted noise shape, `xi = kappa * D Z`.
pub fn decoder_matrix(t: usize, lambda: f64) -> Result<DenseMatrix, NoiseError> {
    check_dense(t, lambda)?;
    let mut data = vec![0.0; t * t];
    for row in 0..t {
        data[row * t + row] = 1.0;
        if row > 0 {
            data[row * t + row - 1] = -lambda;
        }
    }
    Ok(DenseMatrix { t, data })
}

/// Norms of the running noise sums `|| sum_{s<=t} xi_s ||` for `t = 1..=t`,
/// driven by the noise stream of `seed`.
pub fn cumulative_noise_profile(
    lambda: f64,
    kappa: f64,
    t: usize,
    dim: usize,
    seed: u64,
) -> Result<Vec<f64>, NoiseError> {
    if t == 0 {
        return Err(NoiseError::ZeroHorizon);
    }
    let mut state = NoiseState::new(dim, lambda, kappa)?;
    let mut gen = rng::stream(seed, rng::NOISE);
    let mut cum = vec![0.0; dim];
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        let xi = state.next_noise(&mut gen);
        vecops::add_scaled(&mut cum, &xi, 1.0);
        out.push(vecops::l2_norm(&cum));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn constructor_validates_parameters() {
        assert!(matches!(
            NoiseState::new(0, 0.5, 1.0),
            Err(NoiseError::ZeroDimension)
        ));
        for lambda in [-0.1, 1.0, 1.5, f64::NAN] {
            assert!(matches!(
                NoiseState::new(2, lambda, 1.0),
                Err(NoiseError::BadLambda { .. })
            ));
        }
        for kappa in [-1.0, f64::INFINITY, f64::NAN] {
            assert!(matches!(
                NoiseState::new(2, 0.5, kappa),
                Err(NoiseError::BadKappa { .. })
            ));
        }
    }

    #[test]
    fn first_draw_is_a_plain_gaussian_scaled_by_kappa() {
        // Z_0 = 0, so xi_1 = kappa * Z_1 must hold bitwise even for
        // lambda > 0; the correlated and independent processes share their
        // first draw when fed the same stream.
        let kappa = 1.7;
        let mut corr = NoiseState::new(8, 0.6, kappa).unwrap();
        let mut indep = NoiseState::new(8, 0.0, kappa).unwrap();
        let mut g1 = rng::stream(4, rng::NOISE);
        let mut g2 = rng::stream(4, rng::NOISE);
        assert_eq!(corr.next_noise(&mut g1), indep.next_noise(&mut g2));
    }

    #[test]
    fn draws_follow_the_autoregressive_recursion() {
        let (lambda, kappa) = (0.45, 2.2);
        let mut state = NoiseState::new(4, lambda, kappa).unwrap();
        let mut gen = rng::stream(12, rng::NOISE);
        let mut replay = rng::stream(12, rng::NOISE);
        use rand::Rng as _;
        let mut z_prev = vec![0.0; 4];
        for _ in 0..20 {
            let xi = state.next_noise(&mut gen);
            let z: Vec<f64> = (0..4).map(|_| replay.sample(rand_distr::StandardNormal)).collect();
            for k in 0..4 {
                let want = kappa * (z[k] - lambda * z_prev[k]);
                assert_eq!(xi[k], want, "recursion mismatch at coordinate {k}");
            }
            assert_eq!(state.last_gaussian(), &z[..]);
            z_prev = z;
        }
    }

    #[test]
    fn zero_kappa_emits_exact_zero_noise() {
        let mut state = NoiseState::new(3, 0.9, 0.0).unwrap();
        let mut gen = rng::stream(1, rng::NOISE);
        for _ in 0..10 {
            let xi = state.next_noise(&mut gen);
            assert!(xi.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn encoder_matches_hand_written_three_step_matrix() {
        let enc = encoder_matrix(3, 0.5).unwrap();
        let expect = [
            [1.0, 0.0, 0.0],
            [0.5, 1.0, 0.0],
            [0.25, 0.5, 1.0],
        ];
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(enc.get(r, c), expect[r][c], "entry ({r}, {c})");
            }
        }
    }

    #[test]
    fn encoder_and_decoder_are_mutual_inverses() {
        for &(t, lambda) in &[(1usize, 0.0), (5, 0.3), (17, 0.9), (40, 0.99)] {
            let enc = encoder_matrix(t, lambda).unwrap();
            let dec = decoder_matrix(t, lambda).unwrap();
            for prod in [enc.mul(&dec), dec.mul(&enc)] {
                for r in 0..t {
                    for c in 0..t {
                        let want = if r == c { 1.0 } else { 0.0 };
                        assert!(
                            (prod.get(r, c) - want).abs() <= 1e-14,
                            "t = {t}, lambda = {lambda}: product entry ({r}, {c}) = {}",
                            prod.get(r, c)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn decoder_reproduces_the_streamed_draws() {
        use rand::Rng as _;
        let (t, lambda, kappa) = (12usize, 0.7, 1.3);
        let mut state = NoiseState::new(1, lambda, kappa).unwrap();
        let mut gen = rng::stream(6, rng::NOISE);
        let mut replay = rng::stream(6, rng::NOISE);
        let mut xis = Vec::new();
        let mut zs = Vec::new();
        for _ in 0..t {
            xis.push(state.next_noise(&mut gen)[0]);
            zs.push(replay.sample::<f64, _>(rand_distr::StandardNormal));
        }
        let dec = decoder_matrix(t, lambda).unwrap();
        let via_matrix: Vec<f64> = dec.mul_vec(&zs).iter().map(|x| kappa * x).collect();
        for (a, b) in xis.iter().zip(&via_matrix) {
            assert!((a - b).abs() <= 1e-15, "stream {a} vs matrix {b}");
        }
        // And the encoder recovers the Gaussians from the noise.
        let enc = encoder_matrix(t, lambda).unwrap();
        let scaled: Vec<f64> = xis.iter().map(|x| x / kappa).collect();
        for (a, b) in enc.mul_vec(&scaled).iter().zip(&zs) {
            assert!((a - b).abs() <= 1e-12, "recovered {a} vs drawn {b}");
        }
    }

    #[test]
    fn dense_builders_reject_bad_sizes() {
        assert_eq!(encoder_matrix(0, 0.5), Err(NoiseError::ZeroHorizon));
        assert!(matches!(
            encoder_matrix(5000, 0.5),
            Err(NoiseError::DenseTooLarge { t: 5000, max: 4096 })
        ));
        assert!(matches!(
            decoder_matrix(3, 1.0),
            Err(NoiseError::BadLambda { .. })
        ));
    }

    #[test]
    fn coordinate_moments_match_the_stationary_law() {
        let (lambda, kappa) = (0.6, 1.5);
        let mut state = NoiseState::new(1, lambda, kappa).unwrap();
        let mut gen = rng::stream(33, rng::NOISE);
        let samples: Vec<f64> = (0..20_000).map(|_| state.next_noise(&mut gen)[0]).collect();
        // Skip the warm-up draw, which has variance kappa^2 instead of the
        // stationary kappa^2 (1 + lambda^2).
        let body = &samples[1..];
        let var = body.iter().map(|x| x * x).sum::<f64>() / body.len() as f64;
        let want_var = kappa * kappa * (1.0 + lambda * lambda);
        assert!(
            (var - want_var).abs() / want_var < 0.05,
            "variance {var} vs stationary {want_var}"
        );
        let cov = body
            .windows(2)
            .map(|w| w[0] * w[1])
            .sum::<f64>()
            / (body.len() - 1) as f64;
        let want_cov = -kappa * kappa * lambda;
        assert!(
            (cov - want_cov).abs() < 0.1 * want_cov.abs(),
            "lag-1 covariance {cov} vs {want_cov}"
        );
    }

    #[test]
    fn cumulative_sums_telescope_in_closed_form() {
        use rand::Rng as _;
        let (lambda, kappa, t, dim) = (0.8, 2.0, 50usize, 3usize);
        let profile = cumulative_noise_profile(lambda, kappa, t, dim, 77).unwrap();
        assert_eq!(profile.len(), t);

        // Replay the same stream and apply kappa * (Z_t + (1 - lambda) *
        // sum_{s<t} Z_s) directly.
        let mut replay = rng::stream(77, rng::NOISE);
        let mut sum_z = vec![0.0; dim];
        for (step, &got) in profile.iter().enumerate() {
            let z: Vec<f64> = (0..dim)
                .map(|_| replay.sample(rand_distr::StandardNormal))
                .collect();
            let want_vec: Vec<f64> = (0..dim)
                .map(|k| kappa * (z[k] + (1.0 - lambda) * sum_z[k]))
                .collect();
            let want = crate::vecops::l2_norm(&want_vec);
            assert!(
                (got - want).abs() <= 1e-10 * (1.0 + want),
                "step {step}: profile {got} vs telescoped {want}"
            );
            for (s, zk) in sum_z.iter_mut().zip(&z) {
                *s += zk;
            }
        }
    }

    #[test]
    fn mean_final_cumulative_norm_decreases_with_correlation() {
        let (kappa, t, dim) = (1.0, 80usize, 4usize);
        let mut means = Vec::new();
        for &lambda in &[0.0, 0.5, 0.9] {
            let mut acc = 0.0;
            for seed in 0..40 {
                acc += cumulative_noise_profile(lambda, kappa, t, dim, seed).unwrap()[t - 1];
            }
            means.push(acc / 40.0);
        }
        assert!(
            means[0] > means[1] && means[1] > means[2],
            "cancellation should damp cumulative noise: {means:?}"
        );
    }
}
