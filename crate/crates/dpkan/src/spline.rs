//! Clamped uniform B-spline bases on a closed interval.
//!
//! A basis is a family of `count` B-spline functions of a given polynomial
//! degree over a clamped uniform knot vector: the interval endpoints are
//! repeated `degree + 1` times and the interior knots are equally spaced.
//! Evaluation clamps the query point to the interval, so the basis map is
//! total; at the right endpoint the last knot span is used, which keeps the
//! partition of unity exact there.
//!
//! Each basis carries certified sup-norm bounds for itself and its first two
//! derivatives, computed once at construction on a dense per-span grid and
//! inflated by a small safety factor. The bounds feed the model's closed-form
//! gradient and curvature estimates, so they must dominate every value the
//! evaluator can return.

use thiserror::Error;

/// Violations of the basis construction preconditions.
#[derive(Debug, Error, PartialEq)]
pub enum SplineError {
    /// Degree below 2 leaves the second-derivative formulas undefined.
    #[error("spline degree must be at least 2, got {degree}")]
    DegreeTooSmall { degree: usize },
    /// Fewer than `degree + 1` functions cannot span a single knot interval.
    #[error("basis needs at least degree + 1 = {min} functions, got {count}")]
    TooFewFunctions { count: usize, min: usize },
    /// The interval must be finite with strictly positive length.
    #[error("invalid basis interval [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },
}

/// Certified sup-norm bounds for a basis and its first two derivatives.
///
/// Each field dominates `max_k sup_v |b_k^(order)(v)|` over the interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupBounds {
    /// Bound on the basis functions themselves.
    pub value: f64,
    /// Bound on the first derivatives.
    pub first: f64,
    /// Bound on the second derivatives.
    pub second: f64,
}

/// A clamped uniform B-spline basis of `count` functions.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    degree: usize,
    count: usize,
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
    bounds: SupBounds,
}

/// Grid subintervals per knot span when certifying the sup bounds.
const BOUND_GRID: usize = 4096;
/// Multiplicative inflation applied to the grid maxima.
const BOUND_SAFETY: f64 = 1e-6;

impl SplineBasis {
    /// Builds the clamped uniform basis of `count` functions of `degree` on
    /// `[lo, hi]`.
    pub fn clamped_uniform(
        degree: usize,
        count: usize,
        (lo, hi): (f64, f64),
    ) -> Result<Self, SplineError> {
        if degree < 2 {
            return Err(SplineError::DegreeTooSmall { degree });
        }
        if count < degree + 1 {
            return Err(SplineError::TooFewFunctions {
                count,
                min: degree + 1,
            });
        }
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(SplineError::BadInterval { lo, hi });
        }

        let spans = count - degree;
        let width = (hi - lo) / spans as f64;
        let mut knots = vec![lo; count + degree + 1];
        for i in 1..spans {
            knots[degree + i] = lo + i as f64 * width;
        }
        for k in knots.iter_mut().skip(count) {
            *k = hi;
        }

        let mut basis = SplineBasis {
            degree,
            count,
            lo,
            hi,
            knots,
            bounds: SupBounds {
                value: 0.0,
                first: 0.0,
                second: 0.0,
            },
        };
        basis.bounds = basis.certify_bounds();
        Ok(basis)
    }

    /// Polynomial degree of the basis functions.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions.
    pub fn count(&self) -> usize {
        self.count
    }

    /// The closed evaluation interval.
    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// The full clamped knot vector, of length `count + degree + 1`.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Certified sup-norm bounds for orders 0, 1, 2.
    pub fn sup_bounds(&self) -> SupBounds {
        self.bounds
    }

    /// Evaluates all `count` basis functions (or a derivative) at `v`.
    ///
    /// `order` selects the plain values (0), first derivatives (1), or second
    /// derivatives (2); anything larger panics. The query point is clamped to
    /// the interval, so the map is total in `v`.
    pub fn eval_basis(&self, v: f64, order: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.count];
        self.eval_basis_into(v, order, &mut out);
        out
    }

    /// As [`eval_basis`], writing into a caller-provided slice of length
    /// `count`.
    ///
    /// [`eval_basis`]: SplineBasis::eval_basis
    pub fn eval_basis_into(&self, v: f64, order: usize, out: &mut [f64]) {
        assert!(order <= 2, "derivative order {order} not supported");
        assert_eq!(out.len(), self.count, "output slice length mismatch");
        out.fill(0.0);

        let v = v.clamp(self.lo, self.hi);
        let span = self.find_span(v);
        let rows = self.local_triangle(span, v);
        match order {
            0 => {
                for (r, &val) in rows[self.degree].iter().enumerate() {
                    out[span - self.degree + r] = val;
                }
            }
            1 => {
                for i in (span - self.degree)..=span {
                    out[i] = self.first_deriv_at(span, &rows, i);
                }
            }
            _ => {
                for i in (span - self.degree)..=span {
                    out[i] = self.second_deriv_at(span, &rows, i);
                }
            }
        }
    }

    /// Index `l` of the knot span `[t_l, t_{l+1})` containing `v`, with the
    /// last span claiming the right endpoint.
    fn find_span(&self, v: f64) -> usize {
        if v >= self.hi {
            return self.count - 1;
        }
        // Knots are nondecreasing; partition_point finds the first knot
        // strictly beyond v, whose predecessor starts the containing span.
        let upper = self.knots.partition_point(|&t| t <= v);
        (upper - 1).clamp(self.degree, self.count - 1)
    }

    /// The triangle of nonzero basis values at `v` in `span`: `rows[j][r]`
    /// holds the degree-`j` function `N_{span-j+r, j}(v)`.
    fn local_triangle(&self, span: usize, v: f64) -> Vec<Vec<f64>> {
        let t = &self.knots;
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(self.degree + 1);
        rows.push(vec![1.0]);
        for j in 1..=self.degree {
            let prev = &rows[j - 1];
            let mut cur = vec![0.0; j + 1];
            for (r, slot) in cur.iter_mut().enumerate() {
                let i = span - j + r;
                let left = if r > 0 { prev[r - 1] } else { 0.0 };
                let right = if r < j { prev[r] } else { 0.0 };
                let mut acc = 0.0;
                if t[i + j] > t[i] {
                    acc += (v - t[i]) / (t[i + j] - t[i]) * left;
                }
                if t[i + j + 1] > t[i + 1] {
                    acc += (t[i + j + 1] - v) / (t[i + j + 1] - t[i + 1]) * right;
                }
                *slot = acc;
            }
            rows.push(cur);
        }
        rows
    }

    /// Looks up `N_{i, deg}(v)` in the triangle, zero outside the local range.
    fn triangle_value(&self, span: usize, rows: &[Vec<f64>], i: usize, deg: usize) -> f64 {
        let first = span - deg;
        if i < first || i > span {
            0.0
        } else {
            rows[deg][i - first]
        }
    }

    /// First derivative of `N_{i, degree}` via the knot-difference formula.
    fn first_deriv_at(&self, span: usize, rows: &[Vec<f64>], i: usize) -> f64 {
        let q = self.degree;
        let t = &self.knots;
        let mut acc = 0.0;
        if t[i + q] > t[i] {
            acc += self.triangle_value(span, rows, i, q - 1) / (t[i + q] - t[i]);
        }
        if t[i + q + 1] > t[i + 1] {
            acc -= self.triangle_value(span, rows, i + 1, q - 1) / (t[i + q + 1] - t[i + 1]);
        }
        q as f64 * acc
    }

    /// First derivative of the degree-`degree - 1` function `N_{i, degree-1}`.
    fn lower_first_deriv_at(&self, span: usize, rows: &[Vec<f64>], i: usize) -> f64 {
        let q = self.degree - 1;
        let t = &self.knots;
        let mut acc = 0.0;
        if t[i + q] > t[i] {
            acc += self.triangle_value(span, rows, i, q - 1) / (t[i + q] - t[i]);
        }
        if t[i + q + 1] > t[i + 1] {
            acc -= self.triangle_value(span, rows, i + 1, q - 1) / (t[i + q + 1] - t[i + 1]);
        }
        q as f64 * acc
    }

    /// Second derivative of `N_{i, degree}`: the knot-difference formula
    /// applied to the first derivatives one degree down.
    fn second_deriv_at(&self, span: usize, rows: &[Vec<f64>], i: usize) -> f64 {
        let q = self.degree;
        let t = &self.knots;
        let mut acc = 0.0;
        if t[i + q] > t[i] {
            acc += self.lower_first_deriv_at(span, rows, i) / (t[i + q] - t[i]);
        }
        if t[i + q + 1] > t[i + 1] {
            acc -= self.lower_first_deriv_at(span, rows, i + 1) / (t[i + q + 1] - t[i + 1]);
        }
        q as f64 * acc
    }

    /// Scans a dense grid over every knot span and returns inflated maxima of
    /// all three derivative orders.
    fn certify_bounds(&self) -> SupBounds {
        let mut maxima = [0.0f64; 3];
        let spans = self.count - self.degree;
        let mut scratch = vec![0.0; self.count];
        for s in 0..spans {
            let a = self.knots[self.degree + s];
            let b = self.knots[self.degree + s + 1];
            for g in 0..=BOUND_GRID {
                let v = a + (b - a) * g as f64 / BOUND_GRID as f64;
                for (order, m) in maxima.iter_mut().enumerate() {
                    self.eval_basis_into(v, order, &mut scratch);
                    for &x in &scratch {
                        *m = m.max(x.abs());
                    }
                }
            }
        }
        SupBounds {
            value: maxima[0] * (1.0 + BOUND_SAFETY),
            first: maxima[1] * (1.0 + BOUND_SAFETY),
            second: maxima[2] * (1.0 + BOUND_SAFETY),
        }
    }
}
