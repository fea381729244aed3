//! Small dense-vector helpers shared across the crate.

/// Dot product of two equal-length slices.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance between two equal-length slices.
pub(crate) fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `dest += s * src`, elementwise.
pub(crate) fn add_scaled(dest: &mut [f64], src: &[f64], s: f64) {
    debug_assert_eq!(dest.len(), src.len());
    for (d, x) in dest.iter_mut().zip(src) {
        *d += s * x;
    }
}
