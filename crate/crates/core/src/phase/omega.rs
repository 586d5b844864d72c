//! The constant symplectic form on the triple space.

use nalgebra::DMatrix;

use super::PhaseError;

/// A tangent vector `(u, w)` to the triple space: `u` along the metric
/// coordinate, `w` along the flux coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleTangent {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

/// `Σ_e weight_e (u1_e w2_e − u2_e w1_e)`.
pub fn symplectic_omega(t1: &TripleTangent, t2: &TripleTangent, weights: &[f64]) -> Result<f64, PhaseError> {
    let n = weights.len();
    for v in [&t1.u, &t1.w, &t2.u, &t2.w] {
        if v.len() != n {
            return Err(PhaseError::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    Ok((0..n).map(|e| weights[e] * (t1.u[e] * t2.w[e] - t2.u[e] * t1.w[e])).sum())
}

/// Matrix of the form in the basis `(u_1.., w_1..)`.
pub fn omega_matrix(weights: &[f64]) -> DMatrix<f64> {
    let n = weights.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (e, &w) in weights.iter().enumerate() {
        m[(e, n + e)] = w;
        m[(n + e, e)] = -w;
    }
    m
}

/// Numerical rank from the singular values.
pub fn omega_rank(weights: &[f64]) -> usize {
    let m = omega_matrix(weights);
    let scale = weights.iter().fold(0.0f64, |a, w| a.max(w.abs()));
    m.svd(false, false).rank(1e-12 * scale.max(f64::MIN_POSITIVE))
}
