//! 2×2 complex matrix aliases and small helpers shared across modules.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

pub type Mat2 = Matrix2<Complex64>;
pub type Vec2 = Vector2<Complex64>;

pub fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

pub fn cre(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Largest entrywise |a - b|.
pub fn max_abs_diff(a: &Mat2, b: &Mat2) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermiticity_deviation(m: &Mat2) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// |u⟩⟨v| outer product.
pub fn outer(u: &Vec2, v: &Vec2) -> Mat2 {
    Mat2::new(
        u[0] * v[0].conj(),
        u[0] * v[1].conj(),
        u[1] * v[0].conj(),
        u[1] * v[1].conj(),
    )
}

/// Real 2D rotation by `angle_rad`, promoted to complex entries.
pub fn rotation(angle_rad: f64) -> Mat2 {
    let (s, c) = angle_rad.sin_cos();
    Mat2::new(cre(c), cre(-s), cre(s), cre(c))
}

/// Eigenvalues of a Hermitian 2×2 matrix, descending.
pub fn hermitian_eigenvalues(m: &Mat2) -> (f64, f64) {
    let a = m[(0, 0)].re;
    let c = m[(1, 1)].re;
    let half_trace = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + m[(0, 1)].norm_sqr()).sqrt();
    (half_trace + disc, half_trace - disc)
}
