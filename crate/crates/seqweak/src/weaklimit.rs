//! Closed-form correlators: the weak-limit value of a measurement sequence,
//! the exact finite-strength pair correlator for two Gaussian pointers, and
//! the θ-sweep curves used by the scenario runner.
//!
//! For a sequence A₁ … A_N (first measured first, each coupled to its own
//! pointer) the weak-limit joint readout ⟨x₁…x_N⟩/δᴺ equals
//!
//! ```text
//!   Tr[ρ · {{…{A_N, A_{N−1}}, …}, A₁}] / 2^(N−1)
//! ```
//!
//! the nested anti-commutator with the first-measured observable outermost.
//! The same expression covers a strong final projector: the projector enters
//! the derivation linearly, so no weak-strength assumption is needed for it.
//! Only the innermost bracket is symmetric, hence only the last two
//! measurements can be exchanged freely.

use crate::error::{Error, Result};
use crate::mat::Mat2;
use crate::polarization::{nested_anticommutator, DensityMatrix, Observable};

/// Tolerance on the imaginary residue of correlator traces.
pub const IMAG_TOL: f64 = 1e-12;

/// A measurement sequence for the weak-limit correlator: observables are
/// listed first-measured first; `strong_last` marks the final entry as a
/// projective measurement (the value is unchanged, the flag documents the
/// sequence and lets validation insist on a projector).
#[derive(Debug, Clone)]
pub struct WeakCorrelatorSpec {
    pub rho: DensityMatrix,
    pub observables: Vec<Observable>,
    pub strong_last: bool,
}

impl WeakCorrelatorSpec {
    pub fn new(
        rho: DensityMatrix,
        observables: Vec<Observable>,
        strong_last: bool,
    ) -> Result<Self> {
        if observables.len() < 2 {
            return Err(Error::SequenceTooShort {
                len: observables.len(),
                required: 2,
            });
        }
        if strong_last && !observables.last().unwrap().is_projector() {
            return Err(Error::NotAProjector);
        }
        Ok(Self {
            rho,
            observables,
            strong_last,
        })
    }
}

/// Weak-limit joint readout `Tr[ρ·nested bracket]/2^(N−1)`.
pub fn weak_correlator(spec: &WeakCorrelatorSpec) -> Result<f64> {
    let bracket = nested_anticommutator(&spec.observables)?;
    let scale = 0.5f64.powi(spec.observables.len() as i32 - 1);
    real_trace_product(&spec.rho.matrix(), &bracket).map(|t| t * scale)
}

/// Gaussian pointer overlap `G = exp(−δ²/8σ²)`: the suppression factor a
/// coupling of shift δ applies to system coherences across its eigenspaces.
pub fn overlap_suppression(delta_um: f64, sigma_um: f64) -> f64 {
    (-delta_um * delta_um / (8.0 * sigma_um * sigma_um)).exp()
}

/// Exact two-pointer correlator ⟨xy⟩/δ² at finite strength: the first
/// coupling measures rank-1 projector `first`, the second measures `second`.
/// In operator form,
///
/// ```text
///   value = (1 − G)·Tr[P A₂ P ρ] + (G/2)·Tr[{P, A₂} ρ],   G = e^(−δ²/8σ²)
/// ```
///
/// which reduces to the weak-limit pair value as G → 1.
pub fn exact_pair_correlator(
    rho: &DensityMatrix,
    first: &Observable,
    second: &Observable,
    delta_um: f64,
    sigma_um: f64,
) -> Result<f64> {
    if sigma_um.is_nan() || sigma_um <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "pointer width must be positive, got {sigma_um}"
        )));
    }
    if !first.is_projector() {
        return Err(Error::NotAProjector);
    }
    let p = first.matrix();
    let trace_p = (p[(0, 0)] + p[(1, 1)]).re;
    if (trace_p - 1.0).abs() > 1e-10 {
        return Err(Error::NotAProjector);
    }
    let g = overlap_suppression(delta_um, sigma_um);
    let a2 = second.matrix();
    let r = rho.matrix();
    let sharp = real_trace_product(&(p * a2 * p), &r)?;
    let antic = real_trace_product(&(p * a2 + a2 * p), &r)?;
    Ok((1.0 - g) * sharp + 0.5 * g * antic)
}

/// Which three-measurement ordering to evaluate; the strong π_H projection
/// always comes last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreeOrdering {
    /// π_H first, π_D second, strong Π_H last.
    HThenDThenStrongH,
    /// π_D first, π_H second, strong Π_H last.
    DThenHThenStrongH,
}

/// Weak-limit pair curve ½·cos2θ·(cos2θ + sin2θ) for the π_H/π_D pair on
/// the pure input cos2θ|H⟩ + sin2θ|V⟩; identical for both orderings.
pub fn curve_two(theta_hwp_deg: f64) -> f64 {
    let (s, c) = (2.0 * theta_hwp_deg.to_radians()).sin_cos();
    0.5 * c * (c + s)
}

/// Weak-limit three-measurement curves on the pure input
/// cos2θ|H⟩ + sin2θ|V⟩.
pub fn curve_three(order: ThreeOrdering, theta_hwp_deg: f64) -> f64 {
    let (s, c) = (2.0 * theta_hwp_deg.to_radians()).sin_cos();
    match order {
        ThreeOrdering::HThenDThenStrongH => 0.25 * (2.0 * c * c + c * s),
        ThreeOrdering::DThenHThenStrongH => 0.5 * c * (c + s),
    }
}

/// Ordering difference of [`curve_three`]: H-first minus D-first,
/// −⅛·sin4θ.
pub fn curve_three_difference(theta_hwp_deg: f64) -> f64 {
    -0.125 * (4.0 * theta_hwp_deg.to_radians()).sin()
}

/// Weak-limit three-measurement value for the incoherent mixture
/// sin²θ|H⟩⟨H| + cos²θ|V⟩⟨V|: sin²θ/2 for either ordering.
pub fn curve_three_mixed(theta_deg: f64) -> f64 {
    let s = theta_deg.to_radians().sin();
    0.5 * s * s
}

fn real_trace_product(a: &Mat2, b: &Mat2) -> Result<f64> {
    let t = (a * b).trace();
    if t.im.abs() > IMAG_TOL {
        return Err(Error::NonNegligibleImaginary { imag: t.im });
    }
    Ok(t.re)
}
