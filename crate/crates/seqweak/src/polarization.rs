//! Polarization qubit states, projectors, waveplate Jones matrices, and the
//! (nested) anti-commutator algebra of observables.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * Jones matrices act on amplitudes `(amp_H, amp_V)`.
//! * `rotation(φ) = [[cos φ, −sin φ], [sin φ, cos φ]]`.
//! * `HWP(φ) = rotation(φ)·diag(1, −1)·rotation(−φ)`,
//!   `QWP(φ) = rotation(φ)·diag(1, i)·rotation(−φ)`.
//! * Global phases carry no meaning; comparisons ignore them.
//! * All angles cross API boundaries in degrees and are converted to
//!   radians exactly once, here.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mat::{cre, czero, hermiticity_deviation, max_abs_diff, outer, rotation, Mat2, Vec2};

/// Normalization tolerance for pure states.
pub const NORM_TOL: f64 = 1e-12;
/// Hermiticity tolerance for observables and density matrices.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Idempotency tolerance for projectors.
pub const PROJECTOR_TOL: f64 = 1e-10;
/// Density-matrix eigenvalues may undershoot zero by this much.
pub const POSITIVITY_TOL: f64 = 1e-12;

fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}

/// A pure polarization state `amp_H |H⟩ + amp_V |V⟩`, normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationState {
    amp_h: Complex64,
    amp_v: Complex64,
}

impl PolarizationState {
    /// Builds a state from amplitudes, requiring `|amp_H|² + |amp_V|² = 1`
    /// within [`NORM_TOL`].
    pub fn new(amp_h: Complex64, amp_v: Complex64) -> Result<Self> {
        let norm_sq = amp_h.norm_sqr() + amp_v.norm_sqr();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized {
                norm_sq,
                tol: NORM_TOL,
            });
        }
        Ok(Self { amp_h, amp_v })
    }

    /// Linear polarization at `angle_deg` from horizontal:
    /// `cos(angle)|H⟩ + sin(angle)|V⟩`.
    pub fn linear(angle_deg: f64) -> Self {
        let (s, c) = deg_to_rad(angle_deg).sin_cos();
        Self {
            amp_h: cre(c),
            amp_v: cre(s),
        }
    }

    pub fn horizontal() -> Self {
        Self::linear(0.0)
    }

    pub fn vertical() -> Self {
        Self::linear(90.0)
    }

    /// Diagonal |D⟩ = (|H⟩ + |V⟩)/√2.
    pub fn diagonal() -> Self {
        Self::linear(45.0)
    }

    pub fn amp_h(&self) -> Complex64 {
        self.amp_h
    }

    pub fn amp_v(&self) -> Complex64 {
        self.amp_v
    }

    pub fn ket(&self) -> Vec2 {
        Vec2::new(self.amp_h, self.amp_v)
    }

    /// |ψ⟩⟨ψ| as a density matrix.
    pub fn density(&self) -> DensityMatrix {
        let k = self.ket();
        DensityMatrix {
            entries: outer(&k, &k),
        }
    }
}

/// State behind a half-wave plate at `theta_hwp_deg`:
/// `cos(2θ)|H⟩ + sin(2θ)|V⟩`.
pub fn prepare_theta(theta_hwp_deg: f64) -> PolarizationState {
    PolarizationState::linear(2.0 * theta_hwp_deg)
}

/// Incoherent H/V mixture `sin²θ |H⟩⟨H| + cos²θ |V⟩⟨V|`.
pub fn prepare_mixed(theta_deg: f64) -> DensityMatrix {
    let (s, c) = deg_to_rad(theta_deg).sin_cos();
    DensityMatrix {
        entries: Mat2::new(cre(s * s), czero(), czero(), cre(c * c)),
    }
}

/// A 2×2 Hermitian, trace-1, positive-semidefinite matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    entries: Mat2,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(entries: Mat2) -> Result<Self> {
        let herm = hermiticity_deviation(&entries);
        if herm > HERMITICITY_TOL {
            return Err(Error::NotHermitian { max_dev: herm });
        }
        let trace = (entries[(0, 0)] + entries[(1, 1)]).re;
        if (trace - 1.0).abs() > HERMITICITY_TOL {
            return Err(Error::TraceNotOne {
                trace,
                tol: HERMITICITY_TOL,
            });
        }
        let (_, lo) = crate::mat::hermitian_eigenvalues(&entries);
        if lo < -POSITIVITY_TOL {
            return Err(Error::NotPositive {
                eigenvalue: lo,
                tol: POSITIVITY_TOL,
            });
        }
        Ok(Self { entries })
    }

    pub fn matrix(&self) -> Mat2 {
        self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[(row, col)]
    }

    /// Spectral decomposition into at most two weighted pure states.
    /// Branches with weight below 1e-14 are dropped.
    pub fn eigen_branches(&self) -> Vec<(f64, PolarizationState)> {
        let m = &self.entries;
        let b = m[(0, 1)];
        let (hi, lo) = crate::mat::hermitian_eigenvalues(m);
        let pairs: [(f64, Vec2); 2] = if b.norm() < 1e-15 {
            // Already diagonal; eigenvectors are the basis kets.
            let wh = m[(0, 0)].re;
            let wv = m[(1, 1)].re;
            [
                (wh, Vec2::new(cre(1.0), czero())),
                (wv, Vec2::new(czero(), cre(1.0))),
            ]
        } else {
            let mk = |lambda: f64| {
                let v = Vec2::new(b, cre(lambda) - m[(0, 0)]);
                v / cre(v.norm())
            };
            [(hi, mk(hi)), (lo, mk(lo))]
        };
        pairs
            .into_iter()
            .filter(|(w, _)| *w > 1e-14)
            .map(|(w, v)| {
                (
                    w,
                    PolarizationState {
                        amp_h: v[0],
                        amp_v: v[1],
                    },
                )
            })
            .collect()
    }
}

/// A Hermitian 2×2 observable; `is_projector` marks verified idempotency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observable {
    entries: Mat2,
    is_projector: bool,
}

impl Observable {
    /// A general Hermitian observable.
    pub fn hermitian(entries: Mat2) -> Result<Self> {
        let dev = hermiticity_deviation(&entries);
        if dev > HERMITICITY_TOL {
            return Err(Error::NotHermitian { max_dev: dev });
        }
        Ok(Self {
            entries,
            is_projector: false,
        })
    }

    /// A Hermitian projector: additionally requires `A² = A` within
    /// [`PROJECTOR_TOL`].
    pub fn projector(entries: Mat2) -> Result<Self> {
        let obs = Self::hermitian(entries)?;
        let dev = max_abs_diff(&(entries * entries), &entries);
        if dev > PROJECTOR_TOL {
            return Err(Error::NotIdempotent { max_dev: dev });
        }
        Ok(Self {
            is_projector: true,
            ..obs
        })
    }

    pub fn identity() -> Self {
        Self {
            entries: Mat2::identity(),
            is_projector: true,
        }
    }

    pub fn matrix(&self) -> Mat2 {
        self.entries
    }

    pub fn is_projector(&self) -> bool {
        self.is_projector
    }
}

/// Projector |φ⟩⟨φ| onto linear polarization at `phi_deg`.
pub fn projector_at(phi_deg: f64) -> Observable {
    let k = PolarizationState::linear(phi_deg).ket();
    Observable {
        entries: outer(&k, &k),
        is_projector: true,
    }
}

/// π_H = |H⟩⟨H|.
pub fn pi_h() -> Observable {
    projector_at(0.0)
}

/// π_D = |D⟩⟨D|.
pub fn pi_d() -> Observable {
    projector_at(45.0)
}

/// π_V = |V⟩⟨V|.
pub fn pi_v() -> Observable {
    projector_at(90.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveplateKind {
    HalfWave,
    QuarterWave,
}

/// An ideal waveplate with its fast axis at `fast_axis_deg` from horizontal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveplateElement {
    pub kind: WaveplateKind,
    pub fast_axis_deg: f64,
}

impl WaveplateElement {
    pub fn half_wave(fast_axis_deg: f64) -> Self {
        Self {
            kind: WaveplateKind::HalfWave,
            fast_axis_deg,
        }
    }

    pub fn quarter_wave(fast_axis_deg: f64) -> Self {
        Self {
            kind: WaveplateKind::QuarterWave,
            fast_axis_deg,
        }
    }
}

/// Jones matrix of the waveplate: `rotation(φ)·diag(1, r)·rotation(−φ)`
/// with retardance `r = −1` (half-wave) or `r = i` (quarter-wave).
pub fn waveplate_jones(element: &WaveplateElement) -> Mat2 {
    let retardance = match element.kind {
        WaveplateKind::HalfWave => cre(-1.0),
        WaveplateKind::QuarterWave => Complex64::new(0.0, 1.0),
    };
    let phi = deg_to_rad(element.fast_axis_deg);
    let diag = Mat2::new(cre(1.0), czero(), czero(), retardance);
    rotation(phi) * diag * rotation(-phi)
}

/// Output of a spinning half-wave plate between quarter-wave plates,
/// averaged over `samples` evenly spaced plate angles φ = k·180°/samples.
///
/// The beam traverses QWP(90°), then HWP(φ), then QWP(45°); the returned
/// matrix is the average of the output projectors. The trailing 45° plate
/// maps the surviving circular coherence onto the H/V populations, so the
/// average is diagonal in the H/V basis in the many-sample limit.
pub fn depolarizer_average(input: &PolarizationState, samples: usize) -> Result<DensityMatrix> {
    if samples < 2 {
        return Err(Error::TooFewSamples { samples });
    }
    let qwp_in = waveplate_jones(&WaveplateElement::quarter_wave(90.0));
    let qwp_out = waveplate_jones(&WaveplateElement::quarter_wave(45.0));
    let entering = qwp_in * input.ket();
    let mut acc = Mat2::zeros();
    for k in 0..samples {
        let phi = 180.0 * k as f64 / samples as f64;
        let hwp = waveplate_jones(&WaveplateElement::half_wave(phi));
        let out = qwp_out * hwp * entering;
        acc += outer(&out, &out);
    }
    DensityMatrix::new(acc / cre(samples as f64))
}

/// Anti-commutator {A, B} = AB + BA.
pub fn anticommutator(a: &Observable, b: &Observable) -> Mat2 {
    let (a, b) = (a.matrix(), b.matrix());
    a * b + b * a
}

/// The nested bracket `{{…{A_N, A_{N−1}}, …}, A_1}` for a measurement
/// sequence listed first-measured first: the innermost pair holds the two
/// observables measured last, and earlier observables wrap around it.
pub fn nested_anticommutator(observables: &[Observable]) -> Result<Mat2> {
    if observables.len() < 2 {
        return Err(Error::SequenceTooShort {
            len: observables.len(),
            required: 2,
        });
    }
    let mut acc = observables[observables.len() - 1].matrix();
    for obs in observables[..observables.len() - 1].iter().rev() {
        let m = obs.matrix();
        acc = acc * m + m * acc;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn mat(entries: [[f64; 2]; 2]) -> Mat2 {
        Mat2::new(
            cre(entries[0][0]),
            cre(entries[0][1]),
            cre(entries[1][0]),
            cre(entries[1][1]),
        )
    }

    /// True when a = e^{iφ}·b for some phase φ.
    fn equal_up_to_phase(a: &Mat2, b: &Mat2) -> bool {
        let (idx, pivot) = b
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.norm().total_cmp(&y.norm()))
            .unwrap();
        let a_pivot = a.iter().nth(idx).copied().unwrap();
        if pivot.norm() < 1e-14 {
            return max_abs_diff(a, b) < 1e-12;
        }
        let phase = a_pivot / pivot;
        if (phase.norm() - 1.0).abs() > 1e-12 {
            return false;
        }
        max_abs_diff(a, &(b * phase)) < 1e-12
    }

    #[test]
    fn prepare_theta_reference_angles() {
        let s = prepare_theta(0.0);
        assert_relative_eq!(s.amp_h().re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.amp_v().re, 0.0, epsilon = 1e-15);

        let s = prepare_theta(45.0);
        assert!(s.amp_h().norm() < 1e-15);
        assert_relative_eq!(s.amp_v().re, 1.0, epsilon = 1e-15);

        let s = prepare_theta(22.5);
        assert_relative_eq!(s.amp_h().re, SQRT_HALF, epsilon = 1e-15);
        assert_relative_eq!(s.amp_v().re, SQRT_HALF, epsilon = 1e-15);
    }

    #[test]
    fn prepare_mixed_reference_angles() {
        assert!(max_abs_diff(&prepare_mixed(0.0).matrix(), &mat([[0.0, 0.0], [0.0, 1.0]])) < 1e-15);
        assert!(
            max_abs_diff(
                &prepare_mixed(90.0).matrix(),
                &mat([[1.0, 0.0], [0.0, 0.0]])
            ) < 1e-15
        );
        assert!(
            max_abs_diff(
                &prepare_mixed(45.0).matrix(),
                &mat([[0.5, 0.0], [0.0, 0.5]])
            ) < 1e-15
        );
    }

    #[test]
    fn projector_reference_angles() {
        assert!(max_abs_diff(&projector_at(0.0).matrix(), &mat([[1.0, 0.0], [0.0, 0.0]])) < 1e-15);
        assert!(max_abs_diff(&projector_at(45.0).matrix(), &mat([[0.5, 0.5], [0.5, 0.5]])) < 1e-15);
        assert!(max_abs_diff(&projector_at(90.0).matrix(), &mat([[0.0, 0.0], [0.0, 1.0]])) < 1e-12);
    }

    #[test]
    fn non_normalized_state_rejected() {
        assert!(PolarizationState::new(cre(1.0), cre(0.5)).is_err());
    }

    #[test]
    fn waveplates_match_jones_calculus() {
        let hwp0 = waveplate_jones(&WaveplateElement::half_wave(0.0));
        assert!(equal_up_to_phase(&hwp0, &mat([[1.0, 0.0], [0.0, -1.0]])));

        let qwp0 = waveplate_jones(&WaveplateElement::quarter_wave(0.0));
        let expected = Mat2::new(cre(1.0), czero(), czero(), Complex64::new(0.0, 1.0));
        assert!(equal_up_to_phase(&qwp0, &expected));

        // HWP at 22.5° reflects |H⟩ into |D⟩.
        let hwp = waveplate_jones(&WaveplateElement::half_wave(22.5));
        let out = hwp * PolarizationState::horizontal().ket();
        let d = PolarizationState::diagonal().ket();
        assert!((out - d).norm() < 1e-12 || (out + d).norm() < 1e-12);
    }

    #[test]
    fn depolarizer_off_diagonal_vanishes() {
        for angle in [0.0, 10.0, 22.5, 30.0, 45.0, 77.0] {
            let rho = depolarizer_average(&prepare_theta(angle), 10_000).unwrap();
            assert!(
                rho.entry(0, 1).norm() < 1e-3,
                "off-diagonal {} at θ = {angle}",
                rho.entry(0, 1).norm()
            );
        }
    }

    #[test]
    fn depolarizer_diagonal_closed_form() {
        // Bloch-algebra oracle for the implemented plate chain: the spinning
        // plate erases everything except one circular coherence, and the
        // trailing 45° plate rotates it onto the population axis, leaving
        // diag((1 + sin 4θ)/2, (1 − sin 4θ)/2) for the input cos2θ|H⟩+sin2θ|V⟩.
        let mut max_gap_from_hv_formula: f64 = 0.0;
        for angle in [0.0, 5.0, 22.5, 40.0, 45.0, 60.0, 90.0, 133.0] {
            let rho = depolarizer_average(&prepare_theta(angle), 10_000).unwrap();
            let s4 = (4.0 * angle.to_radians()).sin();
            assert_relative_eq!(rho.entry(0, 0).re, 0.5 * (1.0 + s4), epsilon = 1e-12);
            assert_relative_eq!(rho.entry(1, 1).re, 0.5 * (1.0 - s4), epsilon = 1e-12);

            // The sin²θ/cos²θ population formula quoted for this kind of
            // scrambler does not describe this chain; record how far off it is.
            let s = angle.to_radians().sin();
            let gap = (rho.entry(0, 0).re - s * s).abs();
            max_gap_from_hv_formula = max_gap_from_hv_formula.max(gap);
        }
        println!("depolarizer diagonal vs sin²θ/cos²θ population formula: max gap = {max_gap_from_hv_formula:.6}");
        assert!(max_gap_from_hv_formula > 0.4);
    }

    #[test]
    fn depolarizer_two_samples_trace_one() {
        // Convex combination of unit-trace projectors at φ ∈ {0°, 90°}.
        let rho = depolarizer_average(&prepare_theta(17.0), 2).unwrap();
        let trace = (rho.entry(0, 0) + rho.entry(1, 1)).re;
        assert!((trace - 1.0).abs() < 1e-14);
    }

    #[test]
    fn depolarizer_rejects_single_sample() {
        assert!(matches!(
            depolarizer_average(&PolarizationState::horizontal(), 1),
            Err(Error::TooFewSamples { samples: 1 })
        ));
    }

    #[test]
    fn anticommutator_reference_values() {
        let zero = Observable::hermitian(Mat2::zeros()).unwrap();
        assert!(max_abs_diff(&anticommutator(&pi_h(), &zero), &Mat2::zeros()) < 1e-15);

        let b = projector_at(33.0);
        assert!(
            max_abs_diff(
                &anticommutator(&Observable::identity(), &b),
                &(b.matrix() * cre(2.0))
            ) < 1e-15
        );

        // Dense matrix-multiply oracle: {π_H, π_D} = π_Hπ_D + π_Dπ_H.
        assert!(
            max_abs_diff(
                &anticommutator(&pi_h(), &pi_d()),
                &mat([[1.0, 0.5], [0.5, 0.0]])
            ) < 1e-15
        );
    }

    #[test]
    fn nested_anticommutator_reference_values() {
        let plain = nested_anticommutator(&[pi_h(), pi_d()]).unwrap();
        assert!(max_abs_diff(&plain, &anticommutator(&pi_h(), &pi_d())) < 1e-15);

        let hdh = nested_anticommutator(&[pi_h(), pi_d(), pi_h()]).unwrap();
        assert!(max_abs_diff(&hdh, &mat([[2.0, 0.5], [0.5, 0.0]])) < 1e-14);

        let dhh = nested_anticommutator(&[pi_d(), pi_h(), pi_h()]).unwrap();
        assert!(max_abs_diff(&dhh, &mat([[2.0, 1.0], [1.0, 0.0]])) < 1e-14);

        // Only the innermost pair is protected: swapping the first two
        // observables changes the bracket by [[0, −½], [−½, 0]].
        assert!(max_abs_diff(&(hdh - dhh), &mat([[0.0, -0.5], [-0.5, 0.0]])) < 1e-14);
    }

    #[test]
    fn nested_anticommutator_rejects_short_sequences() {
        assert!(matches!(
            nested_anticommutator(&[pi_h()]),
            Err(Error::SequenceTooShort { len: 1, .. })
        ));
        assert!(nested_anticommutator(&[]).is_err());
    }

    #[test]
    fn eigen_branches_of_maximally_mixed() {
        let branches = prepare_mixed(45.0).eigen_branches();
        assert_eq!(branches.len(), 2);
        for (w, _) in &branches {
            assert_relative_eq!(*w, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn eigen_branches_reconstruct_matrix() {
        let rho = depolarizer_average(&prepare_theta(13.0), 100).unwrap();
        let rebuilt = rho
            .eigen_branches()
            .into_iter()
            .map(|(w, s)| s.density().matrix() * cre(w))
            .fold(Mat2::zeros(), |acc, m| acc + m);
        assert!(max_abs_diff(&rebuilt, &rho.matrix()) < 1e-12);
    }

    fn arb_hermitian() -> impl Strategy<Value = Observable> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, d, re, im)| {
            let b = Complex64::new(re, im);
            Observable::hermitian(Mat2::new(cre(a), b, b.conj(), cre(d))).unwrap()
        })
    }

    proptest! {
        #[test]
        fn projectors_idempotent_and_hermitian(phi in -360.0f64..360.0) {
            let p = projector_at(phi).matrix();
            prop_assert!(max_abs_diff(&(p * p), &p) < 1e-10);
            prop_assert!(hermiticity_deviation(&p) < 1e-12);
        }

        #[test]
        fn waveplates_unitary(phi in -360.0f64..360.0, half in proptest::bool::ANY) {
            let element = if half {
                WaveplateElement::half_wave(phi)
            } else {
                WaveplateElement::quarter_wave(phi)
            };
            let j = waveplate_jones(&element);
            prop_assert!(max_abs_diff(&(j.adjoint() * j), &Mat2::identity()) < 1e-12);
        }

        #[test]
        fn nested_bracket_hermitian_and_inner_swap_invariant(
            obs in proptest::collection::vec(arb_hermitian(), 2..=5)
        ) {
            let bracket = nested_anticommutator(&obs).unwrap();
            prop_assert!(hermiticity_deviation(&bracket) < 1e-12);

            let mut swapped = obs.clone();
            let n = swapped.len();
            swapped.swap(n - 1, n - 2);
            let bracket_swapped = nested_anticommutator(&swapped).unwrap();
            prop_assert!(max_abs_diff(&bracket, &bracket_swapped) < 1e-12);
        }

        #[test]
        fn depolarizer_physical_for_any_sample_count(
            angle in -180.0f64..180.0,
            samples in 2usize..64
        ) {
            let rho = depolarizer_average(&prepare_theta(angle), samples).unwrap();
            let trace = (rho.entry(0, 0) + rho.entry(1, 1)).re;
            prop_assert!((trace - 1.0).abs() < 1e-12);
            let (hi, lo) = crate::mat::hermitian_eigenvalues(&rho.matrix());
            prop_assert!(lo >= -1e-9);
            prop_assert!(hi <= 1.0 + 1e-9);
        }
    }
}
