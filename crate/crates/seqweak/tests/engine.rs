//! Cross-checks of the grid engine against analytic routes that share no
//! code with it: the exact pair correlator, a locally implemented
//! finite-strength eigenbasis sum for three-measurement sequences, and the
//! weak-limit trace formulas.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use seqweak::pointer::PointerGrid;
use seqweak::polarization::{
    pi_d, pi_h, prepare_theta, DensityMatrix, Observable, PolarizationState,
};
use seqweak::vonneumann::{
    run_sequence, LabState, MeasurementStep, Normalization, PointerAxis, SequencePlan, SystemInput,
};
use seqweak::weaklimit::{
    exact_pair_correlator, overlap_suppression, weak_correlator, WeakCorrelatorSpec,
};

type Mat2 = Matrix2<Complex64>;
type Vec2 = Vector2<Complex64>;

const SIGMA: f64 = 600.0;
const DELTA: f64 = 160.0;

fn cre(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn grids() -> (PointerGrid, PointerGrid) {
    let g = PointerGrid::centered(20.0, 512).unwrap();
    (g, g)
}

fn pair_plan(first: Observable, second: Observable, delta: f64) -> SequencePlan {
    SequencePlan::new(
        vec![
            MeasurementStep::new(first, PointerAxis::X, delta).unwrap(),
            MeasurementStep::new(second, PointerAxis::Y, delta).unwrap(),
        ],
        None,
        (1, 1),
        Normalization::Unnormalized,
    )
    .unwrap()
}

fn triple_plan(first: Observable, second: Observable, delta: f64) -> SequencePlan {
    SequencePlan::new(
        vec![
            MeasurementStep::new(first, PointerAxis::X, delta).unwrap(),
            MeasurementStep::new(second, PointerAxis::Y, delta).unwrap(),
        ],
        Some(pi_h()),
        (1, 1),
        Normalization::Unnormalized,
    )
    .unwrap()
}

/// Eigenvalue-1 and eigenvalue-0 eigenvectors of a rank-1 projector.
fn projector_basis(p: &Mat2) -> (Vec2, Vec2) {
    let col0 = Vec2::new(p[(0, 0)], p[(1, 0)]);
    let col1 = Vec2::new(p[(0, 1)], p[(1, 1)]);
    let u = if col0.norm() >= col1.norm() {
        col0
    } else {
        col1
    };
    let u = u / cre(u.norm());
    let perp = Vec2::new(-u[1].conj(), u[0].conj());
    (u, perp)
}

/// Finite-strength value of ⟨Π x y⟩/δ² for couplings to rank-1 projectors
/// a1 (x axis, first) and a2 (y axis, second) followed by a strong
/// projection: the double eigenbasis sum with Gaussian overlap factors
/// G^(a−a′)²·G^(b−b′)², written directly from the pointer overlap integrals.
fn triple_oracle(rho: &Mat2, a1: &Mat2, a2: &Mat2, strong: &Mat2, delta: f64, sigma: f64) -> f64 {
    let g = (-delta * delta / (8.0 * sigma * sigma)).exp();
    let (u1, v1) = projector_basis(a1);
    let (u2, v2) = projector_basis(a2);
    let first = [(1i32, u1), (0, v1)];
    let second = [(1i32, u2), (0, v2)];
    let mut total = Complex64::new(0.0, 0.0);
    for (a, ka) in &first {
        for (ap, kap) in &first {
            for (b, kb) in &second {
                for (bp, kbp) in &second {
                    let weight = 0.25 * ((a + ap) * (b + bp)) as f64;
                    if weight == 0.0 {
                        continue;
                    }
                    let suppression = g.powi((a - ap).pow(2) + (b - bp).pow(2));
                    let chain = ka.dotc(&(rho * kap))
                        * kap.dotc(kbp)
                        * kbp.dotc(&(strong * kb))
                        * kb.dotc(ka);
                    total += chain * cre(weight * suppression);
                }
            }
        }
    }
    assert!(total.im.abs() < 1e-12, "imaginary residue {}", total.im);
    total.re
}

fn random_state(rng: &mut StdRng) -> PolarizationState {
    let alpha: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let h = cre(alpha.cos());
    let v = Complex64::from_polar(alpha.sin(), phase);
    PolarizationState::new(h, v).unwrap()
}

#[test]
fn pair_runs_match_exact_correlator_over_sweep() {
    let (gx, gy) = grids();
    let mut worst: f64 = 0.0;
    for k in 0..=30 {
        let theta = k as f64 * 6.0;
        let rho = prepare_theta(theta).density();
        let input: SystemInput = prepare_theta(theta).into();
        for (a, b) in [(pi_h(), pi_d()), (pi_d(), pi_h())] {
            let grid_value = run_sequence(&pair_plan(a, b, DELTA), &input, SIGMA, &gx, &gy)
                .unwrap()
                .value;
            let exact = exact_pair_correlator(&rho, &a, &b, DELTA, SIGMA).unwrap();
            worst = worst.max((grid_value - exact).abs());
        }
    }
    assert!(worst < 1e-9, "max |grid − exact| = {worst:.3e}");
}

#[test]
fn pair_runs_match_exact_correlator_at_strong_coupling() {
    // The engine is not perturbative; it must agree with the closed form
    // even when δ approaches σ.
    let (gx, gy) = grids();
    let input: SystemInput = prepare_theta(37.0).into();
    let rho = prepare_theta(37.0).density();
    for delta in [20.0, 300.0, 600.0] {
        let grid_value = run_sequence(&pair_plan(pi_d(), pi_h(), delta), &input, SIGMA, &gx, &gy)
            .unwrap()
            .value;
        let exact = exact_pair_correlator(&rho, &pi_d(), &pi_h(), delta, SIGMA).unwrap();
        assert!(
            (grid_value - exact).abs() < 1e-9,
            "δ = {delta}: {grid_value} vs {exact}"
        );
    }
}

#[test]
fn reference_pair_values_on_horizontal_input() {
    let (gx, gy) = grids();
    let input: SystemInput = PolarizationState::horizontal().into();

    let hd = run_sequence(&pair_plan(pi_h(), pi_d(), DELTA), &input, SIGMA, &gx, &gy).unwrap();
    assert!((hd.value - 0.5).abs() < 1e-6);

    let dh = run_sequence(&pair_plan(pi_d(), pi_h(), DELTA), &input, SIGMA, &gx, &gy).unwrap();
    let g = overlap_suppression(DELTA, SIGMA);
    assert!((dh.value - 0.25 * (1.0 + g)).abs() < 1e-9);
    assert!((dh.value - 0.497788).abs() < 1e-6);
}

#[test]
fn triple_runs_match_eigenbasis_oracle() {
    let (gx, gy) = grids();
    let mut worst: f64 = 0.0;
    for k in 0..18 {
        let theta = k as f64 * 10.0;
        let state = prepare_theta(theta);
        let rho = state.density().matrix();
        let input: SystemInput = state.into();
        for (a, b) in [(pi_h(), pi_d()), (pi_d(), pi_h())] {
            let grid_value = run_sequence(&triple_plan(a, b, DELTA), &input, SIGMA, &gx, &gy)
                .unwrap()
                .value;
            let oracle = triple_oracle(
                &rho,
                &a.matrix(),
                &b.matrix(),
                &pi_h().matrix(),
                DELTA,
                SIGMA,
            );
            worst = worst.max((grid_value - oracle).abs());
        }
    }
    assert!(worst < 1e-9, "max |grid − oracle| = {worst:.3e}");
}

#[test]
fn triple_weak_limit_recovered_at_small_strength() {
    let (gx, gy) = grids();
    // δ/σ = 1/30 on the default grid: δ = 20 µm, a single cell.
    let input: SystemInput = prepare_theta(22.5).into();
    let r = run_sequence(&triple_plan(pi_h(), pi_d(), 20.0), &input, SIGMA, &gx, &gy).unwrap();
    assert!((r.value - 0.375).abs() < 1e-3, "value {}", r.value);
    let r = run_sequence(&triple_plan(pi_d(), pi_h(), 20.0), &input, SIGMA, &gx, &gy).unwrap();
    assert!((r.value - 0.5).abs() < 1e-3, "value {}", r.value);
}

#[test]
fn single_coupling_reads_born_weight_at_any_strength() {
    let (gx, gy) = grids();
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..20 {
        let state = random_state(&mut rng);
        let phi: f64 = rng.gen_range(0.0..180.0);
        let projector = seqweak::polarization::projector_at(phi);
        let expected = (projector.matrix() * state.density().matrix()).trace().re;
        for delta in [20.0, 160.0, 400.0] {
            let plan = SequencePlan::new(
                vec![MeasurementStep::new(projector, PointerAxis::X, delta).unwrap()],
                None,
                (1, 0),
                Normalization::Unnormalized,
            )
            .unwrap();
            let r = run_sequence(&plan, &state.into(), SIGMA, &gx, &gy).unwrap();
            assert!(
                (r.value - expected).abs() < 1e-10,
                "δ = {delta}: {} vs {expected}",
                r.value
            );
        }
    }
}

#[test]
fn total_probability_survives_coupling_sequences() {
    let (gx, gy) = grids();
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..10 {
        let state = random_state(&mut rng);
        let a = seqweak::polarization::projector_at(rng.gen_range(0.0..180.0));
        let b = seqweak::polarization::projector_at(rng.gen_range(0.0..180.0));
        let plan = SequencePlan::new(
            vec![
                MeasurementStep::new(a, PointerAxis::X, DELTA).unwrap(),
                MeasurementStep::new(b, PointerAxis::Y, DELTA).unwrap(),
            ],
            None,
            (0, 0),
            Normalization::Unnormalized,
        )
        .unwrap();
        let r = run_sequence(&plan, &state.into(), SIGMA, &gx, &gy).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10, "probability {}", r.value);
    }
}

#[test]
fn mixture_runs_are_linear_in_the_density_matrix() {
    let (gx, gy) = grids();
    let mut rng = StdRng::seed_from_u64(23);
    for _ in 0..8 {
        let s1 = random_state(&mut rng);
        let s2 = random_state(&mut rng);
        let w: f64 = rng.gen_range(0.05..0.95);
        let mixed = DensityMatrix::new(
            s1.density().matrix() * cre(w) + s2.density().matrix() * cre(1.0 - w),
        )
        .unwrap();

        let plan = triple_plan(pi_h(), pi_d(), DELTA);
        let combined = run_sequence(&plan, &mixed.into(), SIGMA, &gx, &gy)
            .unwrap()
            .value;

        // The engine decomposes into eigenbranches, not into (s1, s2); the
        // match confirms linearity in ρ itself.
        let v1 = run_sequence(&plan, &s1.into(), SIGMA, &gx, &gy)
            .unwrap()
            .value;
        let v2 = run_sequence(&plan, &s2.into(), SIGMA, &gx, &gy)
            .unwrap()
            .value;
        assert!(
            (combined - (w * v1 + (1.0 - w) * v2)).abs() < 1e-12,
            "w = {w}"
        );
    }
}

#[test]
fn pair_order_swap_bounded_by_overlap_deficit() {
    let (gx, gy) = grids();
    let g = overlap_suppression(DELTA, SIGMA);
    let bound = (1.0 - g) * std::f64::consts::SQRT_2 / 4.0 + 1e-9;
    for k in 0..=60 {
        let theta = k as f64 * 3.0;
        let input: SystemInput = prepare_theta(theta).into();
        let hd = run_sequence(&pair_plan(pi_h(), pi_d(), DELTA), &input, SIGMA, &gx, &gy)
            .unwrap()
            .value;
        let dh = run_sequence(&pair_plan(pi_d(), pi_h(), DELTA), &input, SIGMA, &gx, &gy)
            .unwrap()
            .value;
        assert!((hd - dh).abs() <= bound, "θ = {theta}: |{hd} − {dh}|");
    }
}

#[test]
fn conditional_mode_divides_by_postselection_probability() {
    let (gx, gy) = grids();
    let input: SystemInput = prepare_theta(30.0).into();
    let unnorm =
        run_sequence(&triple_plan(pi_h(), pi_d(), DELTA), &input, SIGMA, &gx, &gy).unwrap();
    let conditional_plan = SequencePlan::new(
        vec![
            MeasurementStep::new(pi_h(), PointerAxis::X, DELTA).unwrap(),
            MeasurementStep::new(pi_d(), PointerAxis::Y, DELTA).unwrap(),
        ],
        Some(pi_h()),
        (1, 1),
        Normalization::Conditional,
    )
    .unwrap();
    let cond = run_sequence(&conditional_plan, &input, SIGMA, &gx, &gy).unwrap();
    let prob = unnorm.prob_k.unwrap();
    assert!(prob > 0.0 && prob < 1.0);
    assert_eq!(cond.prob_k, unnorm.prob_k);
    assert!((cond.value - unnorm.value / prob).abs() < 1e-12);
}

#[test]
fn weak_limit_formula_agrees_with_engine_for_mixed_inputs() {
    let (gx, gy) = grids();
    // δ/σ = 1/30 keeps the finite-strength correction below 2e-4.
    for theta in [0.0, 20.0, 45.0, 70.0, 90.0, 120.0] {
        let rho = seqweak::polarization::prepare_mixed(theta);
        let weak = weak_correlator(
            &WeakCorrelatorSpec::new(rho, vec![pi_h(), pi_d(), pi_h()], true).unwrap(),
        )
        .unwrap();
        let grid_value = run_sequence(
            &triple_plan(pi_h(), pi_d(), 20.0),
            &rho.into(),
            SIGMA,
            &gx,
            &gy,
        )
        .unwrap()
        .value;
        assert!(
            (grid_value - weak).abs() < 2e-4,
            "θ = {theta}: {grid_value} vs {weak}"
        );
    }
}

#[test]
fn lab_state_rejects_undersized_grids() {
    let grid = PointerGrid::centered(20.0, 128).unwrap(); // extent 2560 < 8σ
    let err = LabState::new(&PolarizationState::horizontal().into(), &grid, &grid, SIGMA);
    assert!(err.is_err());
}
