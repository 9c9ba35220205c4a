//! The sequence engine: a joint system⊗pointer⊗pointer state on two
//! discretized transverse axes, projector couplings realized as conditional
//! grid shifts, optional final strong projection, and joint-moment readout.
//!
//! A coupling of strength δ to projector P splits each branch into the P
//! component, rigidly shifted by δ along the step's axis, and the (1−P)
//! component left in place. Probability shifted off the grid accumulates in
//! a leakage account that is checked against a hard budget — silently
//! truncated tails would corrupt second moments.
//!
//! Mixed inputs are handled as convex combinations of pure branches: every
//! reported quantity is linear in ρ in unnormalized mode, so the engine
//! stays pure-state per branch and the weights do the rest.

use ndarray::{Array2, Array3, Axis as NdAxis, Slice};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::pointer::{gaussian_wavefunction, PointerGrid};
use crate::polarization::{DensityMatrix, Observable, PolarizationState};

/// Hard ceiling on accumulated truncation leakage, unless overridden.
pub const DEFAULT_LEAKAGE_BUDGET: f64 = 1e-9;
/// Conditional readout refuses postselection probabilities below this.
pub const MIN_POSTSELECTION_PROB: f64 = 1e-15;

/// Pointer axis a measurement couples to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointerAxis {
    X,
    Y,
}

impl PointerAxis {
    fn name(self) -> &'static str {
        match self {
            PointerAxis::X => "x",
            PointerAxis::Y => "y",
        }
    }
}

/// One weak measurement: projector, pointer axis, and walk-off shift δ.
#[derive(Debug, Clone)]
pub struct MeasurementStep {
    observable: Observable,
    axis: PointerAxis,
    delta_um: f64,
}

impl MeasurementStep {
    pub fn new(observable: Observable, axis: PointerAxis, delta_um: f64) -> Result<Self> {
        if !observable.is_projector() {
            return Err(Error::NotAProjector);
        }
        Ok(Self {
            observable,
            axis,
            delta_um,
        })
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn axis(&self) -> PointerAxis {
        self.axis
    }

    pub fn delta_um(&self) -> f64 {
        self.delta_um
    }
}

/// How the readout divides the raw moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Divide by δⁿ only: the joint moment over the unnormalized
    /// distribution Prob(x, y[, K]).
    Unnormalized,
    /// Additionally divide by the postselection probability Prob(K).
    Conditional,
}

/// An ordered measurement sequence with optional final strong projection
/// and the readout configuration.
#[derive(Debug, Clone)]
pub struct SequencePlan {
    steps: Vec<MeasurementStep>,
    final_strong: Option<Observable>,
    readout_powers: (u8, u8),
    normalization: Normalization,
}

impl SequencePlan {
    pub fn new(
        steps: Vec<MeasurementStep>,
        final_strong: Option<Observable>,
        readout_powers: (u8, u8),
        normalization: Normalization,
    ) -> Result<Self> {
        let (jx, jy) = readout_powers;
        if jx > 1 || jy > 1 {
            return Err(Error::InvalidPlan(format!(
                "readout powers must be 0 or 1, got ({jx}, {jy})"
            )));
        }
        for axis in [PointerAxis::X, PointerAxis::Y] {
            if steps.iter().filter(|s| s.axis == axis).count() > 1 {
                return Err(Error::InvalidPlan(format!(
                    "axis {} is coupled more than once; only one pointer exists per axis",
                    axis.name()
                )));
            }
        }
        if let Some(k) = &final_strong {
            if !k.is_projector() {
                return Err(Error::NotAProjector);
            }
        }
        if jx + jy > 0 {
            if steps.is_empty() {
                return Err(Error::InvalidPlan(
                    "moment readout requires at least one coupled step".into(),
                ));
            }
            let delta = steps[0].delta_um;
            if steps.iter().any(|s| s.delta_um != delta) {
                return Err(Error::InvalidPlan(
                    "all steps must share one shift δ for a δⁿ-normalized readout".into(),
                ));
            }
        }
        Ok(Self {
            steps,
            final_strong,
            readout_powers,
            normalization,
        })
    }

    pub fn steps(&self) -> &[MeasurementStep] {
        &self.steps
    }

    pub fn final_strong(&self) -> Option<&Observable> {
        self.final_strong.as_ref()
    }

    pub fn readout_powers(&self) -> (u8, u8) {
        self.readout_powers
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// δ used to normalize the readout; 1 for a pure-probability readout.
    pub fn readout_delta_um(&self) -> f64 {
        if self.readout_powers.0 + self.readout_powers.1 == 0 {
            1.0
        } else {
            self.steps[0].delta_um
        }
    }
}

/// The measured system fed into a run: a pure ket or a density matrix.
#[derive(Debug, Clone)]
pub enum SystemInput {
    Pure(PolarizationState),
    Mixed(DensityMatrix),
}

impl From<PolarizationState> for SystemInput {
    fn from(s: PolarizationState) -> Self {
        SystemInput::Pure(s)
    }
}

impl From<DensityMatrix> for SystemInput {
    fn from(r: DensityMatrix) -> Self {
        SystemInput::Mixed(r)
    }
}

#[derive(Debug, Clone)]
struct Branch {
    weight: f64,
    /// Joint amplitudes over {H, V} × x-grid × y-grid.
    amps: Array3<Complex64>,
}

/// Joint state of the polarization system and both pointers, as weighted
/// pure branches.
#[derive(Debug, Clone)]
pub struct LabState {
    branches: Vec<Branch>,
    grid_x: PointerGrid,
    grid_y: PointerGrid,
    leakage: f64,
    leakage_budget: f64,
    coupled: [bool; 2],
    projected: bool,
}

/// Joint readout of a sequence run.
#[derive(Debug, Clone, Copy)]
pub struct CorrelatorResult {
    /// Moment divided by δⁿ (and by Prob(K) in conditional mode).
    pub value: f64,
    /// Raw grid moment Σ xʲˣ yʲʸ Prob in µmⁿ.
    pub raw_moment: f64,
    /// Postselection probability, present when a strong projection ran.
    pub prob_k: Option<f64>,
    /// Accumulated truncation leakage of the run.
    pub leakage: f64,
}

impl LabState {
    /// Product state ρ ⊗ ψ(x) ⊗ ψ(y) with Gaussian pointers of width σ.
    /// Mixed inputs are eigen-decomposed into at most two pure branches.
    pub fn new(
        system: &SystemInput,
        grid_x: &PointerGrid,
        grid_y: &PointerGrid,
        sigma_um: f64,
    ) -> Result<Self> {
        let gx = gaussian_wavefunction(grid_x, sigma_um)?;
        let gy = gaussian_wavefunction(grid_y, sigma_um)?;
        let pure_branches: Vec<(f64, PolarizationState)> = match system {
            SystemInput::Pure(state) => vec![(1.0, *state)],
            SystemInput::Mixed(rho) => rho.eigen_branches(),
        };
        let (nx, ny) = (grid_x.count(), grid_y.count());
        let mut pointer_product = Array2::<Complex64>::zeros((nx, ny));
        for i in 0..nx {
            let xi = gx.samples()[i];
            for j in 0..ny {
                pointer_product[(i, j)] = xi * gy.samples()[j];
            }
        }
        let branches = pure_branches
            .into_iter()
            .map(|(weight, state)| {
                let mut amps = Array3::zeros((2, nx, ny));
                amps.index_axis_mut(NdAxis(0), 0)
                    .assign(&(&pointer_product * state.amp_h()));
                amps.index_axis_mut(NdAxis(0), 1)
                    .assign(&(&pointer_product * state.amp_v()));
                Branch { weight, amps }
            })
            .collect();
        Ok(Self {
            branches,
            grid_x: *grid_x,
            grid_y: *grid_y,
            leakage: 0.0,
            leakage_budget: DEFAULT_LEAKAGE_BUDGET,
            coupled: [false, false],
            projected: false,
        })
    }

    pub fn with_leakage_budget(mut self, budget: f64) -> Self {
        self.leakage_budget = budget;
        self
    }

    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    /// Σ weights · branch-norm²; 1 before projection, Prob(K) after.
    pub fn total_probability(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.weight * b.amps.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Branch amplitudes (system index, x, y) for inspection in tests.
    pub fn branch_amplitudes(&self, index: usize) -> (&Array3<Complex64>, f64) {
        (&self.branches[index].amps, self.branches[index].weight)
    }

    /// Applies one coupling: the projector component shifts by δ along the
    /// step's axis, the complement stays. Each axis can be used once.
    pub fn couple(&mut self, step: &MeasurementStep) -> Result<()> {
        let axis_index = match step.axis {
            PointerAxis::X => 0usize,
            PointerAxis::Y => 1usize,
        };
        if self.coupled[axis_index] {
            return Err(Error::AxisAlreadyCoupled {
                axis: step.axis.name(),
            });
        }
        let grid = match step.axis {
            PointerAxis::X => &self.grid_x,
            PointerAxis::Y => &self.grid_y,
        };
        let ratio = step.delta_um / grid.spacing_um();
        let steps_shift = ratio.round();
        if (ratio - steps_shift).abs() > 1e-9 {
            return Err(Error::NonIntegralShift {
                delta_um: step.delta_um,
                spacing_um: grid.spacing_um(),
            });
        }
        let shift = steps_shift as i64;
        if shift.unsigned_abs() as usize >= grid.count() {
            return Err(Error::ShiftOffSupport {
                steps: shift,
                count: grid.count(),
            });
        }

        let p = step.observable.matrix();
        // The grid axis within the (system, x, y) tensor.
        let tensor_axis = axis_index + 1;
        for branch in &mut self.branches {
            let a0 = branch.amps.index_axis(NdAxis(0), 0).to_owned();
            let a1 = branch.amps.index_axis(NdAxis(0), 1).to_owned();
            let p0 = &a0 * p[(0, 0)] + &a1 * p[(0, 1)];
            let p1 = &a0 * p[(1, 0)] + &a1 * p[(1, 1)];
            let q0 = a0 - &p0;
            let q1 = a1 - &p1;
            let (s0, lost0) = shifted_with_loss(&p0, tensor_axis - 1, shift);
            let (s1, lost1) = shifted_with_loss(&p1, tensor_axis - 1, shift);
            branch.amps.index_axis_mut(NdAxis(0), 0).assign(&(q0 + s0));
            branch.amps.index_axis_mut(NdAxis(0), 1).assign(&(q1 + s1));
            self.leakage += branch.weight * (lost0 + lost1);
        }
        self.coupled[axis_index] = true;
        if self.leakage > self.leakage_budget {
            return Err(Error::LeakageBudgetExceeded {
                leakage: self.leakage,
                budget: self.leakage_budget,
            });
        }
        Ok(())
    }

    /// Projects the system onto K without renormalizing; branch norms now
    /// carry the per-branch postselection probability.
    pub fn strong_project(&mut self, k: &Observable) -> Result<()> {
        if !k.is_projector() {
            return Err(Error::NotAProjector);
        }
        let m = k.matrix();
        for branch in &mut self.branches {
            let a0 = branch.amps.index_axis(NdAxis(0), 0).to_owned();
            let a1 = branch.amps.index_axis(NdAxis(0), 1).to_owned();
            let k0 = &a0 * m[(0, 0)] + &a1 * m[(0, 1)];
            let k1 = &a0 * m[(1, 0)] + &a1 * m[(1, 1)];
            branch.amps.index_axis_mut(NdAxis(0), 0).assign(&k0);
            branch.amps.index_axis_mut(NdAxis(0), 1).assign(&k1);
        }
        self.projected = true;
        Ok(())
    }

    /// Joint moment ⟨xʲˣ yʲʸ⟩ divided by δ^(jx+jy), over the current
    /// (possibly projected, unnormalized) distribution.
    pub fn readout(
        &self,
        jx: u8,
        jy: u8,
        delta_um: f64,
        normalization: Normalization,
    ) -> Result<CorrelatorResult> {
        assert!(jx <= 1 && jy <= 1, "readout powers must be 0 or 1");
        let xw: Vec<f64> = (0..self.grid_x.count())
            .map(|i| {
                if jx == 0 {
                    1.0
                } else {
                    self.grid_x.coord_um(i)
                }
            })
            .collect();
        let yw: Vec<f64> = (0..self.grid_y.count())
            .map(|j| {
                if jy == 0 {
                    1.0
                } else {
                    self.grid_y.coord_um(j)
                }
            })
            .collect();
        let mut raw = 0.0;
        let mut prob = 0.0;
        for branch in &self.branches {
            let mut branch_raw = 0.0;
            let mut branch_prob = 0.0;
            for s in 0..2 {
                let plane = branch.amps.index_axis(NdAxis(0), s);
                for (i, row) in plane.outer_iter().enumerate() {
                    let xi = xw[i];
                    for (j, z) in row.iter().enumerate() {
                        let w = z.norm_sqr();
                        branch_prob += w;
                        branch_raw += w * xi * yw[j];
                    }
                }
            }
            raw += branch.weight * branch_raw;
            prob += branch.weight * branch_prob;
        }
        let mut value = raw / delta_um.powi(i32::from(jx) + i32::from(jy));
        if normalization == Normalization::Conditional {
            if prob < MIN_POSTSELECTION_PROB {
                return Err(Error::VanishingPostselection { prob });
            }
            value /= prob;
        }
        Ok(CorrelatorResult {
            value,
            raw_moment: raw,
            prob_k: self.projected.then_some(prob),
            leakage: self.leakage,
        })
    }
}

/// Rigid shift of a 2-D array along `axis` by `m` cells with zero fill;
/// returns the shifted array and the norm² that fell off the edge.
fn shifted_with_loss(arr: &Array2<Complex64>, axis: usize, m: i64) -> (Array2<Complex64>, f64) {
    if m == 0 {
        return (arr.clone(), 0.0);
    }
    let n = arr.shape()[axis] as isize;
    let m = m as isize;
    let mut out = Array2::zeros(arr.raw_dim());
    let (dst, src, lost) = if m > 0 {
        (m..n, 0..n - m, n - m..n)
    } else {
        (0..n + m, -m..n, 0..-m)
    };
    out.slice_axis_mut(NdAxis(axis), Slice::from(dst))
        .assign(&arr.slice_axis(NdAxis(axis), Slice::from(src)));
    let lost_mass = arr
        .slice_axis(NdAxis(axis), Slice::from(lost))
        .iter()
        .map(|z| z.norm_sqr())
        .sum();
    (out, lost_mass)
}

/// Runs a full plan: initialize, couple in listed order, optionally project,
/// read out. Deterministic.
pub fn run_sequence(
    plan: &SequencePlan,
    system: &SystemInput,
    sigma_um: f64,
    grid_x: &PointerGrid,
    grid_y: &PointerGrid,
) -> Result<CorrelatorResult> {
    let mut state = LabState::new(system, grid_x, grid_y, sigma_um)?;
    for step in plan.steps() {
        state.couple(step)?;
    }
    if let Some(k) = plan.final_strong() {
        state.strong_project(k)?;
    }
    let (jx, jy) = plan.readout_powers();
    state.readout(jx, jy, plan.readout_delta_um(), plan.normalization())
}
