//! Scenario runner: θ sweeps over order-swapped measurement sequences,
//! convergence studies in the coupling strength, CSV emission, and the flat
//! key = value configuration format shared by the CLI and config files.
//!
//! Plan labels list the measured projectors first-measured first, separated
//! by dots, with a capitalized `PiH` marking the final strong projection:
//! `piH.piD`, `piD.piH`, `piH.piD.PiH`, `piD.piH.PiH`. The first step always
//! couples to the x pointer and the second to y.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pointer::PointerGrid;
use crate::polarization::{pi_d, pi_h, prepare_mixed, Observable, PolarizationState};
use crate::vonneumann::{
    run_sequence, MeasurementStep, Normalization, PointerAxis, SequencePlan, SystemInput,
};
use crate::weaklimit::{exact_pair_correlator, weak_correlator, WeakCorrelatorSpec};

pub const DEFAULT_THETA_START_DEG: f64 = 0.0;
pub const DEFAULT_THETA_END_DEG: f64 = 180.0;
pub const DEFAULT_THETA_STEP_DEG: f64 = 6.0;
pub const DEFAULT_DELTA_UM: f64 = 160.0;
pub const DEFAULT_SIGMA_UM: f64 = 600.0;
pub const DEFAULT_GRID_SPACING_UM: f64 = 20.0;
pub const DEFAULT_GRID_COUNT: usize = 512;
/// The convergence scenario reaches δ/σ = 0.05 (δ = 30 µm at the default σ),
/// which needs a finer default grid to stay an integer shift.
pub const CONVERGENCE_GRID_SPACING_UM: f64 = 10.0;
pub const CONVERGENCE_GRID_COUNT: usize = 1024;
/// Strengths δ/σ probed by the convergence scenario.
pub const DEFAULT_CONVERGENCE_STRENGTHS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

/// Grid values must match the exact pair correlator this closely (pair
/// scenarios).
pub const SELF_CHECK_TOL_PAIR: f64 = 1e-6;
/// Grid values must sit this close to the weak limit at δ/σ = 4/15
/// (three-measurement sweep on pure inputs).
pub const SELF_CHECK_TOL_TRIPLE: f64 = 0.02;
/// Grid values must sit this close to the weak limit for incoherent inputs.
pub const SELF_CHECK_TOL_MIXED: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Two weak measurements, both orders, pure |θ⟩ input.
    Fig2,
    /// Two weak measurements plus a final strong projection, pure input.
    Fig3a,
    /// Same pair of sequences on the incoherent mixture ρ(θ).
    Fig3b,
    /// Strength scan of |grid − weak limit| at one θ.
    Convergence,
    /// User-chosen orderings on a pure |θ⟩ input.
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig2 => "fig2",
            Scenario::Fig3a => "fig3a",
            Scenario::Fig3b => "fig3b",
            Scenario::Convergence => "convergence",
            Scenario::Custom => "custom",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Scenario::Fig2),
            "fig3a" => Ok(Scenario::Fig3a),
            "fig3b" => Ok(Scenario::Fig3b),
            "convergence" => Ok(Scenario::Convergence),
            "custom" => Ok(Scenario::Custom),
            other => Err(Error::InvalidConfig(format!(
                "unknown scenario '{other}' (expected fig2|fig3a|fig3b|convergence|custom)"
            ))),
        }
    }
}

/// How the sweep angle maps onto the prepared pure state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaConvention {
    /// θ is the preparation half-wave plate angle: amplitudes use 2θ.
    Hwp,
    /// θ is the polarization angle itself: amplitudes use θ.
    Polarization,
}

impl ThetaConvention {
    pub fn name(self) -> &'static str {
        match self {
            ThetaConvention::Hwp => "hwp",
            ThetaConvention::Polarization => "polarization",
        }
    }

    /// Linear-polarization angle of the prepared state, in degrees.
    pub fn amplitude_angle_deg(self, theta_deg: f64) -> f64 {
        match self {
            ThetaConvention::Hwp => 2.0 * theta_deg,
            ThetaConvention::Polarization => theta_deg,
        }
    }
}

impl fmt::Display for ThetaConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThetaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hwp" => Ok(ThetaConvention::Hwp),
            "polarization" => Ok(ThetaConvention::Polarization),
            other => Err(Error::InvalidConfig(format!(
                "unknown theta convention '{other}' (expected hwp|polarization)"
            ))),
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unnormalized" => Ok(Normalization::Unnormalized),
            "conditional" => Ok(Normalization::Conditional),
            other => Err(Error::InvalidConfig(format!(
                "unknown normalization '{other}' (expected unnormalized|conditional)"
            ))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Unnormalized => "unnormalized",
            Normalization::Conditional => "conditional",
        })
    }
}

/// The measurement sequences the runner knows how to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PlanKind {
    /// π_H on x, then π_D on y.
    PairHd,
    /// π_D on x, then π_H on y.
    PairDh,
    /// π_H on x, π_D on y, strong Π_H last.
    TripleHd,
    /// π_D on x, π_H on y, strong Π_H last.
    TripleDh,
}

impl PlanKind {
    pub fn label(self) -> &'static str {
        match self {
            PlanKind::PairHd => "piH.piD",
            PlanKind::PairDh => "piD.piH",
            PlanKind::TripleHd => "piH.piD.PiH",
            PlanKind::TripleDh => "piD.piH.PiH",
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "piH.piD" => Ok(PlanKind::PairHd),
            "piD.piH" => Ok(PlanKind::PairDh),
            "piH.piD.PiH" => Ok(PlanKind::TripleHd),
            "piD.piH.PiH" => Ok(PlanKind::TripleDh),
            other => Err(Error::InvalidConfig(format!(
                "unknown ordering '{other}' (expected piH.piD, piD.piH, piH.piD.PiH or piD.piH.PiH)"
            ))),
        }
    }

    pub fn has_strong(self) -> bool {
        matches!(self, PlanKind::TripleHd | PlanKind::TripleDh)
    }

    pub fn is_pair(self) -> bool {
        !self.has_strong()
    }

    /// Weakly measured projectors in time order (strong step excluded).
    fn weak_projectors(self) -> [Observable; 2] {
        match self {
            PlanKind::PairHd | PlanKind::TripleHd => [pi_h(), pi_d()],
            PlanKind::PairDh | PlanKind::TripleDh => [pi_d(), pi_h()],
        }
    }

    /// Full observable list in time order, for the weak-limit correlator.
    pub fn observables(self) -> Vec<Observable> {
        let [a, b] = self.weak_projectors();
        if self.has_strong() {
            vec![a, b, pi_h()]
        } else {
            vec![a, b]
        }
    }

    /// Weak-limit sequence description matching this plan.
    pub fn weak_spec(self, rho: crate::polarization::DensityMatrix) -> Result<WeakCorrelatorSpec> {
        WeakCorrelatorSpec::new(rho, self.observables(), self.has_strong())
    }

    /// Concrete plan: first projector on x, second on y, joint ⟨xy⟩/δ²
    /// readout.
    pub fn build_plan(self, delta_um: f64, normalization: Normalization) -> Result<SequencePlan> {
        let [a, b] = self.weak_projectors();
        SequencePlan::new(
            vec![
                MeasurementStep::new(a, PointerAxis::X, delta_um)?,
                MeasurementStep::new(b, PointerAxis::Y, delta_um)?,
            ],
            self.has_strong().then(pi_h),
            (1, 1),
            normalization,
        )
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PlanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlanKind::from_label(s)
    }
}

/// Everything a run needs; see [`ScenarioConfig::defaults`] for the stock
/// parameter set (δ = 160 µm, σ = 600 µm, 512 cells of 20 µm per axis).
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub theta_start_deg: f64,
    pub theta_end_deg: f64,
    pub theta_step_deg: f64,
    pub theta_convention: ThetaConvention,
    pub delta_um: f64,
    pub sigma_um: f64,
    pub grid_spacing_um: f64,
    pub grid_count: usize,
    pub normalization: Normalization,
    pub orderings: Vec<PlanKind>,
    pub output_path: PathBuf,
}

impl ScenarioConfig {
    pub fn defaults(scenario: Scenario) -> Self {
        let (spacing, count) = match scenario {
            Scenario::Convergence => (CONVERGENCE_GRID_SPACING_UM, CONVERGENCE_GRID_COUNT),
            _ => (DEFAULT_GRID_SPACING_UM, DEFAULT_GRID_COUNT),
        };
        let orderings = match scenario {
            Scenario::Fig2 => vec![PlanKind::PairHd, PlanKind::PairDh],
            Scenario::Fig3a | Scenario::Fig3b | Scenario::Convergence => {
                vec![PlanKind::TripleHd, PlanKind::TripleDh]
            }
            Scenario::Custom => vec![],
        };
        Self {
            scenario,
            theta_start_deg: DEFAULT_THETA_START_DEG,
            theta_end_deg: DEFAULT_THETA_END_DEG,
            theta_step_deg: DEFAULT_THETA_STEP_DEG,
            theta_convention: ThetaConvention::Hwp,
            delta_um: DEFAULT_DELTA_UM,
            sigma_um: DEFAULT_SIGMA_UM,
            grid_spacing_um: spacing,
            grid_count: count,
            normalization: Normalization::Unnormalized,
            orderings,
            output_path: PathBuf::from(format!("{}.csv", scenario.name())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_step_deg.is_nan() || self.theta_step_deg <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "theta-step must be positive, got {}",
                self.theta_step_deg
            )));
        }
        if self.theta_end_deg < self.theta_start_deg {
            return Err(Error::InvalidConfig(
                "theta-end must not precede theta-start".into(),
            ));
        }
        if self.delta_um.is_nan()
            || self.delta_um <= 0.0
            || self.sigma_um.is_nan()
            || self.sigma_um <= 0.0
        {
            return Err(Error::InvalidConfig(
                "delta and sigma must be positive".into(),
            ));
        }
        let ratio = self.delta_um / self.grid_spacing_um;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "delta = {} µm is not an integer multiple of grid-spacing = {} µm",
                self.delta_um, self.grid_spacing_um
            )));
        }
        let extent = self.grid_spacing_um * self.grid_count as f64;
        let required = 8.0 * self.sigma_um + 2.0 * self.delta_um;
        if extent < required {
            return Err(Error::InvalidConfig(format!(
                "grid extent {extent} µm is below 8σ + 2δ = {required} µm"
            )));
        }
        if self.orderings.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one ordering is required (custom scenarios must set --orderings)".into(),
            ));
        }
        let unique: BTreeSet<PlanKind> = self.orderings.iter().copied().collect();
        if unique.len() != self.orderings.len() {
            return Err(Error::InvalidConfig("orderings must be unique".into()));
        }
        if matches!(
            self.scenario,
            Scenario::Fig2 | Scenario::Fig3a | Scenario::Fig3b | Scenario::Convergence
        ) && self.orderings.len() != 2
        {
            return Err(Error::InvalidConfig(format!(
                "{} compares exactly two orderings, got {}",
                self.scenario,
                self.orderings.len()
            )));
        }
        PointerGrid::centered(self.grid_spacing_um, self.grid_count)?;
        Ok(())
    }

    pub fn delta_over_sigma(&self) -> f64 {
        self.delta_um / self.sigma_um
    }

    /// Ordering labels in emission order (ascending).
    fn sorted_orderings(&self) -> Vec<PlanKind> {
        let mut kinds = self.orderings.clone();
        kinds.sort_by_key(|k| k.label());
        kinds
    }

    /// Key = value lines recorded as `#` comments at the top of the CSV.
    pub fn csv_metadata(&self) -> Vec<(String, String)> {
        let orderings = self
            .sorted_orderings()
            .iter()
            .map(|k| k.label())
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("scenario".into(), self.scenario.to_string()),
            ("theta_convention".into(), self.theta_convention.to_string()),
            (
                "theta_start_deg".into(),
                format!("{}", self.theta_start_deg),
            ),
            ("theta_end_deg".into(), format!("{}", self.theta_end_deg)),
            ("theta_step_deg".into(), format!("{}", self.theta_step_deg)),
            ("delta_um".into(), format!("{}", self.delta_um)),
            ("sigma_um".into(), format!("{}", self.sigma_um)),
            (
                "grid_spacing_um".into(),
                format!("{}", self.grid_spacing_um),
            ),
            ("grid_count".into(), format!("{}", self.grid_count)),
            ("normalization".into(), self.normalization.to_string()),
            ("orderings".into(), orderings),
        ]
    }
}

/// One sweep point for one ordering.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub theta_deg: f64,
    pub ordering: String,
    pub value_grid: f64,
    pub value_weaklimit: f64,
    pub value_exact: Option<f64>,
    pub prob_k: Option<f64>,
    pub delta_over_sigma: f64,
}

/// Inclusive θ ladder from `start` to `end` in steps of `step`.
pub fn theta_values(start_deg: f64, end_deg: f64, step_deg: f64) -> Vec<f64> {
    let n = ((end_deg - start_deg) / step_deg + 1e-9).floor() as usize;
    (0..=n).map(|k| start_deg + k as f64 * step_deg).collect()
}

fn prepare_input(cfg: &ScenarioConfig, theta_deg: f64) -> SystemInput {
    match cfg.scenario {
        Scenario::Fig3b => prepare_mixed(theta_deg).into(),
        _ => {
            let angle = cfg.theta_convention.amplitude_angle_deg(theta_deg);
            PolarizationState::linear(angle).into()
        }
    }
}

fn input_density(input: &SystemInput) -> crate::polarization::DensityMatrix {
    match input {
        SystemInput::Pure(state) => state.density(),
        SystemInput::Mixed(rho) => *rho,
    }
}

fn evaluate_point(
    cfg: &ScenarioConfig,
    kind: PlanKind,
    input: &SystemInput,
    theta_deg: f64,
    delta_um: f64,
    grid: &PointerGrid,
) -> Result<SweepRow> {
    let plan = kind.build_plan(delta_um, cfg.normalization)?;
    let grid_result = run_sequence(&plan, input, cfg.sigma_um, grid, grid)?;
    let rho = input_density(input);
    let weak = weak_correlator(&kind.weak_spec(rho)?)?;
    let value_exact = if kind.is_pair() {
        let [a, b] = [kind.observables()[0], kind.observables()[1]];
        Some(exact_pair_correlator(&rho, &a, &b, delta_um, cfg.sigma_um)?)
    } else {
        None
    };
    let row = SweepRow {
        theta_deg,
        ordering: kind.label().to_string(),
        value_grid: grid_result.value,
        value_weaklimit: weak,
        value_exact,
        prob_k: grid_result.prob_k,
        delta_over_sigma: delta_um / cfg.sigma_um,
    };
    if !row.value_grid.is_finite() || !row.value_weaklimit.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "non-finite sweep value at θ = {theta_deg}"
        )));
    }
    Ok(row)
}

/// Runs the configured scenario and returns rows sorted by
/// (θ, ordering label, strength).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if cfg.scenario == Scenario::Convergence {
        return Ok(convergence_study(cfg, &DEFAULT_CONVERGENCE_STRENGTHS)?.rows);
    }
    let grid = PointerGrid::centered(cfg.grid_spacing_um, cfg.grid_count)?;
    let kinds = cfg.sorted_orderings();
    let mut rows = Vec::new();
    for theta in theta_values(cfg.theta_start_deg, cfg.theta_end_deg, cfg.theta_step_deg) {
        let input = prepare_input(cfg, theta);
        for kind in &kinds {
            rows.push(evaluate_point(
                cfg,
                *kind,
                &input,
                theta,
                cfg.delta_um,
                &grid,
            )?);
        }
    }
    Ok(rows)
}

/// Ordering comparison over one sweep. The difference is taken as
/// value(lexicographically larger label) − value(smaller label), which puts
/// the π_H-first sequence first for every built-in pair.
#[derive(Debug, Clone)]
pub struct Summary {
    pub minuend: String,
    pub subtrahend: String,
    pub points: Vec<SummaryPoint>,
    pub max_abs_difference: f64,
    pub argmax_theta_deg: f64,
    pub max_deviation_from_reference: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SummaryPoint {
    pub theta_deg: f64,
    /// Grid-value ordering difference.
    pub difference: f64,
    /// Weak-limit ordering difference at the same θ.
    pub reference_difference: f64,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "ordering difference {} − {} over {} sweep points",
            self.minuend,
            self.subtrahend,
            self.points.len()
        )?;
        writeln!(
            f,
            "  max |difference| = {:.6} at θ = {}°",
            self.max_abs_difference, self.argmax_theta_deg
        )?;
        write!(
            f,
            "  max |difference − weak-limit difference| = {:.3e}",
            self.max_deviation_from_reference
        )
    }
}

/// Per-θ ordering differences and their comparison against the weak-limit
/// difference curve. Requires rows from a two-ordering sweep.
pub fn summarize(rows: &[SweepRow]) -> Result<Summary> {
    if rows.is_empty() {
        return Err(Error::EmptySweep);
    }
    let labels: BTreeSet<&str> = rows.iter().map(|r| r.ordering.as_str()).collect();
    if labels.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "summarize needs exactly two orderings, found {}",
            labels.len()
        )));
    }
    let mut iter = labels.into_iter();
    let subtrahend = iter.next().unwrap().to_string();
    let minuend = iter.next().unwrap().to_string();

    let mut points: Vec<SummaryPoint> = Vec::new();
    let mut thetas: Vec<f64> = rows.iter().map(|r| r.theta_deg).collect();
    thetas.dedup();
    for &theta in &thetas {
        let find = |label: &str| {
            rows.iter()
                .find(|r| r.theta_deg == theta && r.ordering == label)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("missing ordering '{label}' at θ = {theta}"))
                })
        };
        let a = find(&minuend)?;
        let b = find(&subtrahend)?;
        points.push(SummaryPoint {
            theta_deg: theta,
            difference: a.value_grid - b.value_grid,
            reference_difference: a.value_weaklimit - b.value_weaklimit,
        });
    }
    let best = points
        .iter()
        .max_by(|p, q| p.difference.abs().total_cmp(&q.difference.abs()))
        .copied()
        .ok_or(Error::EmptySweep)?;
    let max_deviation_from_reference = points
        .iter()
        .map(|p| (p.difference - p.reference_difference).abs())
        .fold(0.0, f64::max);
    Ok(Summary {
        minuend,
        subtrahend,
        points,
        max_abs_difference: best.difference.abs(),
        argmax_theta_deg: best.theta_deg,
        max_deviation_from_reference,
    })
}

/// Log–log fit of |grid − weak limit| against δ/σ for one ordering.
#[derive(Debug, Clone)]
pub struct ConvergenceFit {
    pub ordering: String,
    pub slope: f64,
    pub intercept: f64,
    /// (δ/σ, |grid − weak|) pairs, strength ascending.
    pub points: Vec<(f64, f64)>,
    /// Per-point residuals of the log–log fit.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub theta_deg: f64,
    pub fits: Vec<ConvergenceFit>,
    pub rows: Vec<SweepRow>,
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "convergence at θ = {}°:", self.theta_deg)?;
        for fit in &self.fits {
            let max_residual = fit.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            write!(
                f,
                "\n  {}: slope = {:.3} (max log residual {:.2e})",
                fit.ordering, fit.slope, max_residual
            )?;
        }
        Ok(())
    }
}

fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    (slope, mean_y - slope * mean_x)
}

/// Runs the configured plan pair at θ = `theta_start_deg` for each strength
/// and fits the error-vs-strength power law. Every strength must map to an
/// integer grid shift.
pub fn convergence_study(cfg: &ScenarioConfig, strengths: &[f64]) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if strengths.len() < 3 {
        return Err(Error::UnderDeterminedFit {
            points: strengths.len(),
        });
    }
    for &s in strengths {
        if s.is_nan() || s <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "strength δ/σ must be positive, got {s} (a zero shift is not representable)"
            )));
        }
        let delta = s * cfg.sigma_um;
        let ratio = delta / cfg.grid_spacing_um;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::NonIntegralShift {
                delta_um: delta,
                spacing_um: cfg.grid_spacing_um,
            });
        }
    }
    let mut ordered_strengths: Vec<f64> = strengths.to_vec();
    ordered_strengths.sort_by(f64::total_cmp);

    let grid = PointerGrid::centered(cfg.grid_spacing_um, cfg.grid_count)?;
    let theta = cfg.theta_start_deg;
    let input = prepare_input(cfg, theta);
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for kind in cfg.sorted_orderings() {
        let mut points = Vec::new();
        for &s in &ordered_strengths {
            let row = evaluate_point(cfg, kind, &input, theta, s * cfg.sigma_um, &grid)?;
            points.push((s, (row.value_grid - row.value_weaklimit).abs()));
            rows.push(row);
        }
        let xs: Vec<f64> = points.iter().map(|(s, _)| s.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|(_, gap)| gap.ln()).collect();
        let (slope, intercept) = fit_line(&xs, &ys);
        let residuals = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| y - (slope * x + intercept))
            .collect();
        fits.push(ConvergenceFit {
            ordering: kind.label().to_string(),
            slope,
            intercept,
            points,
            residuals,
        });
    }
    rows.sort_by(|a, b| {
        a.theta_deg
            .total_cmp(&b.theta_deg)
            .then_with(|| a.ordering.cmp(&b.ordering))
            .then_with(|| a.delta_over_sigma.total_cmp(&b.delta_over_sigma))
    });
    Ok(ConvergenceReport {
        theta_deg: theta,
        fits,
        rows,
    })
}

/// Pass/fail of each row's grid value against its analytic companion column:
/// the exact pair correlator where present, the weak limit otherwise, at the
/// scenario's tolerance. Only defined for unnormalized sweeps.
pub fn self_check_flags(cfg: &ScenarioConfig, rows: &[SweepRow]) -> Result<Vec<bool>> {
    if cfg.normalization != Normalization::Unnormalized {
        return Err(Error::InvalidConfig(
            "self-check compares against unnormalized analytic values; run with --normalization unnormalized".into(),
        ));
    }
    if cfg.scenario == Scenario::Convergence {
        return Err(Error::InvalidConfig(
            "self-check is not defined for the convergence scenario".into(),
        ));
    }
    Ok(rows
        .iter()
        .map(|row| match row.value_exact {
            Some(exact) => (row.value_grid - exact).abs() <= SELF_CHECK_TOL_PAIR,
            None => {
                let tol = if cfg.scenario == Scenario::Fig3b {
                    SELF_CHECK_TOL_MIXED
                } else {
                    SELF_CHECK_TOL_TRIPLE
                };
                (row.value_grid - row.value_weaklimit).abs() <= tol
            }
        })
        .collect())
}

fn format_value(x: f64) -> String {
    format!("{:.16e}", x)
}

fn format_optional(x: Option<f64>) -> String {
    x.map(format_value).unwrap_or_default()
}

pub const CSV_HEADER: &str =
    "theta_deg,ordering,value_grid,value_weaklimit,value_exact,prob_K,delta_over_sigma";

/// Writes rows as CSV: `#`-prefixed metadata lines, the fixed header, one
/// line per row. Numbers are written in full-precision scientific decimal,
/// so parsing the file back reproduces every value bit for bit. With
/// `self_check`, a trailing ok/fail column is appended.
pub fn emit_csv_with(
    rows: &[SweepRow],
    path: &Path,
    metadata: &[(String, String)],
    self_check: Option<&[bool]>,
) -> Result<()> {
    if let Some(flags) = self_check {
        if flags.len() != rows.len() {
            return Err(Error::InvalidConfig(
                "self-check flag count does not match row count".into(),
            ));
        }
    }
    let mut text = String::new();
    for (key, value) in metadata {
        text.push_str(&format!("# {key} = {value}\n"));
    }
    text.push_str(CSV_HEADER);
    if self_check.is_some() {
        text.push_str(",self_check");
    }
    text.push('\n');
    for (i, row) in rows.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}",
            format_value(row.theta_deg),
            row.ordering,
            format_value(row.value_grid),
            format_value(row.value_weaklimit),
            format_optional(row.value_exact),
            format_optional(row.prob_k),
            format_value(row.delta_over_sigma),
        ));
        if let Some(flags) = self_check {
            text.push_str(if flags[i] { ",ok" } else { ",fail" });
        }
        text.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// CSV emission without metadata or self-check columns.
pub fn emit_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    emit_csv_with(rows, path, &[], None)
}

/// Parses the flat `key = value` configuration format: one pair per line,
/// `#` starts a comment, blank lines ignored. Later duplicates win.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "config line {} is not 'key = value': {raw:?}",
                lineno + 1
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Partially specified configuration collected from a config file or the
/// command line; unset fields fall back to the scenario defaults.
#[derive(Debug, Default, Clone)]
pub struct ConfigOverrides {
    pub scenario: Option<Scenario>,
    pub theta_start_deg: Option<f64>,
    pub theta_end_deg: Option<f64>,
    pub theta_step_deg: Option<f64>,
    pub theta_convention: Option<ThetaConvention>,
    pub delta_um: Option<f64>,
    pub sigma_um: Option<f64>,
    pub grid_spacing_um: Option<f64>,
    pub grid_count: Option<usize>,
    pub normalization: Option<Normalization>,
    pub orderings: Option<Vec<PlanKind>>,
    pub out: Option<PathBuf>,
}

impl ConfigOverrides {
    /// Interprets key = value pairs; keys match the CLI flag names.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("cannot parse {key} value '{value}'")))
        }
        let mut over = ConfigOverrides::default();
        for (key, value) in pairs {
            match key.as_str() {
                "scenario" => over.scenario = Some(value.parse()?),
                "theta-start" => over.theta_start_deg = Some(num(key, value)?),
                "theta-end" => over.theta_end_deg = Some(num(key, value)?),
                "theta-step" => over.theta_step_deg = Some(num(key, value)?),
                "theta-convention" => over.theta_convention = Some(value.parse()?),
                "delta" => over.delta_um = Some(num(key, value)?),
                "sigma" => over.sigma_um = Some(num(key, value)?),
                "grid-spacing" => over.grid_spacing_um = Some(num(key, value)?),
                "grid-count" => over.grid_count = Some(num(key, value)?),
                "normalization" => over.normalization = Some(value.parse()?),
                "orderings" => {
                    over.orderings = Some(
                        value
                            .split(',')
                            .map(|label| PlanKind::from_label(label.trim()))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "out" => over.out = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown config key '{other}'"
                    )))
                }
            }
        }
        Ok(over)
    }

    /// Layer `self` on top of `base`; set fields win.
    pub fn over(self, base: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            scenario: self.scenario.or(base.scenario),
            theta_start_deg: self.theta_start_deg.or(base.theta_start_deg),
            theta_end_deg: self.theta_end_deg.or(base.theta_end_deg),
            theta_step_deg: self.theta_step_deg.or(base.theta_step_deg),
            theta_convention: self.theta_convention.or(base.theta_convention),
            delta_um: self.delta_um.or(base.delta_um),
            sigma_um: self.sigma_um.or(base.sigma_um),
            grid_spacing_um: self.grid_spacing_um.or(base.grid_spacing_um),
            grid_count: self.grid_count.or(base.grid_count),
            normalization: self.normalization.or(base.normalization),
            orderings: self.orderings.or(base.orderings),
            out: self.out.or(base.out),
        }
    }

    /// Resolves against the scenario defaults into a full config.
    pub fn into_config(self) -> Result<ScenarioConfig> {
        let scenario = self.scenario.ok_or_else(|| {
            Error::InvalidConfig("a scenario is required (--scenario or config file)".into())
        })?;
        let d = ScenarioConfig::defaults(scenario);
        Ok(ScenarioConfig {
            scenario,
            theta_start_deg: self.theta_start_deg.unwrap_or(d.theta_start_deg),
            theta_end_deg: self.theta_end_deg.unwrap_or(d.theta_end_deg),
            theta_step_deg: self.theta_step_deg.unwrap_or(d.theta_step_deg),
            theta_convention: self.theta_convention.unwrap_or(d.theta_convention),
            delta_um: self.delta_um.unwrap_or(d.delta_um),
            sigma_um: self.sigma_um.unwrap_or(d.sigma_um),
            grid_spacing_um: self.grid_spacing_um.unwrap_or(d.grid_spacing_um),
            grid_count: self.grid_count.unwrap_or(d.grid_count),
            normalization: self.normalization.unwrap_or(d.normalization),
            orderings: self.orderings.unwrap_or(d.orderings),
            output_path: self.out.unwrap_or(d.output_path),
        })
    }
}
