//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by state construction, the sequence engine, and the
/// scenario runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state norm² = {norm_sq} is not 1 within {tol}")]
    NotNormalized { norm_sq: f64, tol: f64 },

    #[error("matrix is not Hermitian (max entry deviation {max_dev:.3e})")]
    NotHermitian { max_dev: f64 },

    #[error("matrix is not idempotent (max |A² − A| entry {max_dev:.3e})")]
    NotIdempotent { max_dev: f64 },

    #[error("density matrix trace = {trace} is not 1 within {tol}")]
    TraceNotOne { trace: f64, tol: f64 },

    #[error("density matrix has eigenvalue {eigenvalue:.3e} below -{tol:.0e}")]
    NotPositive { eigenvalue: f64, tol: f64 },

    #[error("observable is not a projector")]
    NotAProjector,

    #[error("measurement sequence needs at least {required} observables, got {len}")]
    SequenceTooShort { len: usize, required: usize },

    #[error("depolarizer average needs at least 2 samples, got {samples}")]
    TooFewSamples { samples: usize },

    #[error("grid extent {extent_um} µm is below the required {required_um} µm")]
    InsufficientExtent { extent_um: f64, required_um: f64 },

    #[error("invalid pointer grid: {0}")]
    InvalidGrid(String),

    #[error("shift by {steps} steps leaves the {count}-point grid support")]
    ShiftOffSupport { steps: i64, count: usize },

    #[error("shift {delta_um} µm is not an integer multiple of the grid spacing {spacing_um} µm")]
    NonIntegralShift { delta_um: f64, spacing_um: f64 },

    #[error("axis {axis} already carries a coupling in this sequence")]
    AxisAlreadyCoupled { axis: &'static str },

    #[error("accumulated truncation leakage {leakage:.3e} exceeds the budget {budget:.0e}")]
    LeakageBudgetExceeded { leakage: f64, budget: f64 },

    #[error("postselection probability {prob:.3e} vanishes; conditional readout undefined")]
    VanishingPostselection { prob: f64 },

    #[error("correlator trace has non-negligible imaginary part {imag:.3e}")]
    NonNegligibleImaginary { imag: f64 },

    #[error("invalid measurement plan: {0}")]
    InvalidPlan(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sweep is empty; nothing to summarize")]
    EmptySweep,

    #[error("convergence fit needs at least 3 strengths, got {points}")]
    UnderDeterminedFit { points: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// budget violations, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::LeakageBudgetExceeded { .. } | Error::VanishingPostselection { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
