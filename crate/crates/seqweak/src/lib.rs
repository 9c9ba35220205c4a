//! seqweak — a numerical laboratory for sequences of weak and strong
//! measurements on a polarization qubit.
//!
//! A polarization observable is coupled to a transverse-position pointer by
//! a conditional shift of strength δ; with Gaussian pointers of width σ ≫ δ
//! each measurement barely disturbs the system, yet joint readouts of two
//! and three such measurements behave very differently under reordering:
//! pairs are order-invariant, triples are not, and incoherent inputs restore
//! the invariance. The crate provides the discretized joint-state engine,
//! closed-form weak-limit and finite-strength correlators to check it
//! against, and a scenario runner that sweeps the input polarization and
//! writes CSV tables.
//!
//! ```
//! use seqweak::pointer::PointerGrid;
//! use seqweak::polarization::{pi_d, pi_h, prepare_theta};
//! use seqweak::vonneumann::{
//!     run_sequence, MeasurementStep, Normalization, PointerAxis, SequencePlan,
//! };
//!
//! let grid = PointerGrid::centered(20.0, 512).unwrap();
//! let plan = SequencePlan::new(
//!     vec![
//!         MeasurementStep::new(pi_h(), PointerAxis::X, 160.0).unwrap(),
//!         MeasurementStep::new(pi_d(), PointerAxis::Y, 160.0).unwrap(),
//!     ],
//!     Some(pi_h()),          // strong projection, always last
//!     (1, 1),                // read out ⟨x¹y¹⟩
//!     Normalization::Unnormalized,
//! )
//! .unwrap();
//! let result = run_sequence(&plan, &prepare_theta(22.5).into(), 600.0, &grid, &grid).unwrap();
//! assert!((result.value - 0.375).abs() < 0.01); // 0.375 + O((δ/σ)²)
//! ```

pub mod error;
pub mod mat;
pub mod pointer;
pub mod polarization;
pub mod scenarios;
pub mod vonneumann;
pub mod weaklimit;

pub use error::{Error, Result};
