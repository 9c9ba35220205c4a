//! Discretized 1-D Gaussian pointer wavefunctions on a uniform grid, with
//! exact integer-cell translation and position moments.
//!
//! Samples carry the dimensionless amplitude density × √spacing, so
//! Σ|sample|² = 1 for a normalized wavefunction. Translation is a rigid
//! shift by whole cells with zero fill; probability pushed off the grid is
//! accounted as `leakage` rather than silently renormalized away.

use ndarray::Array1;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Minimum number of grid points.
pub const MIN_GRID_POINTS: usize = 16;
/// A fresh Gaussian requires extent ≥ this multiple of σ.
pub const MIN_EXTENT_SIGMAS: f64 = 8.0;

/// A uniform 1-D grid of `count` cells with the given spacing, centered on
/// `origin_um`. Cell `i` sits at `origin + (i − (count−1)/2)·spacing`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointerGrid {
    spacing_um: f64,
    count: usize,
    origin_um: f64,
}

impl PointerGrid {
    pub fn new(spacing_um: f64, count: usize, origin_um: f64) -> Result<Self> {
        if spacing_um.is_nan() || spacing_um <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive, got {spacing_um}"
            )));
        }
        if count < MIN_GRID_POINTS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_GRID_POINTS} points, got {count}"
            )));
        }
        Ok(Self {
            spacing_um,
            count,
            origin_um,
        })
    }

    /// Grid centered at zero.
    pub fn centered(spacing_um: f64, count: usize) -> Result<Self> {
        Self::new(spacing_um, count, 0.0)
    }

    pub fn spacing_um(&self) -> f64 {
        self.spacing_um
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn origin_um(&self) -> f64 {
        self.origin_um
    }

    /// Total covered length, `count·spacing`.
    pub fn extent_um(&self) -> f64 {
        self.count as f64 * self.spacing_um
    }

    /// Position of cell `i` in µm.
    pub fn coord_um(&self, i: usize) -> f64 {
        self.origin_um + (i as f64 - 0.5 * (self.count as f64 - 1.0)) * self.spacing_um
    }

    /// All cell positions.
    pub fn coords_um(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.coord_um(i)).collect()
    }
}

/// A complex wavefunction sampled on a [`PointerGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointerWavefunction {
    grid: PointerGrid,
    samples: Array1<Complex64>,
    leakage: f64,
}

/// Normalized Gaussian with |ψ|² standard deviation σ, centered on the grid
/// origin. Requires grid extent ≥ 8σ.
pub fn gaussian_wavefunction(grid: &PointerGrid, sigma_um: f64) -> Result<PointerWavefunction> {
    if sigma_um.is_nan() || sigma_um <= 0.0 {
        return Err(Error::InvalidGrid(format!(
            "gaussian width must be positive, got {sigma_um}"
        )));
    }
    let required = MIN_EXTENT_SIGMAS * sigma_um;
    if grid.extent_um() < required {
        return Err(Error::InsufficientExtent {
            extent_um: grid.extent_um(),
            required_um: required,
        });
    }
    // |ψ(x)|² ∝ exp(−x²/2σ²), so the amplitude carries exp(−x²/4σ²).
    let mut samples: Array1<Complex64> = (0..grid.count())
        .map(|i| {
            let x = grid.coord_um(i) - grid.origin_um();
            Complex64::new((-x * x / (4.0 * sigma_um * sigma_um)).exp(), 0.0)
        })
        .collect();
    let norm = samples.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    samples.mapv_inplace(|z| z / norm);
    Ok(PointerWavefunction {
        grid: *grid,
        samples,
        leakage: 0.0,
    })
}

impl PointerWavefunction {
    pub fn grid(&self) -> &PointerGrid {
        &self.grid
    }

    pub fn samples(&self) -> &Array1<Complex64> {
        &self.samples
    }

    /// Σ|ψ|² over the grid.
    pub fn norm_sq(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Probability mass pushed off the grid by translations so far.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    /// Rigid shift by `steps` cells (positive moves in +x) with zero fill.
    /// Mass shifted past the edge is added to the leakage account.
    pub fn translate(&self, steps: i64) -> Result<PointerWavefunction> {
        let n = self.grid.count() as i64;
        if steps.abs() >= n {
            return Err(Error::ShiftOffSupport {
                steps,
                count: self.grid.count(),
            });
        }
        let mut shifted = Array1::from_elem(self.grid.count(), Complex64::new(0.0, 0.0));
        let mut lost = 0.0;
        for i in 0..n {
            let j = i + steps;
            if (0..n).contains(&j) {
                shifted[j as usize] = self.samples[i as usize];
            } else {
                lost += self.samples[i as usize].norm_sqr();
            }
        }
        Ok(PointerWavefunction {
            grid: self.grid,
            samples: shifted,
            leakage: self.leakage + lost,
        })
    }

    /// Σ xᵖ|ψ(x)|² over the grid, in µmᵖ. `power` must be 0, 1, or 2.
    pub fn position_moment(&self, power: u8) -> f64 {
        assert!(power <= 2, "only moments up to x² are defined");
        self.samples
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let w = z.norm_sqr();
                match power {
                    0 => w,
                    1 => self.grid.coord_um(i) * w,
                    _ => {
                        let x = self.grid.coord_um(i);
                        x * x * w
                    }
                }
            })
            .sum()
    }
}
