use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Uniform periodic grid on `[-L, L)^2` together with its dual frequency grid.
///
/// Physical samples sit at `x_i = -L + i dx` and frequency samples at
/// `xi_j = (j - n/2) dxi`, both in natural (monotone) order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    n_points: usize,
    half_width: f64,
}

impl Grid2D {
    pub fn new(n_points: usize, half_width: f64) -> Result<Self> {
        if n_points < 8 || !n_points.is_multiple_of(2) {
            return Err(LabError::InvalidGrid(format!(
                "n_points must be even and >= 8, got {n_points}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(LabError::InvalidGrid(format!(
                "half_width must be positive and finite, got {half_width}"
            )));
        }
        Ok(Self {
            n_points,
            half_width,
        })
    }

    /// Grid whose physical and frequency spacings coincide (`dx == dxi`).
    pub fn balanced(n_points: usize) -> Result<Self> {
        Self::new(n_points, (PI * n_points as f64 / 2.0).sqrt())
    }

    pub fn n(&self) -> usize {
        self.n_points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n_points * self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n_points as f64
    }

    pub fn dxi(&self) -> f64 {
        PI / self.half_width
    }

    pub fn xi_max(&self) -> f64 {
        PI / self.dx()
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    pub fn freq(&self, j: usize) -> f64 {
        (j as f64 - (self.n_points / 2) as f64) * self.dxi()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.coord(i)).collect()
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.freq(j)).collect()
    }

    /// Oscillator length scale squared that maps the position box onto the
    /// frequency box under a quarter rotation of phase space.
    pub fn balanced_beta_sq(&self) -> f64 {
        self.half_width / self.xi_max()
    }

    pub fn contains(&self, point: [f64; 2]) -> bool {
        let l = self.half_width;
        point.iter().all(|&p| p >= -l && p < l)
    }

    /// The same grid refined by an integer factor in the box size, with the
    /// spacing kept fixed. Used for zero-padded correlations.
    pub fn padded(&self, factor: usize) -> Result<Self> {
        Self::new(self.n_points * factor, self.half_width * factor as f64)
    }
}
