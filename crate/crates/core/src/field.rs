use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::Grid2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Physical,
    Frequency,
}

/// Complex samples of a function on a [`Grid2D`], row-major with the second
/// axis fastest. The `space` tag says whether the samples are `f(x)` or
/// `f^(xi)`; norms and inner products use the matching measure (`dx^2` or
/// `dxi^2`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField2D {
    grid: Grid2D,
    space: Space,
    samples: Vec<Complex64>,
}

impl ComplexField2D {
    pub fn new(grid: Grid2D, space: Space, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(LabError::InvalidParameter(format!(
                "expected {} samples, got {}",
                grid.len(),
                samples.len()
            )));
        }
        if let Some(index) = samples.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(LabError::NonFinite { index });
        }
        Ok(Self {
            grid,
            space,
            samples,
        })
    }

    pub fn zeros(grid: Grid2D, space: Space) -> Self {
        Self {
            grid,
            space,
            samples: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Samples `f` at the grid nodes of `space`; the closure receives the
    /// coordinates (positions or frequencies).
    pub fn from_fn(grid: Grid2D, space: Space, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let axis = match space {
            Space::Physical => grid.coords(),
            Space::Frequency => grid.freqs(),
        };
        let samples = axis
            .iter()
            .flat_map(|&a| axis.iter().map(move |&b| (a, b)))
            .map(|(a, b)| f(a, b))
            .collect();
        Self::new(grid, space, samples)
    }

    // Internal constructor for results of arithmetic on validated fields.
    pub(crate) fn from_parts(grid: Grid2D, space: Space, samples: Vec<Complex64>) -> Self {
        debug_assert_eq!(samples.len(), grid.len());
        Self {
            grid,
            space,
            samples,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.samples[i * self.grid.n() + j]
    }

    pub fn measure(&self) -> f64 {
        match self.space {
            Space::Physical => self.grid.dx().powi(2),
            Space::Frequency => self.grid.dxi().powi(2),
        }
    }

    pub fn require_space(&self, expected: Space) -> Result<()> {
        if self.space == expected {
            Ok(())
        } else {
            Err(LabError::WrongSpace {
                expected,
                found: self.space,
            })
        }
    }

    pub fn require_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(LabError::GridMismatch);
        }
        if self.space != other.space {
            return Err(LabError::WrongSpace {
                expected: self.space,
                found: other.space,
            });
        }
        Ok(())
    }

    pub fn norm_sq(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.measure()
    }

    /// L2 norm with the measure of the field's own space.
    pub fn l2_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn require_nonzero(&self) -> Result<()> {
        if self.is_zero() {
            Err(LabError::ZeroField)
        } else {
            Ok(())
        }
    }

    /// `<self, other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.require_compatible(other)?;
        let s: Complex64 = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.measure())
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        self.map(|z| z * c)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_parts(self.grid, self.space, self.samples.iter().map(|&z| f(z)).collect())
    }

    /// Pointwise map that also sees the node coordinates of the field's space.
    pub fn map_indexed(&self, f: impl Fn(f64, f64, Complex64) -> Complex64) -> Self {
        let n = self.grid.n();
        let axis = match self.space {
            Space::Physical => self.grid.coords(),
            Space::Frequency => self.grid.freqs(),
        };
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(k, &z)| f(axis[k / n], axis[k % n], z))
            .collect();
        Self::from_parts(self.grid, self.space, samples)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.require_compatible(other)?;
        Ok(Self::from_parts(
            self.grid,
            self.space,
            self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    /// Copy scaled to unit L2 norm.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return Err(LabError::ZeroField);
        }
        Ok(self.scaled(Complex64::new(1.0 / norm, 0.0)))
    }

    /// Relative L2 distance `|self - other| / |other|`.
    pub fn relative_distance(&self, other: &Self) -> Result<f64> {
        let diff = self.sub(other)?.l2_norm();
        let base = other.l2_norm();
        if base == 0.0 {
            return Err(LabError::ZeroField);
        }
        Ok(diff / base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid2D {
        Grid2D::new(8, 2.0).unwrap()
    }

    #[test]
    fn rejects_wrong_length_and_nan() {
        let g = grid();
        assert!(ComplexField2D::new(g, Space::Physical, vec![Complex64::new(0.0, 0.0); 63]).is_err());
        let mut s = vec![Complex64::new(1.0, 0.0); 64];
        s[5] = Complex64::new(f64::NAN, 0.0);
        match ComplexField2D::new(g, Space::Physical, s) {
            Err(LabError::NonFinite { index }) => assert_eq!(index, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn layout_is_row_major() {
        let g = grid();
        let f = ComplexField2D::from_fn(g, Space::Physical, Complex64::new).unwrap();
        assert_eq!(f.at(1, 3), Complex64::new(g.coord(1), g.coord(3)));
        assert_eq!(f.samples()[g.n() + 3], f.at(1, 3));
    }

    #[test]
    fn inner_is_conjugate_linear_in_first_slot() {
        let g = grid();
        let f = ComplexField2D::from_fn(g, Space::Physical, |a, b| Complex64::new(a, b * b)).unwrap();
        let h = ComplexField2D::from_fn(g, Space::Physical, |a, b| Complex64::new(1.0 + b, a)).unwrap();
        let i = Complex64::new(0.0, 1.0);
        let lhs = f.scaled(i).inner(&h).unwrap();
        let rhs = -i * f.inner(&h).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
        assert!((f.inner(&f).unwrap().re - f.norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_space_is_rejected() {
        let g = grid();
        let a = ComplexField2D::zeros(g, Space::Physical);
        let b = ComplexField2D::zeros(g, Space::Frequency);
        assert!(matches!(a.inner(&b), Err(LabError::WrongSpace { .. })));
        assert!(a.normalized().is_err());
    }
}
