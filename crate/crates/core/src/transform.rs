//! Continuous-convention Fourier transforms on the grid and the free
//! Schrodinger propagator.
//!
//! The transform pair is
//!
//! ```text
//! f^(xi) = int e^{-i x.xi} f(x) dx,     f(x) = (2 pi)^{-2} int e^{i x.xi} f^(xi) dxi,
//! ```
//!
//! discretized as `f^(xi_j) = sum_m e^{-i x_m.xi_j} f(x_m) dx^2`. With
//! `x_m = -L + m dx` and `xi_j = (j - n/2) dxi` the kernel factors as
//! `(-1)^{j+m} (-1)^{n/2} e^{-2 pi i m j / n}` per axis, so each transform is
//! one unnormalized FFT wrapped in checkerboard sign flips. The `(-1)^{n/2}`
//! factor appears once per axis and cancels in two dimensions.
//!
//! Free evolution follows `u(t) = F^{-1}[e^{i t |xi|^2} f^]`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{LabError, Result};
use crate::field::{ComplexField2D, Space};
use crate::grid::Grid2D;

type PlanCache = (FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>);

thread_local! {
    static PLANS: RefCell<PlanCache> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((n, inverse))
            .or_insert_with(|| {
                let dir = if inverse {
                    FftDirection::Inverse
                } else {
                    FftDirection::Forward
                };
                planner.plan_fft(n, dir)
            })
            .clone()
    })
}

/// In-place unnormalized 2D DFT of an `n x n` row-major array.
pub(crate) fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(n) {
        fft.process_with_scratch(row, &mut scratch);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        fft.process_with_scratch(&mut col, &mut scratch);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

fn checkerboard(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            if (i + j) % 2 == 1 {
                data[i * n + j] = -data[i * n + j];
            }
        }
    }
}

pub fn forward_transform(f: &ComplexField2D) -> Result<ComplexField2D> {
    f.require_space(Space::Physical)?;
    let grid = *f.grid();
    let n = grid.n();
    let mut data = f.samples().to_vec();
    checkerboard(&mut data, n);
    fft2(&mut data, n, false);
    checkerboard(&mut data, n);
    let scale = grid.dx().powi(2);
    data.iter_mut().for_each(|z| *z *= scale);
    Ok(ComplexField2D::from_parts(grid, Space::Frequency, data))
}

pub fn inverse_transform(g: &ComplexField2D) -> Result<ComplexField2D> {
    g.require_space(Space::Frequency)?;
    let grid = *g.grid();
    let n = grid.n();
    let mut data = g.samples().to_vec();
    checkerboard(&mut data, n);
    fft2(&mut data, n, true);
    checkerboard(&mut data, n);
    let scale = 1.0 / (n as f64 * grid.dx()).powi(2);
    data.iter_mut().for_each(|z| *z *= scale);
    Ok(ComplexField2D::from_parts(grid, Space::Physical, data))
}

/// Physical-space view of a field regardless of its tag.
pub fn to_physical(f: &ComplexField2D) -> Result<ComplexField2D> {
    match f.space() {
        Space::Physical => Ok(f.clone()),
        Space::Frequency => inverse_transform(f),
    }
}

pub fn to_frequency(f: &ComplexField2D) -> Result<ComplexField2D> {
    match f.space() {
        Space::Physical => forward_transform(f),
        Space::Frequency => Ok(f.clone()),
    }
}

/// Free evolution `e^{it Delta} f` on the periodic grid.
pub fn propagate(f: &ComplexField2D, t: f64) -> Result<ComplexField2D> {
    f.require_space(Space::Physical)?;
    if !t.is_finite() {
        return Err(LabError::InvalidParameter(format!("time must be finite, got {t}")));
    }
    let fhat = forward_transform(f)?;
    let evolved = fhat.map_indexed(|a, b, z| z * Complex64::from_polar(1.0, t * (a * a + b * b)));
    inverse_transform(&evolved)
}

/// Translation `f(x - shift)`, exact for band-limited periodic fields.
pub fn translate(f: &ComplexField2D, shift: [f64; 2]) -> Result<ComplexField2D> {
    f.require_space(Space::Physical)?;
    let fhat = forward_transform(f)?;
    let moved = fhat.map_indexed(|a, b, z| z * Complex64::from_polar(1.0, -(a * shift[0] + b * shift[1])));
    inverse_transform(&moved)
}

/// Modulation `e^{i x.xi0} f(x)`.
pub fn modulate(f: &ComplexField2D, xi0: [f64; 2]) -> Result<ComplexField2D> {
    f.require_space(Space::Physical)?;
    Ok(f.map_indexed(|a, b, z| z * Complex64::from_polar(1.0, a * xi0[0] + b * xi0[1])))
}

/// Real matrix `P` with `(P v)[a] = v~(targets[a])`, where `v~` is the
/// trigonometric interpolant of one axis of samples, zero outside `[-L, L)`.
///
/// The Nyquist mode enters as a cosine, so real data interpolate to real
/// values; at grid points `P` reduces to the identity row.
pub fn interpolation_matrix(grid: &Grid2D, targets: &[f64]) -> DMatrix<f64> {
    let n = grid.n();
    let l = grid.half_width();
    let dxi = grid.dxi();
    let half = n / 2;
    DMatrix::from_fn(targets.len(), n, |a, m| {
        let y = targets[a];
        let tol = 1e-12 * l;
        if y < -l - tol || y >= l - tol {
            return 0.0;
        }
        let d = y - grid.coord(m);
        let mut s = 1.0 + (half as f64 * dxi * d).cos();
        for j in 1..half {
            s += 2.0 * (j as f64 * dxi * d).cos();
        }
        s / n as f64
    })
}

/// `Rows F Cols^T` applied to the physical samples, on `target`.
pub(crate) fn resample(f: &ComplexField2D, rows: &DMatrix<f64>, cols: &DMatrix<f64>, target: Grid2D) -> ComplexField2D {
    let n = f.grid().n();
    let re = DMatrix::from_fn(n, n, |i, j| f.at(i, j).re);
    let im = DMatrix::from_fn(n, n, |i, j| f.at(i, j).im);
    let ct = cols.transpose();
    let out_re = rows * re * &ct;
    let out_im = rows * im * &ct;
    let (r, c) = out_re.shape();
    let samples = (0..r * c)
        .map(|k| Complex64::new(out_re[(k / c, k % c)], out_im[(k / c, k % c)]))
        .collect();
    ComplexField2D::from_parts(target, Space::Physical, samples)
}

/// `L^2`-preserving dilation `lambda f(lambda x)` through the trigonometric
/// interpolant; points mapped outside the box read zero.
pub fn dilate(f: &ComplexField2D, lambda: f64) -> Result<ComplexField2D> {
    f.require_space(Space::Physical)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(LabError::InvalidParameter(format!("dilation must be positive, got {lambda}")));
    }
    let grid = *f.grid();
    let targets: Vec<f64> = grid.coords().iter().map(|&x| lambda * x).collect();
    let p = interpolation_matrix(&grid, &targets);
    Ok(resample(f, &p, &p, grid).scaled(Complex64::new(lambda, 0.0)))
}

/// `e^{A|x|^2 + B.x + C}` sampled on the grid.
pub fn gaussian_field(grid: Grid2D, a: Complex64, b: [Complex64; 2], c: Complex64) -> Result<ComplexField2D> {
    if !(a.re < 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "Gaussian needs Re(A) < 0, got {a}"
        )));
    }
    ComplexField2D::from_fn(grid, Space::Physical, |x1, x2| {
        (a * (x1 * x1 + x2 * x2) + b[0] * x1 + b[1] * x2 + c).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn wrong_space_is_rejected() {
        let g = Grid2D::new(8, 1.0).unwrap();
        let f = ComplexField2D::zeros(g, Space::Frequency);
        assert!(forward_transform(&f).is_err());
        assert!(inverse_transform(&forward_transform(&ComplexField2D::zeros(g, Space::Physical)).unwrap()).is_ok());
        assert!(propagate(&f, 1.0).is_err());
    }

    #[test]
    fn spike_transforms_to_constant() {
        let g = Grid2D::new(16, 3.0).unwrap();
        let mut s = vec![c(0.0); g.len()];
        let mid = g.n() / 2;
        s[mid * g.n() + mid] = c(1.0 / g.dx().powi(2));
        let f = ComplexField2D::new(g, Space::Physical, s).unwrap();
        let fh = forward_transform(&f).unwrap();
        for z in fh.samples() {
            assert!((z - c(1.0)).norm() < 1e-13);
        }
        // the inverse of a constant is the same spike
        let back = inverse_transform(&fh).unwrap();
        assert!(back.relative_distance(&f).unwrap() < 1e-13);
    }

    #[test]
    fn gaussian_pair() {
        let g = Grid2D::new(64, 10.0).unwrap();
        let f = gaussian_field(g, c(-1.0), [c(0.0); 2], c(0.0)).unwrap();
        let fh = forward_transform(&f).unwrap();
        let exact = ComplexField2D::from_fn(g, Space::Frequency, |a, b| c(PI * (-(a * a + b * b) / 4.0).exp())).unwrap();
        let err = fh.sub(&exact).unwrap().max_abs();
        assert!(err <= 1e-10, "max error {err}");
        let back = inverse_transform(&exact).unwrap();
        assert!(back.sub(&f).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn gaussian_free_evolution() {
        // e^{-|x|^2} evolves to e^{-|x|^2/(1-4it)} / (1-4it) under e^{i t |xi|^2}.
        let g = Grid2D::new(128, 12.0).unwrap();
        let f = gaussian_field(g, c(-1.0), [c(0.0); 2], c(0.0)).unwrap();
        let t = 0.5;
        let u = propagate(&f, t).unwrap();
        let d = Complex64::new(1.0, -4.0 * t);
        let exact = ComplexField2D::from_fn(g, Space::Physical, |a, b| (-(a * a + b * b) / d).exp() / d).unwrap();
        let err = u.sub(&exact).unwrap().max_abs();
        assert!(err <= 1e-8, "max error {err}");
    }

    #[test]
    fn shifted_gaussian_peak() {
        let g = Grid2D::new(32, 4.0).unwrap();
        let f = gaussian_field(g, c(-1.0), [c(2.0), c(0.0)], c(-1.0)).unwrap();
        let (k, z) = f
            .samples()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        assert!((g.coord(k / g.n()) - 1.0).abs() < 1e-12);
        assert!(g.coord(k % g.n()).abs() < 1e-12);
        assert!((z.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chirped_gaussian_modulus() {
        let g = Grid2D::new(16, 3.0).unwrap();
        let f = gaussian_field(g, Complex64::new(-1.0, 0.5), [c(0.0); 2], c(0.0)).unwrap();
        let k = 3 * g.n() + 11;
        let (x1, x2) = (g.coord(3), g.coord(11));
        assert!((f.samples()[k].norm() - (-(x1 * x1 + x2 * x2)).exp()).abs() < 1e-15);
        assert!(gaussian_field(g, Complex64::new(0.0, 1.0), [c(0.0); 2], c(0.0)).is_err());
    }

    #[test]
    fn dilation_of_gaussian() {
        let g = Grid2D::new(64, 10.0).unwrap();
        let f = gaussian_field(g, c(-1.0), [c(0.0); 2], c(0.0)).unwrap();
        let d = dilate(&f, 1.3).unwrap();
        let exact = gaussian_field(g, c(-1.69), [c(0.0); 2], c(1.3f64.ln())).unwrap();
        assert!(d.sub(&exact).unwrap().max_abs() < 1e-10);
        assert!((d.l2_norm() - f.l2_norm()).abs() < 1e-10);
        let same = dilate(&f, 1.0).unwrap();
        assert!(same.sub(&f).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn translation_moves_peak() {
        let g = Grid2D::new(64, 6.0).unwrap();
        let f = gaussian_field(g, c(-1.0), [c(0.0); 2], c(0.0)).unwrap();
        let shifted = translate(&f, [0.3, -1.1]).unwrap();
        let exact = ComplexField2D::from_fn(g, Space::Physical, |a, b| c((-((a - 0.3).powi(2) + (b + 1.1).powi(2))).exp())).unwrap();
        assert!(shifted.sub(&exact).unwrap().max_abs() < 1e-10);
    }
}
