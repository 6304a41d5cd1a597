//! Gaussian characterization through rectangles: `f(x) f(y) = f(w) f(z)`
//! whenever `x, w, y, z` are the corners of a rectangle, and the quadratic
//! fit of `log f`.
//!
//! Off-grid values come from the trigonometric interpolant of the samples.
//! Phases are unwrapped by a breadth-first walk from the peak over the region
//! `|f| >= floor`; an off-grid vertex takes the branch of its nearest
//! reached grid node.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ComplexField2D, Space};
use crate::grid::Grid2D;
use crate::rng;

/// Guard in the denominator of the functional-equation residual.
pub const RESIDUAL_GUARD: f64 = 1e-300;
/// Vertices with `|f| < VERTEX_FLOOR max|f|` are not evaluated.
pub const VERTEX_FLOOR: f64 = 1e-10;
/// Default region threshold for the quadratic fit.
pub const FIT_THRESHOLD: f64 = 1e-6;
pub const MIN_FIT_POINTS: usize = 100;

/// Corners `x, w, y, z` of a rectangle with `x` and `y` opposite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectangleQuadruple {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub w: [f64; 2],
    pub z: [f64; 2],
}

impl RectangleQuadruple {
    /// `x = a, w = a + u, z = a + v, y = a + u + v` with `u . v = 0`.
    pub fn from_edges(a: [f64; 2], u: [f64; 2], v: [f64; 2]) -> Self {
        Self {
            x: a,
            w: [a[0] + u[0], a[1] + u[1]],
            z: [a[0] + v[0], a[1] + v[1]],
            y: [a[0] + u[0] + v[0], a[1] + u[1] + v[1]],
        }
    }

    pub fn vertices(&self) -> [[f64; 2]; 4] {
        [self.x, self.y, self.w, self.z]
    }

    /// `(sum mismatch, energy mismatch, perpendicularity defect)`.
    pub fn defects(&self) -> (f64, f64, f64) {
        let n2 = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
        let sum = (self.x[0] + self.y[0] - self.w[0] - self.z[0])
            .abs()
            .max((self.x[1] + self.y[1] - self.w[1] - self.z[1]).abs());
        let energy = (n2(self.x) + n2(self.y) - n2(self.w) - n2(self.z)).abs();
        let u = [self.w[0] - self.x[0], self.w[1] - self.x[1]];
        let v = [self.z[0] - self.x[0], self.z[1] - self.x[1]];
        (sum, energy, (u[0] * v[0] + u[1] * v[1]).abs())
    }

    /// The three tolerance checks of a valid rectangle.
    pub fn is_valid(&self) -> bool {
        let n2 = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
        let (sum, energy, perp) = self.defects();
        let u = n2([self.w[0] - self.x[0], self.w[1] - self.x[1]]).sqrt();
        let v = n2([self.z[0] - self.x[0], self.z[1] - self.x[1]]).sqrt();
        sum == 0.0 && energy <= 1e-12 * (n2(self.x) + n2(self.y) + 1.0) && perp <= 1e-12 * (u * v + 1.0)
    }
}

fn snap(v: f64, bits: i32) -> f64 {
    let q = 2f64.powi(bits);
    (v * q).round() / q
}

/// Random rectangle with center `a ~ center_scale N(0, I)`, first edge of
/// length in `[0.2, 1] edge_scale`, second edge perpendicular with an
/// independent length in the same range.
///
/// `a` and `u` sit on the `2^-24` lattice and `v = k (-u_2, u_1)` with `k` on
/// the `2^-12` lattice, so every coordinate sum is exact in floating point.
pub fn random_rectangle(center_scale: f64, edge_scale: f64, seed: u64) -> Result<RectangleQuadruple> {
    if !(center_scale.is_finite() && center_scale > 0.0 && edge_scale.is_finite() && edge_scale > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "rectangle scales must be positive, got {center_scale} and {edge_scale}"
        )));
    }
    let mut r = rng::stream(seed, 0);
    let a = [
        snap(center_scale * rng::normal(&mut r), 24),
        snap(center_scale * rng::normal(&mut r), 24),
    ];
    let ang = r.gen_range(0.0..2.0 * PI);
    let len_u = edge_scale * r.gen_range(0.2..1.0);
    let u = [snap(len_u * ang.cos(), 24), snap(len_u * ang.sin(), 24)];
    let u_len = u[0].hypot(u[1]);
    let len_v = edge_scale * r.gen_range(0.2..1.0);
    let sign = if r.gen::<bool>() { 1.0 } else { -1.0 };
    let mut k = snap(sign * len_v / u_len.max(f64::MIN_POSITIVE), 12);
    if k == 0.0 {
        k = sign * 2f64.powi(-12);
    }
    Ok(RectangleQuadruple::from_edges(a, u, [-k * u[1], k * u[0]]))
}

pub fn random_rectangles(center_scale: f64, edge_scale: f64, count: usize, seed: u64) -> Result<Vec<RectangleQuadruple>> {
    (0..count as u64)
        .map(|k| random_rectangle(center_scale, edge_scale, seed.wrapping_mul(0x9E37_79B9).wrapping_add(k)))
        .collect()
}

/// One-axis weights of the trigonometric interpolant at `y`: the Dirichlet
/// kernel with the Nyquist mode taken as a cosine.
fn axis_weights(grid: &Grid2D, y: f64) -> Vec<f64> {
    let n = grid.n();
    let h = (n / 2) as f64;
    let dx = grid.dx();
    let pos = (y + grid.half_width()) / dx;
    let nearest = pos.round();
    if (pos - nearest).abs() <= 1e-12 * n as f64 {
        let mut w = vec![0.0; n];
        w[(nearest as usize) % n] = 1.0;
        return w;
    }
    (0..n)
        .map(|m| {
            let theta = grid.dxi() * (y - grid.coord(m));
            let half = 0.5 * theta;
            ((h * theta).cos() + ((h - 0.5) * theta).sin() / half.sin()) / n as f64
        })
        .collect()
}

fn interpolate_unchecked(f: &ComplexField2D, point: [f64; 2]) -> Complex64 {
    let grid = f.grid();
    let n = grid.n();
    let a = axis_weights(grid, point[0]);
    let b = axis_weights(grid, point[1]);
    let samples = f.samples();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let row = &samples[i * n..(i + 1) * n];
        let s: Complex64 = row.iter().zip(&b).map(|(z, &bj)| z * bj).sum();
        acc += s * ai;
    }
    acc
}

/// Value of the trigonometric interpolant of a physical field at `point`.
pub fn spectral_interpolate(f: &ComplexField2D, point: [f64; 2]) -> Result<Complex64> {
    f.require_space(Space::Physical)?;
    if !(point.iter().all(|p| p.is_finite()) && f.grid().contains(point)) {
        return Err(LabError::OutsideDomain { x: point[0], y: point[1] });
    }
    Ok(interpolate_unchecked(f, point))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualStats {
    pub rms: f64,
    pub max: f64,
    pub evaluated: usize,
    pub skipped: usize,
    /// Per quadruple, `None` when skipped.
    pub per_quadruple: Vec<Option<f64>>,
}

fn summarize(per_quadruple: Vec<Option<f64>>) -> ResidualStats {
    let vals: Vec<f64> = per_quadruple.iter().flatten().copied().collect();
    let evaluated = vals.len();
    let (rms, max) = if evaluated == 0 {
        (0.0, 0.0)
    } else {
        (
            (vals.iter().map(|v| v * v).sum::<f64>() / evaluated as f64).sqrt(),
            vals.iter().copied().fold(0.0, f64::max),
        )
    };
    ResidualStats {
        rms,
        max,
        evaluated,
        skipped: per_quadruple.len() - evaluated,
        per_quadruple,
    }
}

/// Interpolated vertex values, or `None` if a vertex is outside the box or
/// below the floor.
fn vertex_values(f: &ComplexField2D, q: &RectangleQuadruple, floor: f64) -> Option<[Complex64; 4]> {
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (o, v) in out.iter_mut().zip(q.vertices()) {
        if !f.grid().contains(v) {
            return None;
        }
        *o = interpolate_unchecked(f, v);
        if o.norm() < floor {
            return None;
        }
    }
    Some(out)
}

/// `|f(x) f(y) - f(w) f(z)| / (|f(x) f(y)| + |f(w) f(z)| + guard)` over the
/// quadruples.
pub fn functional_equation_residual(f: &ComplexField2D, quadruples: &[RectangleQuadruple]) -> Result<ResidualStats> {
    f.require_space(Space::Physical)?;
    f.require_nonzero()?;
    let floor = VERTEX_FLOOR * f.max_abs();
    let per: Vec<Option<f64>> = quadruples
        .par_iter()
        .map(|q| {
            vertex_values(f, q, floor).map(|[fx, fy, fw, fz]| {
                let l = fx * fy;
                let r = fw * fz;
                (l - r).norm() / (l.norm() + r.norm() + RESIDUAL_GUARD)
            })
        })
        .collect();
    Ok(summarize(per))
}

/// Phase unwrapped over the region `|f| >= floor` reachable from the peak
/// through 4-neighbours; `None` outside it.
fn unwrapped_phase(f: &ComplexField2D, floor: f64) -> Vec<Option<f64>> {
    let n = f.grid().n();
    let s = f.samples();
    let mut out = vec![None; n * n];
    let start = (0..n * n)
        .max_by(|&a, &b| s[a].norm().total_cmp(&s[b].norm()))
        .expect("grid is nonempty");
    out[start] = Some(s[start].arg());
    let mut queue = VecDeque::from([start]);
    while let Some(k) = queue.pop_front() {
        let (i, j) = (k / n, k % n);
        let base = out[k].expect("queued nodes are assigned");
        let mut visit = |ii: usize, jj: usize| {
            let m = ii * n + jj;
            if out[m].is_none() && s[m].norm() >= floor {
                out[m] = Some(base + wrap(s[m].arg() - base));
                queue.push_back(m);
            }
        };
        if i > 0 {
            visit(i - 1, j);
        }
        if i + 1 < n {
            visit(i + 1, j);
        }
        if j > 0 {
            visit(i, j - 1);
        }
        if j + 1 < n {
            visit(i, j + 1);
        }
    }
    out
}

/// Representative of `a` modulo `2 pi` in `(-pi, pi]`.
fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn nearest_index(grid: &Grid2D, p: [f64; 2]) -> usize {
    let n = grid.n();
    let idx = |c: f64| (((c + grid.half_width()) / grid.dx()).round().max(0.0) as usize).min(n - 1);
    idx(p[0]) * n + idx(p[1])
}

/// `|log f(x) + log f(y) - log f(w) - log f(z)|` with the phase part reduced
/// modulo `2 pi`, using log-modulus plus the locally unwrapped phase.
pub fn second_difference_test(f: &ComplexField2D, quadruples: &[RectangleQuadruple]) -> Result<ResidualStats> {
    f.require_space(Space::Physical)?;
    f.require_nonzero()?;
    let floor = VERTEX_FLOOR * f.max_abs();
    let phase = unwrapped_phase(f, floor);
    let grid = *f.grid();
    let per: Vec<Option<f64>> = quadruples
        .par_iter()
        .map(|q| {
            let vals = vertex_values(f, q, floor)?;
            let mut logs = [Complex64::new(0.0, 0.0); 4];
            for ((l, z), v) in logs.iter_mut().zip(vals).zip(q.vertices()) {
                let anchor = phase[nearest_index(&grid, v)]?;
                *l = Complex64::new(z.norm().ln(), anchor + wrap(z.arg() - anchor));
            }
            let d = logs[0] + logs[1] - logs[2] - logs[3];
            Some(d.re.hypot(wrap(d.im)))
        })
        .collect();
    Ok(summarize(per))
}

/// `log f ~ A |x|^2 + B.x + C` together with the departures from that form.
///
/// `a11, a22, a12` are the entries of the fitted complex quadratic form
/// `a11 x1^2 + 2 a12 x1 x2 + a22 x2^2`; `A = (a11 + a22) / 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticFit {
    #[serde(rename = "A")]
    pub a: Complex64,
    #[serde(rename = "B")]
    pub b: [Complex64; 2],
    #[serde(rename = "C")]
    pub c: Complex64,
    /// `|a11 - a22| / |A|`.
    pub anisotropy: f64,
    /// `|a12| / |A|`.
    pub cross: f64,
    /// RMS of the complex log residual over the region.
    pub residual_rms: f64,
    pub points: usize,
    pub threshold: f64,
}

impl QuadraticFit {
    /// Gaussian verdict at the given diagnostic tolerances.
    pub fn is_gaussian(&self, shape_tol: f64, residual_tol: f64) -> bool {
        self.a.re < 0.0 && self.anisotropy <= shape_tol && self.cross <= shape_tol && self.residual_rms <= residual_tol
    }
}

/// Least squares of log-modulus and unwrapped phase against
/// `{1, x1, x2, x1^2, x2^2, x1 x2}` over `|f| >= threshold max|f|`.
pub fn quadratic_log_fit(f: &ComplexField2D, threshold: f64) -> Result<QuadraticFit> {
    f.require_space(Space::Physical)?;
    f.require_nonzero()?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(LabError::InvalidParameter(format!("fit threshold must lie in (0, 1), got {threshold}")));
    }
    let grid = *f.grid();
    let n = grid.n();
    let phase = unwrapped_phase(f, threshold * f.max_abs());
    let pts: Vec<(f64, f64, f64, f64)> = (0..n * n)
        .filter_map(|k| {
            let ph = phase[k]?;
            Some((grid.coord(k / n), grid.coord(k % n), f.samples()[k].norm().ln(), ph))
        })
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(LabError::Fit(format!(
            "{} points above the threshold, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let basis = DMatrix::from_fn(pts.len(), 6, |r, c| {
        let (x1, x2) = (pts[r].0, pts[r].1);
        [1.0, x1, x2, x1 * x1, x2 * x2, x1 * x2][c]
    });
    let svd = basis.clone().svd(true, true);
    let solve = |rhs: DVector<f64>| -> Result<DVector<f64>> {
        svd.solve(&rhs, 1e-14).map_err(|e| LabError::Fit(e.to_string()))
    };
    let re = solve(DVector::from_iterator(pts.len(), pts.iter().map(|p| p.2)))?;
    let im = solve(DVector::from_iterator(pts.len(), pts.iter().map(|p| p.3)))?;
    let coef = |k: usize| Complex64::new(re[k], im[k]);
    let (a11, a22, a12) = (coef(3), coef(4), 0.5 * coef(5));
    let a = 0.5 * (a11 + a22);
    let fit_re = &basis * &re;
    let fit_im = &basis * &im;
    let ss: f64 = pts
        .iter()
        .enumerate()
        .map(|(r, p)| (p.2 - fit_re[r]).powi(2) + (p.3 - fit_im[r]).powi(2))
        .sum();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    Ok(QuadraticFit {
        a,
        b: [coef(1), coef(2)],
        c: coef(0),
        anisotropy: (a11 - a22).norm() / scale,
        cross: a12.norm() / scale,
        residual_rms: (ss / pts.len() as f64).sqrt(),
        points: pts.len(),
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::gaussian_field;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn gauss(grid: Grid2D) -> ComplexField2D {
        gaussian_field(grid, c(-1.0, 0.3), [c(0.5, 0.0), c(0.0, -0.2)], c(0.1, 0.0)).unwrap()
    }

    #[test]
    fn constructed_rectangles_are_exact() {
        for seed in 0..20_000 {
            let q = random_rectangle(2.0, 1.5, seed).unwrap();
            assert!(q.is_valid(), "{q:?}");
        }
        let sym = RectangleQuadruple {
            x: [1.0, 0.0],
            y: [-1.0, 0.0],
            w: [0.0, 1.0],
            z: [0.0, -1.0],
        };
        assert!(sym.is_valid());
        let sq = RectangleQuadruple::from_edges([0.0, 0.0], [0.5, 0.0], [0.0, 0.5]);
        assert_eq!(sq.y, [0.5, 0.5]);
        assert!(random_rectangle(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn interpolation_reproduces_samples_and_plane_waves() {
        let g = Grid2D::new(32, 4.0).unwrap();
        let wave = |x: f64, y: f64| Complex64::from_polar(1.0, 3.0 * g.dxi() * x - 5.0 * g.dxi() * y);
        let f = ComplexField2D::from_fn(g, Space::Physical, wave).unwrap();
        assert_eq!(spectral_interpolate(&f, [g.coord(3), g.coord(17)]).unwrap(), f.at(3, 17));
        for p in [[0.123, -1.77], [3.9, -4.0], [-2.5, 2.25 + 1e-3]] {
            let z = spectral_interpolate(&f, p).unwrap();
            assert!((z - wave(p[0], p[1])).norm() < 1e-10, "{p:?}");
        }
        let one = ComplexField2D::from_fn(g, Space::Physical, |_, _| c(2.0, -1.0)).unwrap();
        assert!((spectral_interpolate(&one, [0.31, 0.77]).unwrap() - c(2.0, -1.0)).norm() < 1e-12);
        assert!(spectral_interpolate(&f, [4.0, 0.0]).is_err());
    }

    #[test]
    fn gaussian_passes_rectangle_tests() {
        let g = Grid2D::new(64, 8.0).unwrap();
        let f = gauss(g);
        let qs = random_rectangles(0.7, 1.0, 2000, 5).unwrap();
        let fe = functional_equation_residual(&f, &qs).unwrap();
        assert!(fe.evaluated > 1500);
        assert!(fe.max <= 1e-6, "{}", fe.max);
        let sd = second_difference_test(&f, &qs).unwrap();
        assert!(sd.rms <= 1e-6, "{}", sd.rms);
        let degenerate = RectangleQuadruple::from_edges([0.3, 0.1], [0.0, 0.0], [0.0, 0.0]);
        let d = functional_equation_residual(&f, &[degenerate]).unwrap();
        assert_eq!(d.max, 0.0);
    }

    #[test]
    fn non_gaussians_fail_rectangle_tests() {
        let g = Grid2D::new(64, 8.0).unwrap();
        let quartic = ComplexField2D::from_fn(g, Space::Physical, |x, y| c((-(x * x + y * y).powi(2)).exp(), 0.0)).unwrap();
        let qs = random_rectangles(0.7, 1.0, 2000, 5).unwrap();
        assert!(functional_equation_residual(&quartic, &qs).unwrap().rms >= 1e-2);
        let mut r = rng::stream(9, 0);
        let base = gauss(g);
        let noise: Vec<Complex64> = base
            .samples()
            .iter()
            .map(|z| z * Complex64::from_polar(1.0, 0.1 * rng::normal(&mut r)))
            .collect();
        let noisy = ComplexField2D::new(g, Space::Physical, noise).unwrap();
        assert!(second_difference_test(&noisy, &qs).unwrap().rms >= 0.05);
    }

    #[test]
    fn quadratic_fit_recovers_generating_model() {
        let g = Grid2D::new(64, 8.0).unwrap();
        let fit = quadratic_log_fit(&gauss(g), FIT_THRESHOLD).unwrap();
        assert!((fit.a - c(-1.0, 0.3)).norm() < 1e-6, "{:?}", fit.a);
        assert!((fit.b[0] - c(0.5, 0.0)).norm() < 1e-6);
        assert!((fit.b[1] - c(0.0, -0.2)).norm() < 1e-6);
        assert!((fit.c - c(0.1, 0.0)).norm() < 1e-6);
        assert!(fit.anisotropy <= 1e-8 && fit.cross <= 1e-8);
        assert!(fit.is_gaussian(1e-3, 1e-4));

        let aniso = ComplexField2D::from_fn(g, Space::Physical, |x, y| c((-x * x - 2.0 * y * y).exp(), 0.0)).unwrap();
        let fit = quadratic_log_fit(&aniso, FIT_THRESHOLD).unwrap();
        assert!((fit.anisotropy - 1.0 / 1.5).abs() < 1e-6);
        assert!(!fit.is_gaussian(1e-3, 1e-4));

        let tiny = ComplexField2D::from_fn(g, Space::Physical, |x, y| c((-40.0 * (x * x + y * y)).exp(), 0.0)).unwrap();
        assert!(quadratic_log_fit(&tiny, FIT_THRESHOLD).is_err());
    }
}
