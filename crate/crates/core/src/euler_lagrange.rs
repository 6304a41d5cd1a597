//! The Euler-Lagrange operator `T` with `<g, T(f)> = Q(g, f, f, f)` and a
//! power iteration for its normalized fixed points.
//!
//! Inner products are conjugate-linear in the first slot, which matches the
//! conjugated first two slots of `Q`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ComplexField2D, Space};
use crate::functional::{random_localized_field, FieldKind, C_Q};
use crate::grid::Grid2D;
use crate::quadrature::TimeQuadrature;
use crate::rng;
use crate::spacetime::SpaceTime;
use crate::transform::{dilate, forward_transform, gaussian_field, modulate, propagate, to_physical, translate};

/// Second moment `int |x|^2 |f|^2 / ||f||^2` of `e^{-|x|^2}`.
pub const REFERENCE_SECOND_MOMENT: f64 = 0.5;

/// Highest oscillator level mixed into random initial fields.
pub const INIT_MAX_LEVEL: usize = 6;

/// `T(f) = C_Q int e^{-it Delta}(|u|^2 u)(t) dt`, `u(t) = e^{it Delta} f`.
pub fn apply_el_operator(f: &ComplexField2D, tq: &TimeQuadrature) -> Result<ComplexField2D> {
    f.require_nonzero()?;
    let st = SpaceTime::new(f.grid(), tq);
    Ok(st.cubic_gradient(f)?.scaled(Complex64::new(C_Q, 0.0)))
}

/// `omega = Q(f, f, f, f) / ||f||^2 = C_Q Phi(f) ||f||^2`.
pub fn omega_of(f: &ComplexField2D, tq: &TimeQuadrature) -> Result<f64> {
    f.require_nonzero()?;
    let phys = to_physical(f)?;
    let st = SpaceTime::new(f.grid(), tq);
    Ok(C_Q * st.l4_fourth(&phys)? / phys.norm_sq())
}

#[derive(Debug, Clone)]
struct Step {
    t_f: ComplexField2D,
    omega: f64,
    residual: f64,
}

fn step(f: &ComplexField2D, st: &SpaceTime) -> Result<Step> {
    let t_f = st.cubic_gradient(f)?.scaled(Complex64::new(C_Q, 0.0));
    let norm_sq = f.norm_sq();
    let omega = f.inner(&t_f)?.re / norm_sq;
    let residual = t_f.sub(&f.scaled(Complex64::new(omega, 0.0)))?.l2_norm() / (omega * norm_sq.sqrt());
    Ok(Step { t_f, omega, residual })
}

/// `||T(f) - omega f|| / (omega ||f||)`.
pub fn el_residual(f: &ComplexField2D, tq: &TimeQuadrature) -> Result<f64> {
    f.require_nonzero()?;
    let phys = to_physical(f)?;
    Ok(step(&phys, &SpaceTime::new(f.grid(), tq))?.residual)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[serde(alias = "random")]
    RandomComplex,
    RandomReal,
    PerturbedGaussian,
}

/// Seeded starting field. Random kinds mix the oscillator levels up to
/// `INIT_MAX_LEVEL`; the perturbed Gaussian is
/// `e^{-|x|^2} + 0.3 ||e^{-|x|^2}|| p` with `p` a unit odd field `(c.x) e^{-|x|^2}`.
pub fn initial_field(grid: &Grid2D, init: InitKind, seed: u64) -> Result<ComplexField2D> {
    match init {
        InitKind::RandomComplex => random_localized_field(grid, INIT_MAX_LEVEL, FieldKind::Complex, seed),
        InitKind::RandomReal => random_localized_field(grid, INIT_MAX_LEVEL, FieldKind::Real, seed),
        InitKind::PerturbedGaussian => {
            let base = gaussian_field(*grid, Complex64::new(-1.0, 0.0), [Complex64::new(0.0, 0.0); 2], Complex64::new(0.0, 0.0))?;
            let mut r = rng::stream(seed, 1);
            let c = [rng::complex_normal(&mut r), rng::complex_normal(&mut r)];
            let odd = base.map_indexed(|a, b, z| z * (c[0] * a + c[1] * b)).normalized()?;
            base.add(&odd.scaled(Complex64::new(0.3 * base.l2_norm(), 0.0)))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Residual tolerance.
    pub tol: f64,
    /// Relative change of `omega` between iterations.
    pub omega_tol: f64,
    pub renormalize_scale: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-7,
            omega_tol: 1e-10,
            renormalize_scale: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtremizerReport {
    #[serde(skip)]
    pub field: ComplexField2D,
    pub omega: f64,
    pub phi: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub phi_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
}

/// Relative drop of `phi` that counts towards the divergence guard.
const DROP_TOL: f64 = 1e-6;
const DROP_LIMIT: usize = 3;

/// `f <- T(f) / ||T(f)||` until the residual is at most `tol` and `omega`
/// has settled to `omega_tol`.
pub fn power_iterate(f0: &ComplexField2D, tq: &TimeQuadrature, cfg: &SolverConfig) -> Result<ExtremizerReport> {
    f0.require_nonzero()?;
    if cfg.max_iter == 0 || !(cfg.tol > 0.0) || !(cfg.omega_tol > 0.0) {
        return Err(LabError::InvalidParameter("solver needs max_iter >= 1 and positive tolerances".into()));
    }
    let st = SpaceTime::new(f0.grid(), tq);
    let mut f = to_physical(f0)?.normalized()?;
    if cfg.renormalize_scale {
        f = renormalize(&f)?;
    }
    let mut phi_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut prev_omega: Option<f64> = None;
    let mut drops = 0;
    for it in 0..cfg.max_iter {
        let s = step(&f, &st)?;
        let phi = s.omega / C_Q;
        if let Some(&last) = phi_trace.last() {
            if phi < last * (1.0 - DROP_TOL) {
                drops += 1;
                if drops >= DROP_LIMIT {
                    return Err(LabError::Divergence {
                        step: it,
                        detail: format!("phi fell for {DROP_LIMIT} consecutive steps, from {last:.12e} to {phi:.12e}"),
                    });
                }
            } else {
                drops = 0;
            }
        }
        phi_trace.push(phi);
        residual_trace.push(s.residual);
        let settled = prev_omega.is_some_and(|w| ((s.omega - w) / s.omega).abs() <= cfg.omega_tol);
        if s.residual <= cfg.tol && settled {
            return Ok(ExtremizerReport {
                field: f,
                omega: s.omega,
                phi,
                residual: s.residual,
                iterations: it + 1,
                converged: true,
                phi_trace,
                residual_trace,
            });
        }
        prev_omega = Some(s.omega);
        f = s.t_f.normalized()?;
        if cfg.renormalize_scale {
            f = renormalize(&f)?;
        }
    }
    let s = step(&f, &st)?;
    Ok(ExtremizerReport {
        field: f,
        omega: s.omega,
        phi: s.omega / C_Q,
        residual: s.residual,
        iterations: cfg.max_iter,
        converged: false,
        phi_trace,
        residual_trace,
    })
}

/// Moves `f` along the symmetry orbit of the functional to zero mean
/// frequency, zero time offset, zero mean position and the second moment of
/// `e^{-|x|^2}`. Only the representative changes, not the value of `Phi`.
pub fn renormalize(f: &ComplexField2D) -> Result<ComplexField2D> {
    let f = to_physical(f)?;
    f.require_nonzero()?;
    let fh = forward_transform(&f)?;
    let xi_bar = first_moment(&fh);
    let mut g = modulate(&f, [-xi_bar[0], -xi_bar[1]])?;
    let t_star = time_center(&g)?;
    if t_star != 0.0 {
        g = propagate(&g, t_star)?;
    }
    let x_bar = first_moment(&g);
    g = translate(&g, [-x_bar[0], -x_bar[1]])?;
    let m2 = second_moment(&g);
    dilate(&g, (m2 / REFERENCE_SECOND_MOMENT).sqrt())
}

fn weighted_sum(f: &ComplexField2D, w: impl Fn(f64, f64) -> f64) -> f64 {
    let grid = f.grid();
    let coord = |i: usize| match f.space() {
        Space::Physical => grid.coord(i),
        Space::Frequency => grid.freq(i),
    };
    let n = grid.n();
    let mut s = 0.0;
    for i in 0..n {
        let a = coord(i);
        for j in 0..n {
            s += w(a, coord(j)) * f.at(i, j).norm_sqr();
        }
    }
    s
}

fn first_moment(f: &ComplexField2D) -> [f64; 2] {
    let m = weighted_sum(f, |_, _| 1.0);
    [weighted_sum(f, |a, _| a) / m, weighted_sum(f, |_, b| b) / m]
}

fn second_moment(f: &ComplexField2D) -> f64 {
    weighted_sum(f, |a, b| a * a + b * b) / weighted_sum(f, |_, _| 1.0)
}

/// Time at which the second moment of the free evolution is smallest. The
/// moment is an exact quadratic in `t`, so three samples determine it.
fn time_center(f: &ComplexField2D) -> Result<f64> {
    let h = 0.05;
    let m0 = second_moment(f);
    let mp = second_moment(&propagate(f, h)?);
    let mm = second_moment(&propagate(f, -h)?);
    let curv = mp - 2.0 * m0 + mm;
    if !(curv > 0.0) {
        return Ok(0.0);
    }
    Ok(-h * (mp - mm) / (2.0 * curv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::quadrilinear_time_domain;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn setup(n: usize, l: f64, k: usize) -> (Grid2D, TimeQuadrature) {
        let g = Grid2D::new(n, l).unwrap();
        let tq = TimeQuadrature::for_grid(&g, k).unwrap();
        (g, tq)
    }

    #[test]
    fn adjoint_identity() {
        for (n, l) in [(16, 5.0), (64, 10.0)] {
            let (g, tq) = setup(n, l, 33);
            let f = random_localized_field(&g, 3, FieldKind::Complex, 1).unwrap();
            let h = random_localized_field(&g, 3, FieldKind::Complex, 2).unwrap();
            let lhs = h.inner(&apply_el_operator(&f, &tq).unwrap()).unwrap();
            let rhs = quadrilinear_time_domain(&h, &f, &f, &f, &tq).unwrap().value;
            assert!((lhs - rhs).norm() < 1e-10 * rhs.norm(), "n={n}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn homogeneity_and_omega_scaling() {
        let (g, tq) = setup(32, 6.0, 33);
        let f = random_localized_field(&g, 3, FieldKind::Complex, 3).unwrap();
        let lam = Complex64::new(0.0, 2.0);
        let t1 = apply_el_operator(&f.scaled(lam), &tq).unwrap();
        let t0 = apply_el_operator(&f, &tq).unwrap().scaled(lam * lam.norm_sqr());
        assert!(t1.relative_distance(&t0).unwrap() < 1e-12);
        let w1 = omega_of(&f, &tq).unwrap();
        let w2 = omega_of(&f.scaled(c(2.0)), &tq).unwrap();
        assert!((w2 - 4.0 * w1).abs() < 1e-12 * w2);
    }

    #[test]
    fn gaussian_is_an_eigenfunction() {
        let (g, tq) = setup(128, 12.0, 129);
        let f = gaussian_field(g, c(-1.0), [c(0.0); 2], c(0.0)).unwrap().normalized().unwrap();
        let t = apply_el_operator(&f, &tq).unwrap();
        let cos = f.inner(&t).unwrap().norm() / (f.l2_norm() * t.l2_norm());
        assert!(cos >= 1.0 - 1e-6);
        assert!(el_residual(&f, &tq).unwrap() <= 1e-5);
        let w = omega_of(&f, &tq).unwrap();
        assert!((w - C_Q * 0.25).abs() < 1e-4 * w, "{w}");
    }

    #[test]
    fn random_field_is_not_a_solution() {
        let (g, tq) = setup(64, 10.0, 65);
        let f = initial_field(&g, InitKind::RandomComplex, 42).unwrap();
        assert!(el_residual(&f, &tq).unwrap() > 0.1);
    }

    #[test]
    fn gaussian_start_converges_fast() {
        let (g, tq) = setup(64, 10.0, 129);
        let f = gaussian_field(g, c(-1.0), [c(0.0); 2], c(0.0)).unwrap();
        let cfg = SolverConfig {
            max_iter: 5,
            tol: 1e-6,
            omega_tol: 1e-10,
            renormalize_scale: false,
        };
        let r = power_iterate(&f, &tq, &cfg).unwrap();
        assert!(r.converged, "{:?}", r.residual_trace);
        assert!(r.residual <= 1e-6);
    }

    #[test]
    fn renormalize_centers_a_moving_gaussian() {
        let g = Grid2D::new(64, 10.0).unwrap();
        let f = gaussian_field(g, Complex64::new(-0.6, 0.4), [Complex64::new(0.8, 0.9), Complex64::new(-0.3, -0.5)], c(0.0)).unwrap();
        let r = renormalize(&f).unwrap();
        let x = first_moment(&r);
        let xi = first_moment(&forward_transform(&r).unwrap());
        assert!(x[0].abs() < 1e-8 && x[1].abs() < 1e-8, "{x:?}");
        assert!(xi[0].abs() < 1e-8 && xi[1].abs() < 1e-8, "{xi:?}");
        // centered, unchirped and rescaled: back to the unit Gaussian up to phase
        let target = gaussian_field(g, c(-1.0), [c(0.0); 2], c(0.0)).unwrap().normalized().unwrap();
        let overlap = target.inner(&r.normalized().unwrap()).unwrap().norm();
        assert!(overlap > 1.0 - 1e-8, "{overlap}");
    }
}
