//! The Strichartz ratio and the quadrilinear form
//!
//! ```text
//! Q(f1, f2, f3, f4) = int conj(f1^)(xi1) conj(f2^)(xi2) f3^(xi3) f4^(xi4)
//!                     delta(xi1 + xi2 - xi3 - xi4) delta(|xi1|^2 + |xi2|^2 - |xi3|^2 - |xi4|^2) dxi
//! ```
//!
//! # The constant `C_Q`
//!
//! With `u_j(t) = (2 pi)^{-2} int e^{i x.xi + i t |xi|^2} f_j^(xi) dxi`,
//!
//! ```text
//! int int conj(u1) conj(u2) u3 u4 dx dt
//!   = (2 pi)^{-8} int conj(f1^) conj(f2^) f3^ f4^
//!       [int e^{i x.(xi3 + xi4 - xi1 - xi2)} dx] [int e^{i t (|xi3|^2 + |xi4|^2 - |xi1|^2 - |xi2|^2)} dt]
//! ```
//!
//! and `int e^{i x.k} dx = (2 pi)^2 delta(k)`, `int e^{i t w} dt = 2 pi delta(w)`, so the
//! space-time integral is `(2 pi)^{-5} Q`. Hence `Q = C_Q int int conj(u1) conj(u2) u3 u4`
//! with `C_Q = (2 pi)^5`.
//!
//! # Circle reduction
//!
//! Fix `xi1, xi2`, put `sigma = xi1 + xi2`, `r = |xi1 - xi2| / 2` and `xi3 = sigma/2 + eta`.
//! Then `|xi3|^2 + |sigma - xi3|^2 = |sigma|^2/2 + 2|eta|^2` and
//! `|xi1|^2 + |xi2|^2 = |sigma|^2/2 + 2 r^2`, so the energy delta is `delta(2 (r^2 - |eta|^2))`.
//! In polar coordinates `int delta(2 (r^2 - rho^2)) rho d rho = 1/4`, leaving
//!
//! ```text
//! Q = int int conj(f1^)(xi1) conj(f2^)(xi2) (1/4) int_0^{2 pi} f3^(sigma/2 + r e_theta) f4^(sigma/2 - r e_theta) d theta.
//! ```
//!
//! At `r = 0` the circle collapses to `sigma/2` and the angular integral is
//! `2 pi / 4 f3^(sigma/2) f4^(sigma/2)`.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ComplexField2D, Space};
use crate::grid::Grid2D;
use crate::oscillator::{ComplexMatrix, OscillatorFrame};
use crate::quadrature::TimeQuadrature;
use crate::rng;
use crate::spacetime::SpaceTime;
use crate::transform::{inverse_transform, to_frequency, to_physical};

/// `(2 pi)^5`, see the module docs.
pub const C_Q: f64 = 9792.629913129004;

/// Largest grid accepted by the circle-reduction route.
pub const CIRCLE_GRID_LIMIT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    TimeDomain,
    CircleReduction,
    GaussianClosedForm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadForm {
    pub value: Complex64,
    pub route: Route,
    pub grid: Option<Grid2D>,
    pub time_nodes: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub phi: f64,
    pub sharp_constant_estimate: f64,
    pub grid: Grid2D,
    pub quadrature: TimeQuadrature,
    pub route: Route,
}

pub fn strichartz_ratio(f: &ComplexField2D, tq: &TimeQuadrature) -> Result<RatioReport> {
    f.require_nonzero()?;
    let st = SpaceTime::new(f.grid(), tq);
    let phys = to_physical(f)?;
    let l4 = st.l4_fourth(&phys)?;
    let phi = l4 / phys.norm_sq().powi(2);
    Ok(RatioReport {
        phi,
        sharp_constant_estimate: phi.powf(0.25),
        grid: *f.grid(),
        quadrature: tq.clone(),
        route: Route::TimeDomain,
    })
}

/// `Phi` for `e^{-a|x|^2}`.
///
/// The evolved Gaussian is `u(t, x) = e^{-a|x|^2 / (1 - 4iat)} / (1 - 4iat)`, so
/// `|u|^4 = e^{-4a|x|^2 / (1 + 16 a^2 t^2)} / (1 + 16 a^2 t^2)^2` and
/// `int |u(t)|^4 dx = pi / (4a (1 + 16 a^2 t^2))`. Integrating in `t` gives
/// `(pi / 4a) (pi / 4a) = pi^2 / (16 a^2)`, while `||f||_2^4 = (pi / 2a)^2`.
/// The powers of `a` cancel, leaving `(pi/4)^2 / (pi/2)^2`.
pub fn gaussian_ratio_closed_form(a: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(LabError::InvalidParameter(format!("Gaussian width must be positive, got {a}")));
    }
    Ok((PI / 4.0).powi(2) / (PI / 2.0).powi(2))
}

/// `Q` through `C_Q int int conj(u1) conj(u2) u3 u4 dx dt`.
pub fn quadrilinear_time_domain(
    f1: &ComplexField2D,
    f2: &ComplexField2D,
    f3: &ComplexField2D,
    f4: &ComplexField2D,
    tq: &TimeQuadrature,
) -> Result<QuadForm> {
    for g in [f2, f3, f4] {
        if g.grid() != f1.grid() {
            return Err(LabError::GridMismatch);
        }
    }
    let st = SpaceTime::new(f1.grid(), tq);
    let v = st.quartic(f1, f2, f3, f4)?;
    Ok(QuadForm {
        value: v * C_Q,
        route: Route::TimeDomain,
        grid: Some(*f1.grid()),
        time_nodes: Some(tq.len()),
    })
}

/// Evaluates `f^(xi)` at arbitrary `xi` from physical samples:
/// `f^(xi) = dx^2 sum_m e^{-i x_m.xi} f(x_m)`, which reproduces the grid
/// transform at grid frequencies.
#[derive(Debug, Clone)]
pub struct SpectrumInterpolator {
    n: usize,
    x0: f64,
    dx: f64,
    samples: Vec<Complex64>,
    radius: f64,
}

impl SpectrumInterpolator {
    pub fn new(f: &ComplexField2D) -> Result<Self> {
        let phys = to_physical(f)?;
        let grid = *phys.grid();
        Ok(Self {
            n: grid.n(),
            x0: -grid.half_width(),
            dx: grid.dx(),
            radius: support_radius(&phys, 1e-13),
            samples: phys.into_samples(),
        })
    }

    /// Radius of the disc holding every sample above `1e-13 max|f|`.
    pub fn support_radius(&self) -> f64 {
        self.radius
    }

    fn exponentials(&self, xi: f64, out: &mut [Complex64]) {
        let step = Complex64::from_polar(1.0, -self.dx * xi);
        let mut z = Complex64::from_polar(1.0, -self.x0 * xi);
        for (k, o) in out.iter_mut().enumerate() {
            // re-anchor to keep the recurrence from drifting
            if k % 16 == 0 {
                z = Complex64::from_polar(1.0, -(self.x0 + k as f64 * self.dx) * xi);
            }
            *o = z;
            z *= step;
        }
    }

    pub fn eval(&self, xi: [f64; 2]) -> Complex64 {
        let n = self.n;
        let mut a = vec![Complex64::new(0.0, 0.0); n];
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        self.exponentials(xi[0], &mut a);
        self.exponentials(xi[1], &mut b);
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, ai) in a.iter().enumerate() {
            let row = &self.samples[i * n..(i + 1) * n];
            let s: Complex64 = row.iter().zip(&b).map(|(f, bj)| f * bj).sum();
            acc += ai * s;
        }
        acc * self.dx * self.dx
    }
}

fn support_radius(phys: &ComplexField2D, rel: f64) -> f64 {
    let grid = phys.grid();
    let n = grid.n();
    let floor = rel * phys.max_abs();
    let mut r2: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if phys.at(i, j).norm() > floor {
                let (a, b) = (grid.coord(i), grid.coord(j));
                r2 = r2.max(a * a + b * b);
            }
        }
    }
    r2.sqrt()
}

/// The two circle points `(xi3, xi4)` for `(xi1, xi2)` at angle `theta`.
pub fn circle_point(xi1: [f64; 2], xi2: [f64; 2], theta: f64) -> ([f64; 2], [f64; 2]) {
    let c = [0.5 * (xi1[0] + xi2[0]), 0.5 * (xi1[1] + xi2[1])];
    let r = 0.5 * ((xi1[0] - xi2[0]).hypot(xi1[1] - xi2[1]));
    let (s, co) = theta.sin_cos();
    ([c[0] + r * co, c[1] + r * s], [c[0] - r * co, c[1] - r * s])
}

/// Trapezoid node count on a circle of radius `r` for integrands whose
/// angular bandwidth is at most `r * spread`.
fn angular_nodes(r: f64, spread: f64) -> usize {
    let m = (r * spread).ceil() as usize + 24;
    m + m % 2
}

/// Circle-reduced evaluation of
/// `sum_{xi1, xi2} p(xi1, xi2) (1/4) int q(xi3, xi4) d theta dxi^4`
/// over grid frequency pairs. `q` depends only on `(sigma, r)`, so the angular
/// integral is cached per `(sigma, r^2)` lattice key.
pub(crate) struct CircleReducer<'a> {
    pub grid: Grid2D,
    pub spread: f64,
    pub pair_weight: &'a (dyn Fn(usize, usize) -> Complex64 + Sync),
    pub inner: &'a (dyn Fn([f64; 2], [f64; 2]) -> Complex64 + Sync),
    /// Pairs with `|p| <= cutoff` are skipped.
    pub cutoff: f64,
}

impl CircleReducer<'_> {
    pub fn run(&self) -> Complex64 {
        let grid = self.grid;
        let n = grid.n();
        let len = n * n;
        // group pairs by (sigma, r^2) in lattice units
        let mut groups: HashMap<(isize, isize, usize), Complex64> = HashMap::new();
        for k1 in 0..len {
            for k2 in 0..len {
                let p = (self.pair_weight)(k1, k2);
                if p.norm() <= self.cutoff {
                    continue;
                }
                let (i1, j1) = ((k1 / n) as isize, (k1 % n) as isize);
                let (i2, j2) = ((k2 / n) as isize, (k2 % n) as isize);
                let d2 = ((i1 - i2).pow(2) + (j1 - j2).pow(2)) as usize;
                *groups.entry((i1 + i2, j1 + j2, d2)).or_default() += p;
            }
        }
        let mut keys: Vec<(isize, isize, usize)> = groups.keys().copied().collect();
        keys.sort_unstable();
        let dxi = grid.dxi();
        let half = (n / 2) as f64;
        let terms: Vec<Complex64> = keys
            .par_iter()
            .map(|&(si, sj, d2)| {
                // sigma / 2 in frequency units
                let c = [(si as f64 / 2.0 - half) * dxi, (sj as f64 / 2.0 - half) * dxi];
                let r = 0.5 * (d2 as f64).sqrt() * dxi;
                let angular = if d2 == 0 {
                    (self.inner)(c, c) * (2.0 * PI / 4.0)
                } else {
                    let m = angular_nodes(r, self.spread);
                    let h = 2.0 * PI / m as f64;
                    let mut s = Complex64::new(0.0, 0.0);
                    for k in 0..m {
                        let (sn, cs) = (k as f64 * h).sin_cos();
                        s += (self.inner)([c[0] + r * cs, c[1] + r * sn], [c[0] - r * cs, c[1] - r * sn]);
                    }
                    s * (h / 4.0)
                };
                groups[&(si, sj, d2)] * angular
            })
            .collect();
        terms.iter().sum::<Complex64>() * dxi.powi(4)
    }
}

/// `Q` by resolving both delta constraints on the circle of resonant outputs.
pub fn quadrilinear_circle_reduction(
    f1h: &ComplexField2D,
    f2h: &ComplexField2D,
    f3h: &ComplexField2D,
    f4h: &ComplexField2D,
) -> Result<QuadForm> {
    for g in [f1h, f2h, f3h, f4h] {
        g.require_space(Space::Frequency)?;
        g.require_compatible(f1h)?;
    }
    let grid = *f1h.grid();
    if grid.n() > CIRCLE_GRID_LIMIT {
        return Err(LabError::GridTooLarge {
            n: grid.n(),
            limit: CIRCLE_GRID_LIMIT,
        });
    }
    let zero = QuadForm {
        value: Complex64::new(0.0, 0.0),
        route: Route::CircleReduction,
        grid: Some(grid),
        time_nodes: None,
    };
    if [f1h, f2h, f3h, f4h].iter().any(|g| g.is_zero()) {
        return Ok(zero);
    }
    let i3 = SpectrumInterpolator::new(&inverse_transform(f3h)?)?;
    let i4 = SpectrumInterpolator::new(&inverse_transform(f4h)?)?;
    let a = f1h.samples();
    let b = f2h.samples();
    let pair = |k1: usize, k2: usize| a[k1].conj() * b[k2].conj();
    let inner = |x3: [f64; 2], x4: [f64; 2]| i3.eval(x3) * i4.eval(x4);
    let reducer = CircleReducer {
        grid,
        spread: i3.support_radius() + i4.support_radius(),
        pair_weight: &pair,
        inner: &inner,
        cutoff: 1e-13 * f1h.max_abs() * f2h.max_abs(),
    };
    Ok(QuadForm {
        value: reducer.run(),
        ..zero
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DualSymmetry {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Compares `||e^{it Delta} f||_4` with `||e^{it Delta} f_check||_4`, where
/// `f_check(x) = (2 pi)^{-2} int e^{i x.y} f(y) dy = (2 pi)^{-2} f^(-x)`.
///
/// `f^` lives on the frequency lattice, so it is read back onto the spatial
/// lattice through `x_m <-> -xi`, which samples `lambda f_check(lambda x)` with
/// `lambda = dxi / dx`. That `L^2`-preserving dilation leaves the `L^4_{t,x}`
/// norm unchanged, so `rhs` is the norm of `f_check` itself.
pub fn dual_symmetry_check(f: &ComplexField2D, tq: &TimeQuadrature) -> Result<DualSymmetry> {
    f.require_nonzero()?;
    let grid = *f.grid();
    let n = grid.n();
    let phys = to_physical(f)?;
    let fh = to_frequency(f)?;
    let lambda = grid.dxi() / grid.dx();
    let scale = lambda / (2.0 * PI).powi(2);
    let check = ComplexField2D::from_parts(
        grid,
        Space::Physical,
        (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                fh.at((n - i) % n, (n - j) % n) * scale
            })
            .collect(),
    );
    let st = SpaceTime::new(&grid, tq);
    let lhs = st.l4_fourth(&phys)?.powf(0.25);
    let rhs = st.l4_fourth(&check)?.powf(0.25);
    Ok(DualSymmetry { lhs, rhs, ratio: lhs / rhs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Complex,
    Real,
}

/// Random combination of the low oscillator eigenmodes `phi_a(x1) phi_b(x2)`
/// with `rank(a) + rank(b) <= max_level`.
///
/// These fields are localized both in `x` and in `xi`, so they are resolved
/// on the grid and stay resolved under free evolution in the lens frame.
pub fn random_localized_field(grid: &Grid2D, max_level: usize, kind: FieldKind, seed: u64) -> Result<ComplexField2D> {
    let n = grid.n();
    if max_level >= n {
        return Err(LabError::InvalidParameter(format!(
            "mode level {max_level} exceeds the grid ({n} points per axis)"
        )));
    }
    let frame = OscillatorFrame::for_grid(grid);
    let ladder = frame.ladder();
    let mut rng = rng::stream(seed, 0);
    let mut modes = ComplexMatrix::zeros(n);
    for la in 0..=max_level {
        for lb in 0..=(max_level - la) {
            let z = match kind {
                FieldKind::Complex => rng::complex_normal(&mut rng),
                FieldKind::Real => Complex64::new(rng::normal(&mut rng), 0.0),
            };
            modes.set(ladder[la], ladder[lb], z);
        }
    }
    let samples = frame.from_modes(&modes).to_samples();
    Ok(ComplexField2D::from_parts(*grid, Space::Physical, samples))
}
