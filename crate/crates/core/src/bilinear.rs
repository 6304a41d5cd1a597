//! Frequency-separated pairs, the bilinear norm `||e^{it Delta} h1 e^{it Delta} h2||_{L^2_{t,x}}`
//! and the weighted multilinear integral `M_F`.
//!
//! A separated pair consists of `h_low` supported in `|xi| <= s` and
//! `h_high(xi) = e(xi - c)` with `e` supported in `|eta| <= s` and
//! `|c| = (N + 1) s`, so `h_high` is supported in `|xi| >= N s`.
//!
//! For large `N` the carrier does not fit on the grid. The Galilean identity
//! `|e^{it Delta} h_high|(t, x) = |e^{it Delta} e|(t, x + 2tc)` together with the
//! lens transform gives
//!
//! ```text
//! ||u_low u_high||^2 = (beta^2 / 2) int ds int |W_low(s, y)|^2 |W_e(s, y - beta^2 sin(s) c)|^2 dy,
//! ```
//!
//! which only needs the two envelopes on the grid. The inner integral is a
//! correlation, evaluated at the off-grid shift by trigonometric
//! interpolation of a zero-padded FFT correlation. It vanishes once the shift
//! exceeds the box, so the `s` integral runs over `|sin s| < 2L / (beta^2 |c|)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::{weight_f, WeightParams};
use crate::error::{LabError, Result};
use crate::field::{ComplexField2D, Space};
use crate::functional::{CircleReducer, SpectrumInterpolator, CIRCLE_GRID_LIMIT};
use crate::grid::Grid2D;
use crate::oscillator::{ComplexMatrix, OscillatorFrame};
use crate::quadrature::{gauss_legendre_on, TimeQuadrature};
use crate::rng;
use crate::spacetime::SpaceTime;
use crate::transform::{fft2, inverse_transform, to_physical};

/// Accepted range of the fitted log-log slope.
pub const SLOPE_WINDOW: (f64, f64) = (-0.75, -0.45);

const BLOBS: usize = 6;

/// Smooth compactly supported spectrum
/// `e(xi) = exp(1 - 1/(1 - |xi|^2/s^2)) sum_j a_j e^{-i y_j.xi}` with unit
/// phases `a_j` and centers `y_j` in the disc of radius `2/s`.
#[derive(Debug, Clone)]
struct Envelope {
    s: f64,
    centers: Vec<[f64; 2]>,
    amps: Vec<Complex64>,
}

impl Envelope {
    fn random(s: f64, seed: u64, task: u64) -> Self {
        let mut r = rng::stream(seed, task);
        let mut centers = Vec::with_capacity(BLOBS);
        let mut amps = Vec::with_capacity(BLOBS);
        for _ in 0..BLOBS {
            let rad = 2.0 / s * r.gen::<f64>().sqrt();
            let ang = r.gen_range(0.0..2.0 * PI);
            centers.push([rad * ang.cos(), rad * ang.sin()]);
            amps.push(rng::unit_phase(&mut r));
        }
        Self { s, centers, amps }
    }

    fn eval(&self, xi: [f64; 2]) -> Complex64 {
        let rho2 = (xi[0] * xi[0] + xi[1] * xi[1]) / (self.s * self.s);
        if rho2 >= 1.0 {
            return Complex64::new(0.0, 0.0);
        }
        let taper = (1.0 - 1.0 / (1.0 - rho2)).exp();
        let sum: Complex64 = self
            .centers
            .iter()
            .zip(&self.amps)
            .map(|(y, a)| a * Complex64::from_polar(1.0, -(y[0] * xi[0] + y[1] * xi[1])))
            .sum();
        sum * taper
    }

    /// `e(xi - shift)` on the frequency grid, scaled to unit norm.
    fn sample(&self, grid: Grid2D, shift: [f64; 2]) -> Result<ComplexField2D> {
        let f = ComplexField2D::from_fn(grid, Space::Frequency, |a, b| self.eval([a - shift[0], b - shift[1]]))?;
        f.require_nonzero()?;
        let norm = f.l2_norm() / (2.0 * PI);
        Ok(f.scaled(Complex64::new(1.0 / norm, 0.0)))
    }
}

fn carrier(s: f64, n_sep: f64, seed: u64) -> [f64; 2] {
    let mut r = rng::stream(seed, 2);
    let ang = r.gen_range(0.0..2.0 * PI);
    let len = (n_sep + 1.0) * s;
    [len * ang.cos(), len * ang.sin()]
}

fn check_pair_params(grid: &Grid2D, s: f64, n_sep: f64) -> Result<()> {
    if !(s.is_finite() && s > 0.0 && n_sep.is_finite() && n_sep > 1.0) {
        return Err(LabError::InvalidParameter(format!("need s > 0 and N > 1, got s = {s}, N = {n_sep}")));
    }
    if s < 2.0 * grid.dxi() {
        return Err(LabError::InvalidParameter(format!(
            "support radius {s} spans fewer than two frequency cells ({})",
            grid.dxi()
        )));
    }
    if s >= 0.8 * grid.xi_max() {
        return Err(LabError::InvalidParameter(format!("support radius {s} is not representable on the grid")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SeparatedPair {
    pub h_low: ComplexField2D,
    pub h_high: ComplexField2D,
    pub s: f64,
    pub n_sep: f64,
    pub carrier: [f64; 2],
}

/// Both members materialized on the grid; requires the high support to fit.
pub fn separated_pair(grid: &Grid2D, s: f64, n_sep: f64, seed: u64) -> Result<SeparatedPair> {
    check_pair_params(grid, s, n_sep)?;
    let xi_max = grid.xi_max();
    if n_sep * s >= 0.8 * xi_max || (n_sep + 2.0) * s > xi_max {
        return Err(LabError::InvalidParameter(format!(
            "separation N s = {} exceeds what the grid resolves (xi_max = {xi_max})",
            n_sep * s
        )));
    }
    let c = carrier(s, n_sep, seed);
    Ok(SeparatedPair {
        h_low: Envelope::random(s, seed, 0).sample(*grid, [0.0, 0.0])?,
        h_high: Envelope::random(s, seed, 1).sample(*grid, c)?,
        s,
        n_sep,
        carrier: c,
    })
}

/// The same pair with the high member kept as envelope plus carrier, valid
/// for any `N`.
#[derive(Debug, Clone)]
pub struct ModulatedPair {
    pub h_low: ComplexField2D,
    pub envelope: ComplexField2D,
    pub s: f64,
    pub n_sep: f64,
    pub carrier: [f64; 2],
}

pub fn separated_pair_modulated(grid: &Grid2D, s: f64, n_sep: f64, seed: u64) -> Result<ModulatedPair> {
    check_pair_params(grid, s, n_sep)?;
    Ok(ModulatedPair {
        h_low: Envelope::random(s, seed, 0).sample(*grid, [0.0, 0.0])?,
        envelope: Envelope::random(s, seed, 1).sample(*grid, [0.0, 0.0])?,
        s,
        n_sep,
        carrier: carrier(s, n_sep, seed),
    })
}

/// `||e^{it Delta} h1 e^{it Delta} h2||_{L^2_{t,x}}` on the grid.
pub fn bilinear_norm(h1: &ComplexField2D, h2: &ComplexField2D, tq: &TimeQuadrature) -> Result<f64> {
    h1.require_compatible(h2)?;
    if h1.is_zero() || h2.is_zero() {
        return Ok(0.0);
    }
    let st = SpaceTime::new(h1.grid(), tq);
    Ok(st.bilinear_sq(&to_physical(h1)?, &to_physical(h2)?)?.max(0.0).sqrt())
}

fn moments(f: &ComplexField2D) -> Result<(f64, f64)> {
    let phys = to_physical(f)?;
    let grid = *phys.grid();
    let fh = crate::transform::to_frequency(f)?;
    let n = grid.n();
    let (mut x2, mut xi2, mut m, mut mh) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (grid.coord(i), grid.coord(j));
            let (p, q) = (grid.freq(i), grid.freq(j));
            let w = phys.at(i, j).norm_sqr();
            let wh = fh.at(i, j).norm_sqr();
            x2 += (a * a + b * b) * w;
            xi2 += (p * p + q * q) * wh;
            m += w;
            mh += wh;
        }
    }
    Ok(((x2 / m).sqrt(), (xi2 / mh).sqrt()))
}

/// Squared moduli `|W(s)|^2` in a zero-padded `2n x 2n` array, transformed.
fn padded_spectrum(w: &ComplexMatrix) -> Vec<Complex64> {
    let n = w.re.nrows();
    let m = 2 * n;
    let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (w.re[(i, j)], w.im[(i, j)]);
            buf[i * m + j] = Complex64::new(a * a + b * b, 0.0);
        }
    }
    fft2(&mut buf, m, false);
    buf
}

/// `sum_y A(y) B(y - q dx)` for real `q` (in cells), from the padded
/// spectra of `A` and `B`.
fn correlation_at(a_hat: &[Complex64], b_hat: &[Complex64], m: usize, q: [f64; 2]) -> f64 {
    let phase = |k: usize, q: f64| {
        let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
        Complex64::from_polar(1.0, 2.0 * PI * kk * q / m as f64)
    };
    let e1: Vec<Complex64> = (0..m).map(|k| phase(k, q[0])).collect();
    let e2: Vec<Complex64> = (0..m).map(|k| phase(k, q[1])).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for (k1, p1) in e1.iter().enumerate() {
        let row = k1 * m;
        let mut s = Complex64::new(0.0, 0.0);
        for (k2, p2) in e2.iter().enumerate() {
            s += a_hat[row + k2] * b_hat[row + k2].conj() * p2;
        }
        acc += s * p1;
    }
    acc.re / (m * m) as f64
}

/// `||e^{it Delta} h_low e^{it Delta} h_high||_{L^2_{t,x}}` through the
/// Galilean identity, with `n_nodes` Gauss-Legendre nodes on the
/// interaction window in the lens angle.
pub fn bilinear_norm_pair(pair: &ModulatedPair, n_nodes: usize) -> Result<f64> {
    if n_nodes < TimeQuadrature::MIN_NODES {
        return Err(LabError::InvalidParameter(format!(
            "need at least {} nodes, got {n_nodes}",
            TimeQuadrature::MIN_NODES
        )));
    }
    let grid = *pair.h_low.grid();
    pair.h_low.require_compatible(&pair.envelope)?;
    // phase-space balanced scale for the two envelopes
    let (x1, k1) = moments(&pair.h_low)?;
    let (x2, k2) = moments(&pair.envelope)?;
    let beta_sq = ((x1 * x2) / (k1 * k2)).sqrt();
    let frame = OscillatorFrame::with_scale(&grid, beta_sq);
    let lo = frame.to_modes(inverse_transform(&pair.h_low)?.samples());
    let env = frame.to_modes(inverse_transform(&pair.envelope)?.samples());
    let c = pair.carrier;
    let c_len = c[0].hypot(c[1]);
    let reach = 2.0 * grid.half_width() / (beta_sq * c_len);
    let s_max = if reach >= 1.0 { PI / 2.0 } else { reach.asin() };
    let (nodes, weights) = gauss_legendre_on(n_nodes, -s_max, s_max);
    let m = 2 * grid.n();
    let dx = grid.dx();
    let parts: Vec<f64> = nodes
        .par_iter()
        .zip(weights.par_iter())
        .map(|(&s, &w)| {
            let a = padded_spectrum(&frame.from_modes(&frame.evolve(&lo, s)));
            let b = padded_spectrum(&frame.from_modes(&frame.evolve(&env, s)));
            let d = beta_sq * s.sin();
            w * correlation_at(&a, &b, m, [d * c[0] / dx, d * c[1] / dx])
        })
        .collect();
    let total: f64 = parts.iter().sum();
    Ok((0.5 * beta_sq * total * dx * dx).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_sep: f64,
    pub seed: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub s: f64,
    /// `(N, max over seeds of the bilinear ratio)`.
    pub rows: Vec<(f64, f64)>,
    pub per_seed: Vec<SweepRow>,
    pub slope: f64,
    pub intercept: f64,
    pub in_window: bool,
}

/// Least-squares line through `(x, y)` pairs.
pub fn fit_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Worst-case bilinear ratio over seeds for each `N`, and the slope of
/// `log ratio` against `log N`.
pub fn decay_sweep(grid: &Grid2D, s: f64, n_list: &[f64], seeds: &[u64], tq: &TimeQuadrature) -> Result<SweepResult> {
    if n_list.len() < 4 {
        return Err(LabError::InvalidParameter(format!("sweep needs at least 4 values of N, got {}", n_list.len())));
    }
    if !n_list.windows(2).all(|w| w[1] > w[0]) {
        return Err(LabError::InvalidParameter("N values must be strictly increasing".into()));
    }
    if seeds.len() < 3 {
        return Err(LabError::InvalidParameter(format!("sweep needs at least 3 seeds, got {}", seeds.len())));
    }
    let jobs: Vec<(f64, u64)> = n_list.iter().flat_map(|&n| seeds.iter().map(move |&sd| (n, sd))).collect();
    let per_seed = jobs
        .par_iter()
        .map(|&(n_sep, seed)| {
            let pair = separated_pair_modulated(grid, s, n_sep, seed)?;
            Ok(SweepRow {
                n_sep,
                seed,
                ratio: bilinear_norm_pair(&pair, tq.len())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<(f64, f64)> = n_list
        .iter()
        .map(|&n| {
            let worst = per_seed
                .iter()
                .filter(|r| r.n_sep == n)
                .map(|r| r.ratio)
                .fold(f64::NEG_INFINITY, f64::max);
            (n, worst)
        })
        .collect();
    if rows.iter().any(|r| !(r.1.is_finite() && r.1 > 0.0)) {
        return Err(LabError::InvalidParameter("non-finite or zero bilinear ratio in sweep".into()));
    }
    let logs: Vec<(f64, f64)> = rows.iter().map(|r| (r.0.ln(), r.1.ln())).collect();
    let (slope, intercept) = fit_line(&logs);
    Ok(SweepResult {
        s,
        rows,
        per_seed,
        slope,
        intercept,
        in_window: slope >= SLOPE_WINDOW.0 && slope <= SLOPE_WINDOW.1,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MfEstimate {
    pub weighted: f64,
    pub unweighted: f64,
}

/// `M_F(h1, h2, h3, h4)` and its unweighted form by circle reduction of
/// `|h1||h2||h3||h4|`.
pub fn mf_estimate(
    h1: &ComplexField2D,
    h2: &ComplexField2D,
    h3: &ComplexField2D,
    h4: &ComplexField2D,
    p: WeightParams,
) -> Result<MfEstimate> {
    for h in [h1, h2, h3, h4] {
        h.require_space(Space::Frequency)?;
        h.require_compatible(h1)?;
    }
    let grid = *h1.grid();
    if grid.n() > CIRCLE_GRID_LIMIT {
        return Err(LabError::GridTooLarge {
            n: grid.n(),
            limit: CIRCLE_GRID_LIMIT,
        });
    }
    if [h1, h2, h3, h4].iter().any(|h| h.is_zero()) {
        return Ok(MfEstimate {
            weighted: 0.0,
            unweighted: 0.0,
        });
    }
    let i3 = SpectrumInterpolator::new(&inverse_transform(h3)?)?;
    let i4 = SpectrumInterpolator::new(&inverse_transform(h4)?)?;
    let n = grid.n();
    let freq = |k: usize| [grid.freq(k / n), grid.freq(k % n)];
    let (a, b) = (h1.samples(), h2.samples());
    let cutoff = 1e-13 * h1.max_abs() * h2.max_abs();
    let spread = i3.support_radius() + i4.support_radius();
    let run = |weighted: bool| {
        let pair = |k1: usize, k2: usize| {
            let m = a[k1].norm() * b[k2].norm();
            let w = if weighted {
                (weight_f(freq(k1), p) - weight_f(freq(k2), p)).exp()
            } else {
                1.0
            };
            Complex64::new(m * w, 0.0)
        };
        let inner = |x3: [f64; 2], x4: [f64; 2]| {
            let m = i3.eval(x3).norm() * i4.eval(x4).norm();
            let w = if weighted {
                (-weight_f(x3, p) - weight_f(x4, p)).exp()
            } else {
                1.0
            };
            Complex64::new(m * w, 0.0)
        };
        CircleReducer {
            grid,
            spread,
            pair_weight: &pair,
            inner: &inner,
            cutoff,
        }
        .run()
        .re
    };
    let unweighted = run(false);
    let weighted = if p.mu == 0.0 { unweighted } else { run(true) };
    Ok(MfEstimate { weighted, unweighted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{forward_transform, gaussian_field};

    #[test]
    fn pair_supports_and_norms() {
        let g = Grid2D::new(256, 8.0).unwrap();
        let p = separated_pair(&g, 1.0, 4.0, 7).unwrap();
        for (k, (lo, hi)) in p.h_low.samples().iter().zip(p.h_high.samples()).enumerate() {
            let (a, b) = (g.freq(k / 256), g.freq(k % 256));
            if a.hypot(b) > 1.0 {
                assert_eq!(*lo, Complex64::new(0.0, 0.0));
            }
            if a.hypot(b) < 4.0 {
                assert_eq!(*hi, Complex64::new(0.0, 0.0));
            }
        }
        for h in [&p.h_low, &p.h_high] {
            assert!((inverse_transform(h).unwrap().l2_norm() - 1.0).abs() < 1e-12);
        }
        let again = separated_pair(&g, 1.0, 4.0, 7).unwrap();
        assert_eq!(again.h_high.samples(), p.h_high.samples());
        assert!(separated_pair(&g, 1.0, 45.0, 7).is_err());
    }

    #[test]
    fn bilinear_basic_identities() {
        let g = Grid2D::new(64, 10.0).unwrap();
        let tq = TimeQuadrature::for_grid(&g, 65).unwrap();
        let c = |x: f64| Complex64::new(x, 0.0);
        let f = gaussian_field(g, c(-1.0), [c(0.0); 2], c(0.0)).unwrap();
        let zero = ComplexField2D::zeros(g, Space::Physical);
        assert_eq!(bilinear_norm(&f, &zero, &tq).unwrap(), 0.0);
        let st = SpaceTime::new(&g, &tq);
        let l4 = st.l4_fourth(&f).unwrap().sqrt();
        assert!((bilinear_norm(&f, &f, &tq).unwrap() - l4).abs() < 1e-12 * l4);
        let h = crate::functional::random_localized_field(&g, 3, crate::functional::FieldKind::Complex, 3).unwrap();
        let ab = bilinear_norm(&f, &h, &tq).unwrap();
        let ba = bilinear_norm(&h, &f, &tq).unwrap();
        assert!((ab - ba).abs() < 1e-12 * ab);
    }

    #[test]
    fn galilean_route_matches_direct_route() {
        // the bump envelopes decay slowly in x, so the box has to be wide
        let g = Grid2D::new(256, 16.0).unwrap();
        let tq = TimeQuadrature::for_grid(&g, 129).unwrap();
        let direct_pair = separated_pair(&g, 1.0, 4.0, 11).unwrap();
        let direct = bilinear_norm(&direct_pair.h_low, &direct_pair.h_high, &tq).unwrap();
        let mp = separated_pair_modulated(&g, 1.0, 4.0, 11).unwrap();
        let gal = bilinear_norm_pair(&mp, 65).unwrap();
        assert!((gal - direct).abs() < 3e-4 * direct, "{gal} vs {direct}");
    }

    #[test]
    fn mf_weight_never_increases() {
        let g = Grid2D::balanced(16).unwrap();
        let hs: Vec<ComplexField2D> = (0..4)
            .map(|k| {
                let f = crate::functional::random_localized_field(&g, 2, crate::functional::FieldKind::Complex, k).unwrap();
                forward_transform(&f).unwrap()
            })
            .collect();
        let plain = mf_estimate(&hs[0], &hs[1], &hs[2], &hs[3], WeightParams::new(0.0, 0.0).unwrap()).unwrap();
        assert_eq!(plain.weighted, plain.unweighted);
        let w = mf_estimate(&hs[0], &hs[1], &hs[2], &hs[3], WeightParams::new(0.05, 0.1).unwrap()).unwrap();
        assert!(w.weighted <= w.unweighted * (1.0 + 1e-12));
        assert!(w.weighted > 0.0);
    }
}
