//! Frequency weights `F(xi) = mu |xi|^2 / (1 + eps |xi|^2)`, cutoffs at `s`
//! and `s^2`, weighted tail norms, Gaussian decay fits and the cubic `G`.
//!
//! Frequency-side norms use the Plancherel-normalized measure
//! `(2 pi)^{-2} dxi`, so `||f^|| = ||f||` and the band bounds of the
//! frequency split read with `||f|| = 1` directly.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ComplexField2D, Space};
use crate::functional::circle_point;
use crate::rng;
use crate::transform::to_frequency;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub mu: f64,
    pub eps: f64,
}

impl WeightParams {
    pub fn new(mu: f64, eps: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0 && eps.is_finite() && eps >= 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "weight needs finite mu, eps >= 0, got mu = {mu}, eps = {eps}"
            )));
        }
        Ok(Self { mu, eps })
    }

    /// `mu = s^{-4}`.
    pub fn for_cutoff(s: f64, eps: f64) -> Result<Self> {
        Self::new(s.powi(-4), eps)
    }
}

pub fn weight_f(xi: [f64; 2], p: WeightParams) -> f64 {
    let r2 = xi[0] * xi[0] + xi[1] * xi[1];
    p.mu * r2 / (1.0 + p.eps * r2)
}

fn check_cutoff(s: f64) -> Result<()> {
    if !(s.is_finite() && s > 1.0) {
        return Err(LabError::InvalidParameter(format!("cutoff s must exceed 1, got {s}")));
    }
    Ok(())
}

/// `h` split by `|xi| < s`, `s <= |xi| <= s^2` and `|xi| > s^2`.
#[derive(Debug, Clone)]
pub struct FrequencySplit {
    pub s: f64,
    pub low: ComplexField2D,
    pub mid: ComplexField2D,
    pub high: ComplexField2D,
}

pub fn frequency_split(h: &ComplexField2D, s: f64) -> Result<FrequencySplit> {
    h.require_space(Space::Frequency)?;
    check_cutoff(s)?;
    let s2 = s * s;
    let zero = num_complex::Complex64::new(0.0, 0.0);
    let band = |keep: fn(f64, f64, f64) -> bool| {
        h.map_indexed(|a, b, z| if keep(a.hypot(b), s, s2) { z } else { zero })
    };
    Ok(FrequencySplit {
        s,
        low: band(|r, s, _| r < s),
        mid: band(|r, s, s2| r >= s && r <= s2),
        high: band(|r, _, s2| r > s2),
    })
}

/// `||g||` in the Plancherel-normalized frequency measure.
pub fn spectral_norm(g: &ComplexField2D) -> Result<f64> {
    g.require_space(Space::Frequency)?;
    Ok(g.l2_norm() / (2.0 * PI))
}

/// `||e^F f^ 1_{|xi| >= s^2}||`, the quantity `H(eps)` at fixed `mu`.
pub fn weighted_tail_norm(fhat: &ComplexField2D, s: f64, p: WeightParams) -> Result<f64> {
    fhat.require_space(Space::Frequency)?;
    check_cutoff(s)?;
    let s2 = s * s;
    let grid = fhat.grid();
    let n = grid.n();
    let mut acc = 0.0;
    for i in 0..n {
        let a = grid.freq(i);
        for j in 0..n {
            let b = grid.freq(j);
            if a.hypot(b) >= s2 {
                acc += (2.0 * weight_f([a, b], p)).exp() * fhat.at(i, j).norm_sqr();
            }
        }
    }
    Ok((acc * grid.dxi().powi(2)).sqrt() / (2.0 * PI))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsSweep {
    pub s: f64,
    pub mu: f64,
    /// `(eps, H(eps))` in the order given.
    pub rows: Vec<(f64, f64)>,
    /// `||e^{mu |xi|^2} f^_>||`, the `eps = 0` value.
    pub limit: f64,
    pub monotone: bool,
    /// `|H(last) - H(previous)| / H(last)`.
    pub last_relative_change: f64,
}

/// `H(eps)` over `eps_list` (expected in decreasing order) plus the direct `eps = 0` limit.
pub fn eps_sweep(fhat: &ComplexField2D, s: f64, mu: f64, eps_list: &[f64]) -> Result<EpsSweep> {
    if eps_list.len() < 2 {
        return Err(LabError::InvalidParameter("eps sweep needs at least two values".into()));
    }
    let rows = eps_list
        .iter()
        .map(|&e| Ok((e, weighted_tail_norm(fhat, s, WeightParams::new(mu, e)?)?)))
        .collect::<Result<Vec<_>>>()?;
    let limit = weighted_tail_norm(fhat, s, WeightParams::new(mu, 0.0)?)?;
    let monotone = rows.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 >= w[0].1);
    let k = rows.len();
    let last_relative_change = (rows[k - 1].1 - rows[k - 2].1).abs() / rows[k - 1].1;
    Ok(EpsSweep {
        s,
        mu,
        rows,
        limit,
        monotone,
        last_relative_change,
    })
}

/// Magnitudes below this fraction of `max|f^|` are excluded from log fits.
pub const DECAY_FLOOR: f64 = 1e-13;
pub const MIN_FIT_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    pub mu_fit: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub annulus: (f64, f64),
    pub samples: usize,
}

/// Default annulus: `|xi| >= 2` up to `0.8 xi_max`.
pub fn default_annulus(fhat: &ComplexField2D) -> (f64, f64) {
    (2.0, 0.8 * fhat.grid().xi_max())
}

/// Least squares of `log|f^(xi)|` against `-mu |xi|^2 + c` over the annulus.
pub fn fit_gaussian_decay(fhat: &ComplexField2D, annulus: (f64, f64)) -> Result<DecayFit> {
    fhat.require_space(Space::Frequency)?;
    let (lo, hi) = annulus;
    if !(lo >= 0.0 && hi > lo) {
        return Err(LabError::InvalidParameter(format!("bad annulus ({lo}, {hi})")));
    }
    let grid = fhat.grid();
    let n = grid.n();
    let floor = DECAY_FLOOR * fhat.max_abs();
    let mut pts = Vec::new();
    for i in 0..n {
        let a = grid.freq(i);
        for j in 0..n {
            let b = grid.freq(j);
            let r = a.hypot(b);
            let m = fhat.at(i, j).norm();
            if r >= lo && r <= hi && m > floor && m > 0.0 {
                pts.push((r * r, m.ln()));
            }
        }
    }
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(LabError::Fit(format!(
            "{} usable samples in the annulus, need {MIN_FIT_SAMPLES}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LabError::Fit("annulus samples share one radius".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit {
        mu_fit: -slope,
        intercept,
        r_squared,
        annulus,
        samples: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GAnalysis {
    pub omega: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub x_crit: f64,
    pub x0: f64,
    pub x1: f64,
}

impl GAnalysis {
    pub fn g(&self, x: f64) -> f64 {
        g_value(self.omega, self.c, x)
    }
}

fn g_value(omega: f64, c: f64, x: f64) -> f64 {
    0.5 * omega * x - c * x * x - c * x * x * x
}

/// Bisection for `g(x) = target` on `[a, b]` with `g(a) - target` and
/// `g(b) - target` of opposite sign, run until the bracket stops shrinking.
fn bisect(g: impl Fn(f64) -> f64, target: f64, mut a: f64, mut b: f64) -> f64 {
    let fa = g(a) - target;
    for _ in 0..2000 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        if (g(m) - target).signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// `G(x) = omega x / 2 - C x^2 - C x^3` on `[0, inf)`: its maximum `M` at
/// `x_crit = (-2C + sqrt(4C^2 + 6 C omega)) / (6C)` and the two solutions
/// `x0 < x_crit < x1` of `G = M/2`.
pub fn g_function_analysis(omega: f64, c: f64) -> Result<GAnalysis> {
    if !(omega.is_finite() && omega > 0.0 && c.is_finite() && c > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "G analysis needs omega, C > 0, got {omega}, {c}"
        )));
    }
    let x_crit = (-2.0 * c + (4.0 * c * c + 6.0 * c * omega).sqrt()) / (6.0 * c);
    let g = |x: f64| g_value(omega, c, x);
    let m = g(x_crit);
    let half = 0.5 * m;
    let x0 = bisect(g, half, 0.0, x_crit);
    let mut hi = 2.0 * x_crit;
    while g(hi) > half {
        hi *= 2.0;
    }
    let x1 = bisect(g, half, x_crit, hi);
    Ok(GAnalysis {
        omega,
        c,
        m,
        x_crit,
        x0,
        x1,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub bound: f64,
    pub slack: f64,
}

impl Bound {
    fn new(value: f64, bound: f64) -> Self {
        Self {
            value,
            bound,
            slack: bound - value,
        }
    }

    pub fn holds(&self) -> bool {
        self.slack >= 0.0
    }
}

/// Norms of `h = e^F f^` (with `eps = 0`) on the cutoff bands against the
/// bounds implied by `||f|| = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitBounds {
    pub s: f64,
    pub mu: f64,
    /// `||h_<|| <= e^{mu s^4}`.
    pub below: Bound,
    /// `||h_<<|| <= e^{mu s^2}`.
    pub low: Bound,
    /// `||h_~|| <= e^{mu s^4} ||f_~||`.
    pub mid: Bound,
    pub all_hold: bool,
}

pub fn split_norm_bounds(f: &ComplexField2D, s: f64, mu: f64) -> Result<SplitBounds> {
    check_cutoff(s)?;
    let fhat = to_frequency(f)?;
    let norm = spectral_norm(&fhat)?;
    if (norm - 1.0).abs() > 1e-10 {
        return Err(LabError::InvalidParameter(format!("field must have unit norm, got {norm}")));
    }
    let p = WeightParams::new(mu, 0.0)?;
    let h = fhat.map_indexed(|a, b, z| z * weight_f([a, b], p).exp());
    let hs = frequency_split(&h, s)?;
    let fs = frequency_split(&fhat, s)?;
    let below = Bound::new(spectral_norm(&hs.low.add(&hs.mid)?)?, (mu * s.powi(4)).exp());
    let low = Bound::new(spectral_norm(&hs.low)?, (mu * s * s).exp());
    let mid = Bound::new(spectral_norm(&hs.mid)?, (mu * s.powi(4)).exp() * spectral_norm(&fs.mid)?);
    Ok(SplitBounds {
        s,
        mu,
        all_hold: below.holds() && low.holds() && mid.holds(),
        below,
        low,
        mid,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightCheck {
    pub params: WeightParams,
    pub samples: usize,
    pub max_weight: f64,
}

const WEIGHT_BATCH: usize = 4096;

/// Samples `(eta1, eta2, theta)`, places `eta3, eta4` on the resonant circle
/// and records the largest `e^{F(eta1) - F(eta2) - F(eta3) - F(eta4)}`.
///
/// Radii are drawn log-uniformly in `[1e-2, 1e3]` so every regime of the
/// weight (`eps |xi|^2` small or large) is visited.
pub fn constraint_weight_check(p: WeightParams, n_samples: usize, seed: u64) -> Result<WeightCheck> {
    if n_samples == 0 {
        return Err(LabError::InvalidParameter("need at least one sample".into()));
    }
    let batches = n_samples.div_ceil(WEIGHT_BATCH);
    let maxima: Vec<f64> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, b as u64);
            let count = WEIGHT_BATCH.min(n_samples - b * WEIGHT_BATCH);
            let mut best = f64::NEG_INFINITY;
            let point = |r: &mut rand_chacha::ChaCha8Rng| {
                let rad = 10f64.powf(r.gen_range(-2.0..3.0));
                let ang = r.gen_range(0.0..2.0 * PI);
                [rad * ang.cos(), rad * ang.sin()]
            };
            for _ in 0..count {
                let e1 = point(&mut r);
                let e2 = point(&mut r);
                let th = r.gen_range(0.0..2.0 * PI);
                let (e3, e4) = circle_point(e1, e2, th);
                let w = (weight_f(e1, p) - weight_f(e2, p) - weight_f(e3, p) - weight_f(e4, p)).exp();
                best = best.max(w);
            }
            best
        })
        .collect();
    Ok(WeightCheck {
        params: p,
        samples: n_samples,
        max_weight: maxima.into_iter().fold(f64::NEG_INFINITY, f64::max),
    })
}
