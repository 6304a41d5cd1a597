use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::Grid2D;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
///
/// Newton iteration on `P_n` from the Tricomi initial guess; the rule is
/// mirrored from the positive half so the nodes are exactly symmetric.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // i-th largest root
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&xi| mid + half * xi).collect(),
        w.iter().map(|&wi| half * wi).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    /// `t = tau tan(theta)` with Gauss-Legendre nodes in `theta`.
    TangentMappedLegendre { time_scale: f64 },
    /// Trapezoid rule on `[-t_max, t_max]`.
    UniformTruncated { t_max: f64 },
}

/// Nodes and weights discretizing `int_R dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    scheme: TimeScheme,
}

impl TimeQuadrature {
    pub const MIN_NODES: usize = 9;

    pub fn tangent_legendre(n_nodes: usize, time_scale: f64) -> Result<Self> {
        Self::check_count(n_nodes)?;
        if !(time_scale.is_finite() && time_scale > 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "time scale must be positive, got {time_scale}"
            )));
        }
        let (theta, w) = gauss_legendre_on(n_nodes, -PI / 2.0, PI / 2.0);
        let nodes = theta.iter().map(|&th| time_scale * th.tan()).collect();
        let weights = theta
            .iter()
            .zip(&w)
            .map(|(&th, &wi)| time_scale * wi / th.cos().powi(2))
            .collect();
        Ok(Self {
            nodes,
            weights,
            scheme: TimeScheme::TangentMappedLegendre { time_scale },
        })
    }

    /// Tangent-mapped rule whose angle variable coincides with the lens
    /// angle of `grid`, so the mapped integrand is sampled at plain
    /// Gauss-Legendre points.
    pub fn for_grid(grid: &Grid2D, n_nodes: usize) -> Result<Self> {
        Self::tangent_legendre(n_nodes, grid.balanced_beta_sq() / 2.0)
    }

    pub fn uniform_truncated(n_nodes: usize, t_max: f64) -> Result<Self> {
        Self::check_count(n_nodes)?;
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "t_max must be positive, got {t_max}"
            )));
        }
        let h = 2.0 * t_max / (n_nodes - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_nodes).map(|k| -t_max + k as f64 * h).collect();
        // exact mirror symmetry
        for k in 0..n_nodes / 2 {
            nodes[n_nodes - 1 - k] = -nodes[k];
        }
        if n_nodes % 2 == 1 {
            nodes[n_nodes / 2] = 0.0;
        }
        let mut weights = vec![h; n_nodes];
        weights[0] = 0.5 * h;
        weights[n_nodes - 1] = 0.5 * h;
        Ok(Self {
            nodes,
            weights,
            scheme: TimeScheme::UniformTruncated { t_max },
        })
    }

    fn check_count(n_nodes: usize) -> Result<()> {
        if n_nodes < Self::MIN_NODES {
            return Err(LabError::InvalidParameter(format!(
                "time quadrature needs at least {} nodes, got {n_nodes}",
                Self::MIN_NODES
            )));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scheme(&self) -> TimeScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        for n in [1, 2, 5, 16, 65, 129] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n).min(40) {
                let q: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn tangent_rule_integrates_lorentzian_tail() {
        let tq = TimeQuadrature::tangent_legendre(65, 0.7).unwrap();
        // int dt / (1 + 16 t^2) = pi / 4
        let v = tq.integrate(|t| 1.0 / (1.0 + 16.0 * t * t));
        assert!((v - PI / 4.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn schemes_are_symmetric_and_positive() {
        for tq in [
            TimeQuadrature::tangent_legendre(129, 0.5).unwrap(),
            TimeQuadrature::tangent_legendre(10, 2.0).unwrap(),
            TimeQuadrature::uniform_truncated(41, 3.0).unwrap(),
            TimeQuadrature::uniform_truncated(40, 3.0).unwrap(),
        ] {
            let k = tq.len();
            assert!(tq.weights().iter().all(|&w| w > 0.0));
            assert!(tq.nodes().windows(2).all(|p| p[0] < p[1]));
            for i in 0..k {
                let a = tq.nodes()[i];
                let b = tq.nodes()[k - 1 - i];
                assert!((a + b).abs() <= 1e-14 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn too_few_nodes() {
        assert!(TimeQuadrature::tangent_legendre(8, 1.0).is_err());
        assert!(TimeQuadrature::uniform_truncated(3, 1.0).is_err());
        assert!(TimeQuadrature::uniform_truncated(20, -1.0).is_err());
    }
}
