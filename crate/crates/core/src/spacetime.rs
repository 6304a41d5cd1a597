//! Space-time integrals `int_R int_{R^2} ... dx dt` of free evolutions.
//!
//! Each time node `t_k` is evaluated in the oscillator frame: a spatial
//! integral of a product of two conjugated and two plain evolutions at time
//! `t` equals `cos^2(s) int ... dy` over the lens-frame fields at angle `s(t)`.
//! The time quadrature therefore only supplies `(t_k, w_k)`; the fields are
//! never propagated to large `t` on the periodic grid.
//!
//! Small grids resolve too few oscillator levels for the lens frame, so for
//! `n < EVAL_MIN_POINTS` the fields are first carried to a grid `p` times
//! wider in both `x` and `xi` (`p^2 n` points) by their trigonometric
//! interpolant, taken as zero outside the original box. Gradients come back
//! through the adjoint of that embedding, so `<g, G(f)>` remains the exact
//! discrete pairing of the quartic integral.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Result;
use crate::field::{ComplexField2D, Space};
use crate::grid::Grid2D;
use crate::oscillator::{ComplexMatrix, OscillatorFrame};
use crate::quadrature::TimeQuadrature;
use crate::transform::{interpolation_matrix, resample, to_physical};

// Fixed chunking keeps the reduction order independent of the thread count.
const CHUNK: usize = 4;

/// Grids below this size are evaluated on an oversampled copy.
pub const EVAL_MIN_POINTS: usize = 64;

/// `f_e = P F P^T` with `P` the one-axis interpolation matrix onto the
/// oversampled coordinates.
#[derive(Debug)]
struct Embedding {
    p: DMatrix<f64>,
    /// `dx_e^2 / dx^2`, the ratio of the two discrete measures.
    cell_ratio: f64,
}

impl Embedding {
    fn new(grid: &Grid2D, eval: &Grid2D) -> Self {
        Self {
            p: interpolation_matrix(grid, &eval.coords()),
            cell_ratio: (eval.dx() / grid.dx()).powi(2),
        }
    }

    fn forward(&self, f: &ComplexField2D, eval: Grid2D) -> Vec<Complex64> {
        resample(f, &self.p, &self.p, eval).into_samples()
    }

    fn adjoint(&self, h: &ComplexField2D, grid: Grid2D) -> ComplexField2D {
        let pt = self.p.transpose();
        resample(h, &pt, &pt, grid).scaled(Complex64::new(self.cell_ratio, 0.0))
    }
}

/// Oversampling factor for a grid of `n` points per axis.
fn oversampling(n: usize) -> usize {
    let mut p = 1;
    while p * p * n < EVAL_MIN_POINTS {
        p += 1;
    }
    p
}

#[derive(Debug, Clone, Copy)]
struct LensNode {
    angle: f64,
    weight: f64,
}

#[derive(Debug, Clone)]
pub struct SpaceTime {
    grid: Grid2D,
    embedding: Option<Arc<Embedding>>,
    frame: Arc<OscillatorFrame>,
    nodes: Vec<LensNode>,
}

impl SpaceTime {
    pub fn new(grid: &Grid2D, tq: &TimeQuadrature) -> Self {
        let p = oversampling(grid.n());
        if p == 1 {
            return Self::with_frame(OscillatorFrame::for_grid(grid), tq);
        }
        let eval = Grid2D::new(p * p * grid.n(), p as f64 * grid.half_width())
            .expect("oversampled grid is valid");
        let mut st = Self::with_frame(OscillatorFrame::for_grid(&eval), tq);
        st.grid = *grid;
        st.embedding = Some(Arc::new(Embedding::new(grid, &eval)));
        st
    }

    /// Lens frame on the field grid itself, at scale `frame.beta_sq()`.
    pub fn with_frame(frame: Arc<OscillatorFrame>, tq: &TimeQuadrature) -> Self {
        let nodes = tq
            .nodes()
            .iter()
            .zip(tq.weights())
            .map(|(&t, &w)| LensNode {
                angle: frame.angle(t),
                weight: w * frame.slice_factor(t),
            })
            .collect();
        Self {
            grid: *frame.grid(),
            embedding: None,
            frame,
            nodes,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn frame(&self) -> &Arc<OscillatorFrame> {
        &self.frame
    }

    fn modes_of(&self, f: &ComplexField2D) -> Result<ComplexMatrix> {
        if f.grid() != &self.grid {
            return Err(crate::error::LabError::GridMismatch);
        }
        let phys = to_physical(f)?;
        Ok(match &self.embedding {
            Some(e) => self.frame.to_modes(&e.forward(&phys, *self.frame.grid())),
            None => self.frame.to_modes(phys.samples()),
        })
    }

    /// Area of one cell of the grid the integrals are evaluated on.
    fn cell(&self) -> f64 {
        self.frame.grid().dx().powi(2)
    }

    fn slice(&self, modes: &ComplexMatrix, angle: f64) -> ComplexMatrix {
        self.frame.from_modes(&self.frame.evolve(modes, angle))
    }

    /// Sum over nodes of `weight * g(node)` in fixed chunk order.
    fn reduce<T, G, A>(&self, g: G, zero: T, add: A) -> T
    where
        T: Send + Sync + Clone,
        G: Fn(LensNode) -> T + Sync,
        A: Fn(T, T) -> T + Sync,
    {
        let partials: Vec<T> = self
            .nodes
            .par_chunks(CHUNK)
            .map(|chunk| chunk.iter().fold(zero.clone(), |acc, &node| add(acc, g(node))))
            .collect();
        partials.into_iter().fold(zero, add)
    }

    /// `||e^{it Delta} f||_{L^4_{t,x}}^4`.
    pub fn l4_fourth(&self, f: &ComplexField2D) -> Result<f64> {
        let modes = self.modes_of(f)?;
        let cell = self.cell();
        Ok(self.reduce(
            |node| {
                let w = self.slice(&modes, node.angle);
                let s: f64 = w
                    .re
                    .iter()
                    .zip(w.im.iter())
                    .map(|(a, b)| {
                        let m = a * a + b * b;
                        m * m
                    })
                    .sum();
                node.weight * s * cell
            },
            0.0,
            |a, b| a + b,
        ))
    }

    /// `int int conj(u1) conj(u2) u3 u4 dx dt`.
    pub fn quartic(
        &self,
        f1: &ComplexField2D,
        f2: &ComplexField2D,
        f3: &ComplexField2D,
        f4: &ComplexField2D,
    ) -> Result<Complex64> {
        let modes = [
            self.modes_of(f1)?,
            self.modes_of(f2)?,
            self.modes_of(f3)?,
            self.modes_of(f4)?,
        ];
        let cell = self.cell();
        Ok(self.reduce(
            |node| {
                let w: Vec<Vec<Complex64>> = modes
                    .iter()
                    .map(|m| self.slice(m, node.angle).to_samples())
                    .collect();
                let s: Complex64 = (0..w[0].len())
                    .map(|k| w[0][k].conj() * w[1][k].conj() * w[2][k] * w[3][k])
                    .sum();
                s * node.weight * cell
            },
            Complex64::new(0.0, 0.0),
            |a, b| a + b,
        ))
    }

    /// `int e^{-it Delta}(|u|^2 u)(t) dt`, the field `G` with
    /// `<g, G> = int int conj(u_g) |u|^2 u dx dt` for every `g`.
    pub fn cubic_gradient(&self, f: &ComplexField2D) -> Result<ComplexField2D> {
        let modes = self.modes_of(f)?;
        let n = self.frame.grid().n();
        let acc = self.reduce(
            |node| {
                let w = self.slice(&modes, node.angle);
                let mut cubic = w.clone();
                for (re, im) in cubic.re.iter_mut().zip(cubic.im.iter_mut()) {
                    let m = *re * *re + *im * *im;
                    *re *= m;
                    *im *= m;
                }
                let back = self.frame.to_modes(&cubic.to_samples());
                let mut out = self.frame.evolve(&back, -node.angle);
                out.re *= node.weight;
                out.im *= node.weight;
                out
            },
            ComplexMatrix::zeros(n),
            |mut a, b| {
                a.add_scaled(&b, 1.0);
                a
            },
        );
        let out = ComplexField2D::from_parts(*self.frame.grid(), Space::Physical, self.frame.from_modes(&acc).to_samples());
        Ok(match &self.embedding {
            Some(e) => e.adjoint(&out, self.grid),
            None => out,
        })
    }

    /// `||e^{it Delta} h1 e^{it Delta} h2||_{L^2_{t,x}}^2`.
    pub fn bilinear_sq(&self, h1: &ComplexField2D, h2: &ComplexField2D) -> Result<f64> {
        let m1 = self.modes_of(h1)?;
        let m2 = self.modes_of(h2)?;
        let cell = self.cell();
        Ok(self.reduce(
            |node| {
                let a = self.slice(&m1, node.angle).to_samples();
                let b = self.slice(&m2, node.angle).to_samples();
                let s: f64 = a.iter().zip(&b).map(|(x, y)| x.norm_sqr() * y.norm_sqr()).sum();
                node.weight * s * cell
            },
            0.0,
            |a, b| a + b,
        ))
    }

    /// `int |u(t, x)|^4 dx` at a single time.
    pub fn slice_l4_fourth(&self, f: &ComplexField2D, t: f64) -> Result<f64> {
        let modes = self.modes_of(f)?;
        let w = self.slice(&modes, self.frame.angle(t));
        let s: f64 = w
            .re
            .iter()
            .zip(w.im.iter())
            .map(|(a, b)| (a * a + b * b).powi(2))
            .sum();
        Ok(self.frame.slice_factor(t) * s * self.cell())
    }
}

/// `||e^{it Delta} f||_{L^4_{t,x}}`.
pub fn l4_spacetime_norm(f: &ComplexField2D, tq: &TimeQuadrature) -> Result<f64> {
    Ok(SpaceTime::new(f.grid(), tq).l4_fourth(f)?.powf(0.25))
}

/// L2 norm in physical space.
pub fn l2_norm(f: &ComplexField2D) -> Result<f64> {
    Ok(to_physical(f)?.l2_norm())
}
