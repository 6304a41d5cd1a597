//! Harmonic-oscillator frame used to evaluate free evolution at arbitrary times.
//!
//! For `u(t) = e^{it Delta} f` on `R^2` and `K = (-beta^2 Delta + |x|^2 / beta^2) / 2`,
//! the lens transform gives, with `s = -atan(2t / beta^2)`,
//!
//! ```text
//! |u(t, x)| = cos(s) |W(s, x cos s)|,    W(s) = e^{-isK} f.
//! ```
//!
//! The whole time line maps onto `s in (-pi/2, pi/2)` and `W` stays inside a
//! fixed phase-space window, so it can be held on the grid for every `t`,
//! which the periodic free propagator cannot do once the solution has
//! dispersed past the box. The chirp factor of the transform has unit
//! modulus and cancels in every quantity built from two conjugated and two
//! plain copies of `u`.
//!
//! `K` is discretized with the spectral second derivative, so the discrete
//! evolution is exactly unitary and separable: one real `n x n` eigenbasis
//! serves both axes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::grid::Grid2D;

/// Complex `n x n` coefficient array split into real and imaginary parts.
#[derive(Debug, Clone)]
pub struct ComplexMatrix {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            re: DMatrix::zeros(n, n),
            im: DMatrix::zeros(n, n),
        }
    }

    /// Row-major samples (second axis fastest) into matrix form.
    pub fn from_samples(n: usize, samples: &[Complex64]) -> Self {
        Self {
            re: DMatrix::from_fn(n, n, |i, j| samples[i * n + j].re),
            im: DMatrix::from_fn(n, n, |i, j| samples[i * n + j].im),
        }
    }

    pub fn to_samples(&self) -> Vec<Complex64> {
        let n = self.re.nrows();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(Complex64::new(self.re[(i, j)], self.im[(i, j)]));
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re[(i, j)], self.im[(i, j)])
    }

    pub fn set(&mut self, i: usize, j: usize, z: Complex64) {
        self.re[(i, j)] = z.re;
        self.im[(i, j)] = z.im;
    }

    pub fn add_scaled(&mut self, other: &Self, w: f64) {
        self.re += &other.re * w;
        self.im += &other.im * w;
    }
}

#[derive(Debug)]
pub struct OscillatorFrame {
    grid: Grid2D,
    beta_sq: f64,
    eigvals: Vec<f64>,
    basis: DMatrix<f64>,
    basis_t: DMatrix<f64>,
}

type FrameKey = (usize, u64, u64);

fn cache() -> &'static Mutex<HashMap<FrameKey, Arc<OscillatorFrame>>> {
    static CACHE: OnceLock<Mutex<HashMap<FrameKey, Arc<OscillatorFrame>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl OscillatorFrame {
    /// Frame with the grid-balanced scale, cached per grid.
    pub fn for_grid(grid: &Grid2D) -> Arc<Self> {
        Self::with_scale(grid, grid.balanced_beta_sq())
    }

    pub fn with_scale(grid: &Grid2D, beta_sq: f64) -> Arc<Self> {
        let key = (grid.n(), grid.half_width().to_bits(), beta_sq.to_bits());
        if let Some(frame) = cache().lock().expect("frame cache poisoned").get(&key) {
            return frame.clone();
        }
        let frame = Arc::new(Self::build(*grid, beta_sq));
        cache()
            .lock()
            .expect("frame cache poisoned")
            .entry(key)
            .or_insert(frame)
            .clone()
    }

    fn build(grid: Grid2D, beta_sq: f64) -> Self {
        let n = grid.n();
        let freqs = grid.freqs();
        // circulant spectral second derivative, row k = offset k
        let d2: Vec<f64> = (0..n)
            .map(|k| {
                freqs
                    .iter()
                    .enumerate()
                    .map(|(j, &xi)| {
                        let phase = 2.0 * std::f64::consts::PI * (j as f64 - (n / 2) as f64) * k as f64 / n as f64;
                        -xi * xi * phase.cos()
                    })
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        let coords = grid.coords();
        let k1 = DMatrix::from_fn(n, n, |a, b| {
            let offset = (a + n - b) % n;
            let mut v = -0.5 * beta_sq * d2[offset];
            if a == b {
                v += 0.5 * coords[a] * coords[a] / beta_sq;
            }
            v
        });
        let eig = SymmetricEigen::new(k1);
        let basis = eig.eigenvectors;
        let basis_t = basis.transpose();
        Self {
            grid,
            beta_sq,
            eigvals: eig.eigenvalues.iter().copied().collect(),
            basis,
            basis_t,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn beta_sq(&self) -> f64 {
        self.beta_sq
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    /// Mode indices sorted by eigenvalue, lowest first.
    pub fn ladder(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.eigvals.len()).collect();
        idx.sort_by(|&a, &b| self.eigvals[a].total_cmp(&self.eigvals[b]));
        idx
    }

    /// Lens angle of time `t`.
    pub fn angle(&self, t: f64) -> f64 {
        -(2.0 * t / self.beta_sq).atan()
    }

    /// `cos^2` of the lens angle of `t`: the factor turning a lens-frame
    /// spatial integral of a quartic density into the one at time `t`.
    pub fn slice_factor(&self, t: f64) -> f64 {
        let r = 2.0 * t / self.beta_sq;
        1.0 / (1.0 + r * r)
    }

    /// Time whose lens angle is `s`.
    pub fn time_of_angle(&self, s: f64) -> f64 {
        -0.5 * self.beta_sq * s.tan()
    }

    pub fn to_modes(&self, samples: &[Complex64]) -> ComplexMatrix {
        let m = ComplexMatrix::from_samples(self.grid.n(), samples);
        ComplexMatrix {
            re: &self.basis_t * &m.re * &self.basis,
            im: &self.basis_t * &m.im * &self.basis,
        }
    }

    pub fn from_modes(&self, modes: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            re: &self.basis * &modes.re * &self.basis_t,
            im: &self.basis * &modes.im * &self.basis_t,
        }
    }

    /// Mode coefficients multiplied by `e^{-i s (lambda_a + lambda_b)}`.
    pub fn evolve(&self, modes: &ComplexMatrix, s: f64) -> ComplexMatrix {
        let phases: Vec<Complex64> = self
            .eigvals
            .iter()
            .map(|&l| Complex64::from_polar(1.0, -s * l))
            .collect();
        let n = self.grid.n();
        let mut out = ComplexMatrix::zeros(n);
        for b in 0..n {
            for a in 0..n {
                out.set(a, b, modes.get(a, b) * phases[a] * phases[b]);
            }
        }
        out
    }

    /// Grid samples of `e^{-isK} f`.
    pub fn evolve_samples(&self, samples: &[Complex64], s: f64) -> Vec<Complex64> {
        let modes = self.to_modes(samples);
        self.from_modes(&self.evolve(&modes, s)).to_samples()
    }
}
