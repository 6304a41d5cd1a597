// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bilinear;
pub mod character;
pub mod decay;
pub mod error;
pub mod euler_lagrange;
pub mod field;
pub mod functional;
pub mod grid;
pub mod harness;
pub mod io;
pub mod oscillator;
pub mod quadrature;
pub mod rng;
pub mod spacetime;
pub mod transform;
