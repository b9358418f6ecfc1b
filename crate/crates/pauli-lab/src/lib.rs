//! Numerical laboratory for two-dimensional Pauli operators with
//! measure-valued magnetic fields.
//!
//! The library constructs scalar generating potentials `h` with
//! `Delta h = mu`, assembles the weighted quadratic form of the Pauli
//! operator on rectangular grids, quantifies the A2 / reverse-Hoelder
//! behavior of the weights `e^(+-2h)`, counts zero modes against the
//! flux-quantization prediction, and reproduces the infinite-variation
//! band field whose `e^(-2h)`-integral diverges band by band.

pub mod counterexample;
pub mod dense;
pub mod error;
pub mod fftgrid;
pub mod geometry;
pub mod io;
pub mod lobpcg;
pub mod measure;
pub mod multiplier;
pub mod potential;
pub mod quad;
pub mod report;
pub mod spectrum;
pub mod weights;
pub mod zeromodes;

pub use error::{PauliError, Result};
