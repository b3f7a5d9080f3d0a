//! Numerical toolkit for the radial heat equation with absorption,
//! `∂ₜu − Δu = −u^p`, on exterior domains and the half-line with
//! homogeneous Dirichlet data.

pub mod config;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod output;
pub mod quadrature;
pub mod scenarios;
pub mod diagnostics;
pub mod solver;
pub mod testfn;

pub use error::{Error, Result};
