//! Quasi-periodic solutions of forced reversible Schrodinger equations at
//! finite Fourier truncation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cantor;
pub mod config;
pub mod error;
pub mod harness;
pub mod inequalities;
pub mod kam;
pub mod model;
pub mod opmatrix;
pub mod regularizer;
pub mod solver;
pub mod spectral;
pub mod stability;

pub use error::{Error, Result};
