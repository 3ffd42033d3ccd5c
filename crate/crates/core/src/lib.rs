//! Sparse identification of polynomial ODEs by Gaussian evidence maximization.
//!
//! The pipeline runs
//! [`dynamics`] (simulate or load a trajectory) →
//! [`derivatives`] (banded derivative and smoothing operators) →
//! [`library`] (monomial features with propagated variance) →
//! [`regression`] (evidence-driven term elimination and baselines),
//! with [`evidence`] supplying the shared Gaussian kernels,
//! [`active`] the entropy-driven data selection and [`bench`] the
//! benchmark sweeps.

pub mod error;
pub mod linalg;
pub mod rng;

pub mod derivatives;
pub mod dynamics;
pub mod evidence;
pub mod library;
pub mod regression;

pub mod active;
pub mod bench;

pub mod io;

pub use error::{Error, Result};
