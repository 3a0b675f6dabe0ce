//! Sparse dynamic network inference from replicated expression time series.
//!
//! The model is an input-dependent linear Gaussian state-space model
//!
//! ```text
//! theta_t = F theta_{t-1} + A y_{t-1} + eta_t,    eta_t ~ N(0, I_k)
//! y_t     = Z theta_t     + B y_{t-1} + xi_t,     xi_t  ~ N(0, I_p)
//! ```
//!
//! with `theta_0 ~ N(0, Q0)` and `y_0 = 0`. Parameters are estimated by an
//! EM algorithm whose E-step is a Kalman smoother and whose M-step solves
//! L1-constrained quadratic programs with a Gram-driven LARS-lasso path.
//! The penalty budgets are chosen by corrected AIC over a grid, and the
//! fitted matrices are exported as a signed interaction graph.
//!
//! All numerical code is generic over [`Scalar`]; the `*64` aliases at the
//! crate root fix the scalar to `f64`, which is what the I/O layer and the
//! CLI use.

pub mod config;
pub mod em;
pub mod error;
pub mod graph;
pub mod io;
pub mod kalman;
pub mod lars;
pub(crate) mod linalg;
pub mod model;
pub mod report;
pub mod selection;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub use error::{ErrorKind, NetinfError, Result};

/// Floating-point scalar the numerical core is generic over (`f32` or `f64`).
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

impl<T> Scalar for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type Dataset64 = model::Dataset<f64>;
pub type Dataset32 = model::Dataset<f32>;
pub type FilteredMoments64 = kalman::FilteredMoments<f64>;
pub type SmoothedMoments64 = kalman::SmoothedMoments<f64>;
pub type ESuffStats64 = em::ESuffStats<f64>;
pub type QuadProblem64 = lars::QuadProblem<f64>;
pub type LarsPath64 = lars::LarsPath<f64>;
pub type Penalties64 = em::Penalties<f64>;
pub type FitResult64 = em::FitResult<f64>;
pub type SelectionTable64 = selection::SelectionTable<f64>;
