//! Stability analysis for linear functional equations with distributed delays
//!
//! ```text
//! x(t) = ∫_{-1}^0 dM(θ) x(t + θ),   t ≥ 0,
//! ```
//!
//! where `M` is a matrix-valued function of bounded variation made of finitely
//! many atoms and a piecewise-constant density.
//!
//! The crate computes total variations, characteristic roots and the spectral
//! abscissa, a certified growth bound, bounds on the Hale–Silkowski radius
//! `ρ_HS(M)`, exact pushforwards of the measure under delay perturbations,
//! destabilizing perturbations, and method-of-steps simulations.

// `!(x > y)` is how NaN inputs are rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charfun;
pub mod error;
pub mod hs_radius;
pub mod io;
pub mod linalg;
pub mod measure;
pub mod perturbation;
pub mod simulator;
pub mod spectrum;

pub use error::{Error, Result};
pub use linalg::{CMat, Mat, MatrixNorm};
pub use measure::{Atom, Density, MatrixNbv, WellPosedness};
pub use perturbation::{Bin, Binning, Perturbation, PiecewiseLinear};
