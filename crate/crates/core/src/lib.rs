//! Numerical laboratory for the spectral projections `Π_λ` of the Hermite
//! operator `H = −Δ + |x|²`: kernels, phase geometry, localization and
//! mixed-norm operator estimates.

pub mod checks;
pub mod error;
pub mod hermite;
pub mod localization;
pub mod mehler;
pub mod normlab;
pub mod phase;
pub mod quadrature;

pub use error::{Error, Result};
pub use hermite::{EigenLevel, MultiIndex};
pub use localization::{AnnulusKind, AnnulusSpec, Grid, Region, WeightSpec};
pub use mehler::{CutoffBank, Kappa, OscIntegralSpec, Route};
pub use normlab::{GridFunction, LowRankOperator, NormEstimate, ScalingFit};
pub use phase::{AdmissiblePair, PhaseState};
