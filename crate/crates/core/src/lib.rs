//! Curve modeling for functional data with regime changes.
//!
//! Two estimators share one data model ([`CurveSet`] on a [`TimeGrid`]):
//!
//! * [`piecewise`]: piecewise polynomial regression with globally optimal
//!   segment bounds found by dynamic programming;
//! * [`rhlp`]: regression with a hidden logistic process, fitted by EM with
//!   an IRLS update of the gate.
//!
//! On top of them: BIC model selection ([`select`]), MAP curve
//! classification ([`classify`]), seeded data generators ([`simulate`]), an
//! evaluation harness ([`eval`]), file formats ([`io`]) and the command-line
//! front-end ([`cli`]).

pub mod classify;
pub mod cli;
pub mod curves;
pub mod error;
pub mod eval;
pub mod io;
mod linalg;
pub mod piecewise;
pub mod rhlp;
pub mod select;
pub mod simulate;

pub use curves::{design_matrix, gaussian_logpdf, CurveSet, DesignMatrix, GateWeights, PolyRegime, TimeGrid};
pub use error::{Error, Result};
pub use piecewise::{fisher_segment, piecewise_approximation, piecewise_loglik, segment_fit, PiecewiseModel};
pub use rhlp::{e_step, fit_em, rhlp_approximation, rhlp_loglik, EmConfig, EmTrace, RhlpModel};
