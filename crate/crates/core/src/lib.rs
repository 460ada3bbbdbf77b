//! q-calculus special functions, Jackson integration, fractional q-operators
//! and spectral solvers for time-fractional q-difference problems.

pub mod bounds;
pub mod error;
pub mod qcalculus;
pub mod qcore;
pub mod qspecial;
pub mod spectral;
pub mod sum;
pub mod verify;
pub mod wynn;

pub use error::{Error, Result};
pub use qcore::{QContext, SeriesResult, Status};
pub use qspecial::{EvalMode, EvalStrategy, MLParams};
