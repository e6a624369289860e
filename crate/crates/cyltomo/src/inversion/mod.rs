//! Convexified reconstruction of the basis coefficients and the refractive index.

pub mod field;
pub mod functional;
pub mod lift;
pub mod minimize;
pub mod probes;
pub mod reconstruct;
pub mod reference;

use thiserror::Error;

pub use field::SemiDiscreteField;
pub use functional::{Evaluation, Functional, Linearization};
pub use lift::project_feasible;
pub use minimize::{minimize, FeasibleSetParams, History, Minimum};
pub use probes::{carleman_check, convexity_probe, CarlemanCheck};
pub use reconstruct::{reconstruct_n, ReconstructionReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InversionError {
    #[error("inconsistent inputs: {0}")]
    Mismatch(String),
    #[error("non-finite value at iteration {0}")]
    NonFinite(usize),
    #[error("objective increased {0} times in a row")]
    Step(usize),
    #[error("iterate leaves the feasible set: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Data(#[from] crate::observations::DataError),
}
