//! Direct-collocation solver for Bolza optimal control problems with an
//! a posteriori certificate of second-order sufficiency.
#![no_std]
// Index loops mirror the matrix notation of the kernels; negated float
// comparisons are deliberate so that NaN fails validation.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod ad;
pub mod certify;
pub mod constants;
pub mod error;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod problems;
pub mod reconstruction;
pub mod refine;
pub mod residuals;
pub mod serde_ext;
pub mod solver;
pub mod transcription;

pub use error::{Error, Result};
pub use model::{OcpFunctions, OcpProblem};
pub use transcription::{Mesh, Scheme, SchemeKind};
