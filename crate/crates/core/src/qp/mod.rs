//! Convex QP machinery: sparse matrices, quasi-definite LDL^T, an
//! interior-point method and an ADMM solver.

pub mod admm;
mod ipm;
pub mod ldl;
pub mod sparse;

pub use admm::{solve, QpData, QpInfo, QpMethod, QpResult, QpSettings, QpStatus};
pub use ldl::{Ldl, LdlError};
pub use sparse::Csc;
