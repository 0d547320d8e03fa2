//! Ridge-penalized estimation of Gaussian graphical models.
//!
//! The crate estimates one or several regularized precision matrices from
//! high-dimensional data, determines their support, and analyzes the
//! resulting conditional-independence networks.

pub mod error;
pub mod fused;
pub mod linalg;
pub mod netstats;
pub mod optim;
pub mod ridge;
pub mod sparsify;
pub mod tuning;

pub use error::{Error, Result};
pub use linalg::{cov_ml, prec_to_pcor, sym_eigen, DataMatrix, SymEigen, SymMatrix};
pub use ridge::{default_target, ridge_alt, ridge_arch_i, ridge_arch_ii, TargetKind, TargetName};
