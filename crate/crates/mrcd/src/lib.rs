//! Robust covariance estimation that remains well-posed when the number of
//! variables approaches or exceeds the number of observations.
//!
//! The centerpiece is a regularized minimum covariance determinant estimator:
//! the scatter of the best h-subset is blended with a well-conditioned target
//! matrix, so the result is always invertible and its condition number is
//! kept under control. Supporting pieces include robust univariate scale and
//! rank correlation, an orthogonalized pairwise (OGK) comparator, a Monte
//! Carlo harness for contaminated designs, and a plug-in robust regression.

pub mod cli;
pub mod data;
pub mod error;
pub mod estimator;
pub mod ogk;
pub mod preprocess;
pub mod regress;
pub mod sim;
pub mod target;
pub mod univariate;

pub use data::DataMatrix;
pub use error::{Error, Result};
pub use estimator::{fit, robust_distances, FitOptions, MrcdFit, OutlierCutoff, TargetChoice};
