//! Recovery of a smoothly time-varying low-rank matrix from sparse noisy
//! linear measurements.
//!
//! Each time point is estimated by a kernel-weighted, nuclear-norm-penalized
//! trace regression solved with a warm-started accelerated proximal gradient
//! method ([`solver`]). The [`estimators`] module wraps that into the dynamic,
//! static and two-step estimators with cross-validated penalties, and
//! [`synthgen`] plus [`evalharness`] provide simulation and evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod designs;
pub mod error;
pub mod estimators;
pub mod evalharness;
pub mod kernelband;
pub mod matcore;
pub mod solver;
pub mod synthgen;

pub use designs::{Design, DesignFamily, DesignKind, Observation, Panel};
pub use error::{Error, Result};
pub use estimators::{EstimatorKind, CvPlan};
pub use kernelband::{BandwidthPlan, KernelKind};
pub use matcore::{Mat, SvdFactors};
pub use solver::{GradientMode, SolveTrace, SolverConfig, WindowProblem};
