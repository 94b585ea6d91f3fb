//! Optimal control of an elliptic state equation with complementarity
//! constraints `0 <= u ⊥ v >= 0` on two controls.
//!
//! The constraint is replaced by a squared Fischer-Burmeister penalty whose
//! weight is driven to infinity along a homotopy; every penalized KKT system
//! is solved by a damped semismooth Newton method on a P1/P0 finite-element
//! discretization of the unit square. Computed points can be certified with a
//! discrete strong-stationarity test.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the experiment
//! driver and the command line live in the companion `fbcontrol` crate.
#![no_std]
// NaN-rejecting checks read as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod banded;
pub mod dense;
mod error;
pub mod fem;
pub mod homotopy;
pub mod kkt;
pub mod mesh;
pub mod ncp;
pub mod ocnc;
pub mod pde;
pub mod problem;
pub mod sparse;
pub mod stationarity;
#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use fem::{ControlSpace, FemMatrices, ReductionMap};
pub use homotopy::{
    run_homotopy, weighted_norm, HomotopyOutcome, HomotopyRecord, HomotopyStatus, HomotopyTrace, PenaltyConfig,
};
pub use kkt::{KktIterate, NewtonConfig, NewtonReport, StepSolver};
pub use mesh::Mesh;
pub use ncp::{fb, fb_smoothed, fb_sq_grad, PenaltyEval, PenaltyHessian};
pub use ocnc::{OcncConfig, OcncSolution};
pub use pde::EllipticOperator;
pub use problem::{ControlProblem, Regularization};
pub use stationarity::{run_stationarity_test, IndexSets, PairClass, StationarityReport, Verdict};

/// Euclidean inner product.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
