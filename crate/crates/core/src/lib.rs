//! Bilevel Bayesian optimization: nested Gaussian-process loops where the
//! inner loop minimizes a training loss over inner-level parameters and the
//! outer loop maximizes a validation metric over outer-level parameters, each
//! with its own acquisition function (expected improvement or upper
//! confidence bound).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod bilevel;
pub mod cli;
pub mod linalg;
pub mod objective;
pub mod optimize;
pub mod report;
pub mod scalar;
pub mod space;
pub mod surrogate;

pub use acquisition::{AcquisitionKind, Incumbent, ei_score, propose, ucb_score};
pub use bilevel::{Mode, StudyConfig, StudyError, StudyResult, TrialRecord, TrialStatus, run_inner, run_study};
pub use objective::{Evaluation, Objective, ObjectiveSpec};
pub use scalar::Scalar;
pub use space::{Configuration, Level, LevelFilter, ParamKind, ParamSpec, ParamValue, SearchSpace};
pub use surrogate::{KernelParams, log_marginal_likelihood};

/// Double-precision GP surrogate, the one studies use.
pub type GpModel = surrogate::GpModel<f64>;
/// Single-precision GP surrogate.
pub type GpModelF32 = surrogate::GpModel<f32>;
pub type Kernel = KernelParams<f64>;
pub type KernelF32 = KernelParams<f32>;
