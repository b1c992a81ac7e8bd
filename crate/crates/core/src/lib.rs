//! ADMM for nonconvex problems with pluggable penalty adaptation.
//!
//! The crate solves
//!
//! ```text
//! min H(u) + G(v)   subject to   A u + B v = b
//! ```
//!
//! by alternating block minimizations and a dual ascent step. The two block
//! minimizations are supplied by each application through [`Oracles`]; the
//! engine handles the dual update, residuals, stopping and penalty updates.
//!
//! Four applications are built in: ℓ0-regularized least squares, ℓ0 total
//! variation denoising, phase retrieval and leading-eigenvector computation.

// Negated comparisons route NaN to the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod datagen;
pub mod engine;
mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod policy;
pub mod prox;
pub mod solvers;

pub use engine::{
    accelerated_step, check_stop, residuals, solve, step, AccelMemory, AccelOutcome,
    ConstraintSystem, Iterates, Oracles, ProblemInstance, Residuals, SolveConfig, SolveReport,
    SolveStatus, SolverState, TraceEntry, UpdateOrder, DIVERGENCE_LIMIT,
};
pub use error::{Error, Result};
pub use linalg::{Field, FieldKind, LinearMap};
pub use policy::{
    BalanceParams, PenaltyPolicy, PolicyKind, PolicyRule, RestartParams, SpectralMemory,
    SpectralParams,
};

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
