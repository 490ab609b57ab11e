//! Hierarchical group-thresholding (HiGT) for multi-task linear regression
//! with overlapping input-group and output-group sparsity.
//!
//! A fit runs in two phases. [`screening::screen`] walks a two-level tree of
//! coefficient blocks and discards blocks whose optimality conditions at
//! `B = 0` certify them as zero, skipping the leaves of any multi-block node it
//! discards. [`solver::solve_restricted`] then runs accelerated proximal
//! gradient on the surviving coefficients only. [`solver::fit`] chains both.

pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod screening;
pub mod simulation;
pub mod solver;
pub mod tree;

pub use error::{HigtError, MatrixKind, Result};
pub use metrics::{score, RecoveryScore};
pub use model::{
    objective, penalty, smooth_gradient, CoefficientMatrix, Dataset, GroupStructure, RegParams,
    Scaling,
};
pub use screening::{
    precompute_correlation, screen, CorrelationMatrix, RuleEvaluation, ScreenStats, SurvivorSet,
};
pub use simulation::{simulate, SimConfig, SimInstance};
pub use solver::{
    fit, fit_without_screening, prox_penalty, solve_restricted, FitResult, SolverConfig, StepRule,
    TreeConfig,
};
pub use tree::{build_tree, BlockNode, NodeKind, ScreeningTree};
