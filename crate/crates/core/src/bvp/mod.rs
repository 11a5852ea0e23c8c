//! The cylinder boundary value problem `(d/dx + A + B) u = f` with graph
//! boundary conditions `P u(0) = sigma + K (1 - P) u(0)`, `(1 - P) u(delta) = 0`.

pub mod constants;
pub mod model;
pub mod perturbed;

pub use constants::{c4_general, constant_c2, constant_c3, constant_c4};
pub use model::{
    aps_condition, chiral_condition, solve_model, BcResiduals, ChiralCondition, ChiralSign, GraphBoundaryCondition,
    ModelProblem, SolveReport,
};
pub use perturbed::{estimate_op_norm, solve_perturbed, IterationReport, OpNormEstimate, Perturbation};
