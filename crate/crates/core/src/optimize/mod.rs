//! Inversion: choose per-element material values for the unprinted part of a
//! build so that the bound specification holds.
//!
//! The decision parameter of every free element (or of every group of free
//! elements sharing one value) is optimised by projected gradient descent in
//! box-normalised coordinates. Specification bounds enter as quadratic
//! penalties with escalating weight and a small back-off, field regularity as
//! a hinge over face-adjacent pairs, and a penalty-free check at the end
//! decides feasibility. Gradients come from adjoint solves.
//!
//! After the printed prefix deviates from plan, [`reoptimize_after_drift`]
//! either re-runs the descent from the previous optimum or applies the
//! second-order update `δz = −F_zz⁻¹ F_yz δy` of a [`QuadraticModel`].

mod descent;
mod problem;
mod solve;
mod warm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::FemError;
use crate::semantics::{Parameter, SemanticError};

pub use descent::{projected_descent, DescentOptions, DescentOutcome, Restricted, SmoothFunction, StepRecord};
pub use problem::{evaluate_objective, Evaluation, InversionProblem, Objective};
pub use solve::{
    inversion_solve, InfeasibilityCertificate, OptimizationResult, OptimizeOptions, StrategyUsed, TraceRecord,
};
pub use warm::{
    build_element_hessian, build_quadratic_model, deviation_is_negligible, reoptimize_after_drift, warm_start_update, ElementHessian,
    QuadraticModel, Strategy,
};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Semantic(#[from] Box<SemanticError>),
    #[error("invalid inversion problem: {0}")]
    InvalidProblem(String),
    #[error("element {element}: empty box for {parameter} ({min} > {max})")]
    EmptyBox { element: usize, parameter: Parameter, min: f64, max: f64 },
    #[error("free-block Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("base point is not stationary: projected gradient norm {norm:e} > {tol:e}")]
    NotStationary { norm: f64, tol: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
}

impl From<SemanticError> for OptimizeError {
    fn from(e: SemanticError) -> Self {
        match e {
            SemanticError::Fem(f) => OptimizeError::Fem(*f),
            other => OptimizeError::Semantic(Box::new(other)),
        }
    }
}

/// Parameter optimised by default for each objective.
pub fn default_parameter(objective: Objective) -> Parameter {
    match objective {
        Objective::Compliance | Objective::MaterialEffort => Parameter::Young,
        Objective::AverageTemperature => Parameter::Conductivity,
        Objective::Mass => Parameter::Density,
    }
}

/// How free elements share decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One value per element.
    #[default]
    Element,
    /// One value per build layer.
    Layer,
}
