//! Direct stiffness method on constant-strain tetrahedra.
//!
//! Elasticity uses three displacement dofs per vertex (dof `3v + axis`),
//! conduction one temperature dof per vertex. Dirichlet data is imposed by
//! reduction: prescribed dofs are eliminated and the free-free block is
//! solved, with a dense Cholesky factorisation for small systems and
//! Jacobi-preconditioned conjugate gradients otherwise.

mod element;
mod solve;
mod sparse;
mod system;
mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use element::{element_conductance, element_stiffness, shape_gradients, ElementMatrix};
pub use solve::{solve, solve_free, FieldSolution, SolverDiagnostics, SolverMethod};
pub use sparse::CsrMatrix;
pub use system::{assemble, element_matrix, FemSystem};
pub use verify::{verify_nodal_bounds, NodalVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Physics {
    Elasticity,
    Conduction,
}

impl Physics {
    pub fn dofs_per_node(&self) -> usize {
        match self {
            Physics::Elasticity => 3,
            Physics::Conduction => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Physics::Elasticity => "elasticity",
            Physics::Conduction => "conduction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual `‖K_ff u_f − b_f‖ / ‖b_f‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Free-dof count below which the dense factorisation is used.
    pub dense_threshold: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20_000, dense_threshold: 300 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("degenerate tetrahedron: volume {volume:e} <= {epsilon:e}")]
    Degenerate { volume: f64, epsilon: f64 },
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("element {element}: {source}")]
    Element {
        element: usize,
        #[source]
        source: Box<FemError>,
    },
    #[error("{physics} problem is ill-posed: {reason}")]
    IllPosed { physics: &'static str, reason: String },
    #[error("reduced matrix is not positive definite ({0})")]
    Indefinite(String),
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("material field has {found} entries, mesh has {expected} elements")]
    FieldSize { expected: usize, found: usize },
    #[error("right-hand side has {found} entries, expected {expected}")]
    RhsSize { expected: usize, found: usize },
}
