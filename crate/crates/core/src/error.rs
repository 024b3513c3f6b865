use thiserror::Error;

use crate::fem::FemError;
use crate::mesh::MeshError;
use crate::optimize::OptimizeError;
use crate::printsim::PrintError;
use crate::semantics::SemanticError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Umbrella error for callers that drive the whole pipeline (CLI, FFI).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Print(#[from] PrintError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-greppable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Mesh(_) => "E-MESH",
            Error::Semantic(_) => "E-ANNOTATION",
            Error::Fem(FemError::NotConverged { .. }) => "E-SOLVER",
            Error::Fem(FemError::Indefinite { .. }) => "E-SOLVER",
            Error::Fem(_) => "E-FEM",
            Error::Optimize(OptimizeError::Fem(FemError::NotConverged { .. })) => "E-SOLVER",
            Error::Optimize(_) => "E-OPTIMIZE",
            Error::Print(_) => "E-PRINT",
            Error::Io { .. } => "E-IO",
            Error::Json(_) => "E-JSON",
        }
    }

    /// True when the failure comes from the numerics rather than from the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Fem(FemError::NotConverged { .. })
                | Error::Fem(FemError::Indefinite { .. })
                | Error::Optimize(OptimizeError::Fem(FemError::NotConverged { .. }))
                | Error::Optimize(OptimizeError::Fem(FemError::Indefinite { .. }))
                | Error::Optimize(OptimizeError::NotPositiveDefinite)
                | Error::Print(PrintError::Optimize(OptimizeError::Fem(FemError::NotConverged { .. })))
        )
    }
}
