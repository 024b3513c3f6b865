//! Semantic annotation layer for additive-manufacturing meshes.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: tetrahedral volumetric meshes, generators, validation and
//!   build-direction layer partitions.
//! * [`semantics`]: the annotation layer attached to a mesh (constraint
//!   sets, material ranges, property specifications) and its JSON format.
//! * [`fem`]: constant-strain tetrahedra for linear elasticity and steady
//!   heat conduction, assembly, reduction and solving.
//! * [`optimize`]: the inversion problem over per-element material
//!   parameters, adjoint gradients, and the quadratic warm-start update.
//! * [`printsim`]: seeded layer-by-layer print simulation with an actuator
//!   model, a Bayesian estimator and a re-planning controller.
//! * [`cli`]: the `amsem` command-line front end.

pub mod cli;
pub mod fem;
pub mod mesh;
pub mod optimize;
pub mod printsim;
pub mod semantics;

mod error;

pub use error::{Error, Result};
pub use fem::{FemError, FieldSolution, FemSystem, Physics, SolverOptions};
pub use mesh::{LayerPartition, MeshError, ValidationReport, VolumetricMesh};
pub use semantics::{BoundSpecification, MaterialField, PropertySpec, SemanticError, SemanticLayer};
