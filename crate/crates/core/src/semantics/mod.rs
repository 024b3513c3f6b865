//! The annotation layer attached to a volumetric mesh.
//!
//! A [`SemanticLayer`] carries per-vertex constraint sets (displacement and
//! force boxes, temperatures and heat loads), per-element material ranges,
//! property specifications and an optional field-regularity bound. Binding
//! it to a mesh yields a [`BoundSpecification`], the pair that properties
//! are checked against.

mod bind;
mod field;
mod format;
pub mod presets;
mod types;

use thiserror::Error;

use crate::fem::FemError;

pub use bind::{
    bind_to_mesh, check_direct_property, check_material_property, check_property, evaluate_properties, BoundSpecification,
    PropertyVerdict,
};
pub(crate) use bind::{average_temperature_weights, measure, required_physics};
pub use field::{FieldEntry, MaterialField, MaterialParams, Provenance, RangeViolation};
pub use format::parse_semantic_layer;
pub use types::{
    BoxSet, Category, Comparison, DisplacementSet, ElementAnnotation, ElementRanges, FieldRegularity, ForceSet, HeatSet,
    Interval, Parameter, Predicate, PropertySpec, Scope, SemanticLayer, TemperatureSet, VertexAnnotation,
    VertexSelection,
};

#[derive(Debug, Error)]
pub enum SemanticError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown property at line {line}, column {column}: {message}")]
    UnknownProperty { line: usize, column: usize, message: String },
    #[error("{field}: range min {min} > max {max}")]
    RangeOrder { field: String, min: f64, max: f64 },
    #[error("{field}: {reason}")]
    RangeDomain { field: String, reason: String },
    #[error("units.{field}: expected `{expected}`, got `{found}`")]
    Units { field: &'static str, expected: &'static str, found: String },
    #[error("property `{property}`: {reason}")]
    InconsistentProperty { property: String, reason: String },
    #[error("unknown vertex tag `{0}`")]
    UnknownTag(String),
    #[error("vertex {vertex}: neither {known_a} nor {known_b} is determined")]
    Undetermined { vertex: usize, known_a: &'static str, known_b: &'static str },
    #[error("{what}: {detail}")]
    InvalidGroup { what: String, detail: String },
    #[error("annotation references vertex {id}, but the mesh has {count} vertices")]
    DanglingVertex { id: usize, count: usize },
    #[error("annotation references element {id}, but the mesh has {count} elements")]
    DanglingElement { id: usize, count: usize },
    #[error("element {element}: no `{field}` range (no default and no override)")]
    MissingElementRange { element: usize, field: &'static str },
    #[error("{physics} problem is under-constrained: {reason}")]
    UnderConstrained { physics: &'static str, reason: String },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("property `{property}` is {found}, expected {expected}")]
    CategoryMismatch { property: String, expected: &'static str, found: &'static str },
    #[error("material field has {found} entries, mesh has {expected} elements")]
    FieldSize { expected: usize, found: usize },
    #[error(transparent)]
    Fem(#[from] Box<FemError>),
}

impl From<FemError> for SemanticError {
    fn from(e: FemError) -> Self {
        SemanticError::Fem(Box::new(e))
    }
}
