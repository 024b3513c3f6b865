use serde::{Deserialize, Serialize};

use super::{FieldSolution, Physics};
use crate::semantics::{BoundSpecification, DisplacementSet, TemperatureSet};

/// Per-vertex check of a computed field against its annotated goal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalVerdict {
    pub vertex: usize,
    pub within: bool,
    /// Displacement magnitude (mm) or temperature (K).
    pub value: f64,
}

/// Check every vertex with a goal set (`Box` displacement or temperature
/// `Range`). Prescribed vertices satisfy their condition by construction and
/// always pass; vertices without a goal set are skipped.
pub fn verify_nodal_bounds(spec: &BoundSpecification, solution: &FieldSolution) -> Vec<NodalVerdict> {
    let mut out = Vec::new();
    for (v, ann) in spec.vertex_annotations().iter().enumerate() {
        match solution.physics {
            Physics::Elasticity => {
                let u = solution.displacement(v);
                match ann.displacement {
                    DisplacementSet::Box(b) => out.push(NodalVerdict { vertex: v, within: b.contains(&u), value: u.norm() }),
                    DisplacementSet::Fixed | DisplacementSet::Prescribed(_) => {
                        out.push(NodalVerdict { vertex: v, within: true, value: u.norm() })
                    }
                    DisplacementSet::Unconstrained => {}
                }
            }
            Physics::Conduction => {
                let t = solution.temperature(v);
                match ann.temperature {
                    TemperatureSet::Range(r) => out.push(NodalVerdict { vertex: v, within: r.contains(t), value: t }),
                    TemperatureSet::Prescribed(_) => out.push(NodalVerdict { vertex: v, within: true, value: t }),
                    TemperatureSet::Unconstrained => {}
                }
            }
        }
    }
    out
}
