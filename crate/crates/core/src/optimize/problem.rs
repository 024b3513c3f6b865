use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{default_parameter, Grouping, OptimizeError};
use crate::fem::{self, FemSystem, FieldSolution, Physics, SolverOptions};
use crate::mesh::LayerPartition;
use crate::semantics::{
    average_temperature_weights, measure, required_physics, BoundSpecification, Category, FieldRegularity, Interval,
    Comparison, MaterialField, Parameter, Predicate, PropertySpec, PropertyVerdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `Fᵀ U`.
    Compliance,
    /// Volume-weighted mean temperature.
    AverageTemperature,
    /// `Σ ρ_e V_e`.
    Mass,
    /// Volume-weighted mean of the decision parameter. Minimising it under
    /// a stiffness bound asks for the least material capability that still
    /// meets the specification.
    MaterialEffort,
}

impl Objective {
    pub fn physics(&self) -> Option<Physics> {
        match self {
            Objective::Compliance => Some(Physics::Elasticity),
            Objective::AverageTemperature => Some(Physics::Conduction),
            Objective::Mass | Objective::MaterialEffort => None,
        }
    }
}

/// Decision problem over the free elements' values of one material parameter.
///
/// Elements are either frozen (their value is data) or belong to exactly one
/// free group; every element of a group takes the group's value. Parameters
/// other than the decision parameter come from the base field.
#[derive(Debug, Clone)]
pub struct InversionProblem {
    spec: Arc<BoundSpecification>,
    objective: Objective,
    parameter: Parameter,
    base: MaterialField,
    frozen: Vec<bool>,
    groups: Vec<Vec<usize>>,
    boxes: Vec<Interval>,
    lipschitz: Option<FieldRegularity>,
    pairs: Vec<(usize, usize, f64)>,
    constraints: Vec<PropertySpec>,
    solver: SolverOptions,
}

/// Objective, constraint measurements and their gradients with respect to
/// every element's decision value.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub objective_gradient: Vec<f64>,
    pub verdicts: Vec<PropertyVerdict>,
    /// Per constraint, the sum of squared normalised excesses
    /// `max(0, δ − margin/|bound|)²` over its measurement points (every
    /// selected vertex for the nodal maxima), at back-off `δ`.
    pub penalties: Vec<f64>,
    /// Gradients of `penalties` (empty unless requested).
    pub penalty_gradients: Vec<Vec<f64>>,
    pub fem_solves: usize,
}

impl InversionProblem {
    /// All elements free, one group each, base field at range midpoints,
    /// constraints = the material-dependent properties of `spec`.
    pub fn new(spec: Arc<BoundSpecification>, objective: Objective) -> Result<Self, OptimizeError> {
        let n = spec.mesh().n_tets();
        let parameter = default_parameter(objective);
        let base = MaterialField::nominal(&spec);
        let constraints =
            spec.properties().iter().filter(|p| p.category == Category::MaterialDependent).cloned().collect();
        let lipschitz = spec.field_regularity().filter(|r| r.parameter == parameter);
        let mut p = Self {
            spec,
            objective,
            parameter,
            base,
            frozen: vec![false; n],
            groups: (0..n).map(|e| vec![e]).collect(),
            boxes: Vec::new(),
            lipschitz: None,
            pairs: Vec::new(),
            constraints,
            solver: SolverOptions::default(),
        };
        p = p.with_lipschitz(lipschitz);
        p.rebuild_boxes()?;
        Ok(p)
    }

    pub fn with_parameter(mut self, parameter: Parameter) -> Result<Self, OptimizeError> {
        if parameter == Parameter::Poisson {
            return Err(OptimizeError::InvalidProblem("Poisson's ratio cannot be a decision parameter".into()));
        }
        self.parameter = parameter;
        if self.lipschitz.is_none() {
            let r = self.spec.field_regularity().filter(|r| r.parameter == parameter);
            self = self.with_lipschitz(r);
        }
        self.rebuild_boxes()?;
        Ok(self)
    }

    /// Regroup the free elements.
    pub fn with_grouping(mut self, grouping: Grouping, partition: &LayerPartition) -> Result<Self, OptimizeError> {
        let free: Vec<usize> = (0..self.frozen.len()).filter(|&e| !self.frozen[e]).collect();
        self.groups = match grouping {
            Grouping::Element => free.iter().map(|&e| vec![e]).collect(),
            Grouping::Layer => {
                if partition.element_layers().len() != self.frozen.len() {
                    return Err(OptimizeError::InvalidProblem("layer partition does not match the mesh".into()));
                }
                partition
                    .layers
                    .iter()
                    .map(|l| {
                        let mut g: Vec<usize> = l.iter().copied().filter(|&e| !self.frozen[e]).collect();
                        g.sort_unstable();
                        g
                    })
                    .filter(|g| !g.is_empty())
                    .collect()
            }
        };
        self.rebuild_boxes()?;
        Ok(self)
    }

    /// Replace the base field (values of every parameter for every element).
    pub fn with_base_field(mut self, field: MaterialField) -> Result<Self, OptimizeError> {
        if field.len() != self.frozen.len() {
            return Err(OptimizeError::Dimension { expected: self.frozen.len(), found: field.len() });
        }
        self.base = field;
        Ok(self)
    }

    /// Freeze `elements` at `values` and drop them from their groups.
    pub fn freeze(mut self, elements: &[usize], values: &[f64]) -> Result<Self, OptimizeError> {
        if elements.len() != values.len() {
            return Err(OptimizeError::Dimension { expected: elements.len(), found: values.len() });
        }
        for (&e, &v) in elements.iter().zip(values) {
            if e >= self.frozen.len() {
                return Err(OptimizeError::InvalidProblem(format!("element {e} out of range")));
            }
            if !(v.is_finite() && v > 0.0) {
                return Err(OptimizeError::InvalidProblem(format!("frozen value {v} for element {e} is not positive")));
            }
            self.frozen[e] = true;
            self.base.set(self.parameter, e, v);
        }
        for g in &mut self.groups {
            g.retain(|&e| !self.frozen[e]);
        }
        self.groups.retain(|g| !g.is_empty());
        self.rebuild_boxes()?;
        Ok(self)
    }

    pub fn with_constraints(mut self, constraints: Vec<PropertySpec>) -> Result<Self, OptimizeError> {
        if let Some(p) = constraints.iter().find(|p| p.category != Category::MaterialDependent) {
            return Err(OptimizeError::InvalidProblem(format!("constraint `{}` is not material-dependent", p.name)));
        }
        self.constraints = constraints;
        Ok(self)
    }

    pub fn with_lipschitz(mut self, regularity: Option<FieldRegularity>) -> Self {
        self.lipschitz = regularity;
        self.pairs = match regularity {
            None => Vec::new(),
            Some(_) => {
                let mesh = self.spec.mesh();
                mesh.face_neighbors()
                    .into_iter()
                    .map(|(a, b)| (a, b, (mesh.centroid(a) - mesh.centroid(b)).norm()))
                    .collect()
            }
        };
        self
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    fn rebuild_boxes(&mut self) -> Result<(), OptimizeError> {
        let ann = self.spec.element_annotations();
        self.boxes = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for &e in g {
                let r = ann[e].get(self.parameter);
                lo = lo.max(r.min);
                hi = hi.min(r.max);
            }
            if lo > hi {
                return Err(OptimizeError::EmptyBox { element: g[0], parameter: self.parameter, min: lo, max: hi });
            }
            self.boxes.push(Interval::new(lo, hi));
        }
        Ok(())
    }

    pub fn spec(&self) -> &BoundSpecification {
        &self.spec
    }

    pub fn spec_arc(&self) -> &Arc<BoundSpecification> {
        &self.spec
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn parameter(&self) -> Parameter {
        self.parameter
    }

    pub fn base_field(&self) -> &MaterialField {
        &self.base
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn boxes(&self) -> &[Interval] {
        &self.boxes
    }

    pub fn constraints(&self) -> &[PropertySpec] {
        &self.constraints
    }

    pub fn lipschitz(&self) -> Option<FieldRegularity> {
        self.lipschitz
    }

    pub fn solver(&self) -> &SolverOptions {
        &self.solver
    }

    pub fn n_elements(&self) -> usize {
        self.frozen.len()
    }

    pub fn n_free(&self) -> usize {
        self.groups.len()
    }

    pub fn is_frozen(&self, e: usize) -> bool {
        self.frozen[e]
    }

    pub fn frozen_elements(&self) -> Vec<usize> {
        (0..self.frozen.len()).filter(|&e| self.frozen[e]).collect()
    }

    /// Decision-parameter values of the frozen elements, ascending id.
    pub fn frozen_values(&self) -> Vec<f64> {
        self.frozen_elements().iter().map(|&e| self.base.get(self.parameter, e)).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.boxes.iter().map(|b| b.midpoint()).collect()
    }

    /// Decision value of every element given the group values `z`.
    pub fn element_values(&self, z: &[f64]) -> Vec<f64> {
        let mut v = self.base.values(self.parameter);
        for (g, &zg) in self.groups.iter().zip(z) {
            for &e in g {
                v[e] = zg;
            }
        }
        v
    }

    /// Volume-weighted group means of a per-element value vector.
    pub fn group_values(&self, element_values: &[f64]) -> Vec<f64> {
        let vol = self.spec.element_volumes();
        self.groups
            .iter()
            .map(|g| {
                let w: f64 = g.iter().map(|&e| vol[e]).sum();
                g.iter().map(|&e| vol[e] * element_values[e]).sum::<f64>() / w
            })
            .collect()
    }

    /// Sum a per-element gradient over each group.
    pub fn group_gradient(&self, element_gradient: &[f64]) -> Vec<f64> {
        self.groups.iter().map(|g| g.iter().map(|&e| element_gradient[e]).sum()).collect()
    }

    /// Material field with the decision parameter set to `element_values`.
    pub fn field_from_elements(&self, element_values: &[f64]) -> MaterialField {
        let mut f = self.base.clone();
        for (e, &v) in element_values.iter().enumerate() {
            f.set(self.parameter, e, v);
        }
        f
    }

    pub fn compose(&self, z: &[f64]) -> MaterialField {
        self.field_from_elements(&self.element_values(z))
    }

    /// `(pair index, |p_a − p_b| − γ·d_ab)` for every face-adjacent pair.
    pub(crate) fn lipschitz_excess(&self, element_values: &[f64], gamma_scale: f64) -> Vec<f64> {
        let Some(r) = self.lipschitz else { return Vec::new() };
        self.pairs
            .iter()
            .map(|&(a, b, d)| (element_values[a] - element_values[b]).abs() - r.gamma * gamma_scale * d)
            .collect()
    }

    pub(crate) fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    /// Largest Lipschitz excess (≤ 0 when the field is regular enough).
    pub fn max_lipschitz_excess(&self, element_values: &[f64]) -> f64 {
        self.lipschitz_excess(element_values, 1.0).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Objective and constraints at the given per-element decision values.
    /// Adjoint gradients are computed when `gradient` is set.
    pub fn evaluate(&self, element_values: &[f64], gradient: bool) -> Result<Evaluation, OptimizeError> {
        self.evaluate_with_backoff(element_values, gradient, 0.0)
    }

    pub fn evaluate_with_backoff(
        &self,
        element_values: &[f64],
        gradient: bool,
        backoff: f64,
    ) -> Result<Evaluation, OptimizeError> {
        let n = self.n_elements();
        if element_values.len() != n {
            return Err(OptimizeError::Dimension { expected: n, found: element_values.len() });
        }
        let field = self.field_from_elements(element_values);
        let spec = &*self.spec;
        let mut physics: Vec<Physics> = self.objective.physics().into_iter().collect();
        physics.extend(self.constraints.iter().filter_map(|c| required_physics(&c.predicate)));
        physics.sort();
        physics.dedup();
        let mut solved: Vec<(Physics, FemSystem, FieldSolution)> = Vec::new();
        for ph in physics {
            let system = fem::assemble(spec, &field, ph)?;
            let sol = fem::solve(&system, &self.solver)?;
            solved.push((ph, system, sol));
        }
        let fem_solves = solved.len();
        let lookup = |ph: Physics| solved.iter().find(|s| s.0 == ph).map(|s| (&s.1, &s.2));
        let volumes = spec.element_volumes();
        let total_volume = spec.total_volume();

        let (objective, objective_gradient) = match self.objective {
            Objective::Compliance => {
                let (sys, sol) = lookup(Physics::Elasticity).expect("solved");
                let j = dot(sys.external_load(), &sol.values);
                let g = if !gradient {
                    Vec::new()
                } else if (0..sys.n_dofs()).all(|d| sys.prescribed_value(d).is_none_or(|u| u == 0.0)) {
                    // self-adjoint: K_ff λ_f = F_f = K_ff U_f
                    self.sensitivity(&field, sys, sol, &sol.values)?
                } else {
                    let rhs: Vec<f64> = sys.free_dofs().iter().map(|&d| sys.external_load()[d]).collect();
                    let lambda = self.adjoint(sys, &rhs)?;
                    self.sensitivity(&field, sys, sol, &lambda)?
                };
                (j, g)
            }
            Objective::AverageTemperature => {
                let (sys, sol) = lookup(Physics::Conduction).expect("solved");
                let w = average_temperature_weights(spec);
                let j = dot(&w, &sol.values);
                let g = if gradient {
                    let rhs: Vec<f64> = sys.free_dofs().iter().map(|&d| w[d]).collect();
                    let lambda = self.adjoint(sys, &rhs)?;
                    self.sensitivity(&field, sys, sol, &lambda)?
                } else {
                    Vec::new()
                };
                (j, g)
            }
            Objective::Mass => {
                let j = (0..n).map(|e| field.get(Parameter::Density, e) * volumes[e]).sum();
                let g = if self.parameter == Parameter::Density { volumes.to_vec() } else { vec![0.0; n] };
                (j, g)
            }
            Objective::MaterialEffort => {
                let j = (0..n).map(|e| element_values[e] * volumes[e]).sum::<f64>() / total_volume;
                (j, volumes.iter().map(|v| v / total_volume).collect())
            }
        };

        let mut verdicts = Vec::with_capacity(self.constraints.len());
        let mut penalties = Vec::with_capacity(self.constraints.len());
        let mut penalty_gradients = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let ph = required_physics(&c.predicate);
            let sol = ph.and_then(|p| lookup(p)).map(|s| s.1);
            let measured = measure(spec, &c.predicate, &field, sol).map_err(OptimizeError::from)?;
            let verdict = PropertyVerdict::new(c, measured);
            let s = super::solve::norm_scale(verdict.bound);
            // d(normalised excess)/d(measured)
            let sign = match c.predicate.comparison() {
                Comparison::Le => 1.0 / s,
                Comparison::Ge => -1.0 / s,
            };
            let hinge = |margin: f64| (backoff - margin / s).max(0.0);
            let (penalty, g) = match &c.predicate {
                Predicate::MaxDisplacement { vertices, bound } => {
                    let (sys, sol) = lookup(Physics::Elasticity).expect("solved");
                    let ids = spec.resolve(vertices).map_err(OptimizeError::from)?;
                    let mut penalty = 0.0;
                    let mut full = vec![0.0; sys.n_dofs()];
                    for &v in &ids {
                        let u = sol.displacement(v);
                        let h = hinge(bound - u.norm());
                        penalty += h * h;
                        if h > 0.0 && u.norm() > 0.0 {
                            for a in 0..3 {
                                full[3 * v + a] += 2.0 * h * sign * u[a] / u.norm();
                            }
                        }
                    }
                    let g = if gradient && penalty > 0.0 {
                        let rhs: Vec<f64> = sys.free_dofs().iter().map(|&d| full[d]).collect();
                        let lambda = self.adjoint(sys, &rhs)?;
                        self.sensitivity(&field, sys, sol, &lambda)?
                    } else {
                        vec![0.0; n]
                    };
                    (penalty, g)
                }
                Predicate::MaxTemperature { vertices, bound } => {
                    let (sys, sol) = lookup(Physics::Conduction).expect("solved");
                    let ids = spec.resolve(vertices).map_err(OptimizeError::from)?;
                    let mut penalty = 0.0;
                    let mut full = vec![0.0; sys.n_dofs()];
                    for &v in &ids {
                        let h = hinge(bound - sol.temperature(v));
                        penalty += h * h;
                        full[v] += 2.0 * h * sign;
                    }
                    let g = if gradient && penalty > 0.0 {
                        let rhs: Vec<f64> = sys.free_dofs().iter().map(|&d| full[d]).collect();
                        let lambda = self.adjoint(sys, &rhs)?;
                        self.sensitivity(&field, sys, sol, &lambda)?
                    } else {
                        vec![0.0; n]
                    };
                    (penalty, g)
                }
                Predicate::AverageTemperature { .. } => {
                    let h = hinge(verdict.margin);
                    let g = if gradient && h > 0.0 {
                        let (sys, sol) = lookup(Physics::Conduction).expect("solved");
                        let w = average_temperature_weights(spec);
                        let rhs: Vec<f64> = sys.free_dofs().iter().map(|&d| 2.0 * h * sign * w[d]).collect();
                        let lambda = self.adjoint(sys, &rhs)?;
                        self.sensitivity(&field, sys, sol, &lambda)?
                    } else {
                        vec![0.0; n]
                    };
                    (h * h, g)
                }
                Predicate::Mass { .. } => {
                    let h = hinge(verdict.margin);
                    let g = if gradient && self.parameter == Parameter::Density {
                        volumes.iter().map(|v| 2.0 * h * sign * v).collect()
                    } else {
                        vec![0.0; n]
                    };
                    (h * h, g)
                }
                Predicate::Volume { .. } => {
                    let h = hinge(verdict.margin);
                    (h * h, vec![0.0; n])
                }
            };
            verdicts.push(verdict);
            penalties.push(penalty);
            if gradient {
                penalty_gradients.push(g);
            }
        }

        Ok(Evaluation { objective, objective_gradient, verdicts, penalties, penalty_gradients, fem_solves })
    }

    /// Full-length adjoint vector (zero on prescribed dofs).
    fn adjoint(&self, sys: &FemSystem, rhs_free: &[f64]) -> Result<Vec<f64>, OptimizeError> {
        let (lf, _) = fem::solve_free(sys, rhs_free, &self.solver)?;
        let mut full = vec![0.0; sys.n_dofs()];
        for (k, &d) in sys.free_dofs().iter().enumerate() {
            full[d] = lf[k];
        }
        Ok(full)
    }

    /// `∂J/∂p_e = −λ_eᵀ (∂k^e/∂p_e) U_e`, with `k^e` linear in its stiffness
    /// parameter; zero when the decision parameter does not enter `K`.
    fn sensitivity(
        &self,
        field: &MaterialField,
        sys: &FemSystem,
        sol: &FieldSolution,
        lambda: &[f64],
    ) -> Result<Vec<f64>, OptimizeError> {
        let n = self.n_elements();
        let stiffness_param = match sys.physics() {
            Physics::Elasticity => Parameter::Young,
            Physics::Conduction => Parameter::Conductivity,
        };
        if self.parameter != stiffness_param {
            return Ok(vec![0.0; n]);
        }
        let mut g = vec![0.0; n];
        for (e, ge) in g.iter_mut().enumerate() {
            let em = fem::element_matrix(&self.spec, field, e, sys.physics())?;
            let mut acc = 0.0;
            for (a, &da) in em.dofs.iter().enumerate() {
                if lambda[da] == 0.0 {
                    continue;
                }
                let row: f64 = em.dofs.iter().enumerate().map(|(b, &db)| em.matrix[(a, b)] * sol.values[db]).sum();
                acc += lambda[da] * row;
            }
            *ge = -acc / field.get(self.parameter, e);
        }
        Ok(g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Objective and its gradient over the free group values `z`.
pub fn evaluate_objective(problem: &InversionProblem, z: &[f64]) -> Result<(f64, Vec<f64>), OptimizeError> {
    if z.len() != problem.n_free() {
        return Err(OptimizeError::Dimension { expected: problem.n_free(), found: z.len() });
    }
    let clamped: Vec<f64> = z.iter().zip(problem.boxes()).map(|(v, b)| b.clamp(*v)).collect();
    let ev = problem.evaluate(&problem.element_values(&clamped), true)?;
    Ok((ev.objective, problem.group_gradient(&ev.objective_gradient)))
}
