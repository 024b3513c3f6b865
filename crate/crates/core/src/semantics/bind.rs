use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::field::MaterialField;
use super::types::*;
use super::SemanticError;
use crate::fem::{self, FieldSolution, Physics, SolverOptions};
use crate::mesh::{validate_mesh, VolumetricMesh};

/// The tuple (mesh, annotations) with every reference resolved.
#[derive(Debug, Clone)]
pub struct BoundSpecification {
    mesh: VolumetricMesh,
    layer: SemanticLayer,
    vertices: Vec<VertexAnnotation>,
    elements: Vec<ElementAnnotation>,
    tags: BTreeMap<String, Vec<usize>>,
    volumes: Vec<f64>,
}

/// Outcome of checking one property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyVerdict {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
    /// Positive slack when passing, negative overshoot when failing.
    pub margin: f64,
}

impl PropertyVerdict {
    pub(crate) fn new(prop: &PropertySpec, measured: f64) -> Self {
        let bound = prop.predicate.bound();
        let margin = prop.predicate.comparison().margin(measured, bound);
        Self { name: prop.name.clone(), pass: margin >= 0.0, measured, bound, margin }
    }
}

pub fn bind_to_mesh(layer: &SemanticLayer, mesh: &VolumetricMesh) -> Result<BoundSpecification, SemanticError> {
    let report = validate_mesh(mesh);
    if let Some(v) = report.violations.first() {
        return Err(SemanticError::InvalidMesh(format!("{v} ({} violations)", report.violations.len())));
    }
    layer.validate()?;
    let nv = mesh.n_vertices();
    let ne = mesh.n_tets();
    let check_vertex = |id: usize| {
        if id >= nv {
            Err(SemanticError::DanglingVertex { id, count: nv })
        } else {
            Ok(())
        }
    };
    for ids in layer.vertex_tags.values() {
        ids.iter().try_for_each(|&v| check_vertex(v))?;
    }
    layer.vertex_annotations.keys().try_for_each(|&v| check_vertex(v))?;
    for p in &layer.global_properties {
        if let Some(sel) = p.predicate.selection() {
            layer.resolve(sel)?.into_iter().try_for_each(check_vertex)?;
        }
    }
    if let Some(&id) = layer.element_overrides.keys().find(|&&e| e >= ne) {
        return Err(SemanticError::DanglingElement { id, count: ne });
    }

    let mut vertices = vec![VertexAnnotation::default(); nv];
    for (&v, a) in &layer.vertex_annotations {
        vertices[v] = *a;
    }
    let mut elements = Vec::with_capacity(ne);
    for e in 0..ne {
        let r = layer.element_overrides.get(&e).map(|o| o.over(&layer.element_default)).unwrap_or(layer.element_default);
        let need = |v: Option<Interval>, field: &'static str| v.ok_or(SemanticError::MissingElementRange { element: e, field });
        elements.push(ElementAnnotation {
            young: need(r.young, "young")?,
            poisson: need(r.poisson, "poisson")?,
            conductivity: need(r.conductivity, "conductivity")?,
            density: need(r.density, "density")?,
        });
    }

    let spec = BoundSpecification {
        mesh: mesh.clone(),
        layer: layer.clone(),
        vertices,
        elements,
        tags: layer.vertex_tags.clone(),
        volumes: mesh.element_volumes(),
    };
    if spec.has_mechanical() {
        spec.check_well_posed(Physics::Elasticity)?;
    }
    if spec.has_thermal() {
        spec.check_well_posed(Physics::Conduction)?;
    }
    Ok(spec)
}

impl BoundSpecification {
    pub fn mesh(&self) -> &VolumetricMesh {
        &self.mesh
    }

    pub fn layer(&self) -> &SemanticLayer {
        &self.layer
    }

    pub fn vertex_annotation(&self, v: usize) -> &VertexAnnotation {
        &self.vertices[v]
    }

    pub fn vertex_annotations(&self) -> &[VertexAnnotation] {
        &self.vertices
    }

    pub fn element_annotations(&self) -> &[ElementAnnotation] {
        &self.elements
    }

    pub fn element_volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    pub fn properties(&self) -> &[PropertySpec] {
        &self.layer.global_properties
    }

    pub fn field_regularity(&self) -> Option<FieldRegularity> {
        self.layer.field_regularity
    }

    pub fn tag(&self, name: &str) -> Option<&[usize]> {
        self.tags.get(name).map(|v| v.as_slice())
    }

    pub fn resolve(&self, sel: &VertexSelection) -> Result<Vec<usize>, SemanticError> {
        self.layer.resolve(sel)
    }

    pub fn has_mechanical(&self) -> bool {
        self.vertices.iter().any(|a| a.has_mechanical())
    }

    pub fn has_thermal(&self) -> bool {
        self.vertices.iter().any(|a| a.has_thermal())
    }

    /// Vertices with a Dirichlet condition for `physics`.
    pub fn prescribed_vertices(&self, physics: Physics) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| match physics {
                Physics::Elasticity => self.vertices[v].displacement.prescribed_value().is_some(),
                Physics::Conduction => matches!(self.vertices[v].temperature, TemperatureSet::Prescribed(_)),
            })
            .collect()
    }

    /// Rigid-body motions must be suppressed: three non-collinear clamped
    /// vertices for elasticity, one fixed temperature for conduction.
    pub fn check_well_posed(&self, physics: Physics) -> Result<(), SemanticError> {
        let fixed = self.prescribed_vertices(physics);
        match physics {
            Physics::Conduction if fixed.is_empty() => Err(SemanticError::UnderConstrained {
                physics: "conduction",
                reason: "no vertex has a prescribed temperature".into(),
            }),
            Physics::Conduction => Ok(()),
            Physics::Elasticity => {
                let pts: Vec<_> = fixed.iter().map(|&v| *self.mesh.vertex(v)).collect();
                if spans_plane(&pts, self.mesh.bbox_diagonal()) {
                    Ok(())
                } else {
                    Err(SemanticError::UnderConstrained {
                        physics: "elasticity",
                        reason: format!(
                            "{} clamped vertices; at least 3 non-collinear are needed to suppress rigid-body motion",
                            fixed.len()
                        ),
                    })
                }
            }
        }
    }
}

fn spans_plane(pts: &[crate::mesh::Point], scale: f64) -> bool {
    let Some(&p0) = pts.first() else { return false };
    let Some(&p1) = pts.iter().max_by(|a, b| (*a - p0).norm().total_cmp(&(*b - p0).norm())) else {
        return false;
    };
    let axis = p1 - p0;
    if axis.norm() <= 1e-9 * scale {
        return false;
    }
    pts.iter().any(|p| axis.cross(&(p - p0)).norm() > 1e-9 * scale * scale)
}

/// Verdict from geometry alone.
pub fn check_direct_property(spec: &BoundSpecification, prop: &PropertySpec) -> Result<PropertyVerdict, SemanticError> {
    if prop.category != Category::Direct {
        return Err(SemanticError::CategoryMismatch {
            property: prop.name.clone(),
            expected: "direct",
            found: prop.category.name(),
        });
    }
    match &prop.predicate {
        Predicate::Volume { .. } => Ok(PropertyVerdict::new(prop, spec.total_volume())),
        _ => unreachable!("validated: direct properties are volume predicates"),
    }
}

/// Verdict under an assumed material field.
///
/// Displacement and temperature bounds are checked at the nodes only: with
/// linear tets the interior field is a convex combination of the nodal
/// values, so a nodal bound on a convex set carries over to every point of
/// the element.
pub fn check_material_property(
    spec: &BoundSpecification,
    prop: &PropertySpec,
    field: &MaterialField,
) -> Result<PropertyVerdict, SemanticError> {
    let opts = SolverOptions::default();
    let mut out = evaluate_properties(spec, std::slice::from_ref(prop), field, &opts)?;
    Ok(out.pop().expect("one property in, one verdict out"))
}

/// Either kind of property.
pub fn check_property(
    spec: &BoundSpecification,
    prop: &PropertySpec,
    field: &MaterialField,
) -> Result<PropertyVerdict, SemanticError> {
    match prop.category {
        Category::Direct => check_direct_property(spec, prop),
        Category::MaterialDependent => check_material_property(spec, prop, field),
    }
}

/// Check a batch of properties, solving each physics at most once.
pub fn evaluate_properties(
    spec: &BoundSpecification,
    props: &[PropertySpec],
    field: &MaterialField,
    opts: &SolverOptions,
) -> Result<Vec<PropertyVerdict>, SemanticError> {
    if field.len() != spec.mesh.n_tets() {
        return Err(SemanticError::FieldSize { expected: spec.mesh.n_tets(), found: field.len() });
    }
    let mut solutions: BTreeMap<Physics, FieldSolution> = BTreeMap::new();
    let mut out = Vec::with_capacity(props.len());
    for prop in props {
        if prop.category == Category::Direct {
            out.push(check_direct_property(spec, prop)?);
            continue;
        }
        let measured = match required_physics(&prop.predicate) {
            None => measure(spec, &prop.predicate, field, None)?,
            Some(physics) => {
                if !solutions.contains_key(&physics) {
                    let system = fem::assemble(spec, field, physics)?;
                    solutions.insert(physics, fem::solve(&system, opts)?);
                }
                measure(spec, &prop.predicate, field, solutions.get(&physics))?
            }
        };
        out.push(PropertyVerdict::new(prop, measured));
    }
    Ok(out)
}

pub(crate) fn required_physics(pred: &Predicate) -> Option<Physics> {
    match pred {
        Predicate::Volume { .. } | Predicate::Mass { .. } => None,
        Predicate::MaxDisplacement { .. } => Some(Physics::Elasticity),
        Predicate::MaxTemperature { .. } | Predicate::AverageTemperature { .. } => Some(Physics::Conduction),
    }
}

/// Measured value of a predicate; `solution` must match [`required_physics`].
pub(crate) fn measure(
    spec: &BoundSpecification,
    pred: &Predicate,
    field: &MaterialField,
    solution: Option<&FieldSolution>,
) -> Result<f64, SemanticError> {
    Ok(match pred {
        Predicate::Volume { .. } => spec.total_volume(),
        Predicate::Mass { .. } => {
            spec.volumes.iter().enumerate().map(|(e, v)| field.get(Parameter::Density, e) * v).sum()
        }
        Predicate::MaxDisplacement { vertices, .. } => {
            let sol = solution.expect("elasticity solution");
            spec.resolve(vertices)?.into_iter().map(|v| sol.displacement(v).norm()).fold(0.0, f64::max)
        }
        Predicate::MaxTemperature { vertices, .. } => {
            let sol = solution.expect("conduction solution");
            spec.resolve(vertices)?.into_iter().map(|v| sol.temperature(v)).fold(f64::NEG_INFINITY, f64::max)
        }
        Predicate::AverageTemperature { .. } => {
            let sol = solution.expect("conduction solution");
            average_temperature_weights(spec).iter().enumerate().map(|(v, w)| w * sol.temperature(v)).sum()
        }
    })
}

/// Nodal weights `w` with `wᵀT` the volume-weighted mean temperature.
pub(crate) fn average_temperature_weights(spec: &BoundSpecification) -> Vec<f64> {
    let total = spec.total_volume();
    let mut w = vec![0.0; spec.mesh.n_vertices()];
    for (e, tet) in spec.mesh.tets().iter().enumerate() {
        for &v in tet {
            w[v] += spec.volumes[e] / (4.0 * total);
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_box_mesh, generate_shaft_mesh};
    use crate::semantics::field::{MaterialParams, Provenance};
    use crate::semantics::presets;

    fn cube_spec() -> BoundSpecification {
        let mesh = generate_box_mesh(1, 1, 1, [1.0; 3]).unwrap();
        let layer = SemanticLayer { element_default: presets::default_ranges(), ..Default::default() };
        bind_to_mesh(&layer, &mesh).unwrap()
    }

    fn volume_prop(cmp: Comparison, bound: f64) -> PropertySpec {
        PropertySpec::new("volume", Predicate::Volume { cmp, bound })
    }

    #[test]
    fn cube_volume_le() {
        let spec = cube_spec();
        let v = check_direct_property(&spec, &volume_prop(Comparison::Le, 1.5)).unwrap();
        assert!(v.pass);
        assert!((v.measured - 1.0).abs() < 1e-14);
        assert!((v.margin - 0.5).abs() < 1e-14);
        let v = check_direct_property(&spec, &volume_prop(Comparison::Le, 0.5)).unwrap();
        assert!(!v.pass);
    }

    #[test]
    fn shaft_volume_ge() {
        let mesh = generate_shaft_mesh(1.0, 10.0, 64, 10).unwrap();
        let layer = SemanticLayer { element_default: presets::default_ranges(), ..Default::default() };
        let spec = bind_to_mesh(&layer, &mesh).unwrap();
        let v = check_direct_property(&spec, &volume_prop(Comparison::Ge, 31.0)).unwrap();
        // inscribed 64-gon area times height
        let oracle = 10.0 * 0.5 * 64.0 * (2.0 * std::f64::consts::PI / 64.0).sin();
        assert!(v.pass);
        assert!((v.measured - oracle).abs() < 1e-10);
        assert!((v.measured - 31.37).abs() < 0.01);
    }

    #[test]
    fn category_mismatch() {
        let spec = cube_spec();
        let p = PropertySpec::new("m", Predicate::Mass { cmp: Comparison::Le, bound: 1.0 });
        assert!(matches!(check_direct_property(&spec, &p), Err(SemanticError::CategoryMismatch { .. })));
    }

    #[test]
    fn uniform_mass() {
        let spec = cube_spec();
        let field = MaterialField::uniform(
            6,
            MaterialParams { young: 1.0, poisson: 0.3, conductivity: 1.0, density: 2e-6 },
            Provenance::Commanded,
        );
        let p = PropertySpec::new("m", Predicate::Mass { cmp: Comparison::Le, bound: 3e-6 });
        let v = check_material_property(&spec, &p, &field).unwrap();
        assert!(v.pass);
        assert!((v.measured - 2e-6).abs() < 1e-18);
    }

    #[test]
    fn dangling_vertex() {
        let mesh = generate_box_mesh(1, 1, 1, [1.0; 3]).unwrap();
        let mut layer = SemanticLayer { element_default: presets::default_ranges(), ..Default::default() };
        layer.annotate(&[1_000_000], |a| a.displacement = DisplacementSet::Fixed);
        assert!(matches!(
            bind_to_mesh(&layer, &mesh),
            Err(SemanticError::DanglingVertex { id: 1_000_000, count: 8 })
        ));
    }

    #[test]
    fn floating_body_is_under_constrained() {
        let mesh = generate_shaft_mesh(1.0, 10.0, 8, 2).unwrap();
        let top = mesh.vertices_where(|p| p.z == 10.0);
        let mut layer = SemanticLayer { element_default: presets::default_ranges(), ..Default::default() };
        layer.apply_total_force(&top, [0.0, 0.0, -100.0]);
        assert!(matches!(bind_to_mesh(&layer, &mesh), Err(SemanticError::UnderConstrained { .. })));
        // two clamped vertices leave a rotation about their axis
        layer.annotate(&[0, 1], |a| a.displacement = DisplacementSet::Fixed);
        assert!(matches!(bind_to_mesh(&layer, &mesh), Err(SemanticError::UnderConstrained { .. })));
        layer.annotate(&[3], |a| a.displacement = DisplacementSet::Fixed);
        assert!(bind_to_mesh(&layer, &mesh).is_ok());
    }

    #[test]
    fn missing_element_range() {
        let mesh = generate_box_mesh(1, 1, 1, [1.0; 3]).unwrap();
        let mut layer = SemanticLayer::default();
        layer.element_default.young = Some(Interval::new(1.0, 2.0));
        assert!(matches!(bind_to_mesh(&layer, &mesh), Err(SemanticError::MissingElementRange { element: 0, .. })));
    }

    #[test]
    fn dangling_element_override() {
        let mesh = generate_box_mesh(1, 1, 1, [1.0; 3]).unwrap();
        let mut layer = SemanticLayer { element_default: presets::default_ranges(), ..Default::default() };
        layer.element_overrides.insert(6, ElementRanges::default());
        assert!(matches!(bind_to_mesh(&layer, &mesh), Err(SemanticError::DanglingElement { id: 6, count: 6 })));
    }
}
