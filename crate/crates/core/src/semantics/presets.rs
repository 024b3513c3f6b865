//! Annotation layers for the generated test geometries.
//!
//! These mirror the example files under `docs/examples/` and are what
//! `amsem gen-mesh --annotation-out` writes.

use super::types::*;
use crate::mesh::VolumetricMesh;

/// Titanium-alloy-like ranges in repo units (MPa, –, W/(mm·K), kg/mm³).
pub fn default_ranges() -> ElementRanges {
    ElementRanges {
        young: Some(Interval::new(110_000.0, 120_000.0)),
        poisson: Some(Interval::new(0.30, 0.36)),
        conductivity: Some(Interval::new(0.006, 0.0075)),
        density: Some(Interval::new(4.3e-6, 4.5e-6)),
    }
}

/// Vertices on the plane `z = z_min` and `z = z_max`.
pub fn bottom_and_top(mesh: &VolumetricMesh) -> (Vec<usize>, Vec<usize>) {
    let (lo, hi) = mesh.bounding_box().expect("non-empty mesh");
    let tol = 1e-9 * mesh.bbox_diagonal();
    (
        mesh.vertices_where(|p| (p.z - lo.z).abs() <= tol),
        mesh.vertices_where(|p| (p.z - hi.z).abs() <= tol),
    )
}

/// Upright column clamped at its base, carrying `load` (N, compressive,
/// along −z) spread over its top face.
///
/// Tags `base` and `top`. When `max_top_displacement` is given, a local
/// property bounds the displacement magnitude of the top face.
pub fn axial_column(mesh: &VolumetricMesh, load: f64, max_top_displacement: Option<f64>) -> SemanticLayer {
    let (base, top) = bottom_and_top(mesh);
    let mut layer = SemanticLayer { element_default: default_ranges(), ..Default::default() };
    layer.annotate(&base, |a| {
        a.displacement = DisplacementSet::Fixed;
        a.force = ForceSet::Free;
    });
    apply_face_load(&mut layer, mesh, &top, [0.0, 0.0, -load]);
    layer.vertex_tags.insert("base".into(), base);
    layer.vertex_tags.insert("top".into(), top);
    if let Some(bound) = max_top_displacement {
        layer.global_properties.push(PropertySpec::new(
            "top-displacement",
            Predicate::MaxDisplacement { bound, vertices: VertexSelection::Tag("top".into()) },
        ));
    }
    layer
}

/// Spread `total` over the boundary triangles spanned by `vertices`, each
/// triangle giving a third of its area share to each corner (the consistent
/// nodal load of a uniform traction on linear triangles). Falls back to an
/// equal split when the vertices span no boundary face.
pub fn apply_face_load(layer: &mut SemanticLayer, mesh: &VolumetricMesh, vertices: &[usize], total: [f64; 3]) {
    let set: std::collections::BTreeSet<usize> = vertices.iter().copied().collect();
    let mut share = std::collections::BTreeMap::<usize, f64>::new();
    let mut area = 0.0;
    for f in mesh.boundary_faces() {
        if f.iter().all(|v| set.contains(v)) {
            let [a, b, c] = f.map(|v| *mesh.vertex(v));
            let t = 0.5 * (b - a).cross(&(c - a)).norm();
            area += t;
            for v in f {
                *share.entry(v).or_default() += t / 3.0;
            }
        }
    }
    if area <= 0.0 {
        layer.apply_total_force(vertices, total);
        return;
    }
    for (v, s) in share {
        let w = s / area;
        layer.annotate(&[v], |a| a.force = ForceSet::exact(total.map(|c| c * w)));
    }
}

/// Plate cooled at `x = x_min` (held at `t_cold` K) with `power` W injected
/// uniformly over its upper face.
pub fn thermal_plate(mesh: &VolumetricMesh, t_cold: f64, power: f64) -> SemanticLayer {
    let (lo, hi) = mesh.bounding_box().expect("non-empty mesh");
    let tol = 1e-9 * mesh.bbox_diagonal();
    let cold = mesh.vertices_where(|p| (p.x - lo.x).abs() <= tol);
    let top = mesh.vertices_where(|p| (p.z - hi.z).abs() <= tol && (p.x - lo.x).abs() > tol);
    let far = mesh.vertices_where(|p| (p.x - hi.x).abs() <= tol);
    let mut layer = SemanticLayer { element_default: default_ranges(), ..Default::default() };
    layer.annotate(&cold, |a| {
        a.temperature = TemperatureSet::Prescribed(t_cold);
        a.heat = HeatSet::Free;
    });
    let each = power / top.len() as f64;
    layer.annotate(&top, |a| a.heat = HeatSet::Value(each));
    layer.vertex_tags.insert("cold".into(), cold);
    layer.vertex_tags.insert("heated".into(), top);
    layer.vertex_tags.insert("far".into(), far);
    layer
}
