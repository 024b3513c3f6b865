//! JSON annotation format.
//!
//! ```json
//! {
//!   "units": {"length": "mm", "force": "N", "stress": "MPa",
//!             "conductivity": "W/(mm*K)", "density": "kg/mm^3", "temperature": "K"},
//!   "vertex_tags": {"base": [0, 1, 2], "top": [9, 10, 11]},
//!   "vertex_groups": [
//!     {"vertices": "base", "displacement": "fixed", "force": "free"},
//!     {"vertices": "top", "total_force": [0, 0, -100]}
//!   ],
//!   "vertex_annotations": {"12": {"displacement": {"box": {"min": [null, null, -0.01], "max": [null, null, null]}}}},
//!   "element_annotations": {"default": {"young": [110000, 120000], "poisson": [0.3, 0.36]}, "4": {"young": [90000, 95000]}},
//!   "global_properties": [{"name": "light", "category": "material_dependent", "scope": "global",
//!                          "predicate": {"kind": "mass", "cmp": "le", "bound": 1e-4}}],
//!   "field_regularity": {"gamma": 0.5, "parameter": "conductivity"}
//! }
//! ```
//!
//! `vertex_groups` is input sugar: groups are expanded in order into
//! per-vertex annotations, then `vertex_annotations` entries override them.
//! Serialization always writes the expanded form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::types::*;
use super::SemanticError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Units {
    #[serde(default = "u_length")]
    length: String,
    #[serde(default = "u_force")]
    force: String,
    #[serde(default = "u_stress")]
    stress: String,
    #[serde(default = "u_conductivity")]
    conductivity: String,
    #[serde(default = "u_density")]
    density: String,
    #[serde(default = "u_temperature")]
    temperature: String,
}

fn u_length() -> String {
    "mm".into()
}
fn u_force() -> String {
    "N".into()
}
fn u_stress() -> String {
    "MPa".into()
}
fn u_conductivity() -> String {
    "W/(mm*K)".into()
}
fn u_density() -> String {
    "kg/mm^3".into()
}
fn u_temperature() -> String {
    "K".into()
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: u_length(),
            force: u_force(),
            stress: u_stress(),
            conductivity: u_conductivity(),
            density: u_density(),
            temperature: u_temperature(),
        }
    }
}

impl Units {
    fn check(&self) -> Result<(), SemanticError> {
        let fields: [(&'static str, &'static str, &String); 6] = [
            ("length", "mm", &self.length),
            ("force", "N", &self.force),
            ("stress", "MPa", &self.stress),
            ("conductivity", "W/(mm*K)", &self.conductivity),
            ("density", "kg/mm^3", &self.density),
            ("temperature", "K", &self.temperature),
        ];
        for (field, expected, found) in fields {
            if found != expected {
                return Err(SemanticError::Units { field, expected, found: found.clone() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexGroup {
    vertices: VertexSelection,
    #[serde(default)]
    displacement: Option<DisplacementSet>,
    #[serde(default)]
    force: Option<ForceSet>,
    /// Split equally over the group.
    #[serde(default)]
    total_force: Option<[f64; 3]>,
    #[serde(default)]
    temperature: Option<TemperatureSet>,
    #[serde(default)]
    heat: Option<HeatSet>,
    #[serde(default)]
    total_heat: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDocument {
    #[serde(default)]
    units: Units,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    vertex_tags: BTreeMap<String, Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    vertex_groups: Vec<VertexGroup>,
    #[serde(default)]
    vertex_annotations: BTreeMap<usize, VertexAnnotation>,
    #[serde(default)]
    element_annotations: BTreeMap<String, ElementRanges>,
    #[serde(default)]
    global_properties: Vec<PropertySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    field_regularity: Option<FieldRegularity>,
}

/// Parse and validate an annotation document.
pub fn parse_semantic_layer(text: &[u8]) -> Result<SemanticLayer, SemanticError> {
    let doc: LayerDocument = serde_json::from_slice(text).map_err(|e| {
        let message = e.to_string();
        let (line, column) = (e.line(), e.column());
        if message.contains("unknown variant") && message.contains("volume") {
            SemanticError::UnknownProperty { line, column, message }
        } else {
            SemanticError::Syntax { line, column, message }
        }
    })?;
    doc.units.check()?;

    let mut layer = SemanticLayer { vertex_tags: doc.vertex_tags, ..Default::default() };
    for (gi, g) in doc.vertex_groups.iter().enumerate() {
        let ids = layer.resolve(&g.vertices)?;
        let what = || format!("vertex_groups[{gi}]");
        if ids.is_empty() {
            return Err(SemanticError::InvalidGroup { what: what(), detail: "empty vertex set".into() });
        }
        if g.force.is_some() && g.total_force.is_some() {
            return Err(SemanticError::InvalidGroup { what: what(), detail: "both `force` and `total_force`".into() });
        }
        if g.heat.is_some() && g.total_heat.is_some() {
            return Err(SemanticError::InvalidGroup { what: what(), detail: "both `heat` and `total_heat`".into() });
        }
        let n = ids.len() as f64;
        layer.annotate(&ids, |a| {
            if let Some(d) = g.displacement {
                a.displacement = d;
            }
            if let Some(f) = g.force {
                a.force = f;
            }
            if let Some(t) = g.total_force {
                a.force = ForceSet::exact(t.map(|c| c / n));
            }
            if let Some(t) = g.temperature {
                a.temperature = t;
            }
            if let Some(h) = g.heat {
                a.heat = h;
            }
            if let Some(q) = g.total_heat {
                a.heat = HeatSet::Value(q / n);
            }
        });
    }
    layer.vertex_annotations.extend(doc.vertex_annotations);
    layer.vertex_annotations.retain(|_, a| *a != VertexAnnotation::default());

    for (key, ranges) in doc.element_annotations {
        if key == "default" {
            layer.element_default = ranges;
        } else {
            let id: usize = key.parse().map_err(|_| SemanticError::Syntax {
                line: 0,
                column: 0,
                message: format!("element_annotations: key `{key}` is neither `default` nor an element id"),
            })?;
            layer.element_overrides.insert(id, ranges);
        }
    }
    layer.global_properties = doc.global_properties;
    layer.field_regularity = doc.field_regularity;
    layer.validate()?;
    Ok(layer)
}

impl SemanticLayer {
    pub fn to_json(&self) -> String {
        let mut element_annotations: BTreeMap<String, ElementRanges> =
            self.element_overrides.iter().map(|(e, r)| (e.to_string(), *r)).collect();
        if self.element_default != ElementRanges::default() {
            element_annotations.insert("default".into(), self.element_default);
        }
        let doc = LayerDocument {
            units: Units::default(),
            vertex_tags: self.vertex_tags.clone(),
            vertex_groups: Vec::new(),
            vertex_annotations: self.vertex_annotations.clone(),
            element_annotations,
            global_properties: self.global_properties.clone(),
            field_regularity: self.field_regularity,
        };
        serde_json::to_string_pretty(&doc).expect("annotation serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAFT_LIKE: &str = r#"{
        "vertex_tags": {"base": [0, 1, 2], "top": [3, 4]},
        "vertex_groups": [
            {"vertices": "base", "displacement": "fixed", "force": "free"},
            {"vertices": "top", "total_force": [0, 0, -100]}
        ],
        "element_annotations": {"default": {"young": [110000, 120000], "poisson": [0.30, 0.36],
                                            "conductivity": [0.1, 0.2], "density": [4e-6, 5e-6]}},
        "global_properties": [
            {"name": "stiff", "category": "material_dependent", "scope": "local",
             "predicate": {"kind": "max_displacement", "bound": 0.01, "vertices": "top"}}
        ]
    }"#;

    #[test]
    fn parses_groups_and_splits_force() {
        let layer = parse_semantic_layer(SHAFT_LIKE.as_bytes()).unwrap();
        for v in [0, 1, 2] {
            let a = layer.vertex_annotations[&v];
            assert_eq!(a.displacement, DisplacementSet::Fixed);
            assert_eq!(a.force, ForceSet::Free);
        }
        for v in [3, 4] {
            assert_eq!(layer.vertex_annotations[&v].force, ForceSet::exact([0.0, 0.0, -50.0]));
        }
        assert_eq!(layer.element_default.young, Some(Interval::new(110000.0, 120000.0)));
        assert_eq!(layer.global_properties[0].scope, Scope::Local);
    }

    #[test]
    fn round_trip_is_stable() {
        let layer = parse_semantic_layer(SHAFT_LIKE.as_bytes()).unwrap();
        let again = parse_semantic_layer(layer.to_json().as_bytes()).unwrap();
        assert_eq!(layer, again);
    }

    #[test]
    fn reversed_range_names_element() {
        let text = r#"{"element_annotations": {"7": {"young": [120000, 110000]}}}"#;
        match parse_semantic_layer(text.as_bytes()) {
            Err(SemanticError::RangeOrder { field, .. }) => assert_eq!(field, "element_annotations.7.young"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn poisson_domain_is_open() {
        let text = r#"{"element_annotations": {"default": {"poisson": [0.3, 0.5]}}}"#;
        assert!(matches!(parse_semantic_layer(text.as_bytes()), Err(SemanticError::RangeDomain { .. })));
    }

    #[test]
    fn unknown_property_kind() {
        let text = r#"{"global_properties": [{"name": "x", "category": "direct", "scope": "global",
                       "predicate": {"kind": "aerodynamic_drag", "bound": 1}}]}"#;
        assert!(matches!(parse_semantic_layer(text.as_bytes()), Err(SemanticError::UnknownProperty { .. })));
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_semantic_layer(b"{\n  \"vertex_tags\": [\n") {
            Err(SemanticError::Syntax { line, .. }) => assert!(line >= 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn category_must_match_predicate() {
        let text = r#"{"global_properties": [{"name": "v", "category": "material_dependent", "scope": "global",
                       "predicate": {"kind": "volume", "cmp": "le", "bound": 1}}]}"#;
        assert!(matches!(
            parse_semantic_layer(text.as_bytes()),
            Err(SemanticError::InconsistentProperty { .. })
        ));
    }

    #[test]
    fn free_force_without_support_is_undetermined() {
        let text = r#"{"vertex_annotations": {"3": {"force": "free"}}}"#;
        assert!(matches!(
            parse_semantic_layer(text.as_bytes()),
            Err(SemanticError::Undetermined { vertex: 3, .. })
        ));
    }

    #[test]
    fn wrong_units_rejected() {
        let text = r#"{"units": {"stress": "GPa"}}"#;
        assert!(matches!(parse_semantic_layer(text.as_bytes()), Err(SemanticError::Units { field: "stress", .. })));
    }

    #[test]
    fn unbounded_box_round_trips_through_null() {
        let text = r#"{"vertex_annotations": {"0": {"displacement": {"box": {"min": [null, null, -1], "max": [null, null, null]}}}}}"#;
        let layer = parse_semantic_layer(text.as_bytes()).unwrap();
        match layer.vertex_annotations[&0].displacement {
            DisplacementSet::Box(b) => {
                assert_eq!(b.min[2], -1.0);
                assert!(b.max[2].is_infinite() && b.min[0].is_infinite());
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(parse_semantic_layer(layer.to_json().as_bytes()).unwrap(), layer);
    }
}
