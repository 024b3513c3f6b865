use std::collections::BTreeMap;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SemanticError;

/// Closed interval `[min, max]`, written as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for Interval {
    fn from([min, max]: [f64; 2]) -> Self {
        Self { min, max }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.min, i.max]
    }
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn point(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub(crate) fn check_order(&self, field: impl Fn() -> String) -> Result<(), SemanticError> {
        if self.min.is_nan() || self.max.is_nan() || self.min > self.max {
            return Err(SemanticError::RangeOrder { field: field(), min: self.min, max: self.max });
        }
        Ok(())
    }
}

/// Axis-aligned box; a missing (`null`) bound is unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "BoxRepr", into = "BoxRepr")]
pub struct BoxSet {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRepr {
    min: [Option<f64>; 3],
    max: [Option<f64>; 3],
}

impl From<BoxRepr> for BoxSet {
    fn from(r: BoxRepr) -> Self {
        Self {
            min: r.min.map(|v| v.unwrap_or(f64::NEG_INFINITY)),
            max: r.max.map(|v| v.unwrap_or(f64::INFINITY)),
        }
    }
}

impl From<BoxSet> for BoxRepr {
    fn from(b: BoxSet) -> Self {
        Self {
            min: b.min.map(|v| v.is_finite().then_some(v)),
            max: b.max.map(|v| v.is_finite().then_some(v)),
        }
    }
}

impl BoxSet {
    pub fn point(v: [f64; 3]) -> Self {
        Self { min: v, max: v }
    }

    pub fn unbounded() -> Self {
        Self { min: [f64::NEG_INFINITY; 3], max: [f64::INFINITY; 3] }
    }

    /// Symmetric box `[-r, r]` on every axis.
    pub fn symmetric(r: f64) -> Self {
        Self { min: [-r; 3], max: [r; 3] }
    }

    pub fn contains(&self, v: &Vector3<f64>) -> bool {
        (0..3).all(|a| self.min[a] <= v[a] && v[a] <= self.max[a])
    }

    /// Centre of the box; unbounded axes contribute 0.
    pub fn midpoint(&self) -> Vector3<f64> {
        Vector3::from_fn(|a, _| {
            let (lo, hi) = (self.min[a], self.max[a]);
            if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                0.0
            }
        })
    }

    pub(crate) fn check_order(&self, field: impl Fn() -> String) -> Result<(), SemanticError> {
        for a in 0..3 {
            if self.min[a].is_nan() || self.max[a].is_nan() || self.min[a] > self.max[a] {
                return Err(SemanticError::RangeOrder { field: field(), min: self.min[a], max: self.max[a] });
            }
        }
        Ok(())
    }
}

/// Displacement set `U_i` of a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DisplacementSet {
    #[default]
    Unconstrained,
    /// Clamped at zero.
    Fixed,
    /// Clamped at a given displacement.
    Prescribed([f64; 3]),
    /// Goal set the computed displacement must stay in.
    Box(BoxSet),
}

impl DisplacementSet {
    /// The known displacement, if this is a Dirichlet condition.
    pub fn prescribed_value(&self) -> Option<[f64; 3]> {
        match self {
            DisplacementSet::Fixed => Some([0.0; 3]),
            DisplacementSet::Prescribed(v) => Some(*v),
            _ => None,
        }
    }
}

/// External force set `F_i` of a vertex. `Free` means the force is a
/// reaction, which requires a prescribed displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceSet {
    Free,
    /// The applied load lies in this box; the nominal load is its centre.
    Box(BoxSet),
}

impl Default for ForceSet {
    fn default() -> Self {
        ForceSet::Box(BoxSet::point([0.0; 3]))
    }
}

impl ForceSet {
    pub fn exact(f: [f64; 3]) -> Self {
        ForceSet::Box(BoxSet::point(f))
    }

    pub fn nominal(&self) -> Option<Vector3<f64>> {
        match self {
            ForceSet::Free => None,
            ForceSet::Box(b) => Some(b.midpoint()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureSet {
    #[default]
    Unconstrained,
    Prescribed(f64),
    /// Goal range in K.
    Range(Interval),
}

/// Heat injected at a vertex, in W. `Free` is the reaction of a prescribed temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatSet {
    Free,
    Value(f64),
}

impl Default for HeatSet {
    fn default() -> Self {
        HeatSet::Value(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VertexAnnotation {
    #[serde(default, skip_serializing_if = "is_default")]
    pub displacement: DisplacementSet,
    #[serde(default, skip_serializing_if = "is_default")]
    pub force: ForceSet,
    #[serde(default, skip_serializing_if = "is_default")]
    pub temperature: TemperatureSet,
    #[serde(default, skip_serializing_if = "is_default")]
    pub heat: HeatSet,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl VertexAnnotation {
    pub fn has_mechanical(&self) -> bool {
        self.displacement != DisplacementSet::default() || self.force != ForceSet::default()
    }

    pub fn has_thermal(&self) -> bool {
        self.temperature != TemperatureSet::default() || self.heat != HeatSet::default()
    }

    pub(crate) fn validate(&self, vertex: usize) -> Result<(), SemanticError> {
        let field = |name: &'static str| move || format!("vertex_annotations.{vertex}.{name}");
        match &self.displacement {
            DisplacementSet::Box(b) => b.check_order(field("displacement"))?,
            DisplacementSet::Prescribed(v) if v.iter().any(|x| !x.is_finite()) => {
                return Err(SemanticError::RangeDomain {
                    field: field("displacement")(),
                    reason: "prescribed value must be finite".into(),
                })
            }
            _ => {}
        }
        if let ForceSet::Box(b) = &self.force {
            b.check_order(field("force"))?;
        }
        if let TemperatureSet::Range(r) = &self.temperature {
            r.check_order(field("temperature"))?;
        }
        if self.displacement.prescribed_value().is_none() && self.force == ForceSet::Free {
            return Err(SemanticError::Undetermined { vertex, known_a: "displacement", known_b: "force" });
        }
        if !matches!(self.temperature, TemperatureSet::Prescribed(_)) && self.heat == HeatSet::Free {
            return Err(SemanticError::Undetermined { vertex, known_a: "temperature", known_b: "heat" });
        }
        Ok(())
    }
}

/// A material parameter carried per element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Young,
    Poisson,
    Conductivity,
    Density,
}

impl Parameter {
    pub const ALL: [Parameter; 4] = [Parameter::Young, Parameter::Poisson, Parameter::Conductivity, Parameter::Density];

    pub fn name(&self) -> &'static str {
        match self {
            Parameter::Young => "young",
            Parameter::Poisson => "poisson",
            Parameter::Conductivity => "conductivity",
            Parameter::Density => "density",
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Partial element ranges, as written in the file (`default` or an override).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ElementRanges {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub young: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conductivity: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Interval>,
}

impl ElementRanges {
    pub fn get(&self, p: Parameter) -> Option<Interval> {
        match p {
            Parameter::Young => self.young,
            Parameter::Poisson => self.poisson,
            Parameter::Conductivity => self.conductivity,
            Parameter::Density => self.density,
        }
    }

    /// `self` with every unset field taken from `base`.
    pub fn over(&self, base: &ElementRanges) -> ElementRanges {
        ElementRanges {
            young: self.young.or(base.young),
            poisson: self.poisson.or(base.poisson),
            conductivity: self.conductivity.or(base.conductivity),
            density: self.density.or(base.density),
        }
    }

    pub(crate) fn validate(&self, key: &str) -> Result<(), SemanticError> {
        for p in Parameter::ALL {
            let Some(r) = self.get(p) else { continue };
            let field = || format!("element_annotations.{key}.{p}");
            r.check_order(field)?;
            let ok = match p {
                Parameter::Poisson => r.min > -1.0 && r.max < 0.5,
                _ => r.min > 0.0 && r.max.is_finite(),
            };
            if !ok {
                let reason = match p {
                    Parameter::Poisson => "must lie inside (-1, 0.5)",
                    _ => "must be strictly positive and finite",
                };
                return Err(SemanticError::RangeDomain { field: field(), reason: reason.into() });
            }
        }
        Ok(())
    }
}

/// Fully resolved per-element ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementAnnotation {
    pub young: Interval,
    pub poisson: Interval,
    pub conductivity: Interval,
    pub density: Interval,
}

impl ElementAnnotation {
    pub fn get(&self, p: Parameter) -> Interval {
        match p {
            Parameter::Young => self.young,
            Parameter::Poisson => self.poisson,
            Parameter::Conductivity => self.conductivity,
            Parameter::Density => self.density,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Direct,
    MaterialDependent,
}

impl Category {
    pub fn name(&self) -> &'static str {
        match self {
            Category::Direct => "direct",
            Category::MaterialDependent => "material_dependent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// measured ≤ bound
    Le,
    /// measured ≥ bound
    Ge,
}

impl Comparison {
    /// Signed slack: positive when satisfied.
    pub fn margin(&self, measured: f64, bound: f64) -> f64 {
        match self {
            Comparison::Le => bound - measured,
            Comparison::Ge => measured - bound,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Comparison::Le => "<=",
            Comparison::Ge => ">=",
        }
    }
}

/// Vertex set named by tag or listed explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexSelection {
    Tag(String),
    Ids(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    /// Total mesh volume in mm³.
    Volume { cmp: Comparison, bound: f64 },
    /// Σ ρ_e V_e in kg.
    Mass { cmp: Comparison, bound: f64 },
    /// max |u_i| over the selection, mm.
    MaxDisplacement { bound: f64, vertices: VertexSelection },
    /// max T_i over the selection, K.
    MaxTemperature { bound: f64, vertices: VertexSelection },
    /// Volume-weighted mean temperature, K.
    AverageTemperature { bound: f64 },
}

impl Predicate {
    pub fn comparison(&self) -> Comparison {
        match self {
            Predicate::Volume { cmp, .. } | Predicate::Mass { cmp, .. } => *cmp,
            _ => Comparison::Le,
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Predicate::Volume { bound, .. }
            | Predicate::Mass { bound, .. }
            | Predicate::MaxDisplacement { bound, .. }
            | Predicate::MaxTemperature { bound, .. }
            | Predicate::AverageTemperature { bound } => *bound,
        }
    }

    pub fn natural_category(&self) -> Category {
        match self {
            Predicate::Volume { .. } => Category::Direct,
            _ => Category::MaterialDependent,
        }
    }

    pub fn selection(&self) -> Option<&VertexSelection> {
        match self {
            Predicate::MaxDisplacement { vertices, .. } | Predicate::MaxTemperature { vertices, .. } => Some(vertices),
            _ => None,
        }
    }

    /// The material parameters the predicate depends on.
    pub fn parameters(&self) -> &'static [Parameter] {
        match self {
            Predicate::Volume { .. } => &[],
            Predicate::Mass { .. } => &[Parameter::Density],
            Predicate::MaxDisplacement { .. } => &[Parameter::Young, Parameter::Poisson],
            Predicate::MaxTemperature { .. } | Predicate::AverageTemperature { .. } => &[Parameter::Conductivity],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertySpec {
    pub name: String,
    pub category: Category,
    pub scope: Scope,
    pub predicate: Predicate,
}

impl PropertySpec {
    /// Property with category and scope derived from the predicate.
    pub fn new(name: impl Into<String>, predicate: Predicate) -> Self {
        let scope = if predicate.selection().is_some() { Scope::Local } else { Scope::Global };
        Self { name: name.into(), category: predicate.natural_category(), scope, predicate }
    }

    pub(crate) fn validate(&self, tags: &BTreeMap<String, Vec<usize>>) -> Result<(), SemanticError> {
        let bad = |reason: String| SemanticError::InconsistentProperty { property: self.name.clone(), reason };
        if self.category != self.predicate.natural_category() {
            return Err(bad(format!(
                "predicate references {} material parameters, so category must be {}",
                self.predicate.parameters().len(),
                self.predicate.natural_category().name()
            )));
        }
        match (self.scope, self.predicate.selection()) {
            (Scope::Global, Some(_)) => return Err(bad("global property must not carry a vertex selection".into())),
            (Scope::Local, None) => return Err(bad("local property needs a vertex selection".into())),
            (Scope::Local, Some(VertexSelection::Ids(ids))) if ids.is_empty() => {
                return Err(bad("local property has an empty vertex selection".into()))
            }
            (Scope::Local, Some(VertexSelection::Tag(t))) => match tags.get(t) {
                None => return Err(SemanticError::UnknownTag(t.clone())),
                Some(ids) if ids.is_empty() => return Err(bad(format!("tag `{t}` is empty"))),
                _ => {}
            },
            _ => {}
        }
        if !self.predicate.bound().is_finite() {
            return Err(bad("bound must be finite".into()));
        }
        Ok(())
    }
}

/// Lipschitz bound `|p_e − p_e'| ≤ γ·|c_e − c_e'|` over face-adjacent elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldRegularity {
    /// Per mm.
    pub gamma: f64,
    pub parameter: Parameter,
}

/// The annotation metadata attached to a mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SemanticLayer {
    pub vertex_tags: BTreeMap<String, Vec<usize>>,
    /// Sparse; absent vertices are unconstrained and unloaded.
    pub vertex_annotations: BTreeMap<usize, VertexAnnotation>,
    pub element_default: ElementRanges,
    pub element_overrides: BTreeMap<usize, ElementRanges>,
    pub global_properties: Vec<PropertySpec>,
    pub field_regularity: Option<FieldRegularity>,
}

impl SemanticLayer {
    /// Check every invariant that does not need the mesh.
    pub fn validate(&self) -> Result<(), SemanticError> {
        for (&v, a) in &self.vertex_annotations {
            a.validate(v)?;
        }
        self.element_default.validate("default")?;
        for (e, r) in &self.element_overrides {
            r.validate(&e.to_string())?;
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.global_properties {
            if !seen.insert(p.name.as_str()) {
                return Err(SemanticError::InconsistentProperty {
                    property: p.name.clone(),
                    reason: "duplicate property name".into(),
                });
            }
            p.validate(&self.vertex_tags)?;
        }
        if let Some(r) = &self.field_regularity {
            if !(r.gamma >= 0.0 && r.gamma.is_finite()) {
                return Err(SemanticError::RangeDomain {
                    field: "field_regularity.gamma".into(),
                    reason: "must be finite and non-negative".into(),
                });
            }
        }
        Ok(())
    }

    /// Resolve a selection to vertex ids (unchecked against any mesh).
    pub fn resolve(&self, sel: &VertexSelection) -> Result<Vec<usize>, SemanticError> {
        match sel {
            VertexSelection::Ids(ids) => Ok(ids.clone()),
            VertexSelection::Tag(t) => self.vertex_tags.get(t).cloned().ok_or_else(|| SemanticError::UnknownTag(t.clone())),
        }
    }

    pub fn annotate(&mut self, vertices: &[usize], f: impl Fn(&mut VertexAnnotation)) {
        for &v in vertices {
            f(self.vertex_annotations.entry(v).or_default());
        }
    }

    /// Split a total force equally over `vertices`.
    pub fn apply_total_force(&mut self, vertices: &[usize], total: [f64; 3]) {
        let n = vertices.len() as f64;
        let each = total.map(|c| c / n);
        self.annotate(vertices, |a| a.force = ForceSet::exact(each));
    }

    /// Rename vertex ids: old `i` becomes `perm[i]`.
    pub fn relabel_vertices(&self, perm: &[usize]) -> SemanticLayer {
        let map_ids = |ids: &Vec<usize>| ids.iter().map(|&v| perm[v]).collect::<Vec<_>>();
        let mut out = self.clone();
        out.vertex_tags = self.vertex_tags.iter().map(|(k, ids)| (k.clone(), map_ids(ids))).collect();
        out.vertex_annotations = self.vertex_annotations.iter().map(|(&v, a)| (perm[v], *a)).collect();
        for p in &mut out.global_properties {
            match &mut p.predicate {
                Predicate::MaxDisplacement { vertices: VertexSelection::Ids(ids), .. }
                | Predicate::MaxTemperature { vertices: VertexSelection::Ids(ids), .. } => *ids = map_ids(ids),
                _ => {}
            }
        }
        out
    }
}
