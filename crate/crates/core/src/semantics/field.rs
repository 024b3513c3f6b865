use serde::{Deserialize, Serialize};

use super::bind::BoundSpecification;
use super::types::Parameter;

/// Material values of one element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// MPa
    pub young: f64,
    pub poisson: f64,
    /// W/(mm·K)
    pub conductivity: f64,
    /// kg/mm³
    pub density: f64,
}

impl MaterialParams {
    pub fn get(&self, p: Parameter) -> f64 {
        match p {
            Parameter::Young => self.young,
            Parameter::Poisson => self.poisson,
            Parameter::Conductivity => self.conductivity,
            Parameter::Density => self.density,
        }
    }

    pub fn set(&mut self, p: Parameter, v: f64) {
        match p {
            Parameter::Young => self.young = v,
            Parameter::Poisson => self.poisson = v,
            Parameter::Conductivity => self.conductivity = v,
            Parameter::Density => self.density = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Commanded,
    Achieved,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    #[serde(flatten)]
    pub params: MaterialParams,
    pub provenance: Provenance,
}

/// A complete per-element assignment of material parameters.
///
/// Admissibility against the annotated ranges is a query, not an
/// invariant: estimated fields are allowed to leave their ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialField {
    pub elements: Vec<FieldEntry>,
}

/// One out-of-range value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeViolation {
    pub element: usize,
    pub parameter: Parameter,
    pub value: f64,
}

impl MaterialField {
    pub fn uniform(n: usize, params: MaterialParams, provenance: Provenance) -> Self {
        Self { elements: vec![FieldEntry { params, provenance }; n] }
    }

    /// Midpoint of every annotated range.
    pub fn nominal(spec: &BoundSpecification) -> Self {
        let elements = spec
            .element_annotations()
            .iter()
            .map(|a| FieldEntry {
                params: MaterialParams {
                    young: a.young.midpoint(),
                    poisson: a.poisson.midpoint(),
                    conductivity: a.conductivity.midpoint(),
                    density: a.density.midpoint(),
                },
                provenance: Provenance::Commanded,
            })
            .collect();
        Self { elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn params(&self, e: usize) -> &MaterialParams {
        &self.elements[e].params
    }

    pub fn get(&self, p: Parameter, e: usize) -> f64 {
        self.elements[e].params.get(p)
    }

    pub fn set(&mut self, p: Parameter, e: usize, v: f64) {
        self.elements[e].params.set(p, v);
    }

    pub fn provenance(&self, e: usize) -> Provenance {
        self.elements[e].provenance
    }

    pub fn set_provenance(&mut self, e: usize, p: Provenance) {
        self.elements[e].provenance = p;
    }

    pub fn values(&self, p: Parameter) -> Vec<f64> {
        self.elements.iter().map(|x| x.params.get(p)).collect()
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        for x in &mut self.elements {
            x.provenance = p;
        }
        self
    }

    pub fn range_violations(&self, spec: &BoundSpecification) -> Vec<RangeViolation> {
        let mut out = Vec::new();
        for (e, (entry, ann)) in self.elements.iter().zip(spec.element_annotations()).enumerate() {
            for p in Parameter::ALL {
                let value = entry.params.get(p);
                if !ann.get(p).contains(value) {
                    out.push(RangeViolation { element: e, parameter: p, value });
                }
            }
        }
        out
    }

    pub fn is_admissible(&self, spec: &BoundSpecification) -> bool {
        self.len() == spec.mesh().n_tets() && self.range_violations(spec).is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("field serialization cannot fail")
    }
}
