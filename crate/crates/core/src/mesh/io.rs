use serde::{Deserialize, Serialize};

use super::{MeshError, Point, VolumetricMesh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshUnits {
    pub length: String,
}

impl Default for MeshUnits {
    fn default() -> Self {
        Self { length: "mm".into() }
    }
}

/// On-disk mesh: `{"units": {"length": "mm"}, "vertices": [[x,y,z],..], "tets": [[i,j,k,l],..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshDocument {
    #[serde(default)]
    pub units: MeshUnits,
    pub vertices: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
}

impl From<&VolumetricMesh> for MeshDocument {
    fn from(mesh: &VolumetricMesh) -> Self {
        Self {
            units: MeshUnits::default(),
            vertices: mesh.vertices().iter().map(|p| [p.x, p.y, p.z]).collect(),
            tets: mesh.tets().to_vec(),
        }
    }
}

impl TryFrom<MeshDocument> for VolumetricMesh {
    type Error = MeshError;

    fn try_from(doc: MeshDocument) -> Result<Self, MeshError> {
        if doc.units.length != "mm" {
            return Err(MeshError::Units(doc.units.length));
        }
        let vertices = doc.vertices.into_iter().map(|[x, y, z]| Point::new(x, y, z)).collect();
        VolumetricMesh::new(vertices, doc.tets)
    }
}

impl VolumetricMesh {
    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        let doc: MeshDocument = serde_json::from_str(text).map_err(|e| MeshError::Parse(e.to_string()))?;
        doc.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MeshDocument::from(self)).expect("mesh serialization cannot fail")
    }
}
