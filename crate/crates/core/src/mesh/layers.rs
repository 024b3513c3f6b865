use serde::{Deserialize, Serialize};

use super::{MeshError, VolumetricMesh};

/// Elements grouped into build layers along +z.
///
/// Layer `k` holds the elements whose centroid height above the lowest
/// vertex lies in `[k·h, (k+1)·h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPartition {
    pub layer_height: f64,
    pub z_origin: f64,
    pub layers: Vec<Vec<usize>>,
}

impl LayerPartition {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Layer index of every element, indexed by element id.
    pub fn element_layers(&self) -> Vec<usize> {
        let n = self.layers.iter().map(|l| l.len()).sum();
        let mut out = vec![0; n];
        for (k, layer) in self.layers.iter().enumerate() {
            for &e in layer {
                out[e] = k;
            }
        }
        out
    }

    /// Elements in layers `0..n_printed`, ascending id.
    pub fn printed(&self, n_printed: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.layers[..n_printed.min(self.layers.len())].iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    /// Elements in layers `n_printed..`, ascending id.
    pub fn remaining(&self, n_printed: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.layers[n_printed.min(self.layers.len())..].iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }
}

pub fn layer_partition(mesh: &VolumetricMesh, layer_height: f64) -> Result<LayerPartition, MeshError> {
    if !(layer_height > 0.0 && layer_height.is_finite()) {
        return Err(MeshError::InvalidArgument {
            name: "layer_height",
            reason: format!("must be positive, got {layer_height}"),
        });
    }
    let (lo, hi) = mesh
        .bounding_box()
        .ok_or_else(|| MeshError::InvalidArgument { name: "mesh", reason: "empty mesh".into() })?;
    let extent = hi.z - lo.z;
    // the small slack keeps exact multiples (1 / (1/3)) from gaining a spurious layer
    let n_layers = ((extent / layer_height) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut layers = vec![Vec::new(); n_layers];
    for e in 0..mesh.n_tets() {
        let z = mesh.centroid(e).z - lo.z;
        let k = ((z / layer_height).floor().max(0.0) as usize).min(n_layers - 1);
        layers[k].push(e);
    }
    Ok(LayerPartition { layer_height, z_origin: lo.z, layers })
}
