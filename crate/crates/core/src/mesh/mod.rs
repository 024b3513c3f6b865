//! Tetrahedral volumetric meshes.
//!
//! A [`VolumetricMesh`] is the domain of the printed part: dense vertex ids
//! `0..n`, tetrahedra stored with positive orientation. Its boundary faces
//! are the printed surface. The module also owns the parametric generators
//! used throughout the test-suite, mesh validation, the JSON mesh format,
//! and partitioning of elements into build layers.

mod generate;
mod io;
mod layers;
mod validate;

use std::collections::HashMap;

use nalgebra::Vector3;
use thiserror::Error;

pub use generate::{generate_box_mesh, generate_shaft_mesh};
pub use io::{MeshDocument, MeshUnits};
pub use layers::{layer_partition, LayerPartition};
pub use validate::{validate_mesh, ValidationReport, Violation};

pub type Point = Vector3<f64>;

/// Outward-oriented faces of a positively oriented tet, as local indices.
pub(crate) const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("tet {tet} references vertex {vertex}, but the mesh has {n_vertices} vertices")]
    IndexOutOfRange { tet: usize, vertex: usize, n_vertices: usize },
    #[error("unsupported length unit `{0}` (only mm is supported)")]
    Units(String),
    #[error("mesh json: {0}")]
    Parse(String),
}

/// Vertices plus tetrahedra.
///
/// Construction only checks that tet indices are in range; everything else
/// is reported by [`validate_mesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct VolumetricMesh {
    vertices: Vec<Point>,
    tets: Vec<[usize; 4]>,
}

impl VolumetricMesh {
    pub fn new(vertices: Vec<Point>, tets: Vec<[usize; 4]>) -> Result<Self, MeshError> {
        let n = vertices.len();
        for (e, tet) in tets.iter().enumerate() {
            if let Some(&v) = tet.iter().find(|&&v| v >= n) {
                return Err(MeshError::IndexOutOfRange { tet: e, vertex: v, n_vertices: n });
            }
        }
        Ok(Self { vertices, tets })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn vertex(&self, id: usize) -> &Point {
        &self.vertices[id]
    }

    pub fn tet(&self, e: usize) -> [usize; 4] {
        self.tets[e]
    }

    pub fn tet_coords(&self, e: usize) -> [Point; 4] {
        let t = self.tets[e];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]], self.vertices[t[3]]]
    }

    pub fn signed_volume(&self, e: usize) -> f64 {
        signed_tet_volume(&self.tet_coords(e))
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_tets()).map(|e| self.signed_volume(e)).sum()
    }

    pub fn element_volumes(&self) -> Vec<f64> {
        (0..self.n_tets()).map(|e| self.signed_volume(e)).collect()
    }

    pub fn centroid(&self, e: usize) -> Point {
        let c = self.tet_coords(e);
        (c[0] + c[1] + c[2] + c[3]) / 4.0
    }

    /// Axis-aligned bounding box `(min, max)`; `None` for an empty mesh.
    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bounding_box().map(|(lo, hi)| (hi - lo).norm()).unwrap_or(0.0)
    }

    /// Triangles that belong to exactly one tet, oriented outward.
    pub fn boundary_faces(&self) -> Vec<[usize; 3]> {
        let mut count: HashMap<[usize; 3], (usize, [usize; 3])> = HashMap::new();
        for tet in &self.tets {
            for f in TET_FACES {
                let face = [tet[f[0]], tet[f[1]], tet[f[2]]];
                count.entry(sorted3(face)).and_modify(|c| c.0 += 1).or_insert((1, face));
            }
        }
        let mut faces: Vec<[usize; 3]> =
            count.into_values().filter(|(n, _)| *n == 1).map(|(_, f)| f).collect();
        faces.sort_unstable();
        faces
    }

    /// Unordered pairs `(a, b)` with `a < b` of tets that share a triangle.
    pub fn face_neighbors(&self) -> Vec<(usize, usize)> {
        let mut owners: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
        for (e, tet) in self.tets.iter().enumerate() {
            for f in TET_FACES {
                owners.entry(sorted3([tet[f[0]], tet[f[1]], tet[f[2]]])).or_default().push(e);
            }
        }
        let mut pairs: Vec<(usize, usize)> = owners
            .into_values()
            .filter(|o| o.len() == 2)
            .map(|o| (o[0].min(o[1]), o[0].max(o[1])))
            .collect();
        pairs.sort_unstable();
        pairs
    }

    /// Vertices for which `pred(position)` holds, in id order.
    pub fn vertices_where(&self, pred: impl Fn(&Point) -> bool) -> Vec<usize> {
        self.vertices.iter().enumerate().filter(|(_, p)| pred(p)).map(|(i, _)| i).collect()
    }

    /// Renumber vertices: old vertex `i` becomes `perm[i]`.
    pub fn relabel_vertices(&self, perm: &[usize]) -> Result<Self, MeshError> {
        let n = self.n_vertices();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(MeshError::InvalidArgument {
                name: "perm",
                reason: format!("not a permutation of 0..{n}"),
            });
        }
        let mut vertices = vec![Point::zeros(); n];
        for (old, &new) in perm.iter().enumerate() {
            vertices[new] = self.vertices[old];
        }
        let tets = self.tets.iter().map(|t| t.map(|v| perm[v])).collect();
        Ok(Self { vertices, tets })
    }
}

pub fn signed_tet_volume(c: &[Point; 4]) -> f64 {
    (c[1] - c[0]).cross(&(c[2] - c[0])).dot(&(c[3] - c[0])) / 6.0
}

pub(crate) fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_range_index_rejected() {
        let v = vec![Point::zeros(); 3];
        let err = VolumetricMesh::new(v, vec![[0, 1, 2, 3]]).unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { tet: 0, vertex: 3, .. }));
    }

    #[test]
    fn reference_tet_volume() {
        let c = [Point::zeros(), Point::x(), Point::y(), Point::z()];
        assert!((signed_tet_volume(&c) - 1.0 / 6.0).abs() < 1e-15);
        let swapped = [c[0], c[2], c[1], c[3]];
        assert!((signed_tet_volume(&swapped) + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn relabel_rejects_non_permutation() {
        let m = generate_box_mesh(1, 1, 1, [1.0; 3]).unwrap();
        assert!(m.relabel_vertices(&[0, 0, 1, 2, 3, 4, 5, 6]).is_err());
        let perm: Vec<usize> = (0..8).rev().collect();
        let r = m.relabel_vertices(&perm).unwrap();
        assert!((r.total_volume() - 1.0).abs() < 1e-14);
    }
}
