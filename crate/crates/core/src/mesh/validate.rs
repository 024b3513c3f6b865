use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::{sorted3, VolumetricMesh, TET_FACES};

/// One broken mesh invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NegativeVolume { tet: usize, volume: f64 },
    DegenerateTet { tet: usize, volume: f64 },
    RepeatedVertex { tet: usize },
    /// A triangle shared by more than two tets.
    OverSharedFace { face: [usize; 3], tets: Vec<usize> },
    /// A boundary edge not shared by exactly two boundary faces.
    OpenBoundaryEdge { edge: [usize; 2], faces: usize, tet: usize },
    UnreferencedVertex { vertex: usize },
    Empty,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeVolume { tet, volume } => write!(f, "tet {tet}: negative volume {volume:e}"),
            Violation::DegenerateTet { tet, volume } => write!(f, "tet {tet}: degenerate, volume {volume:e}"),
            Violation::RepeatedVertex { tet } => write!(f, "tet {tet}: repeated vertex"),
            Violation::OverSharedFace { face, tets } => write!(f, "face {face:?} shared by tets {tets:?}"),
            Violation::OpenBoundaryEdge { edge, faces, tet } => {
                write!(f, "boundary edge {edge:?} (tet {tet}) bounds {faces} boundary faces")
            }
            Violation::UnreferencedVertex { vertex } => write!(f, "vertex {vertex} is not used by any tet"),
            Violation::Empty => write!(f, "mesh has no tets"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every [`VolumetricMesh`] invariant. Violations are data.
pub fn validate_mesh(mesh: &VolumetricMesh) -> ValidationReport {
    let mut violations = Vec::new();
    if mesh.n_tets() == 0 {
        violations.push(Violation::Empty);
    }
    let eps = 1e-12 * mesh.bbox_diagonal().powi(3);

    let mut referenced = vec![false; mesh.n_vertices()];
    let mut face_owners: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
    for (e, tet) in mesh.tets().iter().enumerate() {
        for &v in tet {
            referenced[v] = true;
        }
        if sorted4(*tet).windows(2).any(|w| w[0] == w[1]) {
            violations.push(Violation::RepeatedVertex { tet: e });
            continue;
        }
        let volume = mesh.signed_volume(e);
        if volume.abs() <= eps {
            violations.push(Violation::DegenerateTet { tet: e, volume });
        } else if volume < 0.0 {
            violations.push(Violation::NegativeVolume { tet: e, volume });
        }
        for f in TET_FACES {
            face_owners.entry(sorted3([tet[f[0]], tet[f[1]], tet[f[2]]])).or_default().push(e);
        }
    }

    let mut faces: Vec<_> = face_owners.into_iter().collect();
    faces.sort_unstable_by_key(|(f, _)| *f);
    let mut boundary_edges: HashMap<[usize; 2], (usize, usize)> = HashMap::new();
    for (face, owners) in &faces {
        match owners.len() {
            1 => {
                for (a, b) in [(0, 1), (1, 2), (0, 2)] {
                    let edge = [face[a], face[b]];
                    boundary_edges.entry(edge).and_modify(|c| c.0 += 1).or_insert((1, owners[0]));
                }
            }
            2 => {}
            _ => violations.push(Violation::OverSharedFace { face: *face, tets: owners.clone() }),
        }
    }
    let mut open: Vec<_> = boundary_edges.into_iter().filter(|(_, (n, _))| *n != 2).collect();
    open.sort_unstable_by_key(|(e, _)| *e);
    violations.extend(
        open.into_iter().map(|(edge, (faces, tet))| Violation::OpenBoundaryEdge { edge, faces, tet }),
    );

    violations.extend(
        referenced.iter().enumerate().filter(|(_, r)| !**r).map(|(v, _)| Violation::UnreferencedVertex { vertex: v }),
    );
    ValidationReport { violations }
}

fn sorted4(mut t: [usize; 4]) -> [usize; 4] {
    t.sort_unstable();
    t
}
