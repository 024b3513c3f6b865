use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, Dyn};

use super::element::{element_conductance, element_stiffness};
use super::{CsrMatrix, ElementMatrix, FemError, Physics};
use crate::semantics::{BoundSpecification, MaterialField, Parameter, TemperatureSet};

/// Assembled global system `F = K U` with its dof partition.
#[derive(Debug)]
pub struct FemSystem {
    pub(crate) physics: Physics,
    pub(crate) n_vertices: usize,
    pub(crate) k: CsrMatrix,
    pub(crate) f_ext: Vec<f64>,
    pub(crate) prescribed: Vec<Option<f64>>,
    pub(crate) free: Vec<usize>,
    pub(crate) free_index: Vec<Option<usize>>,
    pub(crate) k_ff: CsrMatrix,
    pub(crate) dense_factor: OnceLock<Option<Cholesky<f64, Dyn>>>,
}

impl FemSystem {
    /// Build from raw parts; `prescribed[d]` is the Dirichlet value of dof `d`.
    pub fn new(physics: Physics, k: CsrMatrix, f_ext: Vec<f64>, prescribed: Vec<Option<f64>>) -> Result<Self, FemError> {
        let n = k.dim();
        if f_ext.len() != n || prescribed.len() != n {
            return Err(FemError::RhsSize { expected: n, found: f_ext.len().min(prescribed.len()) });
        }
        let mut free_index = vec![None; n];
        let mut free = Vec::new();
        for d in 0..n {
            if prescribed[d].is_none() {
                free_index[d] = Some(free.len());
                free.push(d);
            }
        }
        if free.len() == n {
            return Err(FemError::IllPosed { physics: physics.name(), reason: "no Dirichlet data".into() });
        }
        let k_ff = k.principal(&free_index, free.len());
        Ok(Self {
            physics,
            n_vertices: n / physics.dofs_per_node(),
            k,
            f_ext,
            prescribed,
            free,
            free_index,
            k_ff,
            dense_factor: OnceLock::new(),
        })
    }

    pub fn physics(&self) -> Physics {
        self.physics
    }

    pub fn n_dofs(&self) -> usize {
        self.k.dim()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.k
    }

    pub fn reduced_matrix(&self) -> &CsrMatrix {
        &self.k_ff
    }

    pub fn external_load(&self) -> &[f64] {
        &self.f_ext
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn prescribed_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&d| self.prescribed[d].is_some()).collect()
    }

    pub fn prescribed_value(&self, dof: usize) -> Option<f64> {
        self.prescribed[dof]
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    /// `b_f = F_f − K_fp u_p`.
    pub fn reduced_rhs(&self) -> Vec<f64> {
        self.free
            .iter()
            .map(|&d| {
                let lift: f64 = self.k.row(d).filter_map(|(j, v)| self.prescribed[j].map(|u| v * u)).sum();
                self.f_ext[d] - lift
            })
            .collect()
    }

    pub(crate) fn dense_factor(&self) -> Option<&Cholesky<f64, Dyn>> {
        self.dense_factor
            .get_or_init(|| {
                let m: DMatrix<f64> = self.k_ff.to_dense();
                Cholesky::new(m)
            })
            .as_ref()
    }
}

/// Element matrix of element `e` under `field`.
pub fn element_matrix(
    spec: &BoundSpecification,
    field: &MaterialField,
    e: usize,
    physics: Physics,
) -> Result<ElementMatrix, FemError> {
    let mesh = spec.mesh();
    let coords = mesh.tet_coords(e);
    let tet = mesh.tet(e);
    let wrap = |source| FemError::Element { element: e, source: Box::new(source) };
    Ok(match physics {
        Physics::Elasticity => {
            let p = field.params(e);
            let k = element_stiffness(&coords, p.young, p.poisson).map_err(wrap)?;
            ElementMatrix {
                element: e,
                matrix: DMatrix::from_iterator(12, 12, k.iter().copied()),
                dofs: tet.iter().flat_map(|&v| [3 * v, 3 * v + 1, 3 * v + 2]).collect(),
            }
        }
        Physics::Conduction => {
            let k = element_conductance(&coords, field.get(Parameter::Conductivity, e)).map_err(wrap)?;
            ElementMatrix { element: e, matrix: DMatrix::from_iterator(4, 4, k.iter().copied()), dofs: tet.to_vec() }
        }
    })
}

/// Scatter every element matrix (ascending element id) and collect loads
/// and Dirichlet data from the annotations.
pub fn assemble(spec: &BoundSpecification, field: &MaterialField, physics: Physics) -> Result<FemSystem, FemError> {
    let mesh = spec.mesh();
    if field.len() != mesh.n_tets() {
        return Err(FemError::FieldSize { expected: mesh.n_tets(), found: field.len() });
    }
    spec.check_well_posed(physics)
        .map_err(|e| FemError::IllPosed { physics: physics.name(), reason: e.to_string() })?;
    let dpn = physics.dofs_per_node();
    let n = dpn * mesh.n_vertices();
    let per = (4 * dpn) * (4 * dpn);
    let mut triplets = Vec::with_capacity(per * mesh.n_tets());
    for e in 0..mesh.n_tets() {
        let em = element_matrix(spec, field, e, physics)?;
        for (a, &ga) in em.dofs.iter().enumerate() {
            for (b, &gb) in em.dofs.iter().enumerate() {
                triplets.push((ga, gb, em.matrix[(a, b)]));
            }
        }
    }
    let k = CsrMatrix::from_triplets(n, triplets);

    let mut f_ext = vec![0.0; n];
    let mut prescribed = vec![None; n];
    for (v, ann) in spec.vertex_annotations().iter().enumerate() {
        match physics {
            Physics::Elasticity => {
                if let Some(u) = ann.displacement.prescribed_value() {
                    for a in 0..3 {
                        prescribed[3 * v + a] = Some(u[a]);
                    }
                }
                if let Some(f) = ann.force.nominal() {
                    for a in 0..3 {
                        f_ext[3 * v + a] = f[a];
                    }
                }
            }
            Physics::Conduction => {
                if let TemperatureSet::Prescribed(t) = ann.temperature {
                    prescribed[v] = Some(t);
                }
                if let crate::semantics::HeatSet::Value(q) = ann.heat {
                    f_ext[v] = q;
                }
            }
        }
    }
    FemSystem::new(physics, k, f_ext, prescribed)
}
