use nalgebra::{DMatrix, Matrix3, Matrix4, SMatrix, Vector3};

use super::FemError;
use crate::mesh::Point;

pub type Matrix12 = SMatrix<f64, 12, 12>;
type Matrix6x12 = SMatrix<f64, 6, 12>;
type Matrix6 = SMatrix<f64, 6, 6>;

/// Dense element matrix with its global dof map.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrix {
    pub element: usize,
    pub matrix: DMatrix<f64>,
    pub dofs: Vec<usize>,
}

/// Gradients of the four barycentric shape functions and the tet volume.
///
/// Rejects tets whose signed volume is at most `1e-12 · d³`, `d` being the
/// diagonal of the tet's bounding box.
pub fn shape_gradients(c: &[Point; 4]) -> Result<([Vector3<f64>; 4], f64), FemError> {
    let jac = Matrix3::from_columns(&[c[1] - c[0], c[2] - c[0], c[3] - c[0]]);
    let volume = jac.determinant() / 6.0;
    let lo = c.iter().fold(c[0], |a, p| a.inf(p));
    let hi = c.iter().fold(c[0], |a, p| a.sup(p));
    let epsilon = 1e-12 * (hi - lo).norm().powi(3);
    if !(volume > epsilon) {
        return Err(FemError::Degenerate { volume, epsilon });
    }
    let inv = jac.try_inverse().ok_or(FemError::Degenerate { volume, epsilon })?;
    let g1: Vector3<f64> = inv.row(0).transpose();
    let g2: Vector3<f64> = inv.row(1).transpose();
    let g3: Vector3<f64> = inv.row(2).transpose();
    Ok(([-(g1 + g2 + g3), g1, g2, g3], volume))
}

/// Isotropic elasticity matrix in Voigt order (xx, yy, zz, xy, yz, zx) with
/// engineering shear strains.
fn isotropic(young: f64, poisson: f64) -> Result<Matrix6, FemError> {
    if !(young > 0.0 && young.is_finite()) {
        return Err(FemError::InvalidMaterial(format!("Young's modulus must be positive, got {young}")));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(FemError::InvalidMaterial(format!("Poisson ratio must lie in (-1, 0.5), got {poisson}")));
    }
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    let mut c = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = lambda;
        }
        c[(i, i)] = lambda + 2.0 * mu;
        c[(i + 3, i + 3)] = mu;
    }
    Ok(c)
}

/// Constant-strain tet stiffness `V · Bᵀ C B`, dofs ordered `(node, axis)`.
pub fn element_stiffness(coords: &[Point; 4], young: f64, poisson: f64) -> Result<Matrix12, FemError> {
    let c = isotropic(young, poisson)?;
    let (grads, volume) = shape_gradients(coords)?;
    let mut b = Matrix6x12::zeros();
    for (a, g) in grads.iter().enumerate() {
        let k = 3 * a;
        b[(0, k)] = g.x;
        b[(1, k + 1)] = g.y;
        b[(2, k + 2)] = g.z;
        b[(3, k)] = g.y;
        b[(3, k + 1)] = g.x;
        b[(4, k + 1)] = g.z;
        b[(4, k + 2)] = g.y;
        b[(5, k)] = g.z;
        b[(5, k + 2)] = g.x;
    }
    let k = b.transpose() * c * b * volume;
    Ok((k + k.transpose()) * 0.5)
}

/// Linear-tet conductance `V · D · ∇φᵢ·∇φⱼ`.
pub fn element_conductance(coords: &[Point; 4], conductivity: f64) -> Result<Matrix4<f64>, FemError> {
    if !(conductivity > 0.0 && conductivity.is_finite()) {
        return Err(FemError::InvalidMaterial(format!("conductivity must be positive, got {conductivity}")));
    }
    let (g, volume) = shape_gradients(coords)?;
    Ok(Matrix4::from_fn(|i, j| volume * conductivity * g[i].dot(&g[j])))
}
