use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{FemError, FemSystem, Physics, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    DenseCholesky,
    JacobiPcg,
    /// Every dof prescribed; nothing to solve.
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub method: SolverMethod,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Nodal solution with reactions at prescribed dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub physics: Physics,
    /// Full dof vector (free and prescribed).
    pub values: Vec<f64>,
    /// `(K U − F_ext)` on prescribed dofs, zero elsewhere.
    pub reactions: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
}

impl FieldSolution {
    pub fn displacement(&self, v: usize) -> Vector3<f64> {
        debug_assert_eq!(self.physics, Physics::Elasticity);
        Vector3::new(self.values[3 * v], self.values[3 * v + 1], self.values[3 * v + 2])
    }

    pub fn temperature(&self, v: usize) -> f64 {
        debug_assert_eq!(self.physics, Physics::Conduction);
        self.values[v]
    }

    pub fn reaction(&self, v: usize) -> Vector3<f64> {
        Vector3::new(self.reactions[3 * v], self.reactions[3 * v + 1], self.reactions[3 * v + 2])
    }

    /// Sum of reactions per component (one entry for conduction).
    pub fn total_reaction(&self) -> Vec<f64> {
        let d = self.physics.dofs_per_node();
        let mut out = vec![0.0; d];
        for (i, r) in self.reactions.iter().enumerate() {
            out[i % d] += r;
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let d = self.physics.dofs_per_node();
        let key = match self.physics {
            Physics::Elasticity => "displacements",
            Physics::Conduction => "temperatures",
        };
        let nodal = |x: &[f64]| -> serde_json::Value {
            if d == 1 {
                serde_json::json!(x)
            } else {
                serde_json::json!(x.chunks(d).collect::<Vec<_>>())
            }
        };
        serde_json::json!({
            key: nodal(&self.values),
            "reactions": nodal(&self.reactions),
            "diagnostics": self.diagnostics,
        })
    }
}

/// Solve the reduced system and expand to the full dof vector.
pub fn solve(system: &FemSystem, opts: &SolverOptions) -> Result<FieldSolution, FemError> {
    let rhs = system.reduced_rhs();
    let (u_f, diagnostics) = solve_free(system, &rhs, opts)?;
    let n = system.n_dofs();
    let mut values = vec![0.0; n];
    for d in 0..n {
        values[d] = match system.prescribed_value(d) {
            Some(u) => u,
            None => u_f[system.free_index(d).expect("free dof")],
        };
    }
    let ku = system.matrix().mul_vec(&values);
    let reactions = (0..n)
        .map(|d| if system.prescribed_value(d).is_some() { ku[d] - system.external_load()[d] } else { 0.0 })
        .collect();
    Ok(FieldSolution { physics: system.physics(), values, reactions, diagnostics })
}

/// Solve `K_ff x = rhs` for an arbitrary right-hand side over the free dofs.
pub fn solve_free(
    system: &FemSystem,
    rhs: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolverDiagnostics), FemError> {
    let n = system.free_dofs().len();
    if rhs.len() != n {
        return Err(FemError::RhsSize { expected: n, found: rhs.len() });
    }
    if n == 0 {
        return Ok((Vec::new(), SolverDiagnostics { method: SolverMethod::Trivial, iterations: 0, relative_residual: 0.0 }));
    }
    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], SolverDiagnostics { method: SolverMethod::Trivial, iterations: 0, relative_residual: 0.0 }));
    }
    if n < opts.dense_threshold {
        let chol = system
            .dense_factor()
            .ok_or_else(|| FemError::Indefinite("dense Cholesky factorisation failed".into()))?;
        let x = chol.solve(&DVector::from_column_slice(rhs));
        let x: Vec<f64> = x.iter().copied().collect();
        let r = residual(system, &x, rhs);
        return Ok((x, SolverDiagnostics { method: SolverMethod::DenseCholesky, iterations: 1, relative_residual: r / b_norm }));
    }
    pcg(system, rhs, b_norm, opts)
}

fn pcg(
    system: &FemSystem,
    b: &[f64],
    b_norm: f64,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolverDiagnostics), FemError> {
    let k = system.reduced_matrix();
    let diag = k.diagonal();
    if let Some(d) = diag.iter().find(|d| !(**d > 0.0)) {
        return Err(FemError::Indefinite(format!("non-positive diagonal entry {d:e}")));
    }
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let ap = k.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(FemError::Indefinite(format!("pᵀKp = {pap:e} at iteration {it}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / b_norm;
        history.push(rel);
        if rel <= opts.tol {
            // recurrence residual drifts; report the true one
            let true_rel = residual(system, &x, b) / b_norm;
            return Ok((x, SolverDiagnostics { method: SolverMethod::JacobiPcg, iterations: it, relative_residual: true_rel }));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = history.last().copied().unwrap_or(1.0);
    Err(FemError::NotConverged { iterations: opts.max_iter, residual, history })
}

fn residual(system: &FemSystem, x: &[f64], b: &[f64]) -> f64 {
    let kx = system.reduced_matrix().mul_vec(x);
    norm(&kx.iter().zip(b).map(|(a, b)| a - b).collect::<Vec<_>>())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, CsrMatrix};
    use crate::mesh::generate_box_mesh;
    use crate::semantics::{bind_to_mesh, presets, MaterialField, MaterialParams, Provenance};

    fn spring_chain(n: usize) -> FemSystem {
        // 1D chain of unit springs, node 0 grounded, unit load at the tip
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.extend([(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0), (i + 1, i, -1.0)]);
        }
        let k = CsrMatrix::from_triplets(n, t);
        let mut f = vec![0.0; n];
        f[n - 1] = 1.0;
        let mut pres = vec![None; n];
        pres[0] = Some(0.0);
        FemSystem::new(Physics::Conduction, k, f, pres).unwrap()
    }

    #[test]
    fn chain_dense_and_pcg_agree_with_hand_solution() {
        let sys = spring_chain(400);
        for threshold in [1000, 0] {
            let opts = SolverOptions { dense_threshold: threshold, ..Default::default() };
            let sol = solve(&sys, &opts).unwrap();
            for (i, u) in sol.values.iter().enumerate() {
                assert!((u - i as f64).abs() < 1e-6 * 400.0, "node {i}: {u}");
            }
            assert!((sol.reactions[0] + 1.0).abs() < 1e-8);
            assert!(sol.diagnostics.relative_residual <= 1e-10);
        }
    }

    #[test]
    fn pcg_reports_non_convergence() {
        let sys = spring_chain(400);
        let opts = SolverOptions { dense_threshold: 0, max_iter: 5, tol: 1e-14 };
        match solve(&sys, &opts) {
            Err(FemError::NotConverged { iterations: 5, history, .. }) => assert_eq!(history.len(), 5),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn indefinite_reduced_matrix_is_detected() {
        let k = CsrMatrix::from_triplets(3, vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (1, 2, 2.0), (2, 1, 2.0)]);
        let pres = vec![Some(0.0), None, None];
        let sys = FemSystem::new(Physics::Conduction, k, vec![0.0, 1.0, 0.0], pres).unwrap();
        assert!(matches!(solve(&sys, &SolverOptions::default()), Err(FemError::Indefinite(_))));
        let opts = SolverOptions { dense_threshold: 0, ..Default::default() };
        assert!(matches!(solve(&sys, &opts), Err(FemError::Indefinite(_))));
    }

    #[test]
    fn clamped_cube_reactions_balance_load() {
        let mesh = generate_box_mesh(2, 2, 2, [1.0; 3]).unwrap();
        let layer = presets::axial_column(&mesh, 1000.0, None);
        let spec = bind_to_mesh(&layer, &mesh).unwrap();
        let field = MaterialField::uniform(
            mesh.n_tets(),
            MaterialParams { young: 1.0e5, poisson: 0.3, conductivity: 1.0, density: 1.0 },
            Provenance::Commanded,
        );
        let sys = assemble(&spec, &field, Physics::Elasticity).unwrap();
        let sol = solve(&sys, &SolverOptions::default()).unwrap();
        let total = sol.total_reaction();
        assert!(total[0].abs() < 1e-8 && total[1].abs() < 1e-8);
        assert!((total[2] - 1000.0).abs() < 1e-8);
        let json = sol.to_json();
        assert_eq!(json["displacements"].as_array().unwrap().len(), mesh.n_vertices());
    }
}
