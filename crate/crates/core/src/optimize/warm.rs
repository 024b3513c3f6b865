use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::descent::SmoothFunction;
use super::problem::InversionProblem;
use super::solve::{finish, solve_from, verify, Merit, OptimizationResult, OptimizeOptions, ResultParts, StrategyUsed, TraceRecord};
use super::OptimizeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    WarmStart,
    Full,
}

/// Second-order model of `F(y, z)` about `(y₀, z₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub y0: Vec<f64>,
    pub z0: Vec<f64>,
    pub f_yy: DMatrix<f64>,
    pub f_zz: DMatrix<f64>,
    /// Rows indexed by `y`, columns by `z`.
    pub f_yz: DMatrix<f64>,
    /// `∇F` at the base point, `y` entries first.
    pub gradient: Vec<f64>,
}

impl QuadraticModel {
    fn from_blocks(
        y0: Vec<f64>,
        z0: Vec<f64>,
        f_yy: DMatrix<f64>,
        f_zz: DMatrix<f64>,
        f_yz: DMatrix<f64>,
        gradient: Vec<f64>,
    ) -> Result<Self, OptimizeError> {
        if f_zz.nrows() == 0 || f_zz.clone().cholesky().is_none() {
            return Err(OptimizeError::NotPositiveDefinite);
        }
        Ok(Self { y0, z0, f_yy, f_zz, f_yz, gradient })
    }

    /// Blocks of a group-column Hessian for the split of `problem`:
    /// frozen elements are `y`, free groups are `z`. Every free group must be
    /// a union of the Hessian's columns (see [`ElementHessian::resolves`]).
    pub fn from_element_hessian(
        hessian: &ElementHessian,
        problem: &InversionProblem,
        y0: Vec<f64>,
        z0: Vec<f64>,
    ) -> Result<Self, OptimizeError> {
        let cols = hessian.group_columns(problem).ok_or_else(|| {
            OptimizeError::InvalidProblem("free groups are not unions of the Hessian's columns".into())
        })?;
        let m = &hessian.matrix;
        let y = problem.frozen_elements();
        let groups = problem.groups();
        let col_sum = |e: usize, b: usize| cols[b].iter().map(|&k| m[(e, k)]).sum::<f64>();
        let f_zz = DMatrix::from_fn(groups.len(), groups.len(), |a, b| groups[a].iter().map(|&e| col_sum(e, b)).sum());
        let f_zz = (&f_zz + f_zz.transpose()) * 0.5;
        let f_yz = DMatrix::from_fn(y.len(), groups.len(), |i, b| col_sum(y[i], b));
        // y-y curvature is not needed by the update and is not measured
        let f_yy = DMatrix::zeros(y.len(), y.len());
        Self::from_blocks(y0, z0, f_yy, f_zz, f_yz, Vec::new())
    }
}

/// Second-order model from central differences of the gradient of `f`.
///
/// `steps[i]` is the difference step of coordinate `i`. Fails if the `z`
/// part of the gradient at `base` exceeds `tol` or `F_zz` is not positive
/// definite.
pub fn build_quadratic_model<F: SmoothFunction + ?Sized>(
    f: &mut F,
    base: &[f64],
    y_idx: &[usize],
    z_idx: &[usize],
    steps: &[f64],
    tol: f64,
) -> Result<QuadraticModel, OptimizeError> {
    let n = f.dim();
    if base.len() != n || steps.len() != n {
        return Err(OptimizeError::Dimension { expected: n, found: base.len().min(steps.len()) });
    }
    let (_, g0) = f.evaluate(base)?;
    let gz = z_idx.iter().map(|&i| g0[i].abs()).fold(0.0, f64::max);
    if gz > tol {
        return Err(OptimizeError::NotStationary { norm: gz, tol });
    }
    let idx: Vec<usize> = y_idx.iter().chain(z_idx).copied().collect();
    let m = idx.len();
    let mut h = DMatrix::zeros(m, m);
    for (col, &j) in idx.iter().enumerate() {
        let mut xp = base.to_vec();
        xp[j] += steps[j];
        let mut xm = base.to_vec();
        xm[j] -= steps[j];
        let (_, gp) = f.evaluate(&xp)?;
        let (_, gm) = f.evaluate(&xm)?;
        for (row, &i) in idx.iter().enumerate() {
            h[(row, col)] = (gp[i] - gm[i]) / (2.0 * steps[j]);
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let ny = y_idx.len();
    let nz = z_idx.len();
    QuadraticModel::from_blocks(
        y_idx.iter().map(|&i| base[i]).collect(),
        z_idx.iter().map(|&i| base[i]).collect(),
        h.view((0, 0), (ny, ny)).into_owned(),
        h.view((ny, ny), (nz, nz)).into_owned(),
        h.view((0, ny), (ny, nz)).into_owned(),
        idx.iter().map(|&i| g0[i]).collect(),
    )
}

/// `δz = −F_zz⁻¹ F_zy δy`: the stationary point in `z` of the model after
/// the frozen part moves by `δy`.
pub fn warm_start_update(model: &QuadraticModel, delta_y: &[f64]) -> Result<Vec<f64>, OptimizeError> {
    if delta_y.len() != model.f_yz.nrows() {
        return Err(OptimizeError::Dimension { expected: model.f_yz.nrows(), found: delta_y.len() });
    }
    let chol = model.f_zz.clone().cholesky().ok_or(OptimizeError::NotPositiveDefinite)?;
    let rhs = model.f_yz.transpose() * DVector::from_column_slice(delta_y);
    Ok(chol.solve(&rhs).iter().map(|v| -v).collect())
}

/// Hessian of the penalised objective applied to the free groups of the
/// problem it was built for: column `k` is `H · 1_{columns[k]}`, with a row
/// for every element. Rows of elements frozen later stay valid, so one build
/// serves every control step whose free groups are unions of `columns`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementHessian {
    pub base: Vec<f64>,
    pub columns: Vec<Vec<usize>>,
    pub matrix: DMatrix<f64>,
    pub objective_scale: f64,
    pub penalty_weight: f64,
    pub fem_solves: usize,
}

impl ElementHessian {
    /// True when every free group of `problem` is a union of columns.
    pub fn resolves(&self, problem: &InversionProblem) -> bool {
        self.matrix.nrows() == problem.n_elements() && self.group_columns(problem).is_some()
    }

    fn group_columns(&self, problem: &InversionProblem) -> Option<Vec<Vec<usize>>> {
        let mut owner = vec![None; problem.n_elements()];
        for (k, col) in self.columns.iter().enumerate() {
            for &e in col {
                *owner.get_mut(e)? = Some(k);
            }
        }
        problem
            .groups()
            .iter()
            .map(|g| {
                let mut ks: Vec<usize> = g.iter().map(|&e| owner[e]).collect::<Option<_>>()?;
                ks.sort_unstable();
                ks.dedup();
                let covered: usize = ks.iter().map(|&k| self.columns[k].len()).sum();
                (covered == g.len()).then_some(ks)
            })
            .collect()
    }
}

/// Central differences of the adjoint gradient along each free group of
/// `problem`, step `10⁻³` of the group's range width. Costs two gradient
/// evaluations per group.
pub fn build_element_hessian(
    problem: &InversionProblem,
    result: &OptimizationResult,
    opts: &OptimizeOptions,
) -> Result<ElementHessian, OptimizeError> {
    let n = problem.n_elements();
    let base = result.element_values.clone();
    let columns = problem.groups().to_vec();
    let mut merit = Merit::new(problem, result.objective_scale, result.penalty_weight, opts.backoff);
    let mut h = DMatrix::zeros(n, columns.len());
    for (k, (group, b)) in columns.iter().zip(problem.boxes()).enumerate() {
        let w = b.width();
        let step = if w > 0.0 { 1e-3 * w } else { 1e-6 * base[group[0]].abs().max(f64::MIN_POSITIVE) };
        let mut xp = base.clone();
        let mut xm = base.clone();
        for &e in group {
            xp[e] += step;
            xm[e] -= step;
        }
        let gp = merit.evaluate_elements(&xp)?.gradient;
        let gm = merit.evaluate_elements(&xm)?.gradient;
        for i in 0..n {
            h[(i, k)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Ok(ElementHessian {
        base,
        columns,
        matrix: h,
        objective_scale: result.objective_scale,
        penalty_weight: result.penalty_weight,
        fem_solves: merit.fem_solves,
    })
}

/// Re-plan the free groups after the frozen values moved away from
/// `previous`.
///
/// The deviation is `δy = (frozen values of problem) − (previous values of
/// those elements)`. A zero deviation returns `previous` unchanged. The warm
/// strategy applies [`warm_start_update`] with blocks taken from `hessian`
/// (built here if absent or not matching the problem's groups), projects into the boxes and keeps the point only
/// if the penalty-free check passes; otherwise, and for the full strategy,
/// the penalty continuation restarts from the previous values.
pub fn reoptimize_after_drift(
    problem: &InversionProblem,
    previous: &OptimizationResult,
    strategy: Strategy,
    hessian: Option<&ElementHessian>,
    opts: &OptimizeOptions,
) -> Result<OptimizationResult, OptimizeError> {
    let n = problem.n_elements();
    if previous.element_values.len() != n {
        return Err(OptimizeError::Dimension { expected: n, found: previous.element_values.len() });
    }
    let frozen = problem.frozen_elements();
    let y = problem.frozen_values();
    let delta_y: Vec<f64> = frozen.iter().zip(&y).map(|(&e, v)| v - previous.element_values[e]).collect();
    let z_prev: Vec<f64> = problem
        .group_values(&previous.element_values)
        .iter()
        .zip(problem.boxes())
        .map(|(v, b)| b.clamp(*v))
        .collect();

    if deviation_is_negligible(problem, previous) {
        let mut r = previous.clone();
        r.values = z_prev;
        r.fem_solves = 0;
        r.iterations = 0;
        r.trace.clear();
        r.strategy = StrategyUsed::Unchanged;
        return Ok(r);
    }

    let mut spent = 0;
    if strategy == Strategy::WarmStart {
        let built;
        let h = match hessian {
            Some(h) if h.resolves(problem) => h,
            _ => {
                built = build_element_hessian(problem, previous, opts)?;
                spent += built.fem_solves;
                &built
            }
        };
        match QuadraticModel::from_element_hessian(h, problem, previous_y(previous, &frozen), z_prev.clone()) {
            Ok(model) => {
                let dz = warm_start_update(&model, &delta_y)?;
                let z: Vec<f64> =
                    z_prev.iter().zip(&dz).zip(problem.boxes()).map(|((z, d), b)| b.clamp(z + d)).collect();
                let check = verify(problem, &problem.element_values(&z))?;
                spent += 1;
                if check.2 {
                    let step_norm = dz.iter().map(|d| d * d).sum::<f64>().sqrt();
                    let trace = vec![TraceRecord {
                        iter: 0,
                        objective: check.0,
                        max_violation: 0.0,
                        step_norm,
                        merit: f64::NAN,
                        penalty_weight: previous.penalty_weight,
                    }];
                    return Ok(finish(
                        problem,
                        z,
                        check,
                        ResultParts {
                            trace,
                            iterations: 0,
                            converged: true,
                            fem_solves: spent,
                            strategy: StrategyUsed::WarmStart,
                            scale: previous.objective_scale,
                            mu: previous.penalty_weight,
                            best_infeasible: None,
                        },
                    ));
                }
                log::debug!("warm start rejected by verification; running full re-optimisation");
            }
            Err(OptimizeError::NotPositiveDefinite) => {
                log::debug!("quadratic model invalid (F_zz not positive definite); running full re-optimisation")
            }
            Err(e) => return Err(e),
        }
    }
    let used = if strategy == Strategy::WarmStart { StrategyUsed::WarmFallback } else { StrategyUsed::Full };
    let mu0 = previous.penalty_weight.max(opts.initial_penalty);
    let mut r = solve_from(problem, &z_prev, opts, Some(previous.objective_scale), Some(mu0), used)?;
    r.fem_solves += spent;
    Ok(r)
}

/// True when every frozen value of `problem` equals the value the same
/// element has in `previous`, up to a relative `10⁻¹²`.
pub fn deviation_is_negligible(problem: &InversionProblem, previous: &OptimizationResult) -> bool {
    let frozen = problem.frozen_elements();
    frozen.iter().zip(problem.frozen_values()).all(|(&e, v)| {
        let p = previous.element_values.get(e).copied().unwrap_or(f64::NAN);
        (v - p).abs() <= 1e-12 * p.abs().max(f64::MIN_POSITIVE)
    })
}

fn previous_y(previous: &OptimizationResult, frozen: &[usize]) -> Vec<f64> {
    frozen.iter().map(|&e| previous.element_values[e]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::descent::tests::Quadratic;

    #[test]
    fn recovers_polynomial_hessian() {
        // F(y, z) = y² + z² + yz = ½ xᵀ [[2,1],[1,2]] x
        let mut f = Quadratic { a: vec![vec![2.0, 1.0], vec![1.0, 2.0]], b: vec![0.0, 0.0], calls: 0 };
        let m = build_quadratic_model(&mut f, &[0.0, 0.0], &[0], &[1], &[1e-3, 1e-3], 1e-9).unwrap();
        assert!((m.f_yy[(0, 0)] - 2.0).abs() < 1e-6);
        assert!((m.f_zz[(0, 0)] - 2.0).abs() < 1e-6);
        assert!((m.f_yz[(0, 0)] - 1.0).abs() < 1e-6);
        let dz = warm_start_update(&m, &[0.1]).unwrap();
        assert!((dz[0] + 0.05).abs() < 1e-12);
        assert_eq!(warm_start_update(&m, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn linear_objective_has_no_valid_model() {
        let mut f = Quadratic { a: vec![vec![0.0, 0.0], vec![0.0, 0.0]], b: vec![0.0, 0.0], calls: 0 };
        assert!(matches!(
            build_quadratic_model(&mut f, &[0.0, 0.0], &[0], &[1], &[1e-3; 2], 1e-9),
            Err(OptimizeError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn non_stationary_base_is_rejected() {
        let mut f = Quadratic { a: vec![vec![2.0, 1.0], vec![1.0, 2.0]], b: vec![0.0, 0.0], calls: 0 };
        assert!(matches!(
            build_quadratic_model(&mut f, &[0.0, 5.0], &[0], &[1], &[1e-3; 2], 1e-6),
            Err(OptimizeError::NotStationary { .. })
        ));
    }
}
