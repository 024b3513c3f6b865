use serde::{Deserialize, Serialize};

use super::descent::{projected_descent, DescentOptions, SmoothFunction};
use super::problem::{Evaluation, InversionProblem};
use super::OptimizeError;
use crate::semantics::{MaterialField, Parameter, PropertyVerdict};

/// Name of the pseudo-verdict that reports field regularity.
pub const REGULARITY_VERDICT: &str = "field_regularity";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    /// Projected-gradient tolerance, in box-normalised coordinates.
    pub tol: f64,
    /// Descent iterations per penalty stage.
    pub max_iter: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_escalations: usize,
    /// Constraints are penalised as if tightened by this fraction of their
    /// bound, so the penalty minimiser lands strictly inside.
    pub backoff: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, initial_penalty: 10.0, penalty_growth: 10.0, max_escalations: 6, backoff: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyUsed {
    /// Solved from scratch.
    Initial,
    /// No deviation; the previous result stands.
    Unchanged,
    WarmStart,
    Full,
    /// Warm start was tried and rejected, then a full solve ran.
    WarmFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub step_norm: f64,
    pub merit: f64,
    pub penalty_weight: f64,
}

/// Best point found and the specifications it still violates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    pub element_values: Vec<f64>,
    pub violated: Vec<PropertyVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub parameter: Parameter,
    /// One value per free group.
    pub values: Vec<f64>,
    /// Decision value of every element, frozen ones included.
    pub element_values: Vec<f64>,
    pub field: MaterialField,
    pub objective: f64,
    /// Constraint verdicts under `field`, plus a regularity entry when a
    /// Lipschitz bound is active.
    pub verdicts: Vec<PropertyVerdict>,
    pub feasible: bool,
    pub certificate: Option<InfeasibilityCertificate>,
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub fem_solves: usize,
    pub strategy: StrategyUsed,
    pub objective_scale: f64,
    pub penalty_weight: f64,
}

impl OptimizationResult {
    /// Largest relative constraint violation (0 when feasible).
    pub fn max_violation(&self) -> f64 {
        self.verdicts.iter().map(|v| (-v.margin / norm_scale(v.bound)).max(0.0)).fold(0.0, f64::max)
    }

    /// One JSON object per line: `{iter, objective, max_violation, step_norm, ...}`.
    pub fn trace_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.trace {
            s.push_str(&serde_json::to_string(r).expect("trace record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

pub(crate) fn norm_scale(bound: f64) -> f64 {
    if bound == 0.0 {
        1.0
    } else {
        bound.abs()
    }
}

/// Objective plus penalties, as a function of every element's value.
pub(crate) struct Merit<'a> {
    pub problem: &'a InversionProblem,
    pub scale: f64,
    pub mu: f64,
    pub backoff: f64,
    pub fem_solves: usize,
    /// `[objective, max_violation]` of the last evaluation.
    pub last: [f64; 2],
}

pub(crate) struct MeritValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl<'a> Merit<'a> {
    pub fn new(problem: &'a InversionProblem, scale: f64, mu: f64, backoff: f64) -> Self {
        Self { problem, scale, mu, backoff, fem_solves: 0, last: [f64::NAN; 2] }
    }

    /// Scale for Lipschitz excesses: mean box midpoint (or mean base value
    /// when nothing is free).
    fn lipschitz_scale(&self) -> f64 {
        let p = self.problem;
        let s = if p.n_free() > 0 {
            p.boxes().iter().map(|b| b.midpoint().abs()).sum::<f64>() / p.n_free() as f64
        } else {
            let v = p.base_field().values(p.parameter());
            v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
        };
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn evaluate_elements(&mut self, values: &[f64]) -> Result<MeritValue, OptimizeError> {
        let ev: Evaluation = self.problem.evaluate_with_backoff(values, true, self.backoff)?;
        self.fem_solves += ev.fem_solves;
        let mut value = ev.objective / self.scale;
        let mut gradient: Vec<f64> = ev.objective_gradient.iter().map(|g| g / self.scale).collect();
        let mut max_violation = 0.0f64;
        for (verdict, (pen, pg)) in ev.verdicts.iter().zip(ev.penalties.iter().zip(&ev.penalty_gradients)) {
            max_violation = max_violation.max(-verdict.margin / norm_scale(verdict.bound));
            value += self.mu * pen;
            for (g, d) in gradient.iter_mut().zip(pg) {
                *g += self.mu * d;
            }
        }
        if let Some(r) = self.problem.lipschitz() {
            let ls = self.lipschitz_scale();
            for &(a, b, d) in self.problem.pairs() {
                let diff = values[a] - values[b];
                let hard = diff.abs() - r.gamma * d;
                max_violation = max_violation.max(hard / ls);
                let v = ((diff.abs() - r.gamma * (1.0 - self.backoff) * d) / ls).max(0.0);
                if v > 0.0 {
                    value += self.mu * v * v;
                    let dv = 2.0 * self.mu * v * diff.signum() / ls;
                    gradient[a] += dv;
                    gradient[b] -= dv;
                }
            }
        }
        self.last = [ev.objective, max_violation.max(0.0)];
        Ok(MeritValue { value, gradient })
    }
}

/// The merit over box-normalised group coordinates `t ∈ [0, 1]`; groups
/// whose box is a single point are not coordinates.
pub(crate) struct GroupMerit<'a> {
    pub merit: Merit<'a>,
    pub active: Vec<usize>,
    pub fixed: Vec<f64>,
}

impl<'a> GroupMerit<'a> {
    pub fn new(merit: Merit<'a>) -> Self {
        let boxes = merit.problem.boxes();
        let active = (0..boxes.len()).filter(|&g| boxes[g].width() > 0.0).collect();
        let fixed = boxes.iter().map(|b| b.min).collect();
        Self { merit, active, fixed }
    }

    pub fn to_t(&self, z: &[f64]) -> Vec<f64> {
        let boxes = self.merit.problem.boxes();
        self.active.iter().map(|&g| ((z[g] - boxes[g].min) / boxes[g].width()).clamp(0.0, 1.0)).collect()
    }

    pub fn to_z(&self, t: &[f64]) -> Vec<f64> {
        let boxes = self.merit.problem.boxes();
        let mut z = self.fixed.clone();
        for (k, &g) in self.active.iter().enumerate() {
            z[g] = boxes[g].clamp(boxes[g].min + t[k] * boxes[g].width());
        }
        z
    }
}

impl SmoothFunction for GroupMerit<'_> {
    fn dim(&self) -> usize {
        self.active.len()
    }

    fn evaluate(&mut self, t: &[f64]) -> Result<(f64, Vec<f64>), OptimizeError> {
        let z = self.to_z(t);
        let values = self.merit.problem.element_values(&z);
        let mv = self.merit.evaluate_elements(&values)?;
        let gz = self.merit.problem.group_gradient(&mv.gradient);
        let boxes = self.merit.problem.boxes();
        Ok((mv.value, self.active.iter().map(|&g| gz[g] * boxes[g].width()).collect()))
    }

    fn aux(&self) -> Vec<f64> {
        self.merit.last.to_vec()
    }
}

/// Penalty-free check of every constraint and the regularity bound.
pub(crate) fn verify(
    problem: &InversionProblem,
    element_values: &[f64],
) -> Result<(f64, Vec<PropertyVerdict>, bool), OptimizeError> {
    let ev = problem.evaluate(element_values, false)?;
    let mut verdicts = ev.verdicts;
    if problem.lipschitz().is_some() {
        let excess = problem.max_lipschitz_excess(element_values);
        let excess = if excess.is_finite() { excess } else { 0.0 };
        // relative slack for roundoff in |p_a − p_b|
        let tol = 1e-12 * element_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pass = excess <= tol;
        verdicts.push(PropertyVerdict {
            name: REGULARITY_VERDICT.into(),
            pass,
            measured: excess,
            bound: 0.0,
            margin: if pass { -excess.min(0.0) } else { -excess },
        });
    }
    let feasible = verdicts.iter().all(|v| v.pass);
    Ok((ev.objective, verdicts, feasible))
}

/// Assemble a result for group values `z` from a fresh verification.
pub(crate) fn finish(
    problem: &InversionProblem,
    z: Vec<f64>,
    verification: (f64, Vec<PropertyVerdict>, bool),
    parts: ResultParts,
) -> OptimizationResult {
    let element_values = problem.element_values(&z);
    let (objective, verdicts, feasible) = verification;
    let certificate = (!feasible).then(|| InfeasibilityCertificate {
        element_values: parts.best_infeasible.unwrap_or_else(|| element_values.clone()),
        violated: verdicts.iter().filter(|v| !v.pass).cloned().collect(),
    });
    OptimizationResult {
        parameter: problem.parameter(),
        field: problem.field_from_elements(&element_values),
        values: z,
        element_values,
        objective,
        verdicts,
        feasible,
        certificate,
        trace: parts.trace,
        iterations: parts.iterations,
        converged: parts.converged,
        fem_solves: parts.fem_solves,
        strategy: parts.strategy,
        objective_scale: parts.scale,
        penalty_weight: parts.mu,
    }
}

pub(crate) struct ResultParts {
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub fem_solves: usize,
    pub strategy: StrategyUsed,
    pub scale: f64,
    pub mu: f64,
    pub best_infeasible: Option<Vec<f64>>,
}

/// Solve from the box midpoints.
pub fn inversion_solve(problem: &InversionProblem, opts: &OptimizeOptions) -> Result<OptimizationResult, OptimizeError> {
    solve_from(problem, &problem.midpoints(), opts, None, None, StrategyUsed::Initial)
}

/// Penalty continuation from `z0`. `scale` and `mu0` default to the
/// objective magnitude at `z0` and `opts.initial_penalty`.
pub(crate) fn solve_from(
    problem: &InversionProblem,
    z0: &[f64],
    opts: &OptimizeOptions,
    scale: Option<f64>,
    mu0: Option<f64>,
    strategy: StrategyUsed,
) -> Result<OptimizationResult, OptimizeError> {
    if z0.len() != problem.n_free() {
        return Err(OptimizeError::Dimension { expected: problem.n_free(), found: z0.len() });
    }
    let z0: Vec<f64> = z0.iter().zip(problem.boxes()).map(|(v, b)| b.clamp(*v)).collect();
    let mut fem_solves = 0;
    let scale = match scale {
        Some(s) => s,
        None => {
            let ev = problem.evaluate(&problem.element_values(&z0), false)?;
            fem_solves += ev.fem_solves;
            if ev.objective.abs() > 0.0 && ev.objective.is_finite() {
                ev.objective.abs()
            } else {
                1.0
            }
        }
    };
    let mut mu = mu0.unwrap_or(opts.initial_penalty);
    let has_penalties = !problem.constraints().is_empty() || problem.lipschitz().is_some();

    let mut gm = GroupMerit::new(Merit::new(problem, scale, mu, opts.backoff));
    let mut t = gm.to_t(&z0);
    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut iterations = 0;
    let mut converged;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let dopts = DescentOptions { tol: opts.tol, max_iter: opts.max_iter, ..Default::default() };
    let mut stage = 0;
    let verification = loop {
        gm.merit.mu = mu;
        let out = projected_descent(&mut gm, &t, &vec![0.0; t.len()], &vec![1.0; t.len()], &dopts)?;
        for r in &out.trace {
            if r.iter == 0 && !trace.is_empty() {
                continue;
            }
            trace.push(TraceRecord {
                iter: iterations + r.iter,
                objective: r.aux[0],
                max_violation: r.aux[1],
                step_norm: r.step_norm,
                merit: r.value,
                penalty_weight: mu,
            });
        }
        iterations += out.iterations;
        converged = out.converged;
        t = out.x;
        let z = gm.to_z(&t);
        let values = problem.element_values(&z);
        let check = verify(problem, &values)?;
        fem_solves += 1;
        log::debug!(
            "penalty stage {stage}: mu {mu:e}, {} iterations, objective {:e}, feasible {}",
            out.iterations,
            check.0,
            check.2
        );
        // feasible is not enough while the weight is still low: keep escalating
        // until at least half of the back-off is realised
        let settled = check.2
            && check
                .1
                .iter()
                .filter(|v| v.name != REGULARITY_VERDICT)
                .all(|v| v.margin / norm_scale(v.bound) >= 0.5 * opts.backoff);
        if settled || !has_penalties || stage >= opts.max_escalations {
            if !check.2 {
                let worst = check.1.iter().map(|v| (-v.margin / norm_scale(v.bound)).max(0.0)).fold(0.0, f64::max);
                if best.as_ref().is_none_or(|(w, _)| worst < *w) {
                    best = Some((worst, values));
                }
            }
            break check;
        }
        let worst = check.1.iter().map(|v| (-v.margin / norm_scale(v.bound)).max(0.0)).fold(0.0, f64::max);
        if best.as_ref().is_none_or(|(w, _)| worst < *w) {
            best = Some((worst, values));
        }
        mu *= opts.penalty_growth;
        stage += 1;
    };
    fem_solves += gm.merit.fem_solves;
    let z = gm.to_z(&t);
    Ok(finish(
        problem,
        z,
        verification,
        ResultParts {
            trace,
            iterations,
            converged,
            fem_solves,
            strategy,
            scale,
            mu,
            best_infeasible: best.map(|b| b.1),
        },
    ))
}
