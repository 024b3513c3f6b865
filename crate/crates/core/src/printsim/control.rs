use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::models::{ActuatorModel, SensorModel};
use super::state::{observe_and_update, print_layer, ControllerView, PrintState};
use super::PrintError;
use crate::mesh::LayerPartition;
use crate::optimize::{
    build_element_hessian, deviation_is_negligible, reoptimize_after_drift, ElementHessian, Grouping,
    InfeasibilityCertificate, InversionProblem, OptimizationResult, OptimizeOptions, Strategy, StrategyUsed,
};
use crate::semantics::{evaluate_properties, required_physics, Category, MaterialField, PropertyVerdict};

/// How the controller behaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Policy {
    pub strategy: Strategy,
    pub control_enabled: bool,
    /// Refit the actuator gain and drift from the measurements after every
    /// layer and invert the fit when issuing commands.
    pub learn_actuator: bool,
    pub grouping: Grouping,
    pub optimizer: OptimizeOptions,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            strategy: Strategy::WarmStart,
            control_enabled: true,
            learn_actuator: true,
            grouping: Grouping::Layer,
            optimizer: OptimizeOptions { backoff: 0.02, ..OptimizeOptions::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub actuator: ActuatorModel,
    pub sensor: SensorModel,
    /// Prior standard deviation of each element's log value.
    pub prior_sd: f64,
    pub policy: Policy,
    pub seed: u64,
}

/// Result of one control step.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlDecision {
    /// New plan for the unprinted elements.
    Replanned(Box<OptimizationResult>),
    /// No admissible completion; the result carries the certificate.
    Abort(Box<OptimizationResult>),
}

impl ControlDecision {
    pub fn result(&self) -> &OptimizationResult {
        match self {
            ControlDecision::Replanned(r) | ControlDecision::Abort(r) => r,
        }
    }

    pub fn certificate(&self) -> Option<&InfeasibilityCertificate> {
        match self {
            ControlDecision::Abort(r) => r.certificate.as_ref(),
            ControlDecision::Replanned(_) => None,
        }
    }
}

/// Freeze the printed elements at their posterior means and re-plan the
/// rest from `previous`.
///
/// For the warm strategy the Hessian is built on first use (or when the free
/// groups no longer match it) and kept in `hessian`; its FEM solves are
/// charged to the step that built it.
pub fn control_step(
    view: &ControllerView<'_>,
    template: &InversionProblem,
    previous: &OptimizationResult,
    strategy: Strategy,
    hessian: &mut Option<ElementHessian>,
    opts: &OptimizeOptions,
) -> Result<ControlDecision, PrintError> {
    let (printed, values) = view.printed_estimates();
    let problem = template.clone().freeze(&printed, &values)?;
    let mut extra = 0;
    if strategy == Strategy::WarmStart
        && !hessian.as_ref().is_some_and(|h| h.resolves(&problem))
        && !deviation_is_negligible(&problem, previous)
    {
        let h = build_element_hessian(&problem, previous, opts)?;
        extra = h.fem_solves;
        *hessian = Some(h);
    }
    let mut result = reoptimize_after_drift(&problem, previous, strategy, hessian.as_ref(), opts)?;
    result.fem_solves += extra;
    Ok(if result.feasible {
        ControlDecision::Replanned(Box::new(result))
    } else {
        ControlDecision::Abort(Box::new(result))
    })
}

/// One row of the control history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    /// Index of the layer just printed.
    pub layer: usize,
    /// `None` when no control step ran after this layer.
    pub strategy: Option<StrategyUsed>,
    pub feasible: Option<bool>,
    pub objective: Option<f64>,
    pub max_violation: Option<f64>,
    pub fem_solves: usize,
    /// Mean planned value of the next layer after this step.
    pub planned_mean_next: Option<f64>,
    /// Mean commanded value of the next layer after this step.
    pub commanded_mean_next: Option<f64>,
    pub gain_estimate: f64,
    pub drift_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    /// Every layer printed and every property holds under the achieved field.
    Success,
    /// Every layer printed but some property fails under the achieved field.
    Rejected,
    /// The controller stopped after `layer`.
    Aborted { layer: usize, certificate: InfeasibilityCertificate },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintReport {
    pub seed: u64,
    pub outcome: Outcome,
    pub layers_printed: usize,
    /// Final check under the achieved field (empty when aborted).
    pub verdicts: Vec<PropertyVerdict>,
    pub history: Vec<LayerRecord>,
    pub planned: Vec<f64>,
    pub commanded: MaterialField,
    /// `None` when the print was aborted.
    pub achieved: Option<MaterialField>,
    pub estimated: MaterialField,
    pub actuator_estimate: ActuatorModel,
    pub fem_solves: usize,
}

impl PrintReport {
    pub fn succeeded(&self) -> bool {
        self.outcome == Outcome::Success
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn history_csv(&self) -> String {
        fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut s = String::from(
            "layer,strategy,feasible,objective,max_violation,fem_solves,planned_mean_next,commanded_mean_next,gain_estimate,drift_estimate\n",
        );
        for r in &self.history {
            let strategy = r.strategy.map(|st| {
                serde_json::to_value(st).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
            });
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.layer,
                strategy.unwrap_or_default(),
                opt(r.feasible),
                opt(r.objective),
                opt(r.max_violation),
                r.fem_solves,
                opt(r.planned_mean_next),
                opt(r.commanded_mean_next),
                r.gain_estimate,
                r.drift_estimate
            )
            .expect("writing to a String");
        }
        s
    }
}

fn layer_mean(values: &[f64], layer: &[usize]) -> f64 {
    layer.iter().map(|&e| values[e]).sum::<f64>() / layer.len() as f64
}

/// Print every layer, observing after each and (when enabled) re-planning
/// the rest, then check the specification under the achieved field.
///
/// `template` is the inversion problem with nothing frozen; the plan's
/// element values seed the commands.
pub fn run_print(
    template: &InversionProblem,
    partition: &LayerPartition,
    initial_plan: &OptimizationResult,
    config: &RunConfig,
) -> Result<PrintReport, PrintError> {
    if !initial_plan.feasible {
        return Err(PrintError::InfeasiblePlan);
    }
    config.actuator.validate()?;
    config.sensor.validate()?;
    let policy = &config.policy;
    let mut state = PrintState::new(
        partition.clone(),
        template.parameter(),
        initial_plan.field.clone(),
        initial_plan.element_values.clone(),
        config.prior_sd,
        config.seed,
    )?;
    let mut plan = initial_plan.clone();
    let mut hessian: Option<ElementHessian> = None;
    let mut history = Vec::with_capacity(state.n_layers());
    let mut fem_solves = 0;
    let mut aborted: Option<(usize, InfeasibilityCertificate)> = None;

    while !state.is_complete() {
        let layer = state.frontier();
        print_layer(&mut state, &config.actuator)?;
        observe_and_update(&mut state, &config.sensor)?;
        let mut record = LayerRecord {
            layer,
            strategy: None,
            feasible: None,
            objective: None,
            max_violation: None,
            fem_solves: 0,
            planned_mean_next: None,
            commanded_mean_next: None,
            gain_estimate: state.actuator_estimate().gain,
            drift_estimate: state.actuator_estimate().drift_rate,
        };
        if policy.control_enabled && !state.is_complete() {
            if policy.learn_actuator {
                state.learn_actuator()?;
                record.gain_estimate = state.actuator_estimate().gain;
                record.drift_estimate = state.actuator_estimate().drift_rate;
            }
            let decision =
                control_step(&state.controller_view(), template, &plan, policy.strategy, &mut hessian, &policy.optimizer)?;
            let r = decision.result();
            record.strategy = Some(r.strategy);
            record.feasible = Some(r.feasible);
            record.objective = Some(r.objective);
            record.max_violation = Some(r.max_violation());
            record.fem_solves = r.fem_solves;
            fem_solves += r.fem_solves;
            match decision {
                ControlDecision::Replanned(r) => {
                    state.set_plan(&r.element_values)?;
                    plan = *r;
                }
                ControlDecision::Abort(r) => {
                    let certificate = r.certificate.clone().expect("infeasible results carry a certificate");
                    history.push(record);
                    aborted = Some((layer, certificate));
                    break;
                }
            }
        }
        if !state.is_complete() {
            let next = &state.partition().layers[state.frontier()];
            record.planned_mean_next = Some(layer_mean(state.planned(), next));
            record.commanded_mean_next = Some(layer_mean(state.commanded(), next));
        }
        history.push(record);
    }

    let achieved = state.achieved_field();
    let (outcome, verdicts) = match (aborted, &achieved) {
        (Some((layer, certificate)), _) => (Outcome::Aborted { layer, certificate }, Vec::new()),
        (None, Some(field)) => {
            let spec = template.spec();
            let props = spec.properties();
            let verdicts = evaluate_properties(spec, props, field, template.solver())?;
            let mut physics: Vec<_> = props
                .iter()
                .filter(|p| p.category == Category::MaterialDependent)
                .filter_map(|p| required_physics(&p.predicate))
                .collect();
            physics.sort();
            physics.dedup();
            fem_solves += physics.len();
            let outcome = if verdicts.iter().all(|v| v.pass) { Outcome::Success } else { Outcome::Rejected };
            (outcome, verdicts)
        }
        (None, None) => unreachable!("a completed print has every achieved value"),
    };
    Ok(PrintReport {
        seed: config.seed,
        outcome,
        layers_printed: state.frontier(),
        verdicts,
        history,
        planned: state.planned().to_vec(),
        commanded: state.commanded_field(),
        achieved,
        estimated: state.estimated_field(),
        actuator_estimate: state.actuator_estimate(),
        fem_solves,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mesh::{generate_box_mesh, layer_partition};
    use crate::optimize::{inversion_solve, Objective};
    use crate::printsim::Coverage;
    use crate::semantics::{bind_to_mesh, presets, Interval, Parameter};

    /// Two-layer unit-section bar under 1000 N with a tip bound of 0.02.
    fn series_bar() -> (InversionProblem, LayerPartition) {
        let mesh = generate_box_mesh(1, 1, 2, [1.0, 1.0, 2.0]).unwrap();
        let mut layer = presets::axial_column(&mesh, 1000.0, Some(0.02));
        layer.element_default.poisson = Some(Interval::point(0.0));
        layer.element_default.young = Some(Interval::new(50_000.0, 150_000.0));
        let spec = Arc::new(bind_to_mesh(&layer, &mesh).unwrap());
        let part = layer_partition(&mesh, 1.0).unwrap();
        let p = InversionProblem::new(spec, Objective::MaterialEffort)
            .unwrap()
            .with_grouping(Grouping::Layer, &part)
            .unwrap();
        (p, part)
    }

    fn after_first_layer(gain: f64) -> (InversionProblem, OptimizationResult, PrintState) {
        let (p, part) = series_bar();
        let plan = inversion_solve(&p, &OptimizeOptions::default()).unwrap();
        assert!(plan.feasible);
        let mut s =
            PrintState::new(part, Parameter::Young, plan.field.clone(), plan.element_values.clone(), 0.2, 1).unwrap();
        print_layer(&mut s, &ActuatorModel { gain, drift_rate: 0.0, noise_sd: 0.0 }).unwrap();
        observe_and_update(&mut s, &SensorModel::default()).unwrap();
        (p, plan, s)
    }

    #[test]
    fn degraded_first_layer_is_compensated() {
        let (p, plan, s) = after_first_layer(0.8);
        let e1 = 0.8 * plan.element_values[0];
        let d = control_step(&s.controller_view(), &p, &plan, Strategy::Full, &mut None, &OptimizeOptions::default())
            .unwrap();
        let ControlDecision::Replanned(r) = d else { panic!("expected a new plan") };
        // tip = 1000/E1 + 1000/E2
        let e2 = 1000.0 / (0.02 - 1000.0 / e1);
        let top = s.partition().layers[1][0];
        assert!((r.element_values[top] - e2).abs() <= 0.01 * e2, "{} vs {e2}", r.element_values[top]);
    }

    #[test]
    fn hopeless_degradation_aborts_at_the_first_layer() {
        let (p, plan, s) = after_first_layer(0.45);
        let d = control_step(&s.controller_view(), &p, &plan, Strategy::WarmStart, &mut None, &OptimizeOptions::default())
            .unwrap();
        let cert = d.certificate().expect("abort");
        assert!(!cert.violated.is_empty());
    }

    #[test]
    fn controller_never_reads_ground_truth() {
        let (p, plan, mut s) = after_first_layer(0.8);
        let step = |s: &PrintState| {
            control_step(&s.controller_view(), &p, &plan, Strategy::Full, &mut None, &OptimizeOptions::default())
                .unwrap()
                .result()
                .element_values
                .clone()
        };
        let before = step(&s);
        for a in s.achieved_mut().iter_mut().flatten() {
            *a = 1.0;
        }
        assert_eq!(before, step(&s));
    }

    #[test]
    fn noiseless_identity_run_needs_no_replanning() {
        let (p, part) = series_bar();
        let plan = inversion_solve(&p, &OptimizeOptions::default()).unwrap();
        let config = RunConfig {
            actuator: ActuatorModel::identity(),
            sensor: SensorModel::default(),
            prior_sd: 0.2,
            policy: Policy::default(),
            seed: 42,
        };
        let report = run_print(&p, &part, &plan, &config).unwrap();
        assert!(report.succeeded());
        let h = &report.history[0];
        assert_eq!((h.strategy, h.fem_solves), (Some(StrategyUsed::Unchanged), 0));
        let achieved = report.achieved.as_ref().unwrap().values(Parameter::Young);
        assert_eq!(achieved, report.commanded.values(Parameter::Young));
    }

    #[test]
    fn open_loop_identity_keeps_the_plan_exactly() {
        let (p, part) = series_bar();
        let plan = inversion_solve(&p, &OptimizeOptions::default()).unwrap();
        let policy = Policy { control_enabled: false, ..Policy::default() };
        let sensor = SensorModel { noise_sd: 0.05, coverage: Coverage::AllPrinted };
        let config = RunConfig { actuator: ActuatorModel::identity(), sensor, prior_sd: 0.2, policy, seed: 7 };
        let report = run_print(&p, &part, &plan, &config).unwrap();
        assert_eq!(report.commanded.values(Parameter::Young), plan.element_values);
        assert!(report.history.iter().all(|h| h.strategy.is_none()));
        assert_eq!(report.history_csv().lines().count(), 1 + part.n_layers());
    }
}
