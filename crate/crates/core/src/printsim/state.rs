use serde::{Deserialize, Serialize};

use super::models::{calibrate_actuator, ActuatorModel, Coverage, EstimatorState, SensorModel, TestPrint};
use super::PrintError;
use crate::mesh::LayerPartition;
use crate::semantics::{MaterialField, Parameter, Provenance};

/// One sensor reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Measurement round (the frontier right after the layer was printed).
    pub round: usize,
    pub element: usize,
    pub value: f64,
}

/// Print progress. The achieved values are the simulator's ground truth
/// and are never handed to the controller.
#[derive(Debug, Clone)]
pub struct PrintState {
    partition: LayerPartition,
    element_layer: Vec<usize>,
    parameter: Parameter,
    base: MaterialField,
    seed: u64,
    frontier: usize,
    planned: Vec<f64>,
    commanded: Vec<f64>,
    achieved: Vec<Option<f64>>,
    estimator: EstimatorState,
    measurements: Vec<Measurement>,
    actuator_estimate: ActuatorModel,
}

/// What the controller may look at.
#[derive(Debug, Clone, Copy)]
pub struct ControllerView<'a> {
    pub partition: &'a LayerPartition,
    pub frontier: usize,
    pub planned: &'a [f64],
    pub commanded: &'a [f64],
    pub estimator: &'a EstimatorState,
    pub measurements: &'a [Measurement],
    pub actuator_estimate: ActuatorModel,
}

impl ControllerView<'_> {
    /// Posterior means of the printed elements, in ascending element id.
    pub fn printed_estimates(&self) -> (Vec<usize>, Vec<f64>) {
        let printed = self.partition.printed(self.frontier);
        let values = printed.iter().map(|&e| self.estimator.estimate(e)).collect();
        (printed, values)
    }
}

impl PrintState {
    /// Nothing printed; commands follow `planned` (the decision-parameter
    /// value of every element) under an identity actuator estimate.
    pub fn new(
        partition: LayerPartition,
        parameter: Parameter,
        base: MaterialField,
        planned: Vec<f64>,
        prior_sd: f64,
        seed: u64,
    ) -> Result<Self, PrintError> {
        let element_layer = partition.element_layers();
        let n = element_layer.len();
        if base.len() != n || planned.len() != n {
            return Err(PrintError::InvalidModel(format!(
                "partition covers {n} elements, field has {}, plan has {}",
                base.len(),
                planned.len()
            )));
        }
        let estimator = EstimatorState::new(&planned, prior_sd)?;
        let mut s = Self {
            partition,
            element_layer,
            parameter,
            base,
            seed,
            frontier: 0,
            commanded: planned.clone(),
            planned,
            achieved: vec![None; n],
            estimator,
            measurements: Vec::new(),
            actuator_estimate: ActuatorModel::identity(),
        };
        s.recompute_commands();
        Ok(s)
    }

    pub fn partition(&self) -> &LayerPartition {
        &self.partition
    }

    pub fn parameter(&self) -> Parameter {
        self.parameter
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frontier(&self) -> usize {
        self.frontier
    }

    pub fn n_layers(&self) -> usize {
        self.partition.n_layers()
    }

    pub fn is_complete(&self) -> bool {
        self.frontier >= self.n_layers()
    }

    pub fn planned(&self) -> &[f64] {
        &self.planned
    }

    pub fn commanded(&self) -> &[f64] {
        &self.commanded
    }

    pub fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn actuator_estimate(&self) -> ActuatorModel {
        self.actuator_estimate
    }

    pub fn controller_view(&self) -> ControllerView<'_> {
        ControllerView {
            partition: &self.partition,
            frontier: self.frontier,
            planned: &self.planned,
            commanded: &self.commanded,
            estimator: &self.estimator,
            measurements: &self.measurements,
            actuator_estimate: self.actuator_estimate,
        }
    }

    /// Replace the plan of the unprinted elements; printed ones keep theirs.
    pub fn set_plan(&mut self, element_values: &[f64]) -> Result<(), PrintError> {
        if element_values.len() != self.planned.len() {
            return Err(PrintError::InvalidModel("plan length does not match the mesh".into()));
        }
        for e in self.partition.remaining(self.frontier) {
            self.planned[e] = element_values[e];
            self.estimator.reset(e, element_values[e])?;
        }
        self.recompute_commands();
        Ok(())
    }

    /// Refit the actuator estimate from the measurement log. Keeps the
    /// current estimate while fewer than two readings exist.
    pub fn learn_actuator(&mut self) -> Result<(), PrintError> {
        let prints: Vec<TestPrint> = self
            .measurements
            .iter()
            .map(|m| TestPrint {
                layer: self.element_layer[m.element],
                commanded: self.commanded[m.element],
                measured: m.value,
            })
            .collect();
        match calibrate_actuator(&prints) {
            Ok(a) => {
                self.actuator_estimate = a;
                self.recompute_commands();
                Ok(())
            }
            Err(PrintError::InsufficientData { .. }) => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// Commands for unprinted elements invert the current actuator estimate.
    fn recompute_commands(&mut self) {
        for e in self.partition.remaining(self.frontier) {
            let factor = self.actuator_estimate.mean_factor(self.element_layer[e]);
            self.commanded[e] = if factor > 0.0 { self.planned[e] / factor } else { self.planned[e] };
        }
    }

    fn field_with(&self, value: impl Fn(usize) -> (f64, Provenance)) -> MaterialField {
        let mut f = self.base.clone();
        for e in 0..f.len() {
            let (v, p) = value(e);
            f.set(self.parameter, e, v);
            f.set_provenance(e, p);
        }
        f
    }

    /// Commanded values (actuator inputs) of every element.
    pub fn commanded_field(&self) -> MaterialField {
        self.field_with(|e| (self.commanded[e], Provenance::Commanded))
    }

    /// Posterior means below the frontier, the plan above it.
    pub fn estimated_field(&self) -> MaterialField {
        self.field_with(|e| {
            if self.achieved[e].is_some() {
                (self.estimator.estimate(e), Provenance::Estimated)
            } else {
                (self.planned[e], Provenance::Commanded)
            }
        })
    }

    /// Ground truth; `None` until every layer is printed.
    pub fn achieved_field(&self) -> Option<MaterialField> {
        if self.achieved.iter().any(|a| a.is_none()) {
            return None;
        }
        Some(self.field_with(|e| (self.achieved[e].expect("checked"), Provenance::Achieved)))
    }

    #[cfg(test)]
    pub(crate) fn achieved_mut(&mut self) -> &mut [Option<f64>] {
        &mut self.achieved
    }
}

/// Print the next layer: draw achieved values for its elements from the
/// actuator law and advance the frontier.
pub fn print_layer(state: &mut PrintState, actuator: &ActuatorModel) -> Result<(), PrintError> {
    if state.is_complete() {
        return Err(PrintError::Complete { layers: state.n_layers() });
    }
    actuator.validate()?;
    let k = state.frontier;
    let mut layer = state.partition.layers[k].clone();
    layer.sort_unstable();
    for e in layer {
        state.achieved[e] = Some(actuator.achieve(state.commanded[e], k, e, state.seed)?);
    }
    state.frontier += 1;
    Ok(())
}

/// Measure the elements `sensor` covers and update their posteriors.
pub fn observe_and_update(state: &mut PrintState, sensor: &SensorModel) -> Result<(), PrintError> {
    if state.frontier == 0 {
        return Err(PrintError::NothingPrinted);
    }
    sensor.validate()?;
    let round = state.frontier;
    let observed = match sensor.coverage {
        Coverage::NewestLayer => {
            let mut v = state.partition.layers[round - 1].clone();
            v.sort_unstable();
            v
        }
        Coverage::AllPrinted => state.partition.printed(round),
    };
    for e in observed {
        let truth = state.achieved[e].expect("observed elements are printed");
        let value = sensor.measure(truth, round, e, state.seed);
        state.estimator.update(e, value, sensor.noise_sd);
        state.measurements.push(Measurement { round, element: e, value });
    }
    Ok(())
}
