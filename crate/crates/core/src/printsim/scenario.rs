use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::control::{run_print, Policy, PrintReport, RunConfig};
use super::models::{ActuatorModel, SensorModel};
use super::PrintError;
use crate::mesh::{layer_partition, validate_mesh, LayerPartition, VolumetricMesh};
use crate::optimize::{default_parameter, inversion_solve, InversionProblem, Objective, OptimizationResult};
use crate::semantics::{bind_to_mesh, parse_semantic_layer, Parameter};

fn default_prior_sd() -> f64 {
    0.2
}

fn default_objective() -> Objective {
    Objective::MaterialEffort
}

/// Closed-loop scenario file. `mesh` and `annotation` are paths, relative
/// ones being taken from the scenario file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mesh: PathBuf,
    pub annotation: PathBuf,
    pub actuator: ActuatorModel,
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default)]
    pub policy: Policy,
    pub seed: u64,
    pub layer_height: f64,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    /// Decision parameter; defaults to the objective's natural one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<Parameter>,
    #[serde(default = "default_prior_sd")]
    pub prior_sd: f64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig { actuator: self.actuator, sensor: self.sensor, prior_sd: self.prior_sd, policy: self.policy, seed }
    }

    /// Read the scenario and everything it references.
    pub fn load(path: &Path) -> Result<LoadedScenario, PrintError> {
        let err = |p: &Path, reason: String| PrintError::Scenario { path: p.display().to_string(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| err(path, e.to_string()))?;
        let scenario = Scenario::from_json(&text).map_err(|e| err(path, e.to_string()))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let mesh_path = dir.join(&scenario.mesh);
        let mesh_text = std::fs::read_to_string(&mesh_path).map_err(|e| err(&mesh_path, e.to_string()))?;
        let mesh = VolumetricMesh::from_json(&mesh_text)?;
        let report = validate_mesh(&mesh);
        if !report.is_valid() {
            return Err(err(&mesh_path, format!("invalid mesh: {:?}", report.violations.first())));
        }
        let ann_path = dir.join(&scenario.annotation);
        let ann_text = std::fs::read(&ann_path).map_err(|e| err(&ann_path, e.to_string()))?;
        let layer = parse_semantic_layer(&ann_text)?;
        LoadedScenario::new(scenario, &mesh, &layer)
    }
}

/// A scenario with its mesh bound and its inversion problem built.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub partition: LayerPartition,
    pub template: InversionProblem,
}

impl LoadedScenario {
    pub fn new(
        scenario: Scenario,
        mesh: &VolumetricMesh,
        layer: &crate::semantics::SemanticLayer,
    ) -> Result<Self, PrintError> {
        let spec = Arc::new(bind_to_mesh(layer, mesh)?);
        let partition = layer_partition(mesh, scenario.layer_height)?;
        let parameter = scenario.parameter.unwrap_or_else(|| default_parameter(scenario.objective));
        let template = InversionProblem::new(spec, scenario.objective)?
            .with_parameter(parameter)?
            .with_grouping(scenario.policy.grouping, &partition)?;
        Ok(Self { scenario, partition, template })
    }

    /// Initial plan from the box midpoints.
    pub fn plan(&self) -> Result<OptimizationResult, PrintError> {
        Ok(inversion_solve(&self.template, &self.scenario.policy.optimizer)?)
    }

    pub fn run(&self, plan: &OptimizationResult, seed: u64) -> Result<PrintReport, PrintError> {
        run_print(&self.template, &self.partition, plan, &self.scenario.run_config(seed))
    }
}
