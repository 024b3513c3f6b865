//! The `amsem` command line.
//!
//! Exit status: 0 when every checked property holds (or the command has
//! nothing to check), 1 when a property fails or a simulated print is
//! rejected or aborted, 2 for bad arguments or unreadable inputs, 3 for
//! numerical failures. Every failure prints one line starting with
//! `error[E-...]`.

mod plot;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::Error;
use crate::mesh::{generate_box_mesh, generate_shaft_mesh, layer_partition, validate_mesh, MeshError, VolumetricMesh};
use crate::optimize::{
    default_parameter, inversion_solve, Grouping, InversionProblem, Objective, OptimizationResult, OptimizeOptions,
    TraceRecord,
};
use crate::printsim::{PrintError, PrintReport, Scenario};
use crate::semantics::{
    bind_to_mesh, evaluate_properties, parse_semantic_layer, presets, BoundSpecification, Interval, MaterialField,
    Parameter, PropertyVerdict, SemanticLayer,
};
use crate::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    SpecFail = 1,
    Usage = 2,
    Internal = 3,
}

#[derive(Debug, Parser)]
#[command(name = "amsem", version, about = "Semantic annotations for additive-manufacturing meshes")]
pub struct Cli {
    /// Optimizer stopping tolerance (projected gradient, normalised units).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol: Option<f64>,
    /// Optimizer iterations per penalty stage.
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// error | warn | info | debug | trace
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    /// TOML file with any of `tol`, `max_iter`, `log_level`; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a box or shaft mesh.
    GenMesh(GenMeshArgs),
    /// Check an annotation's properties under a material field.
    Verify(VerifyArgs),
    /// Solve the inversion problem for the whole part.
    Optimize(OptimizeArgs),
    /// Run a closed-loop print scenario.
    Simulate(SimulateArgs),
    /// Summarise a print report or optimization result.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenMeshArgs {
    #[command(subcommand)]
    pub shape: Shape,
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    /// Also write an axially loaded column annotation.
    #[arg(long, global = true)]
    pub annotation_out: Option<PathBuf>,
    /// Total compressive load on the top face, N.
    #[arg(long, global = true, default_value_t = 100.0, allow_negative_numbers = true)]
    pub load: f64,
    /// Bound on the top-face displacement magnitude, mm.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub max_displacement: Option<f64>,
    /// Young's modulus range `MIN,MAX` in MPa.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub young: Option<Vec<f64>>,
    /// Poisson's ratio range `MIN,MAX`.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub poisson: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum Shape {
    Box {
        #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
        nx: i64,
        #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
        ny: i64,
        #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
        nz: i64,
        /// `X,Y,Z` in mm.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0, 1.0], allow_negative_numbers = true)]
        dims: Vec<f64>,
    },
    Shaft {
        #[arg(long, allow_negative_numbers = true)]
        radius: f64,
        #[arg(long, allow_negative_numbers = true)]
        height: f64,
        #[arg(long, default_value_t = 16, allow_negative_numbers = true)]
        n_radial: i64,
        #[arg(long, default_value_t = 10, allow_negative_numbers = true)]
        n_axial: i64,
    },
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub annotation: PathBuf,
    /// Material field JSON.
    #[arg(long, conflicts_with = "nominal", required_unless_present = "nominal")]
    pub field: Option<PathBuf>,
    /// Use the midpoints of the annotated ranges.
    #[arg(long)]
    pub nominal: bool,
    /// Also write the verdicts as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Compliance,
    AverageTemperature,
    Mass,
    MaterialEffort,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Compliance => Objective::Compliance,
            ObjectiveArg::AverageTemperature => Objective::AverageTemperature,
            ObjectiveArg::Mass => Objective::Mass,
            ObjectiveArg::MaterialEffort => Objective::MaterialEffort,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ParameterArg {
    Young,
    Conductivity,
    Density,
}

impl From<ParameterArg> for Parameter {
    fn from(p: ParameterArg) -> Self {
        match p {
            ParameterArg::Young => Parameter::Young,
            ParameterArg::Conductivity => Parameter::Conductivity,
            ParameterArg::Density => Parameter::Density,
        }
    }
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub annotation: PathBuf,
    #[arg(long, value_enum, default_value = "compliance")]
    pub objective: ObjectiveArg,
    #[arg(long, value_enum)]
    pub parameter: Option<ParameterArg>,
    /// Share one value per build layer of this height (mm).
    #[arg(long)]
    pub layer_height: Option<f64>,
    /// Constraint back-off as a fraction of each bound.
    #[arg(long)]
    pub backoff: Option<f64>,
    /// Result JSON.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Convergence trace, one JSON object per line.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Run seeds `A..B` (end exclusive) instead of the scenario's seed.
    #[arg(long)]
    pub seeds: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Print report JSON, optimization result JSON or trace JSONL.
    pub input: PathBuf,
    /// Write a convergence plot.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    tol: Option<f64>,
    max_iter: Option<usize>,
    log_level: Option<String>,
}

/// Global settings after merging the config file and the flags.
#[derive(Debug, Clone)]
struct Settings {
    optimizer: OptimizeOptions,
    tol_set: bool,
    max_iter_set: bool,
}

impl Settings {
    fn apply(&self, mut o: OptimizeOptions) -> OptimizeOptions {
        if self.tol_set {
            o.tol = self.optimizer.tol;
        }
        if self.max_iter_set {
            o.max_iter = self.optimizer.max_iter;
        }
        o
    }
}

/// Failure of a command, classified for the exit status.
#[derive(Debug)]
pub struct CliError {
    pub status: ExitStatus,
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { status: ExitStatus::Usage, code: "E-USAGE", message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let status = if e.is_numerical() { ExitStatus::Internal } else { ExitStatus::Usage };
        let message = match &e {
            Error::Mesh(MeshError::InvalidArgument { name, reason }) => {
                format!("--{}: {reason}", name.replace('_', "-"))
            }
            other => other.to_string(),
        };
        Self { status, code: e.code(), message }
    }
}

macro_rules! impl_from_via_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}
impl_from_via_error!(MeshError, crate::semantics::SemanticError, crate::fem::FemError, crate::optimize::OptimizeError, PrintError, serde_json::Error);

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source }.into())
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source }.into())
}

/// Parse `args` (program name first), run, print, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitStatus::Success as i32;
            }
            let text = e.to_string();
            let mut lines = text.lines();
            let first = lines.next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[E-USAGE]: {first}");
            for line in lines {
                eprintln!("{line}");
            }
            return ExitStatus::Usage as i32;
        }
    };
    match run(cli) {
        Ok(status) => status as i32,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code, e.message);
            e.status as i32
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitStatus, CliError> {
    let config: ConfigFile = match &cli.config {
        Some(p) => toml::from_str(&read(p)?).map_err(|e| CliError::usage(format!("--config {}: {e}", p.display())))?,
        None => ConfigFile::default(),
    };
    let level = cli.log_level.clone().or(config.log_level).unwrap_or_else(|| "warn".into());
    let filter: log::LevelFilter =
        level.parse().map_err(|_| CliError::usage(format!("--log-level: unknown level `{level}`")))?;
    // a second initialisation (tests calling in-process) is harmless
    env_logger::Builder::new().filter_level(filter).format_timestamp(None).try_init().ok();

    let tol = cli.tol.or(config.tol);
    let max_iter = cli.max_iter.or(config.max_iter);
    if let Some(t) = tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::usage(format!("--tol: must be positive, got {t}")));
        }
    }
    if max_iter == Some(0) {
        return Err(CliError::usage("--max-iter: must be at least 1"));
    }
    let defaults = OptimizeOptions::default();
    let settings = Settings {
        optimizer: OptimizeOptions {
            tol: tol.unwrap_or(defaults.tol),
            max_iter: max_iter.unwrap_or(defaults.max_iter),
            ..defaults
        },
        tol_set: tol.is_some(),
        max_iter_set: max_iter.is_some(),
    };

    match cli.command {
        Command::GenMesh(a) => gen_mesh(a),
        Command::Verify(a) => verify(a),
        Command::Optimize(a) => optimize(a, &settings),
        Command::Simulate(a) => simulate(a, &settings),
        Command::Report(a) => report(a),
    }
}

fn count(name: &'static str, v: i64) -> Result<usize, CliError> {
    usize::try_from(v).map_err(|_| CliError::usage(format!("--{}: must be non-negative, got {v}", name.replace('_', "-"))))
}

fn range(name: &str, v: &[f64]) -> Result<Interval, CliError> {
    if v.len() != 2 || !(v[0] <= v[1]) {
        return Err(CliError::usage(format!("--{name}: expected MIN,MAX with MIN <= MAX")));
    }
    Ok(Interval::new(v[0], v[1]))
}

fn gen_mesh(a: GenMeshArgs) -> Result<ExitStatus, CliError> {
    let mesh = match a.shape {
        Shape::Box { nx, ny, nz, dims } => {
            let dims: [f64; 3] = dims.try_into().map_err(|_| CliError::usage("--dims: expected X,Y,Z"))?;
            generate_box_mesh(count("nx", nx)?, count("ny", ny)?, count("nz", nz)?, dims)?
        }
        Shape::Shaft { radius, height, n_radial, n_axial } => {
            generate_shaft_mesh(radius, height, count("n_radial", n_radial)?, count("n_axial", n_axial)?)?
        }
    };
    let report = validate_mesh(&mesh);
    if !report.is_valid() {
        return Err(CliError {
            status: ExitStatus::Internal,
            code: "E-MESH",
            message: format!("generated mesh is invalid: {:?}", report.violations),
        });
    }
    let output = a.output.ok_or_else(|| CliError::usage("--output: required"))?;
    write(&output, &mesh.to_json())?;
    if let Some(path) = a.annotation_out {
        if let Some(d) = a.max_displacement {
            if !(d > 0.0) {
                return Err(CliError::usage(format!("--max-displacement: must be positive, got {d}")));
            }
        }
        let mut layer = presets::axial_column(&mesh, a.load, a.max_displacement);
        if let Some(y) = &a.young {
            layer.element_default.young = Some(range("young", y)?);
        }
        if let Some(p) = &a.poisson {
            layer.element_default.poisson = Some(range("poisson", p)?);
        }
        layer.validate()?;
        write(&path, &layer.to_json())?;
    }
    println!("wrote {} ({} vertices, {} tets)", output.display(), mesh.n_vertices(), mesh.n_tets());
    Ok(ExitStatus::Success)
}

fn load_spec(mesh: &Path, annotation: &Path) -> Result<(VolumetricMesh, SemanticLayer, BoundSpecification), CliError> {
    let m = VolumetricMesh::from_json(&read(mesh)?)?;
    let report = validate_mesh(&m);
    if !report.is_valid() {
        return Err(CliError {
            status: ExitStatus::Usage,
            code: "E-MESH",
            message: format!("{}: invalid mesh: {:?}", mesh.display(), report.violations.first()),
        });
    }
    let bytes = std::fs::read(annotation)
        .map_err(|source| CliError::from(Error::Io { path: annotation.display().to_string(), source }))?;
    let layer = parse_semantic_layer(&bytes)?;
    let spec = bind_to_mesh(&layer, &m)?;
    Ok((m, layer, spec))
}

pub(crate) fn verdict_table(verdicts: &[PropertyVerdict]) -> String {
    let width = verdicts.iter().map(|v| v.name.len()).max().unwrap_or(0).max(8);
    let mut s = String::new();
    writeln!(s, "{:<width$}  {:>14}  {:>14}  {:>14}  result", "property", "measured", "bound", "margin").unwrap();
    for v in verdicts {
        let result = if v.pass { "PASS" } else { "FAIL" };
        writeln!(s, "{:<width$}  {:>14.6e}  {:>14.6e}  {:>14.6e}  {result}", v.name, v.measured, v.bound, v.margin)
            .unwrap();
    }
    s
}

fn verify(a: VerifyArgs) -> Result<ExitStatus, CliError> {
    let (_, _, spec) = load_spec(&a.mesh, &a.annotation)?;
    let field = match &a.field {
        Some(p) => MaterialField::from_json(&read(p)?)?,
        None => MaterialField::nominal(&spec),
    };
    let verdicts = evaluate_properties(&spec, spec.properties(), &field, &SolverOptions::default())?;
    print!("{}", verdict_table(&verdicts));
    if let Some(p) = &a.json {
        write(p, &serde_json::to_string_pretty(&verdicts)?)?;
    }
    Ok(if verdicts.iter().all(|v| v.pass) { ExitStatus::Success } else { ExitStatus::SpecFail })
}

fn optimize(a: OptimizeArgs, settings: &Settings) -> Result<ExitStatus, CliError> {
    let (mesh, _, spec) = load_spec(&a.mesh, &a.annotation)?;
    let objective: Objective = a.objective.into();
    let parameter = a.parameter.map(Parameter::from).unwrap_or_else(|| default_parameter(objective));
    let mut problem = InversionProblem::new(Arc::new(spec), objective)?.with_parameter(parameter)?;
    if let Some(h) = a.layer_height {
        let part = layer_partition(&mesh, h)
            .map_err(|e| CliError::usage(format!("--layer-height: {e}")))?;
        problem = problem.with_grouping(Grouping::Layer, &part)?;
    }
    let mut opts = settings.apply(OptimizeOptions::default());
    if let Some(b) = a.backoff {
        if !(0.0..1.0).contains(&b) {
            return Err(CliError::usage(format!("--backoff: must lie in [0, 1), got {b}")));
        }
        opts.backoff = b;
    }
    let result = inversion_solve(&problem, &opts)?;
    write(&a.output, &result.to_json())?;
    if let Some(t) = &a.trace {
        write(t, &result.trace_jsonl())?;
    }
    print!("{}", verdict_table(&result.verdicts));
    println!(
        "objective {:.9e}, {} iterations, {} FEM solves, {}",
        result.objective,
        result.iterations,
        result.fem_solves,
        if result.feasible { "feasible" } else { "INFEASIBLE" }
    );
    Ok(if result.feasible { ExitStatus::Success } else { ExitStatus::SpecFail })
}

fn parse_seeds(s: &str) -> Result<std::ops::Range<u64>, CliError> {
    let bad = || CliError::usage(format!("--seeds: expected A..B with A < B, got `{s}`"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a >= b {
        return Err(bad());
    }
    Ok(a..b)
}

fn simulate(a: SimulateArgs, settings: &Settings) -> Result<ExitStatus, CliError> {
    let mut loaded = Scenario::load(&a.scenario)?;
    let optimizer = settings.apply(loaded.scenario.policy.optimizer);
    loaded.scenario.policy.optimizer = optimizer;
    let seeds = a.seeds.as_deref().map(parse_seeds).transpose()?;
    std::fs::create_dir_all(&a.output)
        .map_err(|source| CliError::from(Error::Io { path: a.output.display().to_string(), source }))?;
    let plan = loaded.plan()?;
    if !plan.feasible {
        write(&a.output.join("plan.json"), &plan.to_json())?;
        eprintln!("initial plan is infeasible; see plan.json");
        return Ok(ExitStatus::SpecFail);
    }
    let reports: Vec<PrintReport> = match &seeds {
        None => vec![loaded.run(&plan, loaded.scenario.seed)?],
        Some(r) => {
            let out: Result<Vec<PrintReport>, PrintError> = r.clone().into_par_iter().map(|s| loaded.run(&plan, s)).collect();
            out?
        }
    };
    let mut summary = String::from("seed,outcome,layers_printed,fem_solves\n");
    for r in &reports {
        let (json, csv) = match seeds {
            None => ("report.json".to_string(), "history.csv".to_string()),
            Some(_) => (format!("report-{}.json", r.seed), format!("history-{}.csv", r.seed)),
        };
        write(&a.output.join(json), &r.to_json())?;
        write(&a.output.join(csv), &r.history_csv())?;
        let outcome = outcome_name(r);
        writeln!(summary, "{},{outcome},{},{}", r.seed, r.layers_printed, r.fem_solves).unwrap();
        println!("seed {}: {outcome} after {} layers, {} FEM solves", r.seed, r.layers_printed, r.fem_solves);
    }
    if seeds.is_some() {
        write(&a.output.join("summary.csv"), &summary)?;
    }
    Ok(if reports.iter().all(|r| r.succeeded()) { ExitStatus::Success } else { ExitStatus::SpecFail })
}

fn outcome_name(r: &PrintReport) -> &'static str {
    match r.outcome {
        crate::printsim::Outcome::Success => "success",
        crate::printsim::Outcome::Rejected => "rejected",
        crate::printsim::Outcome::Aborted { .. } => "aborted",
    }
}

fn report(a: ReportArgs) -> Result<ExitStatus, CliError> {
    let text = read(&a.input)?;
    let value: Option<serde_json::Value> = serde_json::from_str(&text).ok();
    let is_report = value.as_ref().is_some_and(|v| v.get("outcome").is_some());
    if is_report {
        let r: PrintReport = serde_json::from_str(&text)?;
        print!("{}", print_report_summary(&r));
        if let Some(p) = &a.svg {
            let objective: Vec<(f64, f64)> =
                r.history.iter().filter_map(|h| h.objective.map(|o| (h.layer as f64, o))).collect();
            let planned: Vec<(f64, f64)> =
                r.history.iter().filter_map(|h| h.planned_mean_next.map(|o| (h.layer as f64, o))).collect();
            let commanded: Vec<(f64, f64)> =
                r.history.iter().filter_map(|h| h.commanded_mean_next.map(|o| (h.layer as f64, o))).collect();
            let svg = plot::line_plot(
                "control history",
                "layer",
                &[("objective", objective), ("planned mean (next layer)", planned), ("commanded mean (next layer)", commanded)],
            );
            write(p, &svg)?;
        }
        return Ok(if r.succeeded() { ExitStatus::Success } else { ExitStatus::SpecFail });
    }
    let (trace, result): (Vec<TraceRecord>, Option<OptimizationResult>) =
        if value.as_ref().is_some_and(|v| v.get("trace").is_some()) {
            let r: OptimizationResult = serde_json::from_str(&text)?;
            (r.trace.clone(), Some(r))
        } else {
            let mut t = Vec::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                t.push(serde_json::from_str::<TraceRecord>(line)?);
            }
            (t, None)
        };
    print!("{}", trace_summary(&trace));
    if let Some(r) = &result {
        print!("{}", verdict_table(&r.verdicts));
    }
    if let Some(p) = &a.svg {
        let merit: Vec<(f64, f64)> = trace.iter().map(|t| (t.iter as f64, t.merit)).filter(|p| p.1.is_finite()).collect();
        let viol: Vec<(f64, f64)> = trace.iter().map(|t| (t.iter as f64, t.max_violation)).collect();
        write(p, &plot::line_plot("convergence", "iteration", &[("merit", merit), ("max violation", viol)]))?;
    }
    Ok(match result {
        Some(r) if !r.feasible => ExitStatus::SpecFail,
        _ => ExitStatus::Success,
    })
}

fn print_report_summary(r: &PrintReport) -> String {
    let mut s = String::new();
    writeln!(s, "seed {}  outcome {}  layers printed {}  FEM solves {}", r.seed, outcome_name(r), r.layers_printed, r.fem_solves)
        .unwrap();
    writeln!(
        s,
        "actuator estimate: gain {:.6}, drift {:.6} per layer",
        r.actuator_estimate.gain, r.actuator_estimate.drift_rate
    )
    .unwrap();
    writeln!(s, "{:>5}  {:<14}  {:>8}  {:>14}  {:>12}  {:>6}  {:>14}  {:>14}", "layer", "strategy", "feasible", "objective", "violation", "fem", "planned next", "commanded next")
        .unwrap();
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
    for h in &r.history {
        let strategy = h
            .strategy
            .map(|st| serde_json::to_value(st).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default())
            .unwrap_or_else(|| "-".into());
        let feasible = h.feasible.map(|b| b.to_string()).unwrap_or_else(|| "-".into());
        writeln!(
            s,
            "{:>5}  {:<14}  {:>8}  {:>14}  {:>12}  {:>6}  {:>14}  {:>14}",
            h.layer,
            strategy,
            feasible,
            f(h.objective),
            f(h.max_violation),
            h.fem_solves,
            f(h.planned_mean_next),
            f(h.commanded_mean_next)
        )
        .unwrap();
    }
    if let crate::printsim::Outcome::Aborted { layer, certificate } = &r.outcome {
        writeln!(s, "aborted after layer {layer}; violated:").unwrap();
        s.push_str(&verdict_table(&certificate.violated));
    } else {
        s.push_str(&verdict_table(&r.verdicts));
    }
    s
}

fn trace_summary(trace: &[TraceRecord]) -> String {
    let mut s = String::new();
    writeln!(s, "{:>6}  {:>16}  {:>12}  {:>12}  {:>10}", "iter", "objective", "violation", "step", "penalty").unwrap();
    // first, last, and every record where the penalty weight changes
    for (i, t) in trace.iter().enumerate() {
        let changed = i > 0 && trace[i - 1].penalty_weight != t.penalty_weight;
        if i == 0 || i + 1 == trace.len() || changed {
            writeln!(
                s,
                "{:>6}  {:>16.9e}  {:>12.4e}  {:>12.4e}  {:>10.1e}",
                t.iter, t.objective, t.max_violation, t.step_norm, t.penalty_weight
            )
            .unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("3..7").unwrap(), 3..7);
        assert!(parse_seeds("7..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn negative_radius_names_the_flag() {
        let cli = Cli::try_parse_from(["amsem", "gen-mesh", "shaft", "--radius", "-1", "--height", "10", "-o", "/nonexistent/x.json"])
            .unwrap();
        let err = run(cli).unwrap_err();
        assert_eq!(err.status, ExitStatus::Usage);
        assert!(err.message.contains("--radius"), "{}", err.message);
    }
}
