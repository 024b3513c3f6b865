//! C ABI for `amsem`.
//!
//! Every fallible call returns an [`AmsemStatus`]; on failure the message is
//! available from [`amsem_last_error`] on the same thread until the next
//! call. Handles are opaque and must be released with their `_free`
//! function. Strings returned through `char **` outputs are owned by the
//! caller and released with [`amsem_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use amsem::mesh::VolumetricMesh;
use amsem::optimize::{default_parameter, inversion_solve, InversionProblem, Objective, OptimizationResult, OptimizeOptions};
use amsem::printsim::{LoadedScenario, Scenario};
use amsem::semantics::{bind_to_mesh, evaluate_properties, parse_semantic_layer, BoundSpecification, MaterialField};
use amsem::{Error, SolverOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmsemStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Mesh = 3,
    Annotation = 4,
    Solver = 5,
    Fem = 6,
    Optimize = 7,
    Print = 8,
    Io = 9,
    Json = 10,
    Panic = 11,
}

/// Objective selector for [`amsem_spec_optimize`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmsemObjective {
    Compliance = 0,
    AverageTemperature = 1,
    Mass = 2,
    MaterialEffort = 3,
}

impl From<AmsemObjective> for Objective {
    fn from(o: AmsemObjective) -> Self {
        match o {
            AmsemObjective::Compliance => Objective::Compliance,
            AmsemObjective::AverageTemperature => Objective::AverageTemperature,
            AmsemObjective::Mass => Objective::Mass,
            AmsemObjective::MaterialEffort => Objective::MaterialEffort,
        }
    }
}

/// A mesh with its annotation bound to it.
pub struct AmsemSpec {
    spec: Arc<BoundSpecification>,
}

/// A loaded print scenario with its initial plan.
pub struct AmsemScenario {
    loaded: LoadedScenario,
    plan: OptimizationResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(AmsemStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.code() {
            "E-MESH" => AmsemStatus::Mesh,
            "E-ANNOTATION" => AmsemStatus::Annotation,
            "E-SOLVER" => AmsemStatus::Solver,
            "E-FEM" => AmsemStatus::Fem,
            "E-OPTIMIZE" => AmsemStatus::Optimize,
            "E-PRINT" => AmsemStatus::Print,
            "E-IO" => AmsemStatus::Io,
            _ => AmsemStatus::Json,
        };
        Failure(status, e.to_string())
    }
}

fn fail<E: Into<Error>>(e: E) -> Failure {
    Failure::from(e.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AmsemStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AmsemStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AmsemStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a valid nul-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(AmsemStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(AmsemStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Ok(());
    }
    let c = CString::new(s).map_err(|_| Failure(AmsemStatus::Json, "output contains a nul byte".into()))?;
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn require<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(AmsemStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next `amsem_*` call on this thread.
#[no_mangle]
pub extern "C" fn amsem_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn amsem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from an `amsem_*` output and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn amsem_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a mesh and an annotation (both JSON text) and bind them.
///
/// # Safety
/// String arguments must be valid nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amsem_spec_from_json(
    mesh_json: *const c_char,
    annotation_json: *const c_char,
    out: *mut *mut AmsemSpec,
) -> AmsemStatus {
    guard(|| {
        require(out, "out")?;
        let mesh = VolumetricMesh::from_json(text(mesh_json, "mesh_json")?).map_err(fail)?;
        let layer = parse_semantic_layer(text(annotation_json, "annotation_json")?.as_bytes()).map_err(fail)?;
        let spec = bind_to_mesh(&layer, &mesh).map_err(fail)?;
        *out = Box::into_raw(Box::new(AmsemSpec { spec: Arc::new(spec) }));
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or come from [`amsem_spec_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn amsem_spec_free(spec: *mut AmsemSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Number of vertices and elements of the bound mesh.
///
/// # Safety
/// `spec` must be a live handle; the outputs must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn amsem_spec_size(spec: *const AmsemSpec, n_vertices: *mut usize, n_elements: *mut usize) -> AmsemStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| Failure(AmsemStatus::NullArgument, "spec is null".into()))?;
        if !n_vertices.is_null() {
            *n_vertices = s.spec.mesh().n_vertices();
        }
        if !n_elements.is_null() {
            *n_elements = s.spec.mesh().n_tets();
        }
        Ok(())
    })
}

/// Check every property of the annotation under `field_json` (a material
/// field) or, when it is null, under the midpoints of the annotated ranges.
/// `all_pass` receives 1 or 0; `verdicts_json` receives a JSON array.
///
/// # Safety
/// `spec` must be a live handle; `field_json` null or a valid string;
/// outputs writable or null.
#[no_mangle]
pub unsafe extern "C" fn amsem_spec_verify(
    spec: *const AmsemSpec,
    field_json: *const c_char,
    all_pass: *mut i32,
    verdicts_json: *mut *mut c_char,
) -> AmsemStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| Failure(AmsemStatus::NullArgument, "spec is null".into()))?;
        let field = if field_json.is_null() {
            MaterialField::nominal(&s.spec)
        } else {
            MaterialField::from_json(text(field_json, "field_json")?).map_err(fail)?
        };
        let verdicts = evaluate_properties(&s.spec, s.spec.properties(), &field, &SolverOptions::default()).map_err(fail)?;
        if !all_pass.is_null() {
            *all_pass = verdicts.iter().all(|v| v.pass) as i32;
        }
        out_string(verdicts_json, serde_json::to_string(&verdicts).map_err(fail)?)
    })
}

/// Solve the inversion problem over all elements. `feasible` receives 1 or
/// 0; `result_json` receives the full result.
///
/// # Safety
/// `spec` must be a live handle; outputs writable or null.
#[no_mangle]
pub unsafe extern "C" fn amsem_spec_optimize(
    spec: *const AmsemSpec,
    objective: AmsemObjective,
    feasible: *mut i32,
    result_json: *mut *mut c_char,
) -> AmsemStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| Failure(AmsemStatus::NullArgument, "spec is null".into()))?;
        let objective = Objective::from(objective);
        let problem = InversionProblem::new(s.spec.clone(), objective)
            .and_then(|p| p.with_parameter(default_parameter(objective)))
            .map_err(fail)?;
        let result = inversion_solve(&problem, &OptimizeOptions::default()).map_err(fail)?;
        if !feasible.is_null() {
            *feasible = result.feasible as i32;
        }
        out_string(result_json, result.to_json())
    })
}

/// Load a scenario file (references relative to its directory) and compute
/// its initial plan.
///
/// # Safety
/// `path` must be a valid string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn amsem_scenario_load(path: *const c_char, out: *mut *mut AmsemScenario) -> AmsemStatus {
    guard(|| {
        require(out, "out")?;
        let loaded = Scenario::load(Path::new(text(path, "path")?)).map_err(fail)?;
        let plan = loaded.plan().map_err(fail)?;
        if !plan.feasible {
            return Err(Failure(AmsemStatus::Optimize, "initial plan is infeasible".into()));
        }
        *out = Box::into_raw(Box::new(AmsemScenario { loaded, plan }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or come from [`amsem_scenario_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn amsem_scenario_free(scenario: *mut AmsemScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Run the scenario with `seed`. `succeeded` receives 1 when the printed
/// part passes its final check, 0 when it is rejected or the print aborts.
/// `report_json` and `history_csv` receive the report and its history.
///
/// # Safety
/// `scenario` must be a live handle; outputs writable or null.
#[no_mangle]
pub unsafe extern "C" fn amsem_scenario_run(
    scenario: *const AmsemScenario,
    seed: u64,
    succeeded: *mut i32,
    report_json: *mut *mut c_char,
    history_csv: *mut *mut c_char,
) -> AmsemStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| Failure(AmsemStatus::NullArgument, "scenario is null".into()))?;
        let report = s.loaded.run(&s.plan, seed).map_err(fail)?;
        if !succeeded.is_null() {
            *succeeded = report.succeeded() as i32;
        }
        out_string(report_json, report.to_json())?;
        out_string(history_csv, report.history_csv())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples() -> std::path::PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples")
    }

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    unsafe fn take(p: *mut c_char) -> String {
        let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
        amsem_string_free(p);
        s
    }

    #[test]
    fn verify_and_optimize_through_handles() {
        let mesh = c(&std::fs::read_to_string(examples().join("column-mesh.json")).unwrap());
        let ann = c(&std::fs::read_to_string(examples().join("column-annotation.json")).unwrap());
        unsafe {
            let mut spec = ptr::null_mut();
            assert_eq!(amsem_spec_from_json(mesh.as_ptr(), ann.as_ptr(), &mut spec), AmsemStatus::Ok);
            let (mut nv, mut ne) = (0, 0);
            assert_eq!(amsem_spec_size(spec, &mut nv, &mut ne), AmsemStatus::Ok);
            assert_eq!((nv, ne), (28, 36));

            let mut pass = -1;
            let mut json = ptr::null_mut();
            assert_eq!(amsem_spec_verify(spec, ptr::null(), &mut pass, &mut json), AmsemStatus::Ok);
            // nominal E = 100 GPa gives a 0.06 mm tip: right at the bound
            let verdicts: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
            assert_eq!(verdicts.as_array().unwrap().len(), 1);
            assert_eq!(pass, verdicts[0]["pass"].as_bool().unwrap() as i32);

            let mut feasible = -1;
            let mut result = ptr::null_mut();
            assert_eq!(amsem_spec_optimize(spec, AmsemObjective::MaterialEffort, &mut feasible, &mut result), AmsemStatus::Ok);
            assert_eq!(feasible, 1);
            assert!(take(result).contains("\"feasible\": true"));
            amsem_spec_free(spec);
        }
    }

    #[test]
    fn errors_carry_status_and_message() {
        let bad = c("{not json");
        unsafe {
            let mut spec = ptr::null_mut();
            assert_eq!(amsem_spec_from_json(bad.as_ptr(), bad.as_ptr(), &mut spec), AmsemStatus::Mesh);
            assert!(spec.is_null());
            let msg = CStr::from_ptr(amsem_last_error()).to_str().unwrap();
            assert!(!msg.is_empty());
            assert_eq!(amsem_spec_from_json(ptr::null(), bad.as_ptr(), &mut spec), AmsemStatus::NullArgument);
            assert_eq!(amsem_spec_verify(ptr::null(), ptr::null(), ptr::null_mut(), ptr::null_mut()), AmsemStatus::NullArgument);
            // a successful call clears the message
            let mut nv = 0;
            let mesh = c(&std::fs::read_to_string(examples().join("column-mesh.json")).unwrap());
            let ann = c(&std::fs::read_to_string(examples().join("column-annotation.json")).unwrap());
            assert_eq!(amsem_spec_from_json(mesh.as_ptr(), ann.as_ptr(), &mut spec), AmsemStatus::Ok);
            assert_eq!(amsem_spec_size(spec, &mut nv, ptr::null_mut()), AmsemStatus::Ok);
            assert!(amsem_last_error().is_null());
            amsem_spec_free(spec);
        }
    }

    #[test]
    fn scenario_runs_are_reproducible() {
        let path = c(examples().join("scenario-closed-loop.json").to_str().unwrap());
        unsafe {
            let mut sc = ptr::null_mut();
            assert_eq!(amsem_scenario_load(path.as_ptr(), &mut sc), AmsemStatus::Ok, "{:?}", CStr::from_ptr(amsem_last_error()));
            let mut reports = Vec::new();
            for _ in 0..2 {
                let mut ok = -1;
                let (mut report, mut csv) = (ptr::null_mut(), ptr::null_mut());
                assert_eq!(amsem_scenario_run(sc, 42, &mut ok, &mut report, &mut csv), AmsemStatus::Ok);
                assert_eq!(ok, 1);
                assert!(take(csv).starts_with("layer,"));
                reports.push(take(report));
            }
            assert_eq!(reports[0], reports[1]);
            amsem_scenario_free(sc);
        }
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(amsem_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
