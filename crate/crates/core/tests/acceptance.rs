//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any fails. Every reference value is computed here, not taken
//! from the library under test.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use amsem::fem::{assemble, element_conductance, element_stiffness, solve, Physics};
use amsem::mesh::{generate_box_mesh, generate_shaft_mesh, layer_partition, VolumetricMesh};
use amsem::optimize::{
    build_element_hessian, build_quadratic_model, inversion_solve, reoptimize_after_drift, warm_start_update, Grouping,
    InversionProblem, Objective, OptimizeError, OptimizeOptions, SmoothFunction, Strategy, StrategyUsed,
};
use amsem::printsim::{calibrate_actuator, EstimatorState, Scenario, SensorModel, TestPrint};
use amsem::semantics::{
    bind_to_mesh, evaluate_properties, parse_semantic_layer, presets, DisplacementSet, ForceSet, HeatSet, Interval,
    MaterialField, MaterialParams, Parameter, Predicate, PropertySpec, Provenance, SemanticLayer, TemperatureSet,
    VertexSelection,
};
use amsem::SolverOptions;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

fn examples_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples")
}

fn params(young: f64, poisson: f64) -> MaterialParams {
    MaterialParams { young, poisson, conductivity: 0.007, density: 4.4e-6 }
}

fn wide_ranges() -> amsem::semantics::ElementRanges {
    amsem::semantics::ElementRanges {
        young: Some(Interval::new(1.0, 1e7)),
        poisson: Some(Interval::new(0.0, 0.45)),
        conductivity: Some(Interval::new(1e-6, 1e3)),
        density: Some(Interval::new(1e-9, 1e-3)),
    }
}

fn random_tet(rng: &mut ChaCha8Rng) -> [Vector3<f64>; 4] {
    loop {
        let mut c: [Vector3<f64>; 4] =
            std::array::from_fn(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let vol = (c[1] - c[0]).cross(&(c[2] - c[0])).dot(&(c[3] - c[0])) / 6.0;
        let longest = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .map(|(i, j)| (c[i] - c[j]).norm())
            .fold(0.0, f64::max);
        // keep shapes away from slivers: volume at least 2% of a regular tet's
        if vol.abs() < 0.02 * longest.powi(3) / (6.0 * 2f64.sqrt()) {
            continue;
        }
        if vol < 0.0 {
            c.swap(0, 1);
        }
        return c;
    }
}

fn near_zero_eigs(m: DMatrix<f64>) -> Result<(usize, f64), String> {
    let eig = SymmetricEigen::new(m).eigenvalues;
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(min >= -1e-8 * max, || format!("negative eigenvalue {min:e} (max {max:e})"))?;
    Ok((eig.iter().filter(|l| l.abs() <= 1e-8 * max).count(), max))
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax() / m.amax()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_asym = 0.0f64;
    for t in 0..100 {
        let c = random_tet(&mut rng);
        let young = rng.random_range(1e3..2e5);
        let nu = rng.random_range(0.0..0.45);
        let k = element_stiffness(&c, young, nu).map_err(|e| format!("tet {t}: {e}"))?;
        let k = DMatrix::from_column_slice(12, 12, k.as_slice());
        worst_asym = worst_asym.max(asymmetry(&k));
        ensure(asymmetry(&k) <= 1e-12, || format!("tet {t}: stiffness asymmetry {:e}", asymmetry(&k)))?;
        let (zeros, _) = near_zero_eigs((&k + k.transpose()) * 0.5).map_err(|e| format!("tet {t}: {e}"))?;
        ensure(zeros == 6, || format!("tet {t}: {zeros} near-zero stiffness eigenvalues"))?;

        let kc = element_conductance(&c, rng.random_range(1e-3..10.0)).map_err(|e| format!("tet {t}: {e}"))?;
        let kc = DMatrix::from_column_slice(4, 4, kc.as_slice());
        ensure(asymmetry(&kc) <= 1e-12, || format!("tet {t}: conductance asymmetry {:e}", asymmetry(&kc)))?;
        let (zeros, _) = near_zero_eigs((&kc + kc.transpose()) * 0.5).map_err(|e| format!("tet {t}: {e}"))?;
        ensure(zeros == 1, || format!("tet {t}: {zeros} near-zero conductance eigenvalues"))?;
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("100 tets, max asymmetry {worst_asym:.1e}, {:.3} s", start.elapsed().as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let a = [1e-3, -2e-3, 5e-4];
    let b = [[1e-3, 2e-4, -3e-4], [-1e-4, 2e-3, 5e-4], [3e-4, -6e-4, -1.5e-3]];
    let exact = |p: &Vector3<f64>| -> [f64; 3] {
        std::array::from_fn(|i| a[i] + b[i][0] * p.x + b[i][1] * p.y + b[i][2] * p.z)
    };
    let mut worst = 0.0f64;
    let cases = [(2, 2, 2, [1.0, 1.0, 1.0]), (3, 3, 3, [1.0, 1.0, 1.0]), (4, 4, 4, [2.0, 1.0, 3.0]), (5, 5, 5, [1.0, 1.0, 1.0]), (2, 3, 5, [1.0, 2.0, 4.0])];
    for (nx, ny, nz, dims) in cases {
        let mesh = generate_box_mesh(nx, ny, nz, dims).map_err(|e| e.to_string())?;
        let on_boundary: std::collections::BTreeSet<usize> = mesh.boundary_faces().into_iter().flatten().collect();
        let mut layer = SemanticLayer { element_default: wide_ranges(), ..Default::default() };
        for &v in &on_boundary {
            let u = exact(mesh.vertex(v));
            layer.annotate(&[v], |ann| {
                ann.displacement = DisplacementSet::Prescribed(u);
                ann.force = ForceSet::Free;
            });
        }
        let spec = bind_to_mesh(&layer, &mesh).map_err(|e| e.to_string())?;
        let field = MaterialField::uniform(mesh.n_tets(), params(110_000.0, 0.3), Provenance::Commanded);
        let system = assemble(&spec, &field, Physics::Elasticity).map_err(|e| e.to_string())?;
        let sol = solve(&system, &SolverOptions::default()).map_err(|e| e.to_string())?;
        let scale = (0..mesh.n_vertices())
            .map(|v| exact(mesh.vertex(v)).iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .fold(0.0, f64::max);
        let mut interior = 0;
        for v in (0..mesh.n_vertices()).filter(|v| !on_boundary.contains(v)) {
            interior += 1;
            let u = sol.displacement(v);
            let e = exact(mesh.vertex(v));
            let err = (0..3).map(|i| (u[i] - e[i]).abs()).fold(0.0, f64::max) / scale;
            worst = worst.max(err);
        }
        ensure(interior > 0, || format!("{nx}x{ny}x{nz}: no interior nodes"))?;
        ensure(worst <= 1e-8, || format!("{nx}x{ny}x{nz}: interior error {worst:e}"))?;
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("boxes up to 5x5x5, max relative interior error {worst:.1e}, {:.2} s", start.elapsed().as_secs_f64()))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (r, l, e, p) = (1.0, 10.0, 110_000.0, 100.0);
    let mesh = generate_shaft_mesh(r, l, 32, 10).map_err(|e| e.to_string())?;
    let mut layer = presets::axial_column(&mesh, p, None);
    layer.element_default.young = Some(Interval::point(e));
    layer.element_default.poisson = Some(Interval::point(0.0));
    let top = layer.vertex_tags["top"].clone();
    let spec = bind_to_mesh(&layer, &mesh).map_err(|e| e.to_string())?;
    let field = MaterialField::nominal(&spec);
    let system = assemble(&spec, &field, Physics::Elasticity).map_err(|e| e.to_string())?;
    let sol = solve(&system, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let mean_uz = top.iter().map(|&v| sol.displacement(v).z).sum::<f64>() / top.len() as f64;
    let oracle = p * l / (e * std::f64::consts::PI * r * r);
    let rel = (mean_uz.abs() - oracle).abs() / oracle;
    ensure(mean_uz < 0.0, || format!("top moved the wrong way: {mean_uz:e}"))?;
    ensure(rel <= 0.05, || format!("mean top displacement {:.6e} vs PL/(EA) {oracle:.6e}: {:.2}% off", mean_uz.abs(), 100.0 * rel))?;
    let reaction = sol.total_reaction();
    // the load acts along −z, so the supports must push back with +P
    let reaction_err = ((reaction[2] - p).abs()).max(reaction[0].abs()).max(reaction[1].abs()) / p;
    ensure(reaction_err <= 1e-8, || format!("reaction sum {reaction:?} vs (0, 0, {p})"))?;
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "mean top displacement {:.4e} mm vs PL/(EA) {oracle:.4e} ({:.2}%), reaction error {reaction_err:.1e}, {:.2} s",
        mean_uz.abs(),
        100.0 * rel,
        start.elapsed().as_secs_f64()
    ))
}

fn thermal_bar(conductivity: impl Fn(f64) -> f64, t0: f64, t1: f64) -> Result<(VolumetricMesh, Vec<f64>), String> {
    let mesh = generate_box_mesh(1, 1, 8, [1.0, 1.0, 4.0]).map_err(|e| e.to_string())?;
    let (bottom, top) = presets::bottom_and_top(&mesh);
    let mut layer = SemanticLayer { element_default: wide_ranges(), ..Default::default() };
    for (set, t) in [(&bottom, t0), (&top, t1)] {
        layer.annotate(set, |a| {
            a.temperature = TemperatureSet::Prescribed(t);
            a.heat = HeatSet::Free;
        });
    }
    let spec = bind_to_mesh(&layer, &mesh).map_err(|e| e.to_string())?;
    let mut field = MaterialField::uniform(mesh.n_tets(), params(110_000.0, 0.3), Provenance::Commanded);
    for e in 0..mesh.n_tets() {
        field.set(Parameter::Conductivity, e, conductivity(mesh.centroid(e).z));
    }
    let system = assemble(&spec, &field, Physics::Conduction).map_err(|e| e.to_string())?;
    let sol = solve(&system, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let temps = (0..mesh.n_vertices()).map(|v| sol.temperature(v)).collect();
    Ok((mesh, temps))
}

fn criterion_4() -> Outcome {
    let (t0, t1, len) = (300.0, 400.0, 4.0);
    let (mesh, temps) = thermal_bar(|_| 0.007, t0, t1)?;
    let linear_err = (0..mesh.n_vertices())
        .map(|v| (temps[v] - (t0 + (t1 - t0) * mesh.vertex(v).z / len)).abs())
        .fold(0.0, f64::max);
    ensure(linear_err <= 1e-10, || format!("uniform bar: nodal error {linear_err:e} K"))?;

    let (k1, k2, l1) = (0.007, 0.021, 1.5);
    let (mesh, temps) = thermal_bar(|z| if z < l1 { k1 } else { k2 }, t0, t1)?;
    let g1 = k1 / l1;
    let g2 = k2 / (len - l1);
    let interface = (g1 * t0 + g2 * t1) / (g1 + g2);
    let at_interface: Vec<usize> = mesh.vertices_where(|p| (p.z - l1).abs() < 1e-9);
    ensure(!at_interface.is_empty(), || "no vertices on the material interface".into())?;
    let series_err = at_interface.iter().map(|&v| (temps[v] - interface).abs() / interface).fold(0.0, f64::max);
    ensure(series_err <= 1e-8, || format!("series bar: interface error {series_err:e} (relative)"))?;
    Ok(format!("linear profile error {linear_err:.1e} K, interface temperature {interface:.6} K, relative error {series_err:.1e}"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shapes = [(1, 1, 1), (1, 1, 2), (1, 1, 3), (2, 1, 2), (1, 1, 5), (1, 2, 2), (2, 2, 1), (1, 1, 4), (1, 2, 1), (3, 1, 1)];
    let mut worst = 0.0f64;
    for (case, &(nx, ny, nz)) in shapes.iter().enumerate() {
        let dims = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..3.0)];
        let mesh = generate_box_mesh(nx, ny, nz, dims).map_err(|e| e.to_string())?;
        let n = mesh.n_tets();
        ensure(n <= 30, || format!("case {case}: {n} elements"))?;
        let load = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-200.0..-10.0)];
        let mut layer = presets::axial_column(&mesh, 0.0, None);
        let top = layer.vertex_tags["top"].clone();
        presets::apply_face_load(&mut layer, &mesh, &top, load);
        layer.element_default.young = Some(Interval::new(50_000.0, 150_000.0));
        layer.element_default.poisson = Some(Interval::point(rng.random_range(0.0..0.4)));
        let spec = Arc::new(bind_to_mesh(&layer, &mesh).map_err(|e| e.to_string())?);
        let problem = InversionProblem::new(spec, Objective::Compliance).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(60_000.0..140_000.0)).collect();
        let eval = problem.evaluate(&x, true).map_err(|e| e.to_string())?;
        let g = &eval.objective_gradient;
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for e in 0..n {
            let h = 1e-4 * x[e];
            let mut xp = x.clone();
            xp[e] += h;
            let mut xm = x.clone();
            xm[e] -= h;
            let fp = problem.evaluate(&xp, false).map_err(|e| e.to_string())?.objective;
            let fm = problem.evaluate(&xm, false).map_err(|e| e.to_string())?.objective;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (g[e] - fd).abs() / gmax;
            worst = worst.max(rel);
            ensure(rel <= 1e-4, || format!("case {case}, element {e}: adjoint {:e} vs difference {fd:e}", g[e]))?;
        }
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("10 problems, max relative gradient error {worst:.1e}, {:.2} s", start.elapsed().as_secs_f64()))
}

/// `½ xᵀA x − bᵀx + c Σ exp(x_i)`; quadratic when `c = 0`.
struct TestFunction {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl TestFunction {
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x - &self.b + x.map(|v| self.c * v.exp())
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        &self.a + DMatrix::from_diagonal(&x.map(|v| self.c * v.exp()))
    }

    /// Newton's method over the coordinates `z_idx` with the rest held.
    fn argmin(&self, x: &DVector<f64>, z_idx: &[usize]) -> DVector<f64> {
        let mut x = x.clone();
        for _ in 0..100 {
            let g = self.gradient(&x);
            let h = self.hessian(&x);
            let gz = DVector::from_iterator(z_idx.len(), z_idx.iter().map(|&i| g[i]));
            let hz = DMatrix::from_fn(z_idx.len(), z_idx.len(), |i, j| h[(z_idx[i], z_idx[j])]);
            let step = hz.cholesky().expect("convex").solve(&gz);
            for (k, &i) in z_idx.iter().enumerate() {
                x[i] -= step[k];
            }
            if step.amax() < 1e-15 {
                break;
            }
        }
        x
    }
}

impl SmoothFunction for TestFunction {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), OptimizeError> {
        let x = DVector::from_column_slice(x);
        let f = 0.5 * x.dot(&(&self.a * &x)) - self.b.dot(&x) + x.iter().map(|v| self.c * v.exp()).sum::<f64>();
        Ok((f, self.gradient(&x).as_slice().to_vec()))
    }
}

fn random_test_function(rng: &mut ChaCha8Rng, n: usize, c: f64) -> TestFunction {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let a = &m * m.transpose() + DMatrix::identity(n, n) * n as f64;
    let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    TestFunction { a, b, c }
}

/// Warm-start error against the exact re-optimised `z` for a shift `delta_y`.
fn warm_error(f: &mut TestFunction, y_idx: &[usize], z_idx: &[usize], delta_y: &[f64]) -> Result<f64, String> {
    let n = f.dim();
    let base = f.argmin(&DVector::zeros(n), z_idx);
    let steps = vec![1e-4; n];
    let model = build_quadratic_model(f, base.as_slice(), y_idx, z_idx, &steps, 1e-9).map_err(|e| e.to_string())?;
    let dz = warm_start_update(&model, delta_y).map_err(|e| e.to_string())?;
    let mut shifted = base.clone();
    for (k, &i) in y_idx.iter().enumerate() {
        shifted[i] += delta_y[k];
    }
    let exact = f.argmin(&shifted, z_idx);
    Ok(z_idx.iter().enumerate().map(|(k, &i)| (base[i] + dz[k] - exact[i]).abs()).fold(0.0, f64::max))
}

fn column_problem() -> Result<(InversionProblem, amsem::mesh::LayerPartition), String> {
    let mesh = generate_box_mesh(1, 1, 6, [1.0, 1.0, 6.0]).map_err(|e| e.to_string())?;
    let mut layer = presets::axial_column(&mesh, 1000.0, Some(0.06));
    layer.element_default.poisson = Some(Interval::point(0.0));
    layer.element_default.young = Some(Interval::new(50_000.0, 150_000.0));
    let spec = Arc::new(bind_to_mesh(&layer, &mesh).map_err(|e| e.to_string())?);
    let part = layer_partition(&mesh, 1.0).map_err(|e| e.to_string())?;
    let problem = InversionProblem::new(spec, Objective::MaterialEffort)
        .and_then(|p| p.with_grouping(Grouping::Layer, &part))
        .map_err(|e| e.to_string())?;
    Ok((problem, part))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (y_idx, z_idx) = ([0usize, 1], [2usize, 3, 4]);

    // exactly quadratic: the update must land on the re-optimised point
    let mut quad_err = 0.0f64;
    for _ in 0..10 {
        let mut f = random_test_function(&mut rng, 5, 0.0);
        let dy = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        quad_err = quad_err.max(warm_error(&mut f, &y_idx, &z_idx, &dy)?);
    }
    ensure(quad_err <= 1e-10, || format!("quadratic: warm start differs from re-optimum by {quad_err:e}"))?;

    // smooth non-quadratic: the error must shrink at least 3x per halving
    let mut f = random_test_function(&mut rng, 5, 0.5);
    let dy = [0.2, -0.15];
    let e1 = warm_error(&mut f, &y_idx, &z_idx, &dy)?;
    let e2 = warm_error(&mut f, &y_idx, &z_idx, &[dy[0] / 2.0, dy[1] / 2.0])?;
    let e3 = warm_error(&mut f, &y_idx, &z_idx, &[dy[0] / 4.0, dy[1] / 4.0])?;
    ensure(e1 >= 3.0 * e2 && e2 >= 3.0 * e3, || format!("non-quadratic errors {e1:e}, {e2:e}, {e3:e}"))?;

    // FEM solves: one drifted layer on the six-layer column
    let (problem, part) = column_problem()?;
    let opts = OptimizeOptions { backoff: 0.02, ..Default::default() };
    let plan = inversion_solve(&problem, &opts).map_err(|e| e.to_string())?;
    ensure(plan.feasible, || "column plan infeasible".into())?;
    let printed = &part.layers[0];
    let drifted: Vec<f64> = printed.iter().map(|&e| 0.9 * plan.element_values[e]).collect();
    let frozen = problem.clone().freeze(printed, &drifted).map_err(|e| e.to_string())?;
    let hessian = build_element_hessian(&frozen, &plan, &opts).map_err(|e| e.to_string())?;
    let warm = reoptimize_after_drift(&frozen, &plan, Strategy::WarmStart, Some(&hessian), &opts).map_err(|e| e.to_string())?;
    let warm_fresh = reoptimize_after_drift(&frozen, &plan, Strategy::WarmStart, None, &opts).map_err(|e| e.to_string())?;
    let full = reoptimize_after_drift(&frozen, &plan, Strategy::Full, None, &opts).map_err(|e| e.to_string())?;
    ensure(warm.strategy == StrategyUsed::WarmStart && warm.feasible && full.feasible, || {
        format!("warm {:?} feasible {}, full feasible {}", warm.strategy, warm.feasible, full.feasible)
    })?;
    ensure(warm.fem_solves < full.fem_solves, || format!("warm {} FEM solves vs full {}", warm.fem_solves, full.fem_solves))?;
    ensure(warm_fresh.fem_solves < full.fem_solves, || {
        format!("warm with Hessian build {} FEM solves vs full {}", warm_fresh.fem_solves, full.fem_solves)
    })?;
    let gap = (warm.objective - full.objective).abs() / full.objective;
    Ok(format!(
        "quadratic error {quad_err:.1e}; non-quadratic errors {e1:.2e} -> {e2:.2e} -> {e3:.2e} (ratios {:.2}, {:.2}); \
         FEM solves warm {} (cached Hessian) / {} (incl. build) vs full {}, objective gap {gap:.1e}",
        e1 / e2,
        e2 / e3,
        warm.fem_solves,
        warm_fresh.fem_solves,
        full.fem_solves
    ))
}

fn criterion_7() -> Outcome {
    let mesh = generate_box_mesh(1, 1, 4, [1.0, 1.0, 4.0]).map_err(|e| e.to_string())?;
    let bound = 0.03;
    let mut layer = presets::axial_column(&mesh, 1000.0, Some(bound));
    layer.element_default.poisson = Some(Interval::point(0.0));
    layer.element_default.young = Some(Interval::new(50_000.0, 150_000.0));
    let spec = Arc::new(bind_to_mesh(&layer, &mesh).map_err(|e| e.to_string())?);
    let part = layer_partition(&mesh, 1.0).map_err(|e| e.to_string())?;
    ensure(part.n_layers() == 4, || format!("{} segments", part.n_layers()))?;
    let problem = InversionProblem::new(spec.clone(), Objective::MaterialEffort)
        .and_then(|p| p.with_grouping(Grouping::Layer, &part))
        .map_err(|e| e.to_string())?;
    let result = inversion_solve(&problem, &OptimizeOptions::default()).map_err(|e| e.to_string())?;
    ensure(result.feasible, || "inversion infeasible".into())?;

    let grid: Vec<f64> = (0..5).map(|i| 50_000.0 + 25_000.0 * i as f64).collect();
    let volumes = spec.element_volumes();
    let total: f64 = volumes.iter().sum();
    let mut best = f64::INFINITY;
    for idx in 0..5usize.pow(4) {
        let pick: Vec<f64> = (0..4).map(|s| grid[idx / 5usize.pow(s as u32) % 5]).collect();
        let mut field = MaterialField::nominal(&spec);
        for (s, layer) in part.layers.iter().enumerate() {
            for &e in layer {
                field.set(Parameter::Young, e, pick[s]);
            }
        }
        let verdicts = evaluate_properties(&spec, spec.properties(), &field, &SolverOptions::default()).map_err(|e| e.to_string())?;
        if verdicts.iter().all(|v| v.pass) {
            let effort = (0..mesh.n_tets()).map(|e| volumes[e] * field.get(Parameter::Young, e)).sum::<f64>() / total;
            best = best.min(effort);
        }
    }
    ensure(best.is_finite(), || "no feasible grid point".into())?;
    ensure(result.objective <= best + 1e-6, || format!("inversion {} vs grid optimum {best}", result.objective))?;
    Ok(format!("inversion objective {:.3} <= grid optimum {best:.3} over 625 points", result.objective))
}

fn amsem(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_amsem")).args(args).output().expect("binary runs")
}

fn criterion_8() -> Outcome {
    let dir = examples_dir();
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |scenario: &str, sub: &str| {
        let target = out.path().join(sub);
        let o = amsem(&["simulate", "--scenario", dir.join(scenario).to_str().unwrap(), "-o", target.to_str().unwrap()]);
        (o.status.code(), target)
    };
    let (open_code, _) = run("scenario-open-loop.json", "open");
    ensure(open_code == Some(1), || format!("control disabled: exit {open_code:?}, expected 1"))?;
    let (closed_code, closed) = run("scenario-closed-loop.json", "closed");
    ensure(closed_code == Some(0), || format!("control enabled: exit {closed_code:?}, expected 0"))?;
    let (_, again) = run("scenario-closed-loop.json", "again");
    for f in ["report.json", "history.csv"] {
        let a = std::fs::read(closed.join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(again.join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{f} differs between two runs with the same seed"))?;
    }
    let csv = std::fs::read_to_string(closed.join("history.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or_else(|| format!("no {name} column"));
    let (planned, commanded) = (col("planned_mean_next")?, col("commanded_mean_next")?);
    let first: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let p: f64 = first[planned].parse().map_err(|_| "bad planned value".to_string())?;
    let c: f64 = first[commanded].parse().map_err(|_| "bad commanded value".to_string())?;
    ensure(c > 1.05 * p, || format!("no compensation after layer 0: commanded {c} vs planned {p}"))?;

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(closed.join("report.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let initial_mean = {
        let plan = report["planned"].as_array().ok_or("report has no plan")?;
        plan.iter().filter_map(|v| v.as_f64()).sum::<f64>() / plan.len() as f64
    };
    Ok(format!(
        "open loop exit 1, closed loop exit 0, commanded E for the next layer {c:.0} vs planned {p:.0} \
         (initial plan mean {initial_mean:.0}), repeated runs byte-identical"
    ))
}

fn criterion_9() -> Outcome {
    let truth = 85_000.0f64;
    let sensor = SensorModel { noise_sd: 0.05, ..Default::default() };
    let se = 0.05 / 100f64.sqrt();
    let mut hits = 0;
    for seed in 0..1000u64 {
        let mut est = EstimatorState::new(&[100_000.0], 0.2).map_err(|e| e.to_string())?;
        for round in 0..100 {
            est.update(0, sensor.measure(truth, round, 0, seed), sensor.noise_sd);
        }
        if (est.log_mean[0] - truth.ln()).abs() <= 3.0 * se {
            hits += 1;
        }
    }
    ensure(hits >= 990, || format!("{hits}/1000 posterior means within 3 standard errors"))?;

    let (gain, drift) = (0.9, 0.01);
    let prints: Vec<TestPrint> = (0..12)
        .map(|i| {
            let commanded = 80_000.0 + 5_000.0 * (i % 4) as f64;
            let layer = i / 2;
            TestPrint { layer, commanded, measured: commanded * gain * (1.0 + drift * layer as f64) }
        })
        .collect();
    let fit = calibrate_actuator(&prints).map_err(|e| e.to_string())?;
    let cal_err = (fit.gain - gain).abs().max((fit.drift_rate - drift).abs());
    ensure(cal_err <= 1e-9, || format!("calibration recovered gain {} drift {}", fit.gain, fit.drift_rate))?;
    Ok(format!("{hits}/1000 seeds within 3 standard errors; noiseless calibration error {cal_err:.1e}"))
}

fn criterion_10() -> Outcome {
    let dir = examples_dir();
    let mut checked = 0;
    for name in ["column-mesh.json", "shaft-mesh.json"] {
        let text = std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let a = VolumetricMesh::from_json(&text).map_err(|e| format!("{name}: {e}"))?;
        let b = VolumetricMesh::from_json(&a.to_json()).map_err(|e| format!("{name}: {e}"))?;
        ensure(a == b && a.to_json() == b.to_json(), || format!("{name} changed on round trip"))?;
        checked += 1;
    }
    for name in ["column-annotation.json", "shaft-annotation.json"] {
        let bytes = std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let a = parse_semantic_layer(&bytes).map_err(|e| format!("{name}: {e}"))?;
        let b = parse_semantic_layer(a.to_json().as_bytes()).map_err(|e| format!("{name}: {e}"))?;
        ensure(a == b && a.to_json() == b.to_json(), || format!("{name} changed on round trip"))?;
        checked += 1;
    }
    for name in ["scenario-closed-loop.json", "scenario-open-loop.json", "scenario-identity.json"] {
        let text = std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let a = Scenario::from_json(&text).map_err(|e| format!("{name}: {e}"))?;
        let b = Scenario::from_json(&a.to_json()).map_err(|e| format!("{name}: {e}"))?;
        ensure(a == b && a.to_json() == b.to_json(), || format!("{name} changed on round trip"))?;
        checked += 1;
    }

    // relabelling vertices must not change any verdict
    let mesh = generate_shaft_mesh(1.0, 10.0, 12, 6).map_err(|e| e.to_string())?;
    let mut layer = presets::axial_column(&mesh, 100.0, Some(3e-3));
    layer.element_default.poisson = Some(Interval::point(0.0));
    let top = layer.vertex_tags["top"].clone();
    layer.global_properties.push(PropertySpec::new(
        "top-by-id",
        Predicate::MaxDisplacement { bound: 2.9e-3, vertices: VertexSelection::Ids(top[..5].to_vec()) },
    ));
    layer.global_properties.push(PropertySpec::new("volume", Predicate::Volume { cmp: amsem::semantics::Comparison::Le, bound: 40.0 }));
    let spec = bind_to_mesh(&layer, &mesh).map_err(|e| e.to_string())?;
    let reference = evaluate_properties(&spec, spec.properties(), &MaterialField::nominal(&spec), &SolverOptions::default())
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut perm: Vec<usize> = (0..mesh.n_vertices()).collect();
        perm.shuffle(&mut rng);
        let m2 = mesh.relabel_vertices(&perm).map_err(|e| e.to_string())?;
        let l2 = layer.relabel_vertices(&perm);
        let s2 = bind_to_mesh(&l2, &m2).map_err(|e| e.to_string())?;
        let verdicts = evaluate_properties(&s2, s2.properties(), &MaterialField::nominal(&s2), &SolverOptions::default())
            .map_err(|e| e.to_string())?;
        for (a, b) in reference.iter().zip(&verdicts) {
            let rel = (a.measured - b.measured).abs() / a.measured.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            ensure(a.name == b.name && a.pass == b.pass && rel <= 1e-9, || format!("{}: {a:?} vs {b:?}", a.name))?;
        }
    }
    Ok(format!("{checked} files round-trip; verdicts invariant under 20 relabellings (max relative change {worst:.1e})"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("element matrices", criterion_1),
        ("patch test", criterion_2),
        ("shaft oracle", criterion_3),
        ("thermal exactness", criterion_4),
        ("adjoint gradient", criterion_5),
        ("warm start", criterion_6),
        ("brute-force inversion", criterion_7),
        ("closed-loop scenario", criterion_8),
        ("estimator consistency", criterion_9),
        ("format round-trips", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS criterion {} ({name}): {detail}", i + 1),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {why}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): panicked", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
