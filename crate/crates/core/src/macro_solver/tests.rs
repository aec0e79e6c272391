use super::*;
use crate::config::RunConfig;
use crate::fem::assemble_curl_term;
use crate::materials::{ExpLawParams, MagneticLaw};

fn small(law: MagneticLaw) -> RunConfig {
    let mut c = RunConfig::desk();
    c.material.law = law;
    c.discretization.macro_divisions = 2;
    c.discretization.cell_refine = 1;
    c.discretization.steps_per_period = 8;
    c.discretization.periods = 0.25;
    c.discretization.macro_gauss_points = 1;
    c
}

fn exp_law() -> MagneticLaw {
    MagneticLaw::Exponential(ExpLawParams::benchmark())
}

fn march(c: &RunConfig, mode: CellMode) -> (MacroSolver, Vec<StepReport>) {
    let mut s = MacroSolver::new(c, mode).unwrap();
    let grid = c.time_grid();
    let reps = (0..grid.n_steps).map(|_| s.step(grid.dt).unwrap()).collect();
    (s, reps)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

#[test]
fn boundary_conditions() {
    let s = MacroSolver::new(&small(exp_law()), CellMode::Dynamic).unwrap();
    for i in s.mesh().nodes_on(BoundaryTag::GammaInf) {
        assert!(s.dofs().node(i).is_none());
    }
    for i in s.mesh().nodes_on(BoundaryTag::GammaH) {
        assert!(s.dofs().node(i).is_none());
    }
    let v = s.mesh().nodes_on(BoundaryTag::GammaV);
    assert!(v.iter().any(|&i| s.dofs().node(i).is_some()));
    let smc = s.mesh().regions.iter().filter(|&&r| r == Region::Smc).count();
    assert_eq!(s.gauss_points().len(), smc);
    assert_eq!(s.cells().len(), smc);
}

#[test]
fn zero_source_gives_zero_everything() {
    let mut c = small(exp_law());
    c.source.js0 = 0.0;
    let (s, reps) = march(&c, CellMode::Dynamic);
    assert!(s.nodal().iter().all(|&v| v == 0.0));
    for r in &reps {
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.residuals, vec![0.0]);
    }
    for cell in s.cells() {
        assert!(cell.committed().x.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn linear_law_converges_in_one_update() {
    let (_, reps) = march(&small(MagneticLaw::Linear { nu: 500.0 }), CellMode::Dynamic);
    for r in &reps {
        assert_eq!(r.iterations, 1, "{}", r.log_line());
        assert!(r.loss >= 0.0);
    }
}

#[test]
fn dynamic_step_invariants_and_solve_counts() {
    let mut c = small(exp_law());
    c.source.js0 *= 100.0;
    c.discretization.periods = 0.375;
    let (s, reps) = march(&c, CellMode::Dynamic);
    let n_gp = s.gauss_points().len();
    for r in &reps {
        assert!(r.loss > 0.0);
        assert!(r.flux_mean_max <= 1e-10);
        assert!(r.grain_current_max <= 1e-8, "{}", r.log_line());
        assert!(r.cell_max_iterations <= 30 && r.cell_max_residual <= 1e-8);
        let last = *r.residuals.last().unwrap();
        assert!(last <= 1e-6 * r.residuals[0] || last <= 1e-13, "{}", r.log_line());
        let (last, updates) = r.cell_solves.split_last().unwrap();
        assert_eq!(*last, n_gp);
        assert!(updates.iter().all(|&k| k == 3 * n_gp));
        assert_eq!(updates.len(), r.iterations);
    }
    assert!(reps.iter().any(|r| r.iterations >= 2));
}

#[test]
fn one_and_three_point_rules_agree() {
    let mut c = small(exp_law());
    c.source.js0 *= 50.0;
    let (s1, r1) = march(&c, CellMode::Dynamic);
    c.discretization.macro_gauss_points = 3;
    let (s3, r3) = march(&c, CellMode::Dynamic);
    assert_eq!(s3.gauss_points().len(), 3 * s1.gauss_points().len());
    assert!(rel_diff(s3.nodal(), s1.nodal()) < 1e-9);
    for (a, b) in r1.iter().zip(&r3) {
        assert!((a.loss - b.loss).abs() <= 1e-8 * b.loss, "{} {}", a.loss, b.loss);
    }
}

#[test]
fn jacobian_vector_product_matches_fd_of_residual() {
    let mut c = small(exp_law());
    c.source.js0 *= 100.0;
    let mut s = MacroSolver::new(&c, CellMode::Dynamic).unwrap();
    let dt = c.time_grid().dt;
    s.step(dt).unwrap();
    let t = s.time() + dt;
    let x: Vec<f64> = s.nodal().iter().map(|v| 1.2 * v).collect();
    let j = s.jacobian(&x, t, dt).unwrap();
    let free = s.dofs().gather(&x);
    let v: Vec<f64> = (0..free.len()).map(|i| (0.7 * i as f64).sin()).collect();
    let jv = j.mul_vec(&v);
    let xn = free.iter().map(|a| a * a).sum::<f64>().sqrt();
    let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let eps = 1e-6 * xn / vn;
    let shifted = |sgn: f64| {
        let f: Vec<f64> = free.iter().zip(&v).map(|(a, d)| a + sgn * eps * d).collect();
        let mut nodal = x.clone();
        s.dofs().scatter(&f, &mut nodal);
        nodal
    };
    let (xp, xm) = (shifted(1.0), shifted(-1.0));
    let rp = s.residual(&xp, t, dt).unwrap();
    let rm = s.residual(&xm, t, dt).unwrap();
    let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    let err = rel_diff(&jv, &fd);
    assert!(err <= 1e-3, "J·v vs FD: {err:e}");
}

#[test]
fn jacobian_is_symmetric_for_reversible_laws() {
    let mut c = small(exp_law());
    c.source.js0 *= 100.0;
    for mode in [CellMode::Static, CellMode::Dynamic] {
        let mut s = MacroSolver::new(&c, mode).unwrap();
        let dt = c.time_grid().dt;
        s.step(dt).unwrap();
        let x = s.nodal().to_vec();
        let k = s.jacobian(&x, s.time(), dt).unwrap().to_dense();
        let asym = (&k - k.transpose()).amax();
        assert!(asym <= 1e-8 * k.amax(), "{mode:?}: {asym:e}");
    }
}

#[test]
fn uniform_vacuum_cells_reproduce_single_scale_jacobian() {
    let c = small(MagneticLaw::vacuum());
    let mut s = MacroSolver::new(&c, CellMode::Static).unwrap();
    let dt = c.time_grid().dt;
    let x = vec![0.0; s.mesh().n_nodes()];
    let k = s.jacobian(&x, dt, dt).unwrap().to_dense();
    let mut single = SparseMatrix::zeros(s.pattern.clone());
    let mut r = vec![0.0; s.dofs().n_dofs()];
    assemble_curl_term(
        s.mesh(),
        s.dofs(),
        &x,
        |_, b| Ok((b * NU0, Tangent2::identity() * NU0)),
        &mut r,
        Some(&mut single),
    )
    .unwrap();
    let diff = (&k - single.to_dense()).amax();
    assert!(diff <= 1e-6 * k.amax(), "{diff:e}");
}

#[test]
fn static_mode_is_the_slow_limit_of_dynamic_mode() {
    let mut c = small(MagneticLaw::Linear { nu: 800.0 });
    c.source.frequency = 1e-6;
    c.discretization.periods = 0.125;
    let (st, _) = march(&c, CellMode::Static);
    let (dy, _) = march(&c, CellMode::Dynamic);
    assert!(rel_diff(dy.nodal(), st.nodal()) <= 1e-8, "{:e}", rel_diff(dy.nodal(), st.nodal()));
}

#[test]
fn static_mode_ignores_the_time_step() {
    let mut c = small(exp_law());
    c.discretization.periods = 0.125;
    c.discretization.steps_per_period = 8;
    c.discretization.macro_tol = 1e-11;
    let (a, _) = march(&c, CellMode::Static);
    // same sample time, four times the step count
    c.discretization.steps_per_period = 32;
    let (b, _) = march(&c, CellMode::Static);
    assert!(rel_diff(a.nodal(), b.nodal()) <= 1e-8);
}

#[test]
fn reversing_the_source_reverses_the_solution() {
    let mut c = small(exp_law());
    c.source.js0 *= 50.0;
    let (a, ra) = march(&c, CellMode::Dynamic);
    c.source.negate = true;
    let (b, rb) = march(&c, CellMode::Dynamic);
    let neg: Vec<f64> = b.nodal().iter().map(|v| -v).collect();
    assert!(rel_diff(&neg, a.nodal()) <= 1e-10);
    for (x, y) in ra.iter().zip(&rb) {
        assert!((x.loss - y.loss).abs() <= 1e-10 * x.loss);
    }
}

#[test]
fn non_convergence_is_a_step_error() {
    let mut c = small(exp_law());
    c.discretization.macro_max_iter = 0;
    let mut s = MacroSolver::new(&c, CellMode::Dynamic).unwrap();
    let err = s.step(c.time_grid().dt).unwrap_err();
    assert!(matches!(err, Error::Step { step: 1, .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert!(s.cells().iter().all(|c| c.pending().is_none()));
}

#[test]
fn quarter_model_matches_full_domain() {
    let mut c = small(MagneticLaw::Linear { nu: 800.0 });
    c.discretization.periods = 0.125;
    let (q, _) = march(&c, CellMode::Static);
    c.geometry.quarter_symmetry = false;
    let (f, _) = march(&c, CellMode::Static);
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..q.mesh().n_triangles() {
        let p = q.mesh().centroid(t);
        let bf = f.flux_density()[f.mesh().locate(p).unwrap()];
        num += (q.flux_density()[t] - bf).norm_squared();
        den += bf.norm_squared();
    }
    assert!((num / den).sqrt() <= 0.01, "{}", (num / den).sqrt());
}

#[test]
fn probes_reconstruct_mesoscale_field() {
    let mut c = small(exp_law());
    c.discretization.periods = 0.125;
    let (s, _) = march(&c, CellMode::Dynamic);
    let (b, b_macro) = s.probe([50e-6, 50e-6]).unwrap();
    // grain centre: the mesoscale field exceeds the average along the drive
    assert!(b.x.abs() > b_macro.x.abs() && b_macro.x != 0.0);
    let (b, b_macro) = s.probe([350e-6, 700e-6]).unwrap();
    assert_eq!(b, b_macro);
    assert!(matches!(s.probe([1.0, 1.0]), Err(Error::Probe(_))));
    assert_eq!(s.fields(1).len(), s.mesh().n_triangles());
}
