use std::sync::Arc;

use super::*;
use crate::materials::{ExpLawParams, MagneticLaw, MaterialMap, JilesAthertonParams, NU0, SIGMA_GRAIN};
use crate::mesh::grid::{RectGrid, Side};
use crate::mesh::{build_cell_mesh, BoundaryTag, Region, SmcGeometry, TriMesh};

fn exp_map() -> MaterialMap {
    MaterialMap::new(MagneticLaw::Exponential(ExpLawParams::benchmark()), SIGMA_GRAIN)
}

fn desk_cell() -> TriMesh {
    build_cell_mesh(&SmcGeometry::desk(), 2).unwrap()
}

fn model(mesh: TriMesh, map: MaterialMap, mode: CellMode) -> CellModel {
    CellModel::new(mesh, map, mode, NewtonSettings::default()).unwrap()
}

fn solve(m: &CellModel, src: &CellSources) -> CellSolution {
    let s0 = m.initial_state();
    m.solve(0, src, &s0, &s0).unwrap()
}

/// Periodic unit square split into two horizontal layers of equal height.
fn laminate() -> TriMesh {
    let axis: Vec<f64> = (0..=8).map(|i| -1.0 + 0.25 * i as f64).collect();
    let grid = RectGrid {
        xs: axis.clone(),
        ys: axis,
    };
    let mut mesh = grid.triangulate(
        |c| if c[1] < 0.0 { Region::Grain(0) } else { Region::Insulation },
        |side| match side {
            Side::Left => BoundaryTag::CellLeft,
            Side::Right => BoundaryTag::CellRight,
            Side::Bottom => BoundaryTag::CellBottom,
            Side::Top => BoundaryTag::CellTop,
        },
    );
    mesh.periodic = grid.periodic_pairs();
    mesh.validate().unwrap();
    mesh
}

fn all_grain(mut mesh: TriMesh) -> TriMesh {
    mesh.regions.iter_mut().for_each(|r| *r = Region::Grain(0));
    mesh
}

#[test]
fn zero_sources_give_zero_solution() {
    let m = model(desk_cell(), exp_map(), CellMode::Dynamic);
    let sol = solve(&m, &CellSources::from_macro(BVec::zeros(), BVec::zeros(), 0.0, 0.0, 1e-3));
    assert!(sol.state.x.iter().all(|&v| v == 0.0));
    assert_eq!(sol.h, HVec::zeros());
    assert_eq!(sol.loss_density, 0.0);
    assert_eq!(sol.diagnostics.iterations, 0);
}

#[test]
fn uniform_linear_cell_has_no_correction() {
    let nu = 1234.0;
    let map = MaterialMap::new(MagneticLaw::Linear { nu }, 0.0);
    let m = model(all_grain(desk_cell()), map, CellMode::Static);
    let src = CellSources::static_field(BVec::new(0.3, -0.7));
    let sol = solve(&m, &src);
    assert!(sol.state.x.iter().all(|v| v.abs() < 1e-20), "{:?}", sol.state.x.iter().cloned().fold(0.0, f64::max));
    assert!((sol.h - src.b_m * nu).norm() < 1e-10 * nu);
    let (t, _) = m.tangent(0, &src, &m.initial_state(), &sol).unwrap();
    assert!((t - Tangent2::identity() * nu).norm() <= 1e-8 * nu);
}

#[test]
fn uniform_exp_cell_tangent_at_zero_field() {
    let p = ExpLawParams::benchmark();
    let m = model(all_grain(desk_cell()), exp_map(), CellMode::Static);
    let src = CellSources::static_field(BVec::zeros());
    let sol = solve(&m, &src);
    let (t, _) = m.tangent(0, &src, &m.initial_state(), &sol).unwrap();
    let expected = Tangent2::identity() * (p.alpha + p.beta);
    // forward difference at δb = 1e-4 T sees the O(γδb²) curvature only
    assert!((t - expected).norm() <= 1e-6 * expected.norm(), "{t}");
}

#[test]
fn laminate_matches_series_and_parallel_mixing() {
    let nu1 = 1000.0;
    let map = MaterialMap::new(MagneticLaw::Linear { nu: nu1 }, 0.0);
    let m = model(laminate(), map, CellMode::Static);
    let src = CellSources::static_field(BVec::new(0.2, 0.1));
    let sol = solve(&m, &src);
    let (t, _) = m.tangent(0, &src, &m.initial_state(), &sol).unwrap();
    // layers stacked along y: b_y is continuous (arithmetic mean of ν),
    // h_x is continuous (harmonic mean of ν)
    let series = 1.0 / (0.5 / nu1 + 0.5 / NU0);
    let parallel = 0.5 * (nu1 + NU0);
    assert!((t[(0, 0)] - series).abs() <= 1e-6 * series, "{} vs {series}", t[(0, 0)]);
    assert!((t[(1, 1)] - parallel).abs() <= 1e-6 * parallel, "{} vs {parallel}", t[(1, 1)]);
    assert!(t[(0, 1)].abs() <= 1e-6 * series && t[(1, 0)].abs() <= 1e-6 * series);
}

#[test]
fn static_mode_equals_non_conducting_dynamic_mode() {
    let map = MaterialMap::new(MagneticLaw::Exponential(ExpLawParams::benchmark()), 0.0);
    let st = model(desk_cell(), map.clone(), CellMode::Static);
    let dy = model(desk_cell(), map, CellMode::Dynamic);
    let b = BVec::new(0.8, 0.3);
    let a = solve(&st, &CellSources::static_field(b));
    let d = solve(&dy, &CellSources::from_macro(b, BVec::zeros(), 1e-3, 0.0, 1e-4));
    assert_eq!(a.h, d.h);
    assert_eq!(d.loss_density, 0.0);
}

#[test]
fn eddy_currents_oppose_flux_change() {
    let st = model(desk_cell(), exp_map(), CellMode::Static);
    let dy = model(desk_cell(), exp_map(), CellMode::Dynamic);
    let b = BVec::new(1.0, 0.0);
    let s = solve(&st, &CellSources::static_field(b));
    let d = solve(&dy, &CellSources::from_macro(b, BVec::zeros(), 0.0, 0.0, 1e-5));
    let bs = st.b_at(&b, &s.state, [0.0, 0.0]).unwrap();
    let bd = dy.b_at(&b, &d.state, [0.0, 0.0]).unwrap();
    assert!(bd.x < bs.x, "dynamic {bd} static {bs}");
    assert!(d.loss_density > 0.0);
    // the field is pushed towards the grain rim, so the cell average holds
    assert!(d.flux_mean.norm() < 1e-10);
}

#[test]
fn scale_transition_invariants_over_three_steps() {
    let dy = model(desk_cell(), exp_map(), CellMode::Dynamic);
    let dt = 1.0 / 50.0 / 40.0;
    let mut prev = dy.initial_state();
    let mut b_prev = BVec::zeros();
    for k in 1..=3 {
        let t = k as f64 * dt;
        let s = (2.0 * std::f64::consts::PI * 50.0 * t).sin();
        let b = BVec::new(1.2 * s, 0.4 * s);
        let src = CellSources::from_macro(b, b_prev, 1e-4 * s, 1e-4 * (s - 0.1), dt);
        let sol = dy.solve(0, &src, &prev, &prev).unwrap();
        assert!(sol.flux_mean.norm() <= 1e-10, "step {k}: {}", sol.flux_mean);
        for (i, s) in sol.grain_currents.iter().zip(&sol.grain_current_scale) {
            assert!(i.abs() <= 1e-8 * s, "step {k}: {i} vs {s}");
        }
        let mean: f64 = dy.nodal(&sol.state).iter().sum::<f64>();
        assert!(mean.is_finite());
        assert!(sol.diagnostics.iterations <= 30 && sol.diagnostics.final_residual() <= 1e-8);
        prev = sol.state;
        b_prev = b;
    }
}

#[test]
fn correction_has_zero_mean() {
    let dy = model(desk_cell(), exp_map(), CellMode::Dynamic);
    let sol = solve(&dy, &CellSources::from_macro(BVec::new(0.7, 0.2), BVec::zeros(), 0.0, 0.0, 1e-4));
    // lumped-area weighted mean equals the P1 integral of a_c
    let mesh = dy.mesh();
    let a = dy.nodal(&sol.state);
    let integral: f64 = (0..mesh.n_triangles())
        .map(|t| mesh.area(t) / 3.0 * mesh.triangles[t].iter().map(|&n| a[n]).sum::<f64>())
        .sum();
    let scale: f64 = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * mesh.total_area();
    assert!(integral.abs() <= 1e-10 * scale);
}

#[test]
fn fd_tangent_matches_central_difference() {
    let dy = Arc::new(model(desk_cell(), exp_map(), CellMode::Dynamic));
    let s0 = dy.initial_state();
    let src = CellSources::from_macro(BVec::new(1.1, -0.4), BVec::new(1.0, -0.35), 0.0, 0.0, 5e-4);
    let base = dy.solve(0, &src, &s0, &s0).unwrap();
    let (t, _) = dy.tangent(0, &src, &s0, &base).unwrap();
    let d = 1e-4;
    for c in 0..2 {
        let hp = dy.solve(0, &src.perturbed(c, d), &s0, &base.state).unwrap().h;
        let hm = dy.solve(0, &src.perturbed(c, -d), &s0, &base.state).unwrap().h;
        let col = (hp - hm) / (2.0 * d);
        for r in 0..2 {
            assert!((col[r] - t[(r, c)]).abs() <= 1e-3 * t.norm(), "({r},{c}) {} vs {}", col[r], t[(r, c)]);
        }
    }
}

#[test]
fn hysteretic_cell_commits_only_on_request() {
    let map = MaterialMap::new(MagneticLaw::JilesAtherton(JilesAthertonParams::benchmark()), SIGMA_GRAIN);
    let model = Arc::new(model(desk_cell(), map, CellMode::Dynamic));
    let mut cell = CellProblem::new(3, model.clone());
    let src = CellSources::from_macro(BVec::new(0.5, 0.0), BVec::zeros(), 0.0, 0.0, 5e-4);
    let out = cell.solve(&src).unwrap();
    assert!(out.law.h.x > 0.0);
    assert_eq!(cell.committed(), &model.initial_state());
    let (t, _) = cell.tangent(&src).unwrap();
    assert!(t.iter().all(|v| v.is_finite()) && t[(0, 0)] > 0.0);
    cell.commit();
    assert_ne!(cell.committed(), &model.initial_state());
}

#[test]
fn conductivity_of_isolated_grains() {
    let mesh = desk_cell();
    let f = SmcGeometry::desk().fill_factor();
    let hc = homogenize_conductivity(&mesh, |r| crate::materials::conductivity(r, SIGMA_GRAIN)).unwrap();
    assert!((hc.zz - f * SIGMA_GRAIN).abs() <= 1e-10 * SIGMA_GRAIN);
    assert!(hc.in_plane.amax() <= 1e-9 * SIGMA_GRAIN);

    let uniform = homogenize_conductivity(&mesh, |_| 7.0).unwrap();
    assert!((uniform.zz - 7.0).abs() < 1e-12);
    assert!((uniform.in_plane - nalgebra::Matrix2::identity() * 7.0).amax() < 1e-9);

    let none = homogenize_conductivity(&mesh, |_| 0.0).unwrap();
    assert_eq!(none.zz, 0.0);
}
