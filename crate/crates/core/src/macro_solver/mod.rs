//! Macroscale FE-HMM solver: implicit-Euler time loop, Newton iteration on
//! the homogenised problem with the law and its tangent upscaled from one
//! cell problem per quadrature point of every SMC triangle.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::cell::{
    homogenize_conductivity, CellMode, CellModel, CellOutput, CellProblem, CellSources, NewtonSettings,
};
use crate::config::{MacroSigmaMode, RunConfig};
use crate::error::{Error, Result};
use crate::fem::{apply_constraints, Constraints, DofMap, Pattern, QuadRule, SparseMatrix, P1};
use crate::materials::{BVec, Tangent2, NU0};
use crate::mesh::{build_cell_mesh, build_macro_mesh, BoundaryTag, Region, TriMesh};
use crate::metrics::FieldRow;

/// Scaled residual treated as converged regardless of the initial one.
const RESIDUAL_FLOOR: f64 = 1e-13;

/// Quadrature point of an SMC triangle carrying one cell problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPoint {
    pub tri: usize,
    pub pos: [f64; 2],
    pub bary: [f64; 3],
    /// Quadrature weight times triangle area (m²).
    pub weight: f64,
}

/// Diagnostics of one accepted macro time step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    /// Newton updates performed.
    pub iterations: usize,
    /// Relative residual at every iterate, first to last.
    pub residuals: Vec<f64>,
    /// Cell solves issued by each residual evaluation.
    pub cell_solves: Vec<usize>,
    /// Failed cell solves, including those of a rejected first attempt.
    pub cell_failures: usize,
    pub tangent_fallbacks: usize,
    pub cell_max_iterations: usize,
    pub cell_max_residual: f64,
    /// Largest `|<1_z × ∇a_c>_Y|` over the accepted cell states (T).
    pub flux_mean_max: f64,
    /// Largest per-grain net correction current relative to its scale.
    pub grain_current_max: f64,
    /// Joule power per metre of depth over the full cross-section (W/m).
    pub loss: f64,
    pub retried: bool,
}

impl StepReport {
    /// `log(r_k/r_{k-1}) / log(r_{k-1}/r_{k-2})` over the last three residuals.
    pub fn convergence_order(&self) -> Option<f64> {
        let r = &self.residuals;
        if r.len() < 3 {
            return None;
        }
        let [a, b, c] = [r[r.len() - 3], r[r.len() - 2], r[r.len() - 1]];
        if !(a > 0.0 && b > 0.0 && c > 0.0) || a == b {
            return None;
        }
        Some((c / b).ln() / (b / a).ln())
    }

    pub fn log_line(&self) -> String {
        let hist: Vec<String> = self.residuals.iter().map(|r| format!("{r:.3e}")).collect();
        format!(
            "step {}, t {:.6e}, NR_iters {}, residual_history [{}], cell_failures {}, cell_solves {:?}, \
             cell_max_iter {}, cell_max_res {:.3e}, flux_mean_max {:.3e}, grain_current_max {:.3e}, \
             tangent_fallbacks {}, retried {}",
            self.step,
            self.t,
            self.iterations,
            hist.join(" "),
            self.cell_failures,
            self.cell_solves,
            self.cell_max_iterations,
            self.cell_max_residual,
            self.flux_mean_max,
            self.grain_current_max,
            self.tangent_fallbacks,
            self.retried,
        )
    }
}

struct Evaluation {
    r: Vec<f64>,
    rel: f64,
    outs: Vec<CellOutput>,
}

#[derive(Default)]
struct CellStats {
    failures: usize,
    fallbacks: usize,
    max_iterations: usize,
    max_residual: f64,
}

impl CellStats {
    fn record(&mut self, iterations: usize, residual: f64) {
        self.max_iterations = self.max_iterations.max(iterations);
        self.max_residual = self.max_residual.max(residual);
    }
}

/// Homogenised macro problem with its registry of cell problems.
pub struct MacroSolver {
    config: RunConfig,
    mode: CellMode,
    mesh: TriMesh,
    dofs: DofMap,
    pattern: Arc<Pattern>,
    elems: Vec<P1>,
    gauss: Vec<GaussPoint>,
    tri_gauss: Vec<Range<usize>>,
    cells: Vec<CellProblem>,
    sigma_m: f64,
    fallback: Tangent2,
    a: Vec<f64>,
    b: Vec<BVec>,
    a_before: Vec<f64>,
    last_dt: f64,
    t: f64,
    step: usize,
    symmetry: f64,
}

impl MacroSolver {
    pub fn new(config: &RunConfig, mode: CellMode) -> Result<Self> {
        config.validate()?;
        let geom = &config.geometry;
        let d = &config.discretization;
        let mesh = build_macro_mesh(geom, d.macro_divisions)?;
        let dofs = apply_constraints(
            &mesh,
            &Constraints {
                dirichlet: vec![BoundaryTag::GammaInf, BoundaryTag::GammaH],
                ..Default::default()
            },
        )?;
        let pattern = Arc::new(dofs.pattern(&mesh));
        let elems: Vec<P1> = (0..mesh.n_triangles()).map(|t| P1::new(&mesh.vertices(t))).collect();

        let materials = config.material.map();
        let cell_mesh = build_cell_mesh(geom, d.cell_refine)?;
        let sigma_m = match (mode, d.macro_sigma_mode) {
            (CellMode::Dynamic, MacroSigmaMode::Computed) => {
                homogenize_conductivity(&cell_mesh, |r| materials.conductivity(r))?.zz
            }
            _ => 0.0,
        };
        let settings = NewtonSettings {
            tol: d.cell_tol,
            max_iter: d.cell_max_iter,
            ..Default::default()
        };
        let model = Arc::new(CellModel::new(cell_mesh, materials.clone(), mode, settings)?);

        let rule = if d.macro_gauss_points == 1 {
            QuadRule::centroid()
        } else {
            QuadRule::degree2()
        };
        let mut gauss = Vec::new();
        let mut tri_gauss = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let start = gauss.len();
            if mesh.regions[t] == Region::Smc {
                let verts = mesh.vertices(t);
                for q in 0..rule.len() {
                    gauss.push(GaussPoint {
                        tri: t,
                        pos: rule.map(q, &verts),
                        bary: rule.points[q],
                        weight: rule.weights[q] * elems[t].area,
                    });
                }
            }
            tri_gauss.push(start..gauss.len());
        }
        let cells = (0..gauss.len()).map(|g| CellProblem::new(g, model.clone())).collect();
        let f = geom.fill_factor();
        let fallback = Tangent2::identity() * (f * materials.grain_law.initial_reluctivity() + (1.0 - f) * NU0);

        let n = mesh.n_nodes();
        let nt = mesh.n_triangles();
        Ok(Self {
            config: config.clone(),
            mode,
            mesh,
            dofs,
            pattern,
            elems,
            gauss,
            tri_gauss,
            cells,
            sigma_m,
            fallback,
            a: vec![0.0; n],
            b: vec![BVec::zeros(); nt],
            a_before: vec![0.0; n],
            last_dt: 0.0,
            t: 0.0,
            step: 0,
            symmetry: if geom.quarter_symmetry { 4.0 } else { 1.0 },
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn gauss_points(&self) -> &[GaussPoint] {
        &self.gauss
    }

    pub fn cells(&self) -> &[CellProblem] {
        &self.cells
    }

    pub fn sigma_m(&self) -> f64 {
        self.sigma_m
    }

    /// Committed nodal potential.
    pub fn nodal(&self) -> &[f64] {
        &self.a
    }

    /// Committed flux density per macro triangle.
    pub fn flux_density(&self) -> &[BVec] {
        &self.b
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    fn dynamic(&self) -> bool {
        self.mode == CellMode::Dynamic
    }

    fn sources(&self, nodal: &[f64], dt: f64) -> Vec<CellSources> {
        let curls: Vec<BVec> = self.elems.iter().zip(&self.mesh.triangles).map(|(e, tri)| e.curl(&tri.map(|n| nodal[n]))).collect();
        self.gauss
            .iter()
            .map(|g| {
                let tri = self.mesh.triangles[g.tri];
                if self.dynamic() {
                    let interp = |v: &[f64]| (0..3).map(|k| g.bary[k] * v[tri[k]]).sum::<f64>();
                    CellSources::from_macro(curls[g.tri], self.b[g.tri], interp(nodal), interp(&self.a), dt)
                } else {
                    CellSources::static_field(curls[g.tri])
                }
            })
            .collect()
    }

    fn source_sign(region: Region) -> f64 {
        match region {
            Region::InductorPos => 1.0,
            Region::InductorNeg => -1.0,
            _ => 0.0,
        }
    }

    /// Base cell solves and the macro residual at `nodal`.
    fn evaluate(&mut self, nodal: &[f64], js: f64, dt: f64, stats: &mut CellStats) -> Result<Evaluation> {
        let srcs = self.sources(nodal, dt);
        let results: Vec<Result<CellOutput>> =
            self.cells.par_iter_mut().zip(srcs.par_iter()).map(|(c, s)| c.solve(s)).collect();
        let mut outs = Vec::with_capacity(results.len());
        let mut first_err = None;
        for r in results {
            match r {
                Ok(o) => {
                    stats.record(o.diagnostics.iterations, o.diagnostics.final_residual());
                    outs.push(o);
                }
                Err(e) => {
                    stats.failures += 1;
                    first_err.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_err {
            return Err(e);
        }

        let n = self.dofs.n_dofs();
        let mut r = vec![0.0; n];
        let mut abs = vec![0.0; n];
        let mut add = |d: &[Option<usize>; 3], v: &[f64; 3]| {
            for (di, vi) in d.iter().zip(v) {
                if let Some(i) = di {
                    r[*i] += vi;
                    abs[*i] += vi.abs();
                }
            }
        };
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let e = &self.elems[t];
            let ed = self.dofs.element(tri);
            let region = self.mesh.regions[t];
            if region == Region::Smc {
                for g in self.tri_gauss[t].clone() {
                    let h = outs[g].law.h * (self.gauss[g].weight / e.area);
                    add(&ed, &e.curl_residual(&h));
                }
                if self.sigma_m > 0.0 {
                    let m = e.mass();
                    let mut v = [0.0; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            v[i] += self.sigma_m / dt * m[i][j] * (nodal[tri[j]] - self.a[tri[j]]);
                        }
                    }
                    add(&ed, &v);
                }
            } else {
                let b = e.curl(&tri.map(|k| nodal[k]));
                add(&ed, &e.curl_residual(&(b * NU0)));
                let s = Self::source_sign(region);
                if s != 0.0 {
                    let f = -s * js * e.lumped();
                    add(&ed, &[f, f, f]);
                }
            }
        }
        let num: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let den: f64 = abs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        };
        Ok(Evaluation { r, rel, outs })
    }

    /// Reduced Jacobian around the last base solves: perturbed cell solves
    /// give each quadrature point's upscaled tangent.
    fn jacobian_from_cells(&self, nodal: &[f64], dt: f64, stats: &mut CellStats) -> Result<SparseMatrix> {
        let srcs = self.sources(nodal, dt);
        let tangents: Vec<Result<(Tangent2, [crate::cell::CellDiagnostics; 2])>> =
            self.cells.par_iter().zip(srcs.par_iter()).map(|(c, s)| c.tangent(s)).collect();
        let mut k = SparseMatrix::zeros(self.pattern.clone());
        let mut tan = Vec::with_capacity(tangents.len());
        for (g, r) in tangents.into_iter().enumerate() {
            match r {
                Ok((t, diags)) => {
                    for d in &diags {
                        stats.record(d.iterations, d.final_residual());
                    }
                    tan.push(t);
                }
                Err(e) => {
                    log::warn!("tangent at gauss point {g} unavailable ({e}); using the averaged law");
                    stats.fallbacks += 1;
                    tan.push(self.fallback);
                }
            }
        }
        let nu0 = Tangent2::identity() * NU0;
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let e = &self.elems[t];
            let ed = self.dofs.element(tri);
            if self.mesh.regions[t] == Region::Smc {
                for g in self.tri_gauss[t].clone() {
                    k.add_block(&ed, &e.curl_stiffness(&(tan[g] * (self.gauss[g].weight / e.area))));
                }
                if self.sigma_m > 0.0 {
                    k.add_block(&ed, &e.mass().map(|row| row.map(|v| v * self.sigma_m / dt)));
                }
            } else {
                k.add_block(&ed, &e.curl_stiffness(&nu0));
            }
        }
        Ok(k)
    }

    fn js(&self, t: f64) -> f64 {
        self.config.source.current_density(t)
    }

    /// Macro residual (free dofs) at `nodal` for a step to `t` of size `dt`.
    /// Cell histories are not advanced.
    pub fn residual(&mut self, nodal: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
        let js = self.js(t);
        Ok(self.evaluate(nodal, js, dt, &mut CellStats::default())?.r)
    }

    /// Reduced Jacobian at `nodal`; runs the base solves first.
    pub fn jacobian(&mut self, nodal: &[f64], t: f64, dt: f64) -> Result<SparseMatrix> {
        let js = self.js(t);
        let mut stats = CellStats::default();
        self.evaluate(nodal, js, dt, &mut stats)?;
        self.jacobian_from_cells(nodal, dt, &mut stats)
    }

    /// Advances one step of size `dt`, halving it once on failure.
    pub fn step(&mut self, dt: f64) -> Result<StepReport> {
        let t_new = self.t + dt;
        let step = self.step + 1;
        match self.try_step(t_new, dt) {
            Ok(mut rep) => {
                rep.step = step;
                self.step = step;
                Ok(rep)
            }
            Err((first, failures)) => {
                log::warn!("step {step} failed ({first}); retrying with two half steps");
                let half = 0.5 * dt;
                let retry = self
                    .try_step(self.t + half, half)
                    .and_then(|_| self.try_step(t_new, half));
                match retry {
                    Ok(mut rep) => {
                        rep.step = step;
                        rep.dt = dt;
                        rep.retried = true;
                        rep.cell_failures += failures;
                        self.step = step;
                        Ok(rep)
                    }
                    Err((e, _)) => Err(Error::Step {
                        step,
                        t: t_new,
                        message: format!("{first}; retry with dt/2 failed: {e}"),
                    }),
                }
            }
        }
    }

    fn try_step(&mut self, t_new: f64, dt: f64) -> std::result::Result<StepReport, (Error, usize)> {
        let mut stats = CellStats::default();
        let res = self.newton(t_new, dt, &mut stats);
        match res {
            Ok(rep) => Ok(rep),
            Err(e) => {
                for c in &mut self.cells {
                    c.discard();
                }
                Err((e, stats.failures))
            }
        }
    }

    fn newton(&mut self, t_new: f64, dt: f64, stats: &mut CellStats) -> Result<StepReport> {
        let d = &self.config.discretization;
        let (tol, max_iter) = (d.macro_tol, d.macro_max_iter);
        let js = self.js(t_new);
        let mut x = self.a.clone();
        let mut residuals = Vec::new();
        let mut solves = Vec::new();
        let n_gp = self.gauss.len();
        for it in 0..=max_iter {
            let ev = self.evaluate(&x, js, dt, stats)?;
            residuals.push(ev.rel);
            solves.push(n_gp);
            if ev.rel <= tol * residuals[0] || ev.rel <= RESIDUAL_FLOOR {
                let loss = if self.dynamic() {
                    self.symmetry
                        * self.gauss.iter().zip(&ev.outs).map(|(g, o)| g.weight * o.law.loss_density).sum::<f64>()
                } else {
                    0.0
                };
                let flux_mean_max = ev.outs.iter().map(|o| o.flux_mean.norm()).fold(0.0, f64::max);
                let grain_current_max = ev
                    .outs
                    .iter()
                    .flat_map(|o| o.grain_currents.iter().zip(&o.grain_current_scale))
                    .map(|(i, s)| if *s > 0.0 { i.abs() / s } else { i.abs() })
                    .fold(0.0, f64::max);
                for c in &mut self.cells {
                    c.commit();
                }
                self.a_before = std::mem::replace(&mut self.a, x);
                self.b = self
                    .elems
                    .iter()
                    .zip(&self.mesh.triangles)
                    .map(|(e, tri)| e.curl(&tri.map(|n| self.a[n])))
                    .collect();
                self.t = t_new;
                self.last_dt = dt;
                return Ok(StepReport {
                    step: 0,
                    t: t_new,
                    dt,
                    iterations: it,
                    residuals,
                    cell_solves: solves,
                    cell_failures: stats.failures,
                    tangent_fallbacks: stats.fallbacks,
                    cell_max_iterations: stats.max_iterations,
                    cell_max_residual: stats.max_residual,
                    flux_mean_max,
                    grain_current_max,
                    loss,
                    retried: false,
                });
            }
            if it == max_iter || !ev.rel.is_finite() {
                break;
            }
            let k = self.jacobian_from_cells(&x, dt, stats)?;
            *solves.last_mut().expect("pushed") += 2 * n_gp;
            let rhs: Vec<f64> = ev.r.iter().map(|v| -v).collect();
            let dx = k.solve(&rhs)?;
            let mut free = self.dofs.gather(&x);
            for (xi, di) in free.iter_mut().zip(&dx) {
                *xi += di;
            }
            self.dofs.scatter(&free, &mut x);
        }
        Err(Error::Step {
            step: self.step + 1,
            t: t_new,
            message: format!("macro Newton did not converge: residuals {residuals:?}"),
        })
    }

    /// Homogenised and mesoscale flux density at a physical point.
    pub fn probe(&self, p: [f64; 2]) -> Result<(BVec, BVec)> {
        let t = self
            .mesh
            .locate(p)
            .ok_or_else(|| Error::Probe(format!("point ({:e}, {:e}) outside the macro mesh", p[0], p[1])))?;
        let b_macro = self.b[t];
        let range = self.tri_gauss[t].clone();
        if range.is_empty() {
            return Ok((b_macro, b_macro));
        }
        let dist = |g: usize| {
            let q = self.gauss[g].pos;
            (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)
        };
        let g = range.min_by(|&i, &j| dist(i).total_cmp(&dist(j))).expect("non-empty");
        let cell = &self.cells[g];
        let y = self.config.geometry.cell_coordinates(p);
        let b = cell.model().b_at(&b_macro, cell.committed(), y)?;
        Ok((b, b_macro))
    }

    /// Per-triangle macro fields of the committed step.
    pub fn fields(&self, step: usize) -> Vec<FieldRow> {
        let dt = self.last_dt;
        (0..self.mesh.n_triangles())
            .map(|t| {
                let c = self.mesh.centroid(t);
                let region = self.mesh.regions[t];
                let jz = match region {
                    Region::Smc if self.sigma_m > 0.0 && dt > 0.0 => {
                        let tri = self.mesh.triangles[t];
                        -self.sigma_m * tri.iter().map(|&n| self.a[n] - self.a_before[n]).sum::<f64>() / (3.0 * dt)
                    }
                    _ => Self::source_sign(region) * self.js(self.t),
                };
                FieldRow {
                    step,
                    t: self.t,
                    tri: t,
                    cx: c[0],
                    cy: c[1],
                    bx: self.b[t].x,
                    by: self.b[t].y,
                    jz,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests;
