use std::sync::Arc;

use super::{CellSources, UpscaledLaw};
use crate::error::{Error, Result};
use crate::fem::{apply_constraints, Constraints, DofMap, ExtraDof, Factorization, Pattern, SparseMatrix, P1};
use crate::materials::{BVec, HVec, MaterialMap, MaterialState, Tangent2};
use crate::mesh::TriMesh;

/// Relative residual required of the linear constraint rows.
const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellMode {
    /// Eddy currents with per-grain constants.
    Dynamic,
    /// Magnetostatic cell: no conduction terms.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Relative residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Step length used after two consecutive residual increases.
    pub relaxation: f64,
    /// A reused Jacobian is refactored once the residual shrinks by less
    /// than this factor per iteration.
    pub chord_rate: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 30,
            relaxation: 0.5,
            chord_rate: 0.1,
        }
    }
}

/// Converged (or initial) unknowns and material history of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    /// Dof vector: node dofs, grain constants, gauge multiplier.
    pub x: Vec<f64>,
    /// One history per cell triangle.
    pub materials: Vec<MaterialState>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellDiagnostics {
    pub iterations: usize,
    /// Relative residual before each update and at the accepted iterate.
    pub residuals: Vec<f64>,
}

impl CellDiagnostics {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    pub state: CellState,
    pub h: HVec,
    pub loss_density: f64,
    /// `<1_z × ∇a_c>_Y`.
    pub flux_mean: BVec,
    /// Net current `∫σ e_m` per grain constant (A/m).
    pub grain_currents: Vec<f64>,
    /// `∫σ|e_src|` per grain, for relative checks.
    pub grain_current_scale: Vec<f64>,
    pub diagnostics: CellDiagnostics,
    /// Last Jacobian factorization, reused by nearby solves.
    pub jacobian: Option<Arc<Factorization>>,
}

/// Per-triangle cell fields for dumps and probes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellField {
    pub tri: usize,
    pub centroid: [f64; 2],
    pub b: BVec,
    pub jz: f64,
}

/// Immutable cell data shared by all cell problems of a run.
#[derive(Debug)]
pub struct CellModel {
    mesh: TriMesh,
    dofs: DofMap,
    pattern: Arc<Pattern>,
    elems: Vec<P1>,
    sigma: Vec<f64>,
    grain_dof: Vec<Option<usize>>,
    lambda: usize,
    lumped: Vec<f64>,
    area: f64,
    mode: CellMode,
    materials: MaterialMap,
    settings: NewtonSettings,
}

struct Assembly {
    r: Vec<f64>,
    abs: Vec<f64>,
    h: Vec<HVec>,
    states: Vec<MaterialState>,
}

impl CellModel {
    /// `mesh` must be a periodic cell centred on the origin.
    pub fn new(mesh: TriMesh, materials: MaterialMap, mode: CellMode, settings: NewtonSettings) -> Result<Self> {
        // a non-conducting cell has no eddy currents to constrain
        let dynamic = mode == CellMode::Dynamic && materials.grain_sigma > 0.0;
        let dofs = apply_constraints(
            &mesh,
            &Constraints {
                dirichlet: Vec::new(),
                periodic: true,
                grain_constants: dynamic,
                zero_mean: true,
            },
        )?;
        let pattern = Arc::new(dofs.pattern(&mesh));
        let elems: Vec<P1> = (0..mesh.n_triangles()).map(|t| P1::new(&mesh.vertices(t))).collect();
        let sigma: Vec<f64> = mesh
            .regions
            .iter()
            .map(|&r| if dynamic { materials.conductivity(r) } else { 0.0 })
            .collect();
        let grain_dof = mesh
            .regions
            .iter()
            .map(|r| r.grain().and_then(|g| dofs.grain(g)))
            .collect();
        let mut lumped = vec![0.0; dofs.n_node_dofs()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for d in dofs.element(tri).into_iter().flatten() {
                lumped[d] += elems[t].lumped();
            }
        }
        let lambda = dofs.extra(ExtraDof::ZeroMean).expect("gauge dof");
        let area = mesh.total_area();
        Ok(Self {
            mesh,
            dofs,
            pattern,
            elems,
            sigma,
            grain_dof,
            lambda,
            lumped,
            area,
            mode,
            materials,
            settings,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn mode(&self) -> CellMode {
        self.mode
    }

    pub fn materials(&self) -> &MaterialMap {
        &self.materials
    }

    pub fn settings(&self) -> &NewtonSettings {
        &self.settings
    }

    /// Cell area `|Y|`.
    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn initial_state(&self) -> CellState {
        CellState {
            x: vec![0.0; self.dofs.n_dofs()],
            materials: self
                .mesh
                .regions
                .iter()
                .map(|&r| self.materials.law(r).initial_state())
                .collect(),
        }
    }

    /// Nodal values of `a_c`.
    pub fn nodal(&self, state: &CellState) -> Vec<f64> {
        let mut a = vec![0.0; self.mesh.n_nodes()];
        self.dofs.scatter(&state.x, &mut a);
        a
    }

    /// Grain constants in the order of [`DofMap::extras`].
    pub fn grain_constants(&self, state: &CellState) -> Vec<f64> {
        self.dofs
            .extras()
            .iter()
            .zip(&state.x[self.dofs.n_node_dofs()..])
            .filter(|(e, _)| matches!(e, ExtraDof::GrainConstant(_)))
            .map(|(_, v)| *v)
            .collect()
    }

    fn element_values(&self, t: usize, x: &[f64]) -> [f64; 3] {
        self.mesh.triangles[t].map(|n| self.dofs.node(n).map_or(0.0, |d| x[d]))
    }

    /// `(a − a_prev)/Δt − e_src` at the vertices of triangle `t`.
    fn rate_minus_source(&self, t: usize, x: &[f64], prev: &[f64], src: &CellSources) -> [f64; 3] {
        let a = self.element_values(t, x);
        let ap = self.element_values(t, prev);
        let v = self.mesh.vertices(t);
        std::array::from_fn(|j| (a[j] - ap[j]) / src.dt - src.e_src(v[j]))
    }

    /// Magnitudes of the terms making up [`Self::rate_minus_source`].
    fn rate_source_scale(&self, t: usize, x: &[f64], prev: &[f64], src: &CellSources) -> [f64; 3] {
        let a = self.element_values(t, x);
        let ap = self.element_values(t, prev);
        let v = self.mesh.vertices(t);
        std::array::from_fn(|j| (a[j].abs() + ap[j].abs()) / src.dt + src.e_src(v[j]).abs())
    }

    fn assemble(
        &self,
        x: &[f64],
        prev: &CellState,
        src: &CellSources,
        mut mat: Option<&mut SparseMatrix>,
    ) -> Result<Assembly> {
        let n = self.dofs.n_dofs();
        let mut r = vec![0.0; n];
        let mut abs = vec![0.0; n];
        let mut hs = Vec::with_capacity(self.elems.len());
        let mut states = Vec::with_capacity(self.elems.len());
        for (t, e) in self.elems.iter().enumerate() {
            let tri = &self.mesh.triangles[t];
            let ed = self.dofs.element(tri);
            let b = src.b_m + e.curl(&self.element_values(t, x));
            let resp = self
                .materials
                .law(self.mesh.regions[t])
                .evaluate(&b, &prev.materials[t])?;
            for (c, d) in e.curl_residual(&resp.h).iter().zip(&ed) {
                if let Some(d) = *d {
                    r[d] += c;
                    abs[d] += c.abs();
                }
            }
            if let Some(m) = mat.as_deref_mut() {
                m.add_block(&ed, &e.curl_stiffness(&resp.tangent));
            }
            hs.push(resp.h);
            states.push(resp.state);

            let s = self.sigma[t];
            if s == 0.0 {
                continue;
            }
            let g = self.grain_dof[t].expect("conducting triangle outside a grain");
            let u = x[g];
            let v = self.rate_minus_source(t, x, &prev.x, src);
            let mass = e.mass();
            let third = e.lumped();
            let mut ru = 0.0;
            let mut ru_abs = 0.0;
            let scale = self.rate_source_scale(t, x, &prev.x, src);
            for i in 0..3 {
                let ri = s * ((0..3).map(|j| mass[i][j] * v[j]).sum::<f64>() + u * third);
                if let Some(d) = ed[i] {
                    r[d] += ri;
                    abs[d] += ri.abs();
                }
                ru += s * third * v[i];
                ru_abs += s * third * scale[i];
            }
            ru += s * u * e.area;
            r[g] += ru;
            abs[g] += ru_abs + (s * u * e.area).abs();
            if let Some(m) = mat.as_deref_mut() {
                m.add_block(&ed, &mass.map(|row| row.map(|mij| s * mij / src.dt)));
                for d in ed.into_iter().flatten() {
                    m.add(d, g, s * third);
                    m.add(g, d, s * third / src.dt);
                }
                m.add(g, g, s * e.area);
            }
        }
        let lam = x[self.lambda];
        let mut mean = 0.0;
        let mut mean_abs = 0.0;
        for (d, &m) in self.lumped.iter().enumerate() {
            r[d] += lam * m;
            mean += m * x[d];
            mean_abs += (m * x[d]).abs();
        }
        r[self.lambda] = mean;
        abs[self.lambda] = mean_abs;
        if let Some(mat) = mat {
            for (d, &m) in self.lumped.iter().enumerate() {
                mat.add(d, self.lambda, m);
                mat.add(self.lambda, d, m);
            }
        }
        Ok(Assembly {
            r,
            abs,
            h: hs,
            states,
        })
    }

    fn relative_residual(&self, a: &Assembly) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for d in (0..a.r.len()).filter(|&d| d != self.lambda) {
            num += a.r[d] * a.r[d];
            den += a.abs[d] * a.abs[d];
        }
        if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            (num / den).sqrt()
        }
    }

    /// The grain-current and gauge rows are linear, so they are held to
    /// roundoff rather than to the Newton tolerance.
    fn constraints_hold(&self, a: &Assembly) -> bool {
        (self.dofs.n_node_dofs()..a.r.len()).all(|d| a.r[d].abs() <= CONSTRAINT_TOL * a.abs[d])
    }

    /// One implicit-Euler cell step by Newton iteration, starting from
    /// `warm`. `prev` is the committed state of the previous time step.
    pub fn solve(&self, gauss_point: usize, src: &CellSources, prev: &CellState, warm: &CellState) -> Result<CellSolution> {
        self.solve_reusing(gauss_point, src, prev, warm, None)
    }

    /// As [`CellModel::solve`], but starts with the given Jacobian factors
    /// and refactors only when they stop contracting the residual.
    pub fn solve_reusing(
        &self,
        gauss_point: usize,
        src: &CellSources,
        prev: &CellState,
        warm: &CellState,
        jacobian: Option<Arc<Factorization>>,
    ) -> Result<CellSolution> {
        let s = &self.settings;
        let mut x = warm.x.clone();
        let mut residuals: Vec<f64> = Vec::new();
        let mut increases = 0;
        let mut step = 1.0;
        let mut jac = jacobian;
        // iterate, residual and Newton right-hand side before a step that
        // used reused factors
        let mut chord_from: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        for it in 0..=s.max_iter {
            let mut asm = self.assemble(&x, prev, src, None);
            if let Some((x0, r0, rhs0)) = chord_from.take() {
                let rel = asm.as_ref().map_or(f64::INFINITY, |a| self.relative_residual(a));
                if !(rel <= s.chord_rate * r0) {
                    // redo the step from the same iterate with fresh factors
                    let fresh = self.factorize(&x0, prev, src)?;
                    x = x0;
                    self.apply_step(&mut x, &fresh.solve(&rhs0)?, step);
                    jac = Some(fresh);
                    asm = self.assemble(&x, prev, src, None);
                }
            }
            let asm = asm?;
            let rel = self.relative_residual(&asm);
            if let Some(&last) = residuals.last() {
                increases = if rel > last { increases + 1 } else { 0 };
                if increases >= 2 {
                    step = s.relaxation;
                }
            }
            residuals.push(rel);
            if rel <= s.tol && self.constraints_hold(&asm) {
                let diagnostics = CellDiagnostics { iterations: it, residuals };
                let mut sol = self.finish(x, asm, prev, src, diagnostics);
                sol.jacobian = jac;
                return Ok(sol);
            }
            if it == s.max_iter || !rel.is_finite() {
                break;
            }
            let rhs: Vec<f64> = asm.r.iter().map(|v| -v).collect();
            let factors = match &jac {
                Some(j) => {
                    chord_from = Some((x.clone(), rel, rhs.clone()));
                    j.clone()
                }
                None => {
                    let j = self.factorize(&x, prev, src)?;
                    jac = Some(j.clone());
                    j
                }
            };
            self.apply_step(&mut x, &factors.solve(&rhs)?, step);
        }
        Err(Error::Cell { gauss_point, residuals })
    }

    fn factorize(&self, x: &[f64], prev: &CellState, src: &CellSources) -> Result<Arc<Factorization>> {
        let mut k = SparseMatrix::zeros(self.pattern.clone());
        self.assemble(x, prev, src, Some(&mut k))?;
        Ok(Arc::new(k.factorize()?))
    }

    fn apply_step(&self, x: &mut [f64], dx: &[f64], step: f64) {
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += step * di;
        }
    }

    fn finish(&self, x: Vec<f64>, asm: Assembly, prev: &CellState, src: &CellSources, diagnostics: CellDiagnostics) -> CellSolution {
        let mut h = HVec::zeros();
        let mut flux = BVec::zeros();
        let n_extra = self.dofs.extras().len();
        let mut currents = vec![0.0; n_extra];
        let mut scale = vec![0.0; n_extra];
        let mut loss = 0.0;
        for (t, e) in self.elems.iter().enumerate() {
            h += asm.h[t] * e.area;
            flux += e.curl(&self.element_values(t, &x)) * e.area;
            let s = self.sigma[t];
            if s == 0.0 {
                continue;
            }
            let g = self.grain_dof[t].expect("grain dof");
            let v = self.rate_minus_source(t, &x, &prev.x, src);
            // e_m = −(v + u), linear on the triangle
            let w = v.map(|vj| -(vj + x[g]));
            let sum: f64 = w.iter().sum();
            let sq: f64 = w.iter().map(|wj| wj * wj).sum();
            loss += s * e.area / 12.0 * (sq + sum * sum);
            let k = g - self.dofs.n_node_dofs();
            currents[k] += s * e.lumped() * sum;
            let verts = self.mesh.vertices(t);
            scale[k] += s * e.lumped() * verts.iter().map(|&y| src.e_src(y).abs()).sum::<f64>();
        }
        let keep: Vec<usize> = self
            .dofs
            .extras()
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, ExtraDof::GrainConstant(_)))
            .map(|(k, _)| k)
            .collect();
        CellSolution {
            h: h / self.area,
            loss_density: loss / self.area,
            flux_mean: flux / self.area,
            grain_currents: keep.iter().map(|&k| currents[k]).collect(),
            grain_current_scale: keep.iter().map(|&k| scale[k]).collect(),
            state: CellState {
                x,
                materials: asm.states,
            },
            diagnostics,
            jacobian: None,
        }
    }

    /// FD perturbation size for the upscaled tangent.
    pub fn perturbation(b: &BVec) -> f64 {
        1e-4f64.max(1e-4 * b.norm())
    }

    /// Forward-difference tangent `dh_M/db_M` from two perturbed solves
    /// warm-started at `base`, including the induced change of `ḃ_M`. Each
    /// component is perturbed in the direction of its sign.
    /// Reversible laws give a symmetric tangent; its FD noise is symmetrised.
    pub fn tangent(
        &self,
        gauss_point: usize,
        src: &CellSources,
        prev: &CellState,
        base: &CellSolution,
    ) -> Result<(Tangent2, [CellDiagnostics; 2])> {
        let size = Self::perturbation(&src.b_m);
        let mut t = Tangent2::zeros();
        let mut diags: [CellDiagnostics; 2] = Default::default();
        for c in 0..2 {
            // stepping away from zero keeps the tangent even in b_M
            let delta = size.copysign(src.b_m[c]);
            let sol = self.solve_reusing(gauss_point, &src.perturbed(c, delta), prev, &base.state, base.jacobian.clone())?;
            let dh = (sol.h - base.h) / delta;
            t[(0, c)] = dh[0];
            t[(1, c)] = dh[1];
            diags[c] = sol.diagnostics;
        }
        if self.materials.grain_law.is_reversible() {
            t = (t + t.transpose()) * 0.5;
        }
        Ok((t, diags))
    }

    /// Triangle-wise total flux density and current density.
    pub fn fields(&self, src: &CellSources, prev: &CellState, state: &CellState) -> Vec<CellField> {
        (0..self.elems.len())
            .map(|t| {
                let b = src.b_m + self.elems[t].curl(&self.element_values(t, &state.x));
                let jz = if self.sigma[t] > 0.0 {
                    let g = self.grain_dof[t].expect("grain dof");
                    let v = self.rate_minus_source(t, &state.x, &prev.x, src);
                    -self.sigma[t] * (v.iter().sum::<f64>() / 3.0 + state.x[g])
                } else {
                    0.0
                };
                CellField {
                    tri: t,
                    centroid: self.mesh.centroid(t),
                    b,
                    jz,
                }
            })
            .collect()
    }

    /// Total mesoscale flux density at cell coordinate `y`.
    pub fn b_at(&self, b_m: &BVec, state: &CellState, y: [f64; 2]) -> Result<BVec> {
        let t = self
            .mesh
            .locate(y)
            .ok_or_else(|| Error::Probe(format!("point ({:e}, {:e}) outside the cell", y[0], y[1])))?;
        Ok(b_m + self.elems[t].curl(&self.element_values(t, &state.x)))
    }
}

/// Outcome of a base cell solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub law: UpscaledLaw,
    pub flux_mean: BVec,
    pub grain_currents: Vec<f64>,
    pub grain_current_scale: Vec<f64>,
    pub diagnostics: CellDiagnostics,
}

/// Cell problem bound to one macroscale quadrature point. Owns its history;
/// trial solutions stay pending until [`CellProblem::commit`].
#[derive(Debug, Clone)]
pub struct CellProblem {
    id: usize,
    model: Arc<CellModel>,
    committed: CellState,
    pending: Option<CellSolution>,
    jacobian: Option<Arc<Factorization>>,
}

impl CellProblem {
    pub fn new(id: usize, model: Arc<CellModel>) -> Self {
        let committed = model.initial_state();
        Self {
            id,
            model,
            committed,
            pending: None,
            jacobian: None,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn model(&self) -> &Arc<CellModel> {
        &self.model
    }

    pub fn committed(&self) -> &CellState {
        &self.committed
    }

    pub fn pending(&self) -> Option<&CellSolution> {
        self.pending.as_ref()
    }

    /// Base solve for the current macro iterate.
    pub fn solve(&mut self, src: &CellSources) -> Result<CellOutput> {
        let warm = self.pending.as_ref().map_or(&self.committed, |p| &p.state);
        let sol = self
            .model
            .solve_reusing(self.id, src, &self.committed, warm, self.jacobian.clone())?;
        self.jacobian = sol.jacobian.clone();
        let out = CellOutput {
            law: UpscaledLaw {
                h: sol.h,
                tangent: None,
                loss_density: sol.loss_density,
            },
            flux_mean: sol.flux_mean,
            grain_currents: sol.grain_currents.clone(),
            grain_current_scale: sol.grain_current_scale.clone(),
            diagnostics: sol.diagnostics.clone(),
        };
        self.pending = Some(sol);
        Ok(out)
    }

    /// Upscaled tangent around the last base solve.
    pub fn tangent(&self, src: &CellSources) -> Result<(Tangent2, [CellDiagnostics; 2])> {
        let base = self.pending.as_ref().ok_or_else(|| Error::Cell {
            gauss_point: self.id,
            residuals: Vec::new(),
        })?;
        self.model.tangent(self.id, src, &self.committed, base)
    }

    /// Accepts the last base solve as the new history.
    pub fn commit(&mut self) {
        if let Some(p) = self.pending.take() {
            self.committed = p.state;
        }
    }

    /// Drops the trial solution (time-step retry).
    pub fn discard(&mut self) {
        self.pending = None;
    }
}
