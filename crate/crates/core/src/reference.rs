//! Fullscale eddy-current solver with every grain resolved.
//!
//! Unknowns are the nodal potential and, optionally, one constant `u_k` per
//! grain so that `e = −∂t a − u_k` carries no net current through an
//! insulated grain.

use std::sync::Arc;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fem::{apply_constraints, Constraints, DofMap, Pattern, SparseMatrix, P1};
use crate::macro_solver::StepReport;
use crate::materials::{BVec, MaterialMap, MaterialState};
use crate::mesh::{build_reference_mesh, BoundaryTag, Region, TriMesh};
use crate::metrics::FieldRow;

pub type BoundaryFn = Box<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;
pub type SourceFn = Box<dyn Fn(Region, f64) -> f64 + Send + Sync>;

/// Problem definition for [`ReferenceSolver::from_setup`].
pub struct ReferenceSetup {
    pub mesh: TriMesh,
    pub materials: MaterialMap,
    /// Boundaries with prescribed potential.
    pub dirichlet: Vec<BoundaryTag>,
    /// `a(x, t)` on the Dirichlet boundaries; zero when absent.
    pub boundary_value: Option<BoundaryFn>,
    /// Source current density `j_s(region, t)`.
    pub source: SourceFn,
    pub grain_constants: bool,
    /// Multiplier applied to the integrated losses (symmetry images).
    pub loss_factor: f64,
    pub tol: f64,
    pub max_iter: usize,
}

pub struct ReferenceSolver {
    setup: ReferenceSetup,
    dofs: DofMap,
    pattern: Arc<Pattern>,
    elems: Vec<P1>,
    sigma: Vec<f64>,
    grain_dof: Vec<Option<usize>>,
    a: Vec<f64>,
    a_prev: Vec<f64>,
    u: Vec<f64>,
    states: Vec<MaterialState>,
    last_dt: f64,
    t: f64,
    step: usize,
}

struct Assembly {
    r: Vec<f64>,
    rel: f64,
    states: Vec<MaterialState>,
}

impl ReferenceSolver {
    /// SMC benchmark on the fullscale mesh.
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let d = &config.discretization;
        let mesh = build_reference_mesh(&config.geometry, d.reference_refine)?;
        let src = config.source;
        Self::from_setup(ReferenceSetup {
            mesh,
            materials: config.material.map(),
            dirichlet: vec![BoundaryTag::GammaInf, BoundaryTag::GammaH],
            boundary_value: None,
            source: Box::new(move |r, t| match r {
                Region::InductorPos => src.current_density(t),
                Region::InductorNeg => -src.current_density(t),
                _ => 0.0,
            }),
            grain_constants: d.reference_grain_constants && config.material.sigma > 0.0,
            loss_factor: if config.geometry.quarter_symmetry { 4.0 } else { 1.0 },
            tol: d.reference_tol,
            max_iter: d.reference_max_iter,
        })
    }

    pub fn from_setup(setup: ReferenceSetup) -> Result<Self> {
        let mesh = &setup.mesh;
        let dofs = apply_constraints(
            mesh,
            &Constraints {
                dirichlet: setup.dirichlet.clone(),
                grain_constants: setup.grain_constants,
                ..Default::default()
            },
        )?;
        let pattern = Arc::new(dofs.pattern(mesh));
        let elems: Vec<P1> = (0..mesh.n_triangles()).map(|t| P1::new(&mesh.vertices(t))).collect();
        let sigma: Vec<f64> = mesh.regions.iter().map(|&r| setup.materials.conductivity(r)).collect();
        let grain_dof = mesh.regions.iter().map(|r| r.grain().and_then(|g| dofs.grain(g))).collect();
        let states = mesh.regions.iter().map(|&r| setup.materials.law(r).initial_state()).collect();
        let n = mesh.n_nodes();
        let n_extra = dofs.extras().len();
        Ok(Self {
            dofs,
            pattern,
            elems,
            sigma,
            grain_dof,
            a: vec![0.0; n],
            a_prev: vec![0.0; n],
            u: vec![0.0; n_extra],
            states,
            last_dt: 0.0,
            t: 0.0,
            step: 0,
            setup,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.setup.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn nodal(&self) -> &[f64] {
        &self.a
    }

    /// Per-grain constants, in the order of the dof map's extras.
    pub fn grain_constants(&self) -> &[f64] {
        &self.u
    }

    /// Notes when the mesh cannot resolve the skin depth at the run
    /// frequency, or grains are covered by too few elements.
    pub fn resolution_warnings_at(&self, frequency: f64) -> Vec<String> {
        let mesh = &self.setup.mesh;
        let mut out = Vec::new();
        let law = &self.setup.materials.grain_law;
        let sigma = self.setup.materials.grain_sigma;
        let h_max = (0..mesh.n_triangles())
            .filter(|&t| self.sigma[t] > 0.0)
            .map(|t| (2.0 * mesh.area(t)).sqrt())
            .fold(0.0, f64::max);
        if sigma > 0.0 && h_max > 0.0 {
            let delta = skin_depth(law.initial_reluctivity(), sigma, frequency);
            if h_max > delta / 3.0 {
                out.push(format!(
                    "conductor element size {h_max:.3e} m exceeds a third of the skin depth {delta:.3e} m"
                ));
            }
        }
        out
    }

    fn apply_boundary(&self, t: f64, nodal: &mut [f64]) {
        let Some(g) = &self.setup.boundary_value else { return };
        for (i, p) in self.setup.mesh.nodes.iter().enumerate() {
            if self.dofs.node(i).is_none() {
                nodal[i] = g(*p, t);
            }
        }
    }

    fn assemble(&self, a: &[f64], u: &[f64], t: f64, dt: f64, mut k: Option<&mut SparseMatrix>) -> Result<Assembly> {
        let mesh = &self.setup.mesh;
        let n = self.dofs.n_dofs();
        let n_nodes = self.dofs.n_node_dofs();
        let mut r = vec![0.0; n];
        let mut abs = vec![0.0; n];
        let mut states = Vec::with_capacity(mesh.n_triangles());
        let mut add = |i: Option<usize>, v: f64| {
            if let Some(i) = i {
                r[i] += v;
                abs[i] += v.abs();
            }
        };
        for (ti, tri) in mesh.triangles.iter().enumerate() {
            let e = &self.elems[ti];
            let ed = self.dofs.element(tri);
            let region = mesh.regions[ti];
            let av = tri.map(|n| a[n]);
            let resp = self.setup.materials.law(region).evaluate(&e.curl(&av), &self.states[ti])?;
            for (d, v) in ed.iter().zip(e.curl_residual(&resp.h)) {
                add(*d, v);
            }
            if let Some(k) = k.as_deref_mut() {
                k.add_block(&ed, &e.curl_stiffness(&resp.tangent));
            }
            states.push(resp.state);

            let js = (self.setup.source)(region, t);
            if js != 0.0 {
                for d in &ed {
                    add(*d, -js * e.lumped());
                }
            }
            let s = self.sigma[ti];
            if s == 0.0 {
                continue;
            }
            let rate = tri.map(|n| (a[n] - self.a[n]) / dt);
            let m = e.mass();
            let g = self.grain_dof[ti];
            let ug = g.map_or(0.0, |g| u[g - n_nodes]);
            for i in 0..3 {
                let mv: f64 = (0..3).map(|j| m[i][j] * rate[j]).sum();
                add(ed[i], s * (mv + ug * e.lumped()));
            }
            if let Some(k) = k.as_deref_mut() {
                k.add_block(&ed, &m.map(|row| row.map(|v| v * s / dt)));
            }
            if let Some(g) = g {
                // constraint row scaled by dt to keep the system symmetric
                let sum: f64 = (0..3).map(|j| a[tri[j]] - self.a[tri[j]]).sum();
                add(Some(g), s * (e.lumped() * sum + dt * ug * e.area));
                if let Some(k) = k.as_deref_mut() {
                    for d in ed.iter().flatten() {
                        k.add(*d, g, s * e.lumped());
                        k.add(g, *d, s * e.lumped());
                    }
                    k.add(g, g, s * dt * e.area);
                }
            }
        }
        let num = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let den = abs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        };
        Ok(Assembly { r, rel, states })
    }

    /// Joule power `∫σ|∂t a + u|²` of the step from the committed state to `a`.
    fn loss(&self, a: &[f64], u: &[f64], dt: f64) -> f64 {
        let mesh = &self.setup.mesh;
        let n_nodes = self.dofs.n_node_dofs();
        let mut p = 0.0;
        for (ti, tri) in mesh.triangles.iter().enumerate() {
            let s = self.sigma[ti];
            if s == 0.0 {
                continue;
            }
            let ug = self.grain_dof[ti].map_or(0.0, |g| u[g - n_nodes]);
            let w = tri.map(|n| (a[n] - self.a[n]) / dt + ug);
            let sum: f64 = w.iter().sum();
            let sq: f64 = w.iter().map(|v| v * v).sum();
            p += s * self.elems[ti].area / 12.0 * (sq + sum * sum);
        }
        self.setup.loss_factor * p
    }

    /// Advances one implicit-Euler step, halving `dt` once on failure.
    pub fn step(&mut self, dt: f64) -> Result<StepReport> {
        let step = self.step + 1;
        let t_new = self.t + dt;
        let first = match self.newton(t_new, dt) {
            Ok(mut rep) => {
                rep.step = step;
                self.step = step;
                return Ok(rep);
            }
            Err(e) => e,
        };
        log::warn!("reference step {step} failed ({first}); retrying with two half steps");
        let half = 0.5 * dt;
        let retry = self.newton(self.t + half, half).and_then(|_| self.newton(t_new, half));
        match retry {
            Ok(mut rep) => {
                rep.step = step;
                rep.dt = dt;
                rep.retried = true;
                self.step = step;
                Ok(rep)
            }
            Err(e) => Err(Error::Step {
                step,
                t: t_new,
                message: format!("{first}; retry with dt/2 failed: {e}"),
            }),
        }
    }

    fn newton(&mut self, t_new: f64, dt: f64) -> Result<StepReport> {
        let n_nodes = self.dofs.n_node_dofs();
        let mut a = self.a.clone();
        self.apply_boundary(t_new, &mut a);
        let mut u = self.u.clone();
        let mut residuals = Vec::new();
        for it in 0..=self.setup.max_iter {
            let mut k = SparseMatrix::zeros(self.pattern.clone());
            let asm = self.assemble(&a, &u, t_new, dt, Some(&mut k))?;
            residuals.push(asm.rel);
            if asm.rel <= self.setup.tol {
                let loss = self.loss(&a, &u, dt);
                self.a_prev = std::mem::replace(&mut self.a, a);
                self.u = u;
                self.states = asm.states;
                self.t = t_new;
                self.last_dt = dt;
                return Ok(StepReport {
                    t: t_new,
                    dt,
                    iterations: it,
                    residuals,
                    loss,
                    ..Default::default()
                });
            }
            if it == self.setup.max_iter || !asm.rel.is_finite() {
                break;
            }
            let rhs: Vec<f64> = asm.r.iter().map(|v| -v).collect();
            let dx = k.solve(&rhs)?;
            let mut free = self.dofs.gather(&a);
            free[n_nodes..].copy_from_slice(&u);
            for (xi, di) in free.iter_mut().zip(&dx) {
                *xi += di;
            }
            self.dofs.scatter(&free, &mut a);
            u = free[n_nodes..].to_vec();
        }
        Err(Error::Step {
            step: self.step + 1,
            t: t_new,
            message: format!("reference Newton did not converge: residuals {residuals:?}"),
        })
    }

    /// Flux density of the committed step at a physical point.
    pub fn probe(&self, p: [f64; 2]) -> Result<BVec> {
        let mesh = &self.setup.mesh;
        let t = mesh
            .locate(p)
            .ok_or_else(|| Error::Probe(format!("point ({:e}, {:e}) outside the reference mesh", p[0], p[1])))?;
        Ok(self.elems[t].curl(&mesh.triangles[t].map(|n| self.a[n])))
    }

    /// Current density `σ e + j_s` at the centroid of triangle `t`.
    pub fn current_density(&self, t: usize) -> f64 {
        let mesh = &self.setup.mesh;
        let js = (self.setup.source)(mesh.regions[t], self.t);
        if self.sigma[t] == 0.0 || self.last_dt == 0.0 {
            return js;
        }
        let n_nodes = self.dofs.n_node_dofs();
        let tri = mesh.triangles[t];
        let rate = tri.iter().map(|&n| self.a[n] - self.a_prev[n]).sum::<f64>() / (3.0 * self.last_dt);
        let ug = self.grain_dof[t].map_or(0.0, |g| self.u[g - n_nodes]);
        js - self.sigma[t] * (rate + ug)
    }

    pub fn fields(&self, step: usize) -> Vec<FieldRow> {
        let mesh = &self.setup.mesh;
        (0..mesh.n_triangles())
            .map(|t| {
                let c = mesh.centroid(t);
                let b = self.elems[t].curl(&mesh.triangles[t].map(|n| self.a[n]));
                FieldRow {
                    step,
                    t: self.t,
                    tri: t,
                    cx: c[0],
                    cy: c[1],
                    bx: b.x,
                    by: b.y,
                    jz: self.current_density(t),
                }
            })
            .collect()
    }
}

/// Skin depth `sqrt(2ν/(ωσ))` of a linear conductor.
pub fn skin_depth(nu: f64, sigma: f64, frequency: f64) -> f64 {
    (2.0 * nu / (2.0 * std::f64::consts::PI * frequency * sigma)).sqrt()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::config::RunConfig;
    use crate::materials::MagneticLaw;
    use crate::mesh::grid::{RectGrid, Side};

    const NU: f64 = 1000.0;
    const SIGMA: f64 = 5e6;

    /// Conducting slab `|x| < d` driven by `a = sin(ωt)` on both faces.
    fn slab(d: f64, nx: usize, frequency: f64) -> ReferenceSolver {
        let xs = (0..=nx).map(|i| -d + 2.0 * d * i as f64 / nx as f64).collect();
        let grid = RectGrid { xs, ys: vec![0.0, d / 10.0] };
        let mesh = grid.triangulate(
            |_| Region::Grain(0),
            |s| match s {
                Side::Left | Side::Right => BoundaryTag::GammaInf,
                _ => BoundaryTag::GammaV,
            },
        );
        let omega = 2.0 * PI * frequency;
        ReferenceSolver::from_setup(ReferenceSetup {
            mesh,
            materials: MaterialMap::new(MagneticLaw::Linear { nu: NU }, SIGMA),
            dirichlet: vec![BoundaryTag::GammaInf],
            boundary_value: Some(Box::new(move |_, t| (omega * t).sin())),
            source: Box::new(|_, _| 0.0),
            grain_constants: false,
            loss_factor: 1.0,
            tol: 1e-10,
            max_iter: 10,
        })
        .unwrap()
    }

    /// `Im[cosh(kx)/cosh(kd) e^{iωt}]` with `k = (1+i)/δ`.
    fn slab_exact(x: f64, d: f64, delta: f64, omega: f64, t: f64) -> f64 {
        let cosh = |u: f64| (u.cosh() * u.cos(), u.sinh() * u.sin());
        let (nr, ni) = cosh(x / delta);
        let (dr, di) = cosh(d / delta);
        let den = dr * dr + di * di;
        let (qr, qi) = ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den);
        let (c, s) = ((omega * t).cos(), (omega * t).sin());
        qr * s + qi * c
    }

    #[test]
    fn slab_matches_the_skin_effect_solution() {
        let f = 50.0;
        let delta = skin_depth(NU, SIGMA, f);
        let d = delta;
        let mut solver = slab(d, 40, f);
        let spp = 1000;
        let dt = 1.0 / (f * spp as f64);
        let centre = solver.mesh().nodes.iter().position(|p| p[0].abs() < 1e-12 * d).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..3 * spp {
            solver.step(dt).unwrap();
            if k >= 2 * spp {
                let exact = slab_exact(0.0, d, delta, 2.0 * PI * f, solver.time());
                worst = worst.max((solver.nodal()[centre] - exact).abs());
            }
        }
        // the centre amplitude is about 0.77 of the drive
        assert!(worst < 0.01, "max deviation {worst}");
    }

    fn mean_loss(frequency: f64) -> f64 {
        let d = 0.1 * skin_depth(NU, SIGMA, frequency);
        let mut solver = slab(d, 8, frequency);
        let spp = 200;
        let dt = 1.0 / (frequency * spp as f64);
        let mut sum = 0.0;
        for k in 0..2 * spp {
            let rep = solver.step(dt).unwrap();
            if k >= spp {
                sum += rep.loss;
            }
        }
        sum / spp as f64
    }

    #[test]
    fn thin_slab_losses_scale_with_frequency_squared() {
        // same slab at both frequencies
        let d = 0.1 * skin_depth(NU, SIGMA, 100.0);
        let run = |f: f64| {
            let mut solver = slab(d, 8, f);
            let spp = 200;
            let dt = 1.0 / (f * spp as f64);
            let mut sum = 0.0;
            for k in 0..2 * spp {
                let rep = solver.step(dt).unwrap();
                if k >= spp {
                    sum += rep.loss;
                }
            }
            sum / spp as f64
        };
        let ratio = run(100.0) / run(50.0);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
        assert!(mean_loss(50.0) > 0.0);
    }

    fn desk() -> RunConfig {
        let mut c = RunConfig::desk();
        c.discretization.reference_refine = 1;
        c
    }

    #[test]
    fn zero_source_stays_at_rest() {
        let mut c = desk();
        c.source.js0 = 0.0;
        let mut solver = ReferenceSolver::new(&c).unwrap();
        let dt = c.time_grid().dt;
        for _ in 0..3 {
            let rep = solver.step(dt).unwrap();
            assert_eq!(rep.loss, 0.0);
        }
        assert!(solver.nodal().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn grains_carry_no_net_current() {
        let c = desk();
        let mut solver = ReferenceSolver::new(&c).unwrap();
        let dt = c.time_grid().dt;
        for _ in 0..3 {
            solver.step(dt).unwrap();
        }
        let mesh = solver.mesh();
        let n_nodes = solver.dofs.n_node_dofs();
        let mut net = std::collections::BTreeMap::<u32, (f64, f64)>::new();
        for t in 0..mesh.n_triangles() {
            if let Some(g) = mesh.regions[t].grain() {
                let area = mesh.area(t);
                let tri = mesh.triangles[t];
                let rate = tri.iter().map(|&n| solver.a[n] - solver.a_prev[n]).sum::<f64>() / (3.0 * dt);
                let u = solver.grain_dof[t].map_or(0.0, |k| solver.u[k - n_nodes]);
                let e = net.entry(g).or_default();
                e.0 += solver.current_density(t) * area;
                // the rate and the grain constant nearly cancel
                e.1 += c.material.sigma * (rate.abs() + u.abs()) * area;
            }
        }
        assert!(!net.is_empty());
        for (g, (sum, abs)) in net {
            assert!(abs > 0.0);
            assert!(sum.abs() <= 1e-8 * abs, "grain {g}: {sum:e} of {abs:e}");
        }
    }

    #[test]
    fn coarse_mesh_warns_at_high_frequency() {
        let solver = ReferenceSolver::new(&desk()).unwrap();
        assert!(solver.resolution_warnings_at(50.0).is_empty());
        let w = solver.resolution_warnings_at(1e7);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("skin depth"));
    }

    #[test]
    fn skin_depth_formula() {
        let d = skin_depth(NU, SIGMA, 50.0);
        assert!((d - (2.0 * NU / (2.0 * PI * 50.0 * SIGMA)).sqrt()).abs() < 1e-18);
    }
}
