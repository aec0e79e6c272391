//! P1 finite-element kernel for the scalar potential `a_z`.

mod dofs;
mod element;
mod quadrature;
mod sparse;

pub use dofs::{apply_constraints, Constraints, DofMap, ExtraDof, NodeDof};
pub use element::{rot, P1};
pub use quadrature::QuadRule;
pub use sparse::{Factorization, Pattern, PatternBuilder, SparseMatrix};

use crate::error::Result;
use crate::materials::{BVec, HVec, Tangent2};
use crate::mesh::{Region, TriMesh};

/// Adds `(σ/Δt) M` over conducting triangles.
pub fn assemble_mass_sigma(
    mesh: &TriMesh,
    dofs: &DofMap,
    sigma: impl Fn(Region) -> f64,
    dt: f64,
    mat: &mut SparseMatrix,
) {
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let s = sigma(mesh.regions[t]);
        if s == 0.0 {
            continue;
        }
        let m = P1::new(&mesh.vertices(t)).mass().map(|row| row.map(|v| v * s / dt));
        mat.add_block(&dofs.element(tri), &m);
    }
}

/// Adds `∫ h·(1_z×∇φ_i)` to `residual` and, if given, the tangent
/// `∫ (1_z×∇φ_i)·T(1_z×∇φ_j)` to `mat`. `law(t, b)` returns `(h, T)` for the
/// piecewise-constant `b` of triangle `t`.
pub fn assemble_curl_term(
    mesh: &TriMesh,
    dofs: &DofMap,
    nodal: &[f64],
    mut law: impl FnMut(usize, &BVec) -> Result<(HVec, Tangent2)>,
    residual: &mut [f64],
    mut mat: Option<&mut SparseMatrix>,
) -> Result<()> {
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let e = P1::new(&mesh.vertices(t));
        let b = e.curl(&tri.map(|n| nodal[n]));
        let (h, tangent) = law(t, &b)?;
        let ed = dofs.element(tri);
        for (r, d) in e.curl_residual(&h).iter().zip(&ed) {
            if let Some(d) = d {
                residual[*d] += r;
            }
        }
        if let Some(m) = mat.as_deref_mut() {
            m.add_block(&ed, &e.curl_stiffness(&tangent));
        }
    }
    Ok(())
}

/// Piecewise-constant `b = 1_z × ∇a` on every triangle.
pub fn element_curls(mesh: &TriMesh, nodal: &[f64]) -> Vec<BVec> {
    (0..mesh.n_triangles())
        .map(|t| P1::new(&mesh.vertices(t)).curl(&mesh.triangles[t].map(|n| nodal[n])))
        .collect()
}
