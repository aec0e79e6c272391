use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::error::Result;
use crate::fem::{apply_constraints, Constraints, ExtraDof, SparseMatrix, P1};
use crate::mesh::{Region, TriMesh};

/// Relative conductivity given to insulating triangles so that the in-plane
/// cell problem stays solvable.
const FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogenizedConductivity {
    /// Out-of-plane conductivity `<σ>_Y` (S/m).
    pub zz: f64,
    /// In-plane effective tensor (S/m); vanishes for isolated grains.
    pub in_plane: Matrix2<f64>,
}

/// Homogenised conductivity of a periodic cell.
pub fn homogenize_conductivity(mesh: &TriMesh, sigma: impl Fn(Region) -> f64) -> Result<HomogenizedConductivity> {
    let area = mesh.total_area();
    let s: Vec<f64> = mesh.regions.iter().map(|&r| sigma(r)).collect();
    let zz = (0..mesh.n_triangles()).map(|t| s[t] * mesh.area(t)).sum::<f64>() / area;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(HomogenizedConductivity {
            zz: 0.0,
            in_plane: Matrix2::zeros(),
        });
    }
    let s: Vec<f64> = s.iter().map(|&v| v.max(FLOOR * smax)).collect();

    let dofs = apply_constraints(
        mesh,
        &Constraints {
            periodic: true,
            zero_mean: true,
            ..Default::default()
        },
    )?;
    let lambda = dofs.extra(ExtraDof::ZeroMean).expect("gauge dof");
    let elems: Vec<P1> = (0..mesh.n_triangles()).map(|t| P1::new(&mesh.vertices(t))).collect();
    let mut k = SparseMatrix::zeros(Arc::new(dofs.pattern(mesh)));
    for (t, e) in elems.iter().enumerate() {
        let block = std::array::from_fn(|i| std::array::from_fn(|j| s[t] * e.area * e.grads[i].dot(&e.grads[j])));
        k.add_block(&dofs.element(&mesh.triangles[t]), &block);
        for d in dofs.element(&mesh.triangles[t]).into_iter().flatten() {
            k.add(d, lambda, e.lumped());
            k.add(lambda, d, e.lumped());
        }
    }
    let mut in_plane = Matrix2::zeros();
    for dir in 0..2 {
        let mut field = Vector2::zeros();
        field[dir] = 1.0;
        let mut rhs = vec![0.0; dofs.n_dofs()];
        for (t, e) in elems.iter().enumerate() {
            for (i, d) in dofs.element(&mesh.triangles[t]).into_iter().enumerate() {
                if let Some(d) = d {
                    rhs[d] -= s[t] * e.area * e.grads[i].dot(&field);
                }
            }
        }
        let phi = k.solve(&rhs)?;
        let mut current = Vector2::zeros();
        for (t, e) in elems.iter().enumerate() {
            let ed = dofs.element(&mesh.triangles[t]);
            let mut grad = field;
            for (i, d) in ed.into_iter().enumerate() {
                if let Some(d) = d {
                    grad += e.grads[i] * phi[d];
                }
            }
            current += grad * (s[t] * e.area);
        }
        in_plane.set_column(dir, &(current / area));
    }
    Ok(HomogenizedConductivity { zz, in_plane })
}
