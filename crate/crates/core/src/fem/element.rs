use nalgebra::Vector2;

use crate::materials::Tangent2;

/// `1_z × g = (−g_y, g_x)`.
#[inline]
pub fn rot(g: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-g[1], g[0])
}

/// Linear Lagrange triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P1 {
    pub area: f64,
    /// Gradients of the three shape functions (constant on the element).
    pub grads: [Vector2<f64>; 3],
}

impl P1 {
    /// Assumes counter-clockwise vertices.
    pub fn new(v: &[[f64; 2]; 3]) -> Self {
        let d = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
        let grads = std::array::from_fn(|i| {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            Vector2::new(v[j][1] - v[k][1], v[k][0] - v[j][0]) / d
        });
        Self { area: 0.5 * d, grads }
    }

    /// `b = 1_z × ∇a` for nodal values `a`.
    pub fn curl(&self, a: &[f64; 3]) -> Vector2<f64> {
        rot(&(self.grads[0] * a[0] + self.grads[1] * a[1] + self.grads[2] * a[2]))
    }

    /// `∫ h · (1_z × ∇φ_i)`.
    pub fn curl_residual(&self, h: &Vector2<f64>) -> [f64; 3] {
        std::array::from_fn(|i| self.area * h.dot(&rot(&self.grads[i])))
    }

    /// `∫ (1_z × ∇φ_i) · T (1_z × ∇φ_j)`.
    pub fn curl_stiffness(&self, t: &Tangent2) -> [[f64; 3]; 3] {
        let r: [Vector2<f64>; 3] = std::array::from_fn(|i| rot(&self.grads[i]));
        std::array::from_fn(|i| std::array::from_fn(|j| self.area * r[i].dot(&(t * r[j]))))
    }

    /// Consistent mass matrix `∫ φ_i φ_j = area/12 (1 + δ_ij)`.
    pub fn mass(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.area / 12.0 * if i == j { 2.0 } else { 1.0 }))
    }

    /// `∫ φ_i`.
    pub fn lumped(&self) -> f64 {
        self.area / 3.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_of_unit_triangle() {
        let e = P1::new(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(e.area, 0.5);
        assert_eq!(e.grads[0], Vector2::new(-1.0, -1.0));
        assert_eq!(e.grads[1], Vector2::new(1.0, 0.0));
        assert_eq!(e.grads[2], Vector2::new(0.0, 1.0));
    }

    #[test]
    fn curl_of_linear_field() {
        // a = s x  ->  b = (0, s)
        let v = [[0.1, 0.2], [0.7, 0.3], [0.2, 0.9]];
        let e = P1::new(&v);
        let s = 2.5;
        let b = e.curl(&[s * v[0][0], s * v[1][0], s * v[2][0]]);
        assert!((b - Vector2::new(0.0, s)).norm() < 1e-13);
        // a = s y  ->  b = (-s, 0)
        let b = e.curl(&[s * v[0][1], s * v[1][1], s * v[2][1]]);
        assert!((b - Vector2::new(-s, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn isotropic_curl_stiffness_is_laplacian() {
        let e = P1::new(&[[0.0, 0.0], [2.0, 0.3], [0.4, 1.1]]);
        let nu = 7.0;
        let k = e.curl_stiffness(&(Tangent2::identity() * nu));
        for i in 0..3 {
            for j in 0..3 {
                let lap = nu * e.area * e.grads[i].dot(&e.grads[j]);
                assert!((k[i][j] - lap).abs() < 1e-12 * lap.abs().max(1.0));
            }
            assert!(k[i].iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn mass_matrix_matches_exact_integrals() {
        let e = P1::new(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let m = e.mass();
        // ∫φ0² over the unit right triangle is 1/12, ∫φ0φ1 is 1/24
        assert!((m[0][0] - 1.0 / 12.0).abs() < 1e-15);
        assert!((m[0][1] - 1.0 / 24.0).abs() < 1e-15);
        let trace: f64 = (0..3).map(|i| m[i][i]).sum();
        assert!((trace - e.area / 2.0).abs() < 1e-15);
        for row in &m {
            assert!((row.iter().sum::<f64>() - e.lumped()).abs() < 1e-15);
        }
    }
}
