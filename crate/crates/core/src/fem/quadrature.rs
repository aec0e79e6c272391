/// Quadrature rule on the reference triangle in barycentric coordinates.
/// Weights sum to one; multiply by the element area.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    /// Centroid rule, exact for degree 1.
    pub fn centroid() -> Self {
        Self {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }

    /// Three interior points, exact for degree 2.
    pub fn degree2() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        Self {
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical location of point `q` on triangle `v`.
    pub fn map(&self, q: usize, v: &[[f64; 2]; 3]) -> [f64; 2] {
        let l = self.points[q];
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(rule: &QuadRule, f: impl Fn(f64, f64) -> f64) -> f64 {
        // reference triangle (0,0),(1,0),(0,1), area 1/2
        let v = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        (0..rule.len())
            .map(|q| {
                let p = rule.map(q, &v);
                rule.weights[q] * f(p[0], p[1])
            })
            .sum::<f64>()
            * 0.5
    }

    #[test]
    fn weights_sum_to_one() {
        for r in [QuadRule::centroid(), QuadRule::degree2()] {
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for p in &r.points {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degree2_is_exact_on_quadratics() {
        let r = QuadRule::degree2();
        assert!((integrate(&r, |_, _| 1.0) - 0.5).abs() < 1e-15);
        assert!((integrate(&r, |x, _| x) - 1.0 / 6.0).abs() < 1e-15);
        assert!((integrate(&r, |x, _| x * x) - 1.0 / 12.0).abs() < 1e-15);
        assert!((integrate(&r, |x, y| x * y) - 1.0 / 24.0).abs() < 1e-15);
        assert!((integrate(&QuadRule::centroid(), |x, y| 3.0 * x - y) - 1.0 / 3.0).abs() < 1e-15);
    }
}
