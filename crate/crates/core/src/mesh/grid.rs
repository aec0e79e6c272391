//! Structured rectilinear grid split into triangles.

use super::{BoundaryEdge, BoundaryTag, PeriodicPair, Region, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Tensor-product grid. Grid lines include every breakpoint exactly.
#[derive(Debug, Clone)]
pub(crate) struct RectGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Subdivides each interval between consecutive breakpoints into
/// `ceil(len / spacing(interval))` equal pieces. Zero-length intervals are
/// dropped.
pub(crate) fn graded_axis(breaks: &[f64], spacing: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = vec![breaks[0]];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        if len <= 1e-12 * b.abs().max(a.abs()).max(1e-30) {
            continue;
        }
        let h = spacing(a, b);
        let n = ((len / h) - 1e-9).ceil().max(1.0) as usize;
        for i in 1..n {
            out.push(a + len * i as f64 / n as f64);
        }
        out.push(b);
    }
    out
}

impl RectGrid {
    fn node(&self, i: usize, j: usize) -> usize {
        j * self.xs.len() + i
    }

    /// Triangulates every grid rectangle along one diagonal, rising in the
    /// first and third quadrants and falling in the others. Region tags are
    /// decided from rectangle centres.
    pub fn triangulate(
        &self,
        region_of: impl Fn([f64; 2]) -> Region,
        boundary_of: impl Fn(Side) -> BoundaryTag,
    ) -> TriMesh {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let mut mesh = TriMesh::default();
        for &y in &self.ys {
            for &x in &self.xs {
                mesh.nodes.push([x, y]);
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let centre = [
                    0.5 * (self.xs[i] + self.xs[i + 1]),
                    0.5 * (self.ys[j] + self.ys[j + 1]),
                ];
                let region = region_of(centre);
                let (n00, n10) = (self.node(i, j), self.node(i + 1, j));
                let (n01, n11) = (self.node(i, j + 1), self.node(i + 1, j + 1));
                // diagonals mirror across the axes so symmetric domains
                // get symmetric meshes
                if centre[0] * centre[1] >= 0.0 {
                    mesh.triangles.push([n00, n10, n11]);
                    mesh.triangles.push([n00, n11, n01]);
                } else {
                    mesh.triangles.push([n00, n10, n01]);
                    mesh.triangles.push([n10, n11, n01]);
                }
                mesh.regions.push(region);
                mesh.regions.push(region);
            }
        }
        let mut push = |a: usize, b: usize, side: Side| {
            mesh.boundary_edges.push(BoundaryEdge {
                nodes: [a, b],
                tag: boundary_of(side),
            });
        };
        for i in 0..nx - 1 {
            push(self.node(i, 0), self.node(i + 1, 0), Side::Bottom);
            push(self.node(i + 1, ny - 1), self.node(i, ny - 1), Side::Top);
        }
        for j in 0..ny - 1 {
            push(self.node(nx - 1, j), self.node(nx - 1, j + 1), Side::Right);
            push(self.node(0, j + 1), self.node(0, j), Side::Left);
        }
        mesh
    }

    /// Periodic identification of the right/top boundary onto the left/bottom
    /// one; all four corners collapse onto the bottom-left node.
    pub fn periodic_pairs(&self) -> Vec<PeriodicPair> {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let mut pairs = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let (mi, mj) = (i % (nx - 1), j % (ny - 1));
                if (mi, mj) != (i, j) {
                    pairs.push(PeriodicPair {
                        slave: self.node(i, j),
                        master: self.node(mi, mj),
                    });
                }
            }
        }
        pairs
    }
}
