//! Triangular meshes with region and boundary tagging.
//!
//! All three discretisations (homogenised macro domain, periodic unit cell and
//! the grain-resolved reference domain) share [`TriMesh`]. Meshes are built by
//! a structured rectilinear generator whose grid lines pass through every
//! material interface, so region areas are exact.

pub(crate) mod grid;
mod io;
mod smc;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use io::{read_mesh, write_mesh, parse_mesh, format_mesh};
pub use smc::{build_cell_mesh, build_macro_mesh, build_reference_mesh, GrainShape, SmcGeometry};

/// Material region of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Grain(u32),
    Insulation,
    InductorPos,
    InductorNeg,
    Air,
    /// Homogenised SMC block of the macroscale mesh.
    Smc,
}

impl Region {
    pub fn grain(self) -> Option<u32> {
        match self {
            Region::Grain(k) => Some(k),
            _ => None,
        }
    }

    pub fn is_grain(self) -> bool {
        matches!(self, Region::Grain(_))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Grain(k) => write!(f, "GRAIN({k})"),
            Region::Insulation => f.write_str("INSULATION"),
            Region::InductorPos => f.write_str("INDUCTOR_POS"),
            Region::InductorNeg => f.write_str("INDUCTOR_NEG"),
            Region::Air => f.write_str("AIR"),
            Region::Smc => f.write_str("SMC"),
        }
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "INSULATION" => Ok(Region::Insulation),
            "INDUCTOR_POS" => Ok(Region::InductorPos),
            "INDUCTOR_NEG" => Ok(Region::InductorNeg),
            "AIR" => Ok(Region::Air),
            "SMC" => Ok(Region::Smc),
            _ => s
                .strip_prefix("GRAIN(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|k| k.parse().ok())
                .map(Region::Grain)
                .ok_or_else(|| format!("unknown region tag `{s}`")),
        }
    }
}

/// Label of a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Outer truncation boundary, `a_z = 0`.
    GammaInf,
    /// Horizontal symmetry line, `a_z = 0`.
    GammaH,
    /// Vertical symmetry line, natural condition.
    GammaV,
    CellLeft,
    CellRight,
    CellBottom,
    CellTop,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryTag::GammaInf => "GAMMA_INF",
            BoundaryTag::GammaH => "GAMMA_H",
            BoundaryTag::GammaV => "GAMMA_V",
            BoundaryTag::CellLeft => "CELL_LEFT",
            BoundaryTag::CellRight => "CELL_RIGHT",
            BoundaryTag::CellBottom => "CELL_BOTTOM",
            BoundaryTag::CellTop => "CELL_TOP",
        })
    }
}

impl FromStr for BoundaryTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "GAMMA_INF" => BoundaryTag::GammaInf,
            "GAMMA_H" => BoundaryTag::GammaH,
            "GAMMA_V" => BoundaryTag::GammaV,
            "CELL_LEFT" => BoundaryTag::CellLeft,
            "CELL_RIGHT" => BoundaryTag::CellRight,
            "CELL_BOTTOM" => BoundaryTag::CellBottom,
            "CELL_TOP" => BoundaryTag::CellTop,
            _ => return Err(format!("unknown boundary tag `{s}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Periodic identification `slave ≡ master` on a unit-cell mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicPair {
    pub slave: usize,
    pub master: usize,
}

/// 2D triangular mesh. Coordinates are in metres.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub periodic: Vec<PeriodicPair>,
}

impl TriMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Signed area (positive for counter-clockwise ordering).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.vertices(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [p0, p1, p2] = self.vertices(t);
        [(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn region_area(&self, pred: impl Fn(Region) -> bool) -> f64 {
        (0..self.n_triangles())
            .filter(|&t| pred(self.regions[t]))
            .map(|t| self.area(t))
            .sum()
    }

    /// Sorted list of grain indices present in the mesh.
    pub fn grain_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.regions.iter().filter_map(|r| r.grain()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Sorted, de-duplicated nodes lying on edges with the given tag.
    pub fn nodes_on(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.nodes)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Triangle containing `p`, if any. Points on shared edges resolve to the
    /// lowest triangle index.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let (lo, hi) = self.bounding_box();
        let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let tol = 1e-12 * scale * scale;
        (0..self.n_triangles()).find(|&t| {
            let [a, b, c] = self.vertices(t);
            let orient = |u: [f64; 2], v: [f64; 2]| {
                (v[0] - u[0]) * (p[1] - u[1]) - (v[1] - u[1]) * (p[0] - u[0])
            };
            orient(a, b) >= -tol && orient(b, c) >= -tol && orient(c, a) >= -tol
        })
    }

    /// Checks orientation, edge manifoldness, boundary tagging, grain
    /// connectivity and (if present) periodic pairing.
    pub fn validate(&self) -> Result<()> {
        if self.regions.len() != self.triangles.len() {
            return Err(Error::Mesh("region tag count differs from triangle count".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&n| n >= self.nodes.len()) {
                return Err(Error::Mesh(format!("triangle {t} references a missing node")));
            }
            if self.signed_area(t) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {t} has non-positive area")));
            }
        }

        let edges = self.edge_triangles();
        let mut tagged: HashMap<[usize; 2], BoundaryTag> = HashMap::new();
        for e in &self.boundary_edges {
            tagged.insert(sorted(e.nodes), e.tag);
        }
        for (edge, tris) in &edges {
            match tris.len() {
                1 if !tagged.contains_key(edge) => {
                    return Err(Error::Mesh(format!("boundary edge {edge:?} is untagged")));
                }
                1 | 2 => {}
                n => return Err(Error::Mesh(format!("edge {edge:?} shared by {n} triangles"))),
            }
        }
        for edge in tagged.keys() {
            if edges.get(edge).map(Vec::len) != Some(1) {
                return Err(Error::Mesh(format!("tagged edge {edge:?} is not on the boundary")));
            }
        }

        self.check_grain_connectivity(&edges)?;
        if !self.periodic.is_empty() {
            self.check_periodic()?;
        }
        Ok(())
    }

    fn edge_triangles(&self) -> HashMap<[usize; 2], Vec<usize>> {
        let mut map: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                map.entry(sorted([tri[k], tri[(k + 1) % 3]])).or_default().push(t);
            }
        }
        map
    }

    fn check_grain_connectivity(&self, edges: &HashMap<[usize; 2], Vec<usize>>) -> Result<()> {
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); self.n_triangles()];
        for tris in edges.values() {
            if let [a, b] = tris[..] {
                if self.regions[a] == self.regions[b] {
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                }
            }
        }
        let mut seen_grain = HashMap::new();
        let mut visited = vec![false; self.n_triangles()];
        for start in 0..self.n_triangles() {
            let Some(k) = self.regions[start].grain() else { continue };
            if visited[start] {
                continue;
            }
            if seen_grain.insert(k, start).is_some() {
                return Err(Error::Mesh(format!("GRAIN({k}) is not edge-connected")));
            }
            let mut stack = vec![start];
            visited[start] = true;
            while let Some(t) = stack.pop() {
                for &n in &adjacency[t] {
                    if !visited[n] {
                        visited[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        Ok(())
    }

    /// Periodic pairs must map every slave onto a non-slave master that is a
    /// lattice translate of it, and each opposite boundary pair must match
    /// one-to-one.
    fn check_periodic(&self) -> Result<()> {
        let (lo, hi) = self.bounding_box();
        let period = [hi[0] - lo[0], hi[1] - lo[1]];
        let tol = 1e-12_f64.max(1e-9 * period[0].max(period[1]));
        let slaves: HashMap<usize, usize> =
            self.periodic.iter().map(|p| (p.slave, p.master)).collect();
        for p in &self.periodic {
            if slaves.contains_key(&p.master) {
                return Err(Error::Mesh(format!("periodic master {} is itself a slave", p.master)));
            }
            let (s, m) = (self.nodes[p.slave], self.nodes[p.master]);
            for d in 0..2 {
                let shift = (s[d] - m[d]) / period[d];
                if (shift - shift.round()).abs() * period[d] > tol {
                    return Err(Error::Mesh(format!(
                        "periodic pair {}->{} is not a lattice translate",
                        p.slave, p.master
                    )));
                }
            }
        }
        let pairs = [
            (BoundaryTag::CellLeft, BoundaryTag::CellRight, 0usize),
            (BoundaryTag::CellBottom, BoundaryTag::CellTop, 1usize),
        ];
        for (lo_tag, hi_tag, axis) in pairs {
            let a = self.nodes_on(lo_tag);
            let b = self.nodes_on(hi_tag);
            if a.len() != b.len() {
                return Err(Error::Mesh(format!("{lo_tag}/{hi_tag} node counts differ")));
            }
            let other = 1 - axis;
            let mut ca: Vec<f64> = a.iter().map(|&n| self.nodes[n][other]).collect();
            let mut cb: Vec<f64> = b.iter().map(|&n| self.nodes[n][other]).collect();
            ca.sort_by(f64::total_cmp);
            cb.sort_by(f64::total_cmp);
            if ca.iter().zip(&cb).any(|(x, y)| (x - y).abs() > tol) {
                return Err(Error::Mesh(format!("{lo_tag}/{hi_tag} nodes are not in bijection")));
            }
            for &n in &b {
                if !slaves.contains_key(&n) {
                    return Err(Error::Mesh(format!("node {n} on {hi_tag} has no periodic partner")));
                }
            }
        }
        Ok(())
    }
}

fn sorted([a, b]: [usize; 2]) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}
