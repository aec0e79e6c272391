use std::collections::BTreeSet;

use super::sparse::{Pattern, PatternBuilder};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeDof {
    Free(usize),
    /// Value prescribed by the caller in the nodal vector.
    Dirichlet,
}

/// Scalar unknowns that are not attached to a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtraDof {
    /// Piecewise-constant unknown on one grain.
    GrainConstant(u32),
    /// Lagrange multiplier of the zero-mean gauge.
    ZeroMean,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constraints {
    pub dirichlet: Vec<BoundaryTag>,
    /// Fold the mesh's periodic slaves onto their masters.
    pub periodic: bool,
    pub grain_constants: bool,
    pub zero_mean: bool,
}

/// Node-to-unknown numbering. Node dofs come first, extras after them.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    nodes: Vec<NodeDof>,
    n_node_dofs: usize,
    extras: Vec<ExtraDof>,
}

pub fn apply_constraints(mesh: &TriMesh, c: &Constraints) -> Result<DofMap> {
    let n = mesh.n_nodes();
    let mut dirichlet = vec![false; n];
    for tag in &c.dirichlet {
        for i in mesh.nodes_on(*tag) {
            dirichlet[i] = true;
        }
    }
    let mut master: Vec<Option<usize>> = vec![None; n];
    if c.periodic {
        if mesh.periodic.is_empty() {
            return Err(Error::Mesh("periodic constraints requested on a mesh without periodic pairs".into()));
        }
        for p in &mesh.periodic {
            if master[p.master].is_some() {
                return Err(Error::Mesh(format!("periodic chain through node {}", p.master)));
            }
            master[p.slave] = Some(p.master);
        }
    }
    let mut nodes = vec![NodeDof::Dirichlet; n];
    let mut next = 0;
    for i in 0..n {
        if master[i].is_none() && !dirichlet[i] {
            nodes[i] = NodeDof::Free(next);
            next += 1;
        }
    }
    for i in 0..n {
        if let Some(m) = master[i] {
            nodes[i] = if dirichlet[i] { NodeDof::Dirichlet } else { nodes[m] };
        }
    }
    let mut extras = Vec::new();
    if c.grain_constants {
        extras.extend(mesh.grain_ids().into_iter().map(ExtraDof::GrainConstant));
    }
    if c.zero_mean {
        extras.push(ExtraDof::ZeroMean);
    }
    Ok(DofMap {
        nodes,
        n_node_dofs: next,
        extras,
    })
}

impl DofMap {
    pub fn n_dofs(&self) -> usize {
        self.n_node_dofs + self.extras.len()
    }

    pub fn n_node_dofs(&self) -> usize {
        self.n_node_dofs
    }

    pub fn node(&self, i: usize) -> Option<usize> {
        match self.nodes[i] {
            NodeDof::Free(d) => Some(d),
            NodeDof::Dirichlet => None,
        }
    }

    pub fn node_kind(&self, i: usize) -> NodeDof {
        self.nodes[i]
    }

    pub fn extras(&self) -> &[ExtraDof] {
        &self.extras
    }

    pub fn extra(&self, e: ExtraDof) -> Option<usize> {
        self.extras.iter().position(|&x| x == e).map(|k| self.n_node_dofs + k)
    }

    pub fn grain(&self, g: u32) -> Option<usize> {
        self.extra(ExtraDof::GrainConstant(g))
    }

    pub fn element(&self, tri: &[usize; 3]) -> [Option<usize>; 3] {
        [self.node(tri[0]), self.node(tri[1]), self.node(tri[2])]
    }

    /// Copies unknowns into nodal values; Dirichlet nodes are left as they are.
    pub fn scatter(&self, x: &[f64], nodal: &mut [f64]) {
        for (v, kind) in nodal.iter_mut().zip(&self.nodes) {
            if let NodeDof::Free(d) = kind {
                *v = x[*d];
            }
        }
    }

    /// Node values of the free dofs (first occurrence wins for periodic copies).
    pub fn gather(&self, nodal: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_dofs()];
        let mut seen = vec![false; self.n_node_dofs];
        for (v, kind) in nodal.iter().zip(&self.nodes) {
            if let NodeDof::Free(d) = kind {
                if !seen[*d] {
                    x[*d] = *v;
                    seen[*d] = true;
                }
            }
        }
        x
    }

    /// Pattern covering element couplings, grain constants against the node
    /// dofs of their grain, and the gauge row against every node dof.
    pub fn pattern(&self, mesh: &TriMesh) -> Pattern {
        let mut b = PatternBuilder::new(self.n_dofs());
        let mut grain_nodes: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.extras.len()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let dofs: Vec<usize> = self.element(tri).into_iter().flatten().collect();
            b.add_clique(&dofs);
            if let Some(g) = mesh.regions[t].grain() {
                if let Some(k) = self.grain(g) {
                    grain_nodes[k - self.n_node_dofs].extend(dofs);
                }
            }
        }
        for (k, set) in grain_nodes.iter().enumerate() {
            for &d in set {
                b.add_pair(d, self.n_node_dofs + k);
            }
        }
        if let Some(z) = self.extra(ExtraDof::ZeroMean) {
            for d in 0..self.n_node_dofs {
                b.add_pair(d, z);
            }
        }
        b.build()
    }
}
