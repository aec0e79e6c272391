//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use mqs_hmm::cell::{CellMode, CellModel, CellSources, NewtonSettings};
use mqs_hmm::config::RunConfig;
use mqs_hmm::fem::{PatternBuilder, SparseMatrix};
use mqs_hmm::materials::{BVec, ExpLawParams, MagneticLaw, MaterialMap, SIGMA_GRAIN};
use mqs_hmm::mesh::{build_cell_mesh, SmcGeometry};

/// Desk-scale cell with the exponential law.
pub fn cell_model(refine: usize, mode: CellMode) -> Arc<CellModel> {
    let mesh = build_cell_mesh(&SmcGeometry::desk(), refine).expect("cell mesh");
    let materials = MaterialMap::new(MagneticLaw::Exponential(ExpLawParams::benchmark()), SIGMA_GRAIN);
    Arc::new(CellModel::new(mesh, materials, mode, NewtonSettings::default()).expect("cell model"))
}

/// Moderately saturated macro state during a rising half period.
pub fn cell_sources() -> CellSources {
    CellSources::from_macro(BVec::new(0.5, 0.002), BVec::new(0.49, 0.002), 0.0, 0.0, 5e-4)
}

/// Small desk run used for the macro and reference step benchmarks.
pub fn small_config() -> RunConfig {
    let mut c = RunConfig::desk();
    let d = &mut c.discretization;
    d.macro_divisions = 4;
    d.cell_refine = 2;
    d.reference_refine = 2;
    d.macro_gauss_points = 1;
    c.threads = 1;
    c
}

/// 5-point Laplacian on an `n × n` grid plus a small shift.
pub fn laplacian(n: usize) -> SparseMatrix {
    let idx = |i: usize, j: usize| j * n + i;
    let mut b = PatternBuilder::new(n * n);
    for j in 0..n {
        for i in 0..n {
            if i + 1 < n {
                b.add_pair(idx(i, j), idx(i + 1, j));
            }
            if j + 1 < n {
                b.add_pair(idx(i, j), idx(i, j + 1));
            }
        }
    }
    let mut m = SparseMatrix::zeros(Arc::new(b.build()));
    for j in 0..n {
        for i in 0..n {
            let r = idx(i, j);
            m.add(r, r, 4.01);
            for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if (0..n as i64).contains(&ni) && (0..n as i64).contains(&nj) {
                    m.add(r, idx(ni as usize, nj as usize), -1.0);
                }
            }
        }
    }
    m
}
