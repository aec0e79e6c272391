//! Compressed sparse storage with a cached symbolic LU per pattern.

use std::sync::{Arc, Once, OnceLock};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Conj, Par};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Iterative refinement stops below this relative residual.
const REFINE_RESIDUAL: f64 = 1e-14;
const MAX_REFINEMENTS: usize = 2;
/// Above this relative residual a solve is treated as singular.
const SINGULAR_RESIDUAL: f64 = 1e-6;

static FAER_INIT: Once = Once::new();

/// Collects the nonzero structure before freezing it into a [`Pattern`].
#[derive(Debug, Clone)]
pub struct PatternBuilder {
    rows: Vec<Vec<usize>>,
}

impl PatternBuilder {
    pub fn new(n: usize) -> Self {
        Self { rows: vec![Vec::new(); n] }
    }

    pub fn add(&mut self, r: usize, c: usize) {
        self.rows[r].push(c);
    }

    /// Symmetric pair `(r, c)` and `(c, r)`.
    pub fn add_pair(&mut self, r: usize, c: usize) {
        self.rows[r].push(c);
        self.rows[c].push(r);
    }

    pub fn add_clique(&mut self, dofs: &[usize]) {
        for &r in dofs {
            self.rows[r].extend_from_slice(dofs);
        }
    }

    pub fn build(mut self) -> Pattern {
        let n = self.rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for (r, row) in self.rows.iter_mut().enumerate() {
            // the diagonal is always present so that pivoting has a slot
            row.push(r);
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        // transpose into CSC while remembering where each CSR slot lands
        let mut count = vec![0usize; n + 1];
        for &c in &col_idx {
            count[c + 1] += 1;
        }
        for c in 0..n {
            count[c + 1] += count[c];
        }
        let col_ptr = count.clone();
        let mut next = count;
        let mut row_idx = vec![0usize; col_idx.len()];
        let mut csc_slot = vec![0usize; col_idx.len()];
        for r in 0..n {
            for k in row_ptr[r]..row_ptr[r + 1] {
                let c = col_idx[k];
                row_idx[next[c]] = r;
                csc_slot[k] = next[c];
                next[c] += 1;
            }
        }
        let csc = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        Pattern {
            n,
            row_ptr,
            col_idx,
            csc_slot,
            csc,
            symbolic: OnceLock::new(),
        }
    }
}

/// Frozen, structurally symmetric sparsity pattern (CSR with a CSC mirror).
#[derive(Debug)]
pub struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    csc_slot: Vec<usize>,
    csc: SymbolicSparseColMat<usize>,
    symbolic: OnceLock<std::result::Result<Arc<SymbolicLu<usize>>, String>>,
}

impl Pattern {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi].binary_search(&c).ok().map(|k| lo + k)
    }

    fn symbolic_lu(&self) -> Result<Arc<SymbolicLu<usize>>> {
        FAER_INIT.call_once(|| faer::set_global_parallelism(Par::Seq));
        self.symbolic
            .get_or_init(|| {
                factorize_symbolic_lu(self.csc.as_ref(), LuSymbolicParams::default())
                    .map(Arc::new)
                    .map_err(|e| format!("{e:?}"))
            })
            .clone()
            .map_err(|message| Error::Solver {
                message: format!("symbolic factorization failed: {message}"),
                null_dof: None,
            })
    }
}

/// Square sparse matrix whose values follow a shared [`Pattern`].
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Panics if `(r, c)` is outside the pattern.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self
            .pattern
            .slot(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) not in sparsity pattern"));
        self.values[k] += v;
    }

    /// Adds a local block; `None` rows/columns are skipped.
    pub fn add_block<const N: usize>(&mut self, dofs: &[Option<usize>; N], block: &[[f64; N]; N]) {
        for (i, ri) in dofs.iter().enumerate() {
            let Some(r) = *ri else { continue };
            for (j, cj) in dofs.iter().enumerate() {
                if let Some(c) = *cj {
                    self.add(r, c, block[i][j]);
                }
            }
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.slot(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|r| {
                (p.row_ptr[r]..p.row_ptr[r + 1])
                    .map(|k| self.values[k] * x[p.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = &self.pattern;
        let mut d = DMatrix::zeros(p.n, p.n);
        for r in 0..p.n {
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                d[(r, p.col_idx[k])] = self.values[k];
            }
        }
        d
    }

    /// Writes `i j value` lines (zero-based) for debugging.
    pub fn to_coordinate_text(&self) -> String {
        use std::fmt::Write as _;
        let p = &self.pattern;
        let mut s = String::new();
        for r in 0..p.n {
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                let _ = writeln!(s, "{r} {} {:e}", p.col_idx[k], self.values[k]);
            }
        }
        s
    }

    /// Numeric LU factors, reusable for several right-hand sides.
    pub fn factorize(&self) -> Result<Factorization> {
        let p = &self.pattern;
        let mut csc_vals = vec![0.0; self.values.len()];
        for (k, &v) in self.values.iter().enumerate() {
            csc_vals[p.csc_slot[k]] = v;
        }
        let symbolic = p.symbolic_lu()?;
        let mat = SparseColMatRef::new(p.csc.as_ref(), &csc_vals);
        let mut numeric = NumericLu::new();
        let mut mem = MemBuffer::new(symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default()));
        symbolic
            .factorize_numeric_lu(&mut numeric, mat, Par::Seq, MemStack::new(&mut mem), Default::default())
            .map_err(|e| Error::Solver {
                message: format!("numeric factorization failed: {e:?}"),
                null_dof: None,
            })?;
        Ok(Factorization {
            matrix: self.clone(),
            symbolic,
            numeric,
        })
    }

    /// Direct LU solve. Fails on singular or numerically unusable systems.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.factorize()?.solve(rhs)
    }
}

/// LU factors of a [`SparseMatrix`] together with the matrix itself.
pub struct Factorization {
    matrix: SparseMatrix,
    symbolic: Arc<SymbolicLu<usize>>,
    numeric: NumericLu<usize, f64>,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization").field("n", &self.matrix.n()).finish_non_exhaustive()
    }
}

impl Factorization {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Solves `A x = rhs`; a non-finite or inaccurate `x` is a singular-matrix error.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.matrix.n();
        assert_eq!(rhs.len(), n);
        let singular = |message: String, null_dof| Error::Solver { message, null_dof };
        let lu = LuRef::new_unchecked(&self.symbolic, &self.numeric);
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        let solve = |b: &[f64], mem: &mut MemBuffer| {
            let mut x = faer::Mat::from_fn(n, 1, |i, _| b[i]);
            lu.solve_in_place_with_conj(Conj::No, x.as_mut(), Par::Seq, MemStack::new(mem));
            (0..n).map(|i| x[(i, 0)]).collect::<Vec<f64>>()
        };
        let mut x = solve(rhs, &mut mem);
        let scale = rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
        let mut res;
        let mut refinements = 0;
        loop {
            if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                return Err(singular("singular matrix: non-finite solution".into(), Some(i)));
            }
            let r: Vec<f64> = self.matrix.mul_vec(&x).iter().zip(rhs).map(|(a, b)| b - a).collect();
            res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if res <= REFINE_RESIDUAL * scale || refinements == MAX_REFINEMENTS {
                break;
            }
            for (xi, di) in x.iter_mut().zip(solve(&r, &mut mem)) {
                *xi += di;
            }
            refinements += 1;
        }
        if res > SINGULAR_RESIDUAL * scale {
            let worst = x
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i);
            return Err(singular(
                format!("singular matrix: relative residual {:e}", res / scale),
                worst,
            ));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_pattern(n: usize) -> Arc<Pattern> {
        let mut b = PatternBuilder::new(n);
        b.add_clique(&(0..n).collect::<Vec<_>>());
        Arc::new(b.build())
    }

    #[test]
    fn identity_returns_rhs() {
        let p = Arc::new(PatternBuilder::new(4).build());
        let mut m = SparseMatrix::zeros(p);
        for i in 0..4 {
            m.add(i, i, 1.0);
        }
        let b = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(m.solve(&b).unwrap(), b.to_vec());
    }

    #[test]
    fn matches_dense_lu_oracle() {
        // deterministic SPD 5x5: A = G Gᵀ + 5 I
        let g: Vec<f64> = (0..25).map(|k| ((k * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let gm = DMatrix::from_row_slice(5, 5, &g);
        let a = &gm * gm.transpose() + DMatrix::identity(5, 5) * 5.0;
        let mut m = SparseMatrix::zeros(dense_pattern(5));
        for r in 0..5 {
            for c in 0..5 {
                m.add(r, c, a[(r, c)]);
            }
        }
        let b = [1.0, 2.0, -1.0, 0.5, 3.0];
        let x = m.solve(&b).unwrap();
        let oracle = a.clone().lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
        for i in 0..5 {
            assert!((x[i] - oracle[i]).abs() < 1e-12 * oracle.amax());
        }
        assert_eq!(m.to_dense(), a);
    }

    #[test]
    fn refactorization_is_deterministic() {
        let mut m = SparseMatrix::zeros(dense_pattern(3));
        for (r, c, v) in [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0), (1, 2, -1.0), (2, 1, -1.0)] {
            m.add(r, c, v);
        }
        let b = [1.0, 2.0, 3.0];
        let x1 = m.solve(&b).unwrap();
        let x2 = m.clone().solve(&b).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut m = SparseMatrix::zeros(dense_pattern(3));
        for r in 0..3 {
            for c in 0..3 {
                m.add(r, c, 1.0);
            }
        }
        let err = m.solve(&[1.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Solver { .. }), "{err}");
    }

    #[test]
    #[should_panic(expected = "not in sparsity pattern")]
    fn entries_outside_pattern_panic() {
        let mut m = SparseMatrix::zeros(Arc::new(PatternBuilder::new(2).build()));
        m.add(0, 1, 1.0);
    }
}
