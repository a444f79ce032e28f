//! Compressed sparse storage and the direct LU backend.
//!
//! Matrices are assembled from triplet lists (duplicates summed) into CSR for
//! the admittance matrices and CSC for anything handed to the factorization.
//! [`SparseLu`] keeps the symbolic analysis of a pattern and refactors
//! numerically whenever a matrix with the same pattern is supplied.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;

use crate::error::{Error, Result};

/// Row-compressed real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates. Explicit
    /// zeros are kept so that the pattern only depends on the positions given.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let (ptr, idx, values) = compress(nrows, triplets.iter().map(|&(r, c, v)| (r, c, v)));
        Self {
            nrows,
            ncols,
            row_ptr: ptr,
            col_idx: idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[span.clone()].binary_search(&col) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates the stored entries of `row` as `(col, value)`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        out
    }
}

/// Column-compressed real matrix, the layout consumed by [`SparseLu`].
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let (ptr, idx, values) = compress(ncols, triplets.iter().map(|&(r, c, v)| (c, r, v)));
        Self {
            nrows,
            ncols,
            col_ptr: ptr,
            row_idx: idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let span = self.col_ptr[col]..self.col_ptr[col + 1];
        match self.row_idx[span.clone()].binary_search(&row) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// `true` when both matrices store exactly the same positions.
    pub fn same_pattern(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.col_ptr == other.col_ptr
            && self.row_idx == other.row_idx
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for (c, &xc) in x.iter().enumerate() {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    /// Iterates every stored entry as `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1])
                .map(move |k| (self.row_idx[k], c, self.values[k]))
        })
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        let symbolic = SymbolicSparseColMatRef::new_checked(
            self.nrows,
            self.ncols,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        SparseColMatRef::new(symbolic, &self.values)
    }
}

/// Groups triplets by their major index, sorts the minor index and sums
/// duplicates.
fn compress(
    n_major: usize,
    entries: impl Iterator<Item = (usize, usize, f64)>,
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut sorted: Vec<(usize, usize, f64)> = entries.collect();
    sorted.sort_by_key(|a| (a.0, a.1));
    let mut ptr = vec![0usize; n_major + 1];
    let mut idx = Vec::with_capacity(sorted.len());
    let mut values = Vec::with_capacity(sorted.len());
    let mut last: Option<(usize, usize)> = None;
    for (major, minor, v) in sorted {
        assert!(
            major < n_major,
            "triplet index {major} out of range {n_major}"
        );
        if last == Some((major, minor)) {
            *values.last_mut().unwrap() += v;
            continue;
        }
        ptr[major + 1] += 1;
        idx.push(minor);
        values.push(v);
        last = Some((major, minor));
    }
    for i in 0..n_major {
        ptr[i + 1] += ptr[i];
    }
    (ptr, idx, values)
}

/// Sparse LU with partial pivoting that reuses its symbolic analysis while the
/// matrix pattern stays the same.
#[derive(Default)]
pub struct SparseLu {
    symbolic: Option<(CscMatrix, SymbolicLu<usize>)>,
    numeric: Option<Lu<usize, f64>>,
    n: usize,
    symbolic_runs: usize,
}

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of symbolic analyses performed so far.
    pub fn symbolic_runs(&self) -> usize {
        self.symbolic_runs
    }

    pub fn factor(&mut self, a: &CscMatrix) -> Result<()> {
        if a.nrows != a.ncols {
            return Err(Error::Dimension {
                expected: a.nrows,
                got: a.ncols,
            });
        }
        let reuse = matches!(&self.symbolic, Some((pattern, _)) if pattern.same_pattern(a));
        if !reuse {
            let symbolic = SymbolicLu::try_new(a.as_faer().symbolic())
                .map_err(|e| Error::Singular(format!("symbolic analysis failed: {e:?}")))?;
            let mut pattern = a.clone();
            pattern.values.clear();
            self.symbolic = Some((pattern, symbolic));
            self.symbolic_runs += 1;
        }
        let symbolic = self.symbolic.as_ref().unwrap().1.clone();
        let lu = Lu::try_new_with_symbolic(symbolic, a.as_faer())
            .map_err(|e| Error::Singular(format!("numeric factorization failed: {e:?}")))?;
        self.numeric = Some(lu);
        self.n = a.nrows;
        Ok(())
    }

    /// Solves `A x = rhs` with the last factorization.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = self
            .numeric
            .as_ref()
            .ok_or_else(|| Error::Singular("no factorization available".into()))?;
        if rhs.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: rhs.len(),
            });
        }
        let mut x = rhs.to_vec();
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("non-finite solution (zero pivot)".into()));
        }
        Ok(x)
    }

    /// Solves and applies iterative refinement until the relative residual
    /// `‖A x − b‖∞ / ‖b‖∞` drops to `target` or `max_refine` sweeps are done.
    /// Returns the solution and its final relative residual.
    pub fn solve_refined(
        &self,
        a: &CscMatrix,
        rhs: &[f64],
        target: f64,
        max_refine: usize,
    ) -> Result<(Vec<f64>, f64)> {
        let scale = inf_norm(rhs).max(f64::MIN_POSITIVE);
        let mut x = self.solve(rhs)?;
        let mut rel = relative_residual(a, &x, rhs, scale);
        for _ in 0..max_refine {
            if rel <= target {
                break;
            }
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let dx = self.solve(&r)?;
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let cand_rel = relative_residual(a, &candidate, rhs, scale);
            if cand_rel >= rel {
                break;
            }
            x = candidate;
            rel = cand_rel;
        }
        Ok((x, rel))
    }
}

fn relative_residual(a: &CscMatrix, x: &[f64], rhs: &[f64], scale: f64) -> f64 {
    let ax = a.mul_vec(x);
    ax.iter()
        .zip(rhs)
        .map(|(v, b)| (v - b).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
