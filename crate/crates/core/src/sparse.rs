//! Compressed sparse row matrices and the 2x2 block operator built on them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A square linear map `y = A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Row-major compressed sparse matrix with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Validates and wraps raw CSR arrays.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 || row_offsets[0] != 0 {
            return Err(Error::InvalidArgument("row offsets must have nrows + 1 entries starting at 0".into()));
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len() {
            return Err(Error::InvalidArgument("row offsets, column indices and values disagree".into()));
        }
        for i in 0..nrows {
            let (s, e) = (row_offsets[i], row_offsets[i + 1]);
            if s > e {
                return Err(Error::InvalidArgument(format!("row offsets decrease at row {i}")));
            }
            let cols = &col_indices[s..e];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!("columns of row {i} not strictly increasing")));
            }
            if cols.last().is_some_and(|&c| c >= ncols) {
                return Err(Error::InvalidArgument(format!("column index out of range in row {i}")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_offsets: vec![0; nrows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Builds a matrix with the given per-row column sets and zero values.
    /// Column lists are sorted and de-duplicated.
    pub fn from_pattern(nrows: usize, ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        assert_eq!(rows.len(), nrows);
        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for mut cols in rows {
            cols.sort_unstable();
            cols.dedup();
            debug_assert!(cols.last().map_or(true, |&c| c < ncols));
            col_indices.extend_from_slice(&cols);
            row_offsets.push(col_indices.len());
        }
        let nnz = col_indices.len();
        Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values: vec![0.0; nnz],
        }
    }

    /// Sums duplicate `(row, col)` entries in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            rows[i].push((j, v));
        }
        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                if col_indices.len() > *row_offsets.last().unwrap() && *col_indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let s = self.row_offsets[i];
        let e = self.row_offsets[i + 1];
        self.col_indices[s..e].binary_search(&j).ok().map(|p| s + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Adds `v` to an existing structural entry. Panics if `(i, j)` is not
    /// in the pattern.
    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[p] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `sum_j a_ij x_j`. Four interleaved partial sums shorten the
    /// floating-point dependency chain; the summation order is fixed, so the
    /// result is reproducible.
    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        let cols = &self.col_indices[s..e];
        let vals = &self.values[s..e];
        let mut acc = [0.0; 4];
        let mut cc = cols.chunks_exact(4);
        let mut vc = vals.chunks_exact(4);
        for (c, v) in (&mut cc).zip(&mut vc) {
            acc[0] += v[0] * x[c[0]];
            acc[1] += v[1] * x[c[1]];
            acc[2] += v[2] * x[c[2]];
            acc[3] += v[3] * x[c[3]];
        }
        for (k, (&c, &v)) in cc.remainder().iter().zip(vc.remainder()).enumerate() {
            acc[k] += v * x[c];
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3])
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row_dot(i, x);
        }
    }

    /// `y = alpha A x + beta y`.
    pub fn gemv(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let acc = self.row_dot(i, x);
            *yi = if beta == 0.0 { alpha * acc } else { alpha * acc + beta * *yi };
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let p = next[j];
                col_indices[p] = i;
                values[p] = v;
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut marker = vec![usize::MAX; other.ncols];
        let mut acc = vec![0.0; other.ncols];
        let mut row_offsets = Vec::with_capacity(self.nrows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut touched = Vec::new();
        row_offsets.push(0);
        for i in 0..self.nrows {
            touched.clear();
            let (a_cols, a_vals) = self.row(i);
            for (&k, &a) in a_cols.iter().zip(a_vals) {
                let (b_cols, b_vals) = other.row(k);
                for (&j, &b) in b_cols.iter().zip(b_vals) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_indices.push(j);
                values.push(acc[j]);
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            nrows: self.nrows,
            ncols: other.ncols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// `alpha A + beta B` over the union of both sparsity patterns.
    pub fn linear_combination(alpha: f64, a: &CsrMatrix, beta: f64, b: &CsrMatrix) -> Result<Self> {
        if a.nrows != b.nrows || a.ncols != b.ncols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                a.nrows, a.ncols, b.nrows, b.ncols
            )));
        }
        let mut row_offsets = Vec::with_capacity(a.nrows + 1);
        let mut col_indices = Vec::with_capacity(a.nnz().max(b.nnz()));
        let mut values = Vec::with_capacity(a.nnz().max(b.nnz()));
        row_offsets.push(0);
        for i in 0..a.nrows {
            let (ac, av) = a.row(i);
            let (bc, bv) = b.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                let ja = ac.get(p).copied().unwrap_or(usize::MAX);
                let jb = bc.get(q).copied().unwrap_or(usize::MAX);
                if ja == jb {
                    col_indices.push(ja);
                    values.push(alpha * av[p] + beta * bv[q]);
                    p += 1;
                    q += 1;
                } else if ja < jb {
                    col_indices.push(ja);
                    values.push(alpha * av[p]);
                    p += 1;
                } else {
                    col_indices.push(jb);
                    values.push(beta * bv[q]);
                    q += 1;
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            nrows: a.nrows,
            ncols: a.ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Value-level symmetry up to `rel_tol * max|a_ij|`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let t = self.transpose();
        if t.row_offsets != self.row_offsets || t.col_indices != self.col_indices {
            // Structural asymmetry is tolerated only for explicit zeros.
            return (0..self.nrows).all(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .all(|(&j, &v)| (v - self.get(j, i)).abs() <= rel_tol * scale)
            });
        }
        self.values
            .iter()
            .zip(&t.values)
            .all(|(a, b)| (a - b).abs() <= rel_tol * scale)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] += v;
            }
        }
        d
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// One scaled block of a [`BlockOperator2x2`].
#[derive(Debug, Clone, Copy)]
pub struct Block<'a> {
    pub matrix: &'a CsrMatrix,
    pub scale: f64,
}

impl<'a> Block<'a> {
    pub fn new(matrix: &'a CsrMatrix, scale: f64) -> Self {
        Self { matrix, scale }
    }
}

/// `[[a11 A11, a12 A12], [a21 A21, a22 A22]]` acting on `[v1; v2]` stored
/// contiguously. Missing blocks are zero.
#[derive(Debug, Clone)]
pub struct BlockOperator2x2<'a> {
    blocks: [[Option<Block<'a>>; 2]; 2],
    n: usize,
    symmetric: bool,
}

impl<'a> BlockOperator2x2<'a> {
    pub fn new(blocks: [[Option<Block<'a>>; 2]; 2]) -> Result<Self> {
        let n = blocks
            .iter()
            .flatten()
            .flatten()
            .map(|b| b.matrix.nrows())
            .next()
            .ok_or_else(|| Error::InvalidArgument("block operator needs at least one block".into()))?;
        for b in blocks.iter().flatten().flatten() {
            if b.matrix.nrows() != n || b.matrix.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "all blocks must be {n}x{n}, got {}x{}",
                    b.matrix.nrows(),
                    b.matrix.ncols()
                )));
            }
        }
        Ok(Self {
            blocks,
            n,
            symmetric: false,
        })
    }

    /// Like [`BlockOperator2x2::new`] but verifies that the diagonal blocks
    /// are symmetric and `(a12 A12)^T = a21 A21`.
    pub fn new_symmetric(blocks: [[Option<Block<'a>>; 2]; 2]) -> Result<Self> {
        let mut op = Self::new(blocks)?;
        const TOL: f64 = 1e-14;
        for d in [blocks[0][0], blocks[1][1]].into_iter().flatten() {
            if !d.matrix.is_symmetric(TOL) {
                return Err(Error::InvalidArgument("diagonal block is not symmetric".into()));
            }
        }
        let ok = match (blocks[0][1], blocks[1][0]) {
            (None, None) => true,
            (Some(u), Some(l)) => {
                let ut = u.matrix.transpose().scaled(u.scale);
                let ls = l.matrix.scaled(l.scale);
                let diff = CsrMatrix::linear_combination(1.0, &ut, -1.0, &ls)?;
                let scale = ls.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                diff.values().iter().all(|v| v.abs() <= TOL * scale)
            }
            (Some(b), None) | (None, Some(b)) => b.scale == 0.0 || b.matrix.values().iter().all(|&v| v == 0.0),
        };
        if !ok {
            return Err(Error::InvalidArgument("off-diagonal blocks are not transposes".into()));
        }
        op.symmetric = true;
        Ok(op)
    }

    pub fn block_size(&self) -> usize {
        self.n
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

impl LinearOperator for BlockOperator2x2<'_> {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let (x1, x2) = x.split_at(n);
        let (y1, y2) = y.split_at_mut(n);
        for (r, yr) in [y1, y2].into_iter().enumerate() {
            yr.iter_mut().for_each(|v| *v = 0.0);
            for (c, xc) in [x1, x2].into_iter().enumerate() {
                if let Some(b) = self.blocks[r][c] {
                    b.matrix.gemv(b.scale, xc, 1.0, yr);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0), (2, 0, 1.0), (2, 2, 4.0), (0, 0, 1.0)],
        )
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = sample();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 5);
        assert!(a.is_symmetric(0.0));
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![4.0, 3.0, 5.0]);
    }

    #[test]
    fn new_validates() {
        assert!(CsrMatrix::new(2, 2, vec![0, 1, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
        assert!(CsrMatrix::new(2, 2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(2, 2, vec![0, 2, 2], vec![0, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(2, 2, vec![0, 1, 2], vec![0, 2], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn linear_combination_unions_patterns() {
        let a = CsrMatrix::from_diagonal(&[1.0, 2.0]);
        let b = CsrMatrix::from_triplets(2, 2, &[(0, 1, 5.0), (1, 0, 5.0)]);
        let c = CsrMatrix::linear_combination(2.0, &a, 1.0, &b).unwrap();
        assert_eq!(c.nnz(), 4);
        assert_eq!(c.get(1, 1), 4.0);
        assert_eq!(c.get(0, 1), 5.0);
    }

    #[test]
    fn block_operator_symmetry_check() {
        let m = CsrMatrix::identity(2);
        let k = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)]);
        let op = BlockOperator2x2::new_symmetric([
            [Some(Block::new(&m, 1.0)), Some(Block::new(&k, 0.5))],
            [Some(Block::new(&k, 0.5)), Some(Block::new(&m, -2.0))],
        ])
        .unwrap();
        let mut y = vec![0.0; 4];
        op.apply(&[1.0, 0.0, 0.0, 1.0], &mut y);
        assert_eq!(y, vec![1.0 - 0.5, 0.5, 0.5, -0.5 - 2.0]);

        let bad = BlockOperator2x2::new_symmetric([
            [Some(Block::new(&m, 1.0)), Some(Block::new(&k, 0.5))],
            [Some(Block::new(&k, 0.4)), Some(Block::new(&m, -2.0))],
        ]);
        assert!(bad.is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, f64)>)> {
        (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
            (
                Just(r),
                Just(c),
                prop::collection::vec((0..r, 0..c, -5.0f64..5.0), 0..30),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_dense((r, c, t) in arb_matrix(), (r2, t2) in (1usize..6).prop_flat_map(|k| (Just(k), prop::collection::vec((0..8usize, 0..6usize, -5.0f64..5.0), 0..30)))) {
            let a = CsrMatrix::from_triplets(r, c, &t);
            let t2: Vec<_> = t2.into_iter().filter(|&(i, j, _)| i < c && j < r2).collect();
            let b = CsrMatrix::from_triplets(c, r2, &t2);
            let prod = a.matmul(&b).to_dense();
            let dense = a.to_dense() * b.to_dense();
            prop_assert!((prod - dense).abs().max() < 1e-10);
            prop_assert_eq!(a.transpose().to_dense(), a.to_dense().transpose());
            let x: Vec<f64> = (0..c).map(|i| i as f64 - 1.5).collect();
            let y = a.mul_vec(&x);
            let yd = a.to_dense() * nalgebra::DVector::from_vec(x);
            for (u, v) in y.iter().zip(yd.iter()) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }
    }
}
