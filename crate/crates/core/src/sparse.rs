//! Dense and compressed symmetric sparse matrices.
//!
//! [`SparseSym`] keeps both orientations of every off-diagonal entry in CSR
//! order, so products against it never need to reason about triangles. The
//! attacks work on upper-triangle pairs and mirror every write.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMat({}x{})", self.rows, self.cols)
    }
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) is {}",
                bad / cols.max(1),
                bad % cols.max(1),
                data[bad]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; panics on ragged input. Meant for tests and fixtures.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flatten().copied().collect();
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn ensure(&self, ok: bool, what: &str, other: &DenseMat) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }

    /// `self · rhs`. Zero entries of `self` are skipped, which makes sparse
    /// bag-of-words feature matrices cheap to multiply.
    pub fn matmul(&self, rhs: &DenseMat) -> Result<DenseMat> {
        self.ensure(self.cols == rhs.rows, "matmul", rhs)?;
        let mut out = DenseMat::zeros(self.rows, rhs.cols);
        let rc = rhs.cols;
        if rc == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(rc)
            .enumerate()
            .for_each(|(i, out_row)| {
                for (k, &a) in self.row(i).iter().enumerate() {
                    if a != 0.0 {
                        for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                            *o += a * b;
                        }
                    }
                }
            });
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &DenseMat) -> Result<DenseMat> {
        self.ensure(self.rows == rhs.rows, "t_matmul", rhs)?;
        let mut out = DenseMat::zeros(self.cols, rhs.cols);
        let rc = rhs.cols;
        for k in 0..self.rows {
            let r = rhs.row(k);
            if r.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (i, &a) in self.row(k).iter().enumerate() {
                if a != 0.0 {
                    let o = &mut out.data[i * rc..(i + 1) * rc];
                    for (o, &b) in o.iter_mut().zip(r) {
                        *o += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: &DenseMat) -> Result<DenseMat> {
        self.ensure(self.cols == rhs.cols, "matmul_t", rhs)?;
        let mut out = DenseMat::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                out.data[i * rhs.rows + j] = dot(a, rhs.row(j));
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> DenseMat {
        let mut out = DenseMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseMat) -> Result<()> {
        self.ensure(self.shape() == other.shape(), "axpy", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMat {
        DenseMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// General row-compressed matrix, used for bag-of-words features.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSparse {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl RowSparse {
    pub fn from_dense(m: &DenseMat) -> Self {
        let mut row_ptr = Vec::with_capacity(m.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same pattern with new stored values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len(), "value count mismatch");
        Self {
            values,
            ..self.clone()
        }
    }

    pub fn to_dense(&self) -> DenseMat {
        let mut out = DenseMat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let row = out.row_mut(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.col_idx[k]] = self.values[k];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &DenseMat) -> Result<DenseMat> {
        if self.cols != rhs.rows() {
            return Err(Error::Shape(format!(
                "matmul: {}x{} by {}x{}",
                self.rows,
                self.cols,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let rc = rhs.cols();
        let mut out = DenseMat::zeros(self.rows, rc);
        if rc == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(rc)
            .enumerate()
            .for_each(|(i, out_row)| {
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    let a = self.values[k];
                    for (o, &b) in out_row.iter_mut().zip(rhs.row(self.col_idx[k])) {
                        *o += a * b;
                    }
                }
            });
        Ok(out)
    }

    /// `selfᵀ · rhs`.
    pub fn t_matmul(&self, rhs: &DenseMat) -> Result<DenseMat> {
        if self.rows != rhs.rows() {
            return Err(Error::Shape(format!(
                "t_matmul: {}x{} by {}x{}",
                self.rows,
                self.cols,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let rc = rhs.cols();
        let mut out = DenseMat::zeros(self.cols, rc);
        for i in 0..self.rows {
            let r = rhs.row(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[k];
                let j = self.col_idx[k];
                for (o, &b) in out.data[j * rc..(j + 1) * rc].iter_mut().zip(r) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// Symmetric sparse matrix in CSR form holding both orientations of each entry.
///
/// Invariants: columns are strictly increasing within a row, `(i, j)` is
/// stored iff `(j, i)` is stored with the same value, and every coordinate is
/// below `n`. Adjacency matrices carry no diagonal; [`normalize_adjacency`]
/// adds it.
#[derive(Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    binary: bool,
}

impl fmt::Debug for SparseSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SparseSym(n={}, nnz={}, binary={})",
            self.n,
            self.col_idx.len(),
            self.binary
        )
    }
}

/// Validated undirected edge list to symmetric binary adjacency.
pub fn build_adjacency(edges: &[(usize, usize)], n: usize) -> Result<SparseSym> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in edges {
        for x in [u, v] {
            if x >= n {
                return Err(Error::OutOfRange { index: x, n });
            }
        }
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        rows[u].push(v);
        rows[v].push(u);
    }
    for r in &mut rows {
        r.sort_unstable();
        r.dedup();
    }
    Ok(SparseSym::from_binary_rows(n, rows))
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` with `D̂` the row sums of `A + I`.
pub fn normalize_adjacency(adj: &SparseSym) -> SparseSym {
    adj.normalized()
}

impl SparseSym {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            binary: true,
        }
    }

    fn from_binary_rows(n: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for r in rows {
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![1.0; col_idx.len()];
        Self {
            n,
            row_ptr,
            col_idx,
            values,
            binary: true,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries, counting both orientations.
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Undirected off-diagonal edge count.
    pub fn edge_count(&self) -> usize {
        let diag = (0..self.n).filter(|&i| self.contains(i, i)).count();
        (self.nnz() - diag) / 2
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    /// Number of stored entries in row `i`.
    #[inline]
    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).0.binary_search(&j).is_ok()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    /// Off-diagonal pairs `(i, j)` with `i < j`, sorted.
    pub fn upper_edges(&self) -> Vec<(usize, usize)> {
        self.entries()
            .filter(|&(i, j, _)| i < j)
            .map(|(i, j, _)| (i, j))
            .collect()
    }

    pub fn to_dense(&self) -> DenseMat {
        let mut d = DenseMat::zeros(self.n, self.n);
        for (i, j, v) in self.entries() {
            d.set(i, j, v);
        }
        d
    }

    /// Entrywise L0 distance `‖self − other‖₀`.
    pub fn distance(&self, other: &SparseSym) -> Result<usize> {
        if self.n != other.n {
            return Err(Error::Shape(format!("{} vs {} nodes", self.n, other.n)));
        }
        let mut count = 0;
        for i in 0..self.n {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut a, mut b) = (0, 0);
            while a < ca.len() || b < cb.len() {
                match (ca.get(a), cb.get(b)) {
                    (Some(x), Some(y)) if x == y => {
                        if va[a] != vb[b] {
                            count += 1;
                        }
                        a += 1;
                        b += 1;
                    }
                    (Some(x), Some(y)) if x < y => {
                        count += usize::from(va[a] != 0.0);
                        a += 1;
                    }
                    (Some(_), None) => {
                        count += usize::from(va[a] != 0.0);
                        a += 1;
                    }
                    _ => {
                        count += usize::from(vb[b] != 0.0);
                        b += 1;
                    }
                }
            }
        }
        Ok(count)
    }

    /// Checks every structural invariant. Returns a description of the first violation.
    pub fn check_invariants(&self, allow_diagonal: bool) -> std::result::Result<(), String> {
        if self.row_ptr.len() != self.n + 1 || self.row_ptr[self.n] != self.col_idx.len() {
            return Err("row pointer array inconsistent".into());
        }
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("row {i} not strictly sorted"));
            }
            for (&j, &v) in cols.iter().zip(vals) {
                if j >= self.n {
                    return Err(format!("column {j} out of range in row {i}"));
                }
                if i == j && !allow_diagonal {
                    return Err(format!("diagonal entry at {i}"));
                }
                if self.get(j, i).to_bits() != v.to_bits() || !self.contains(j, i) {
                    return Err(format!("asymmetric entry ({i}, {j})"));
                }
                if self.binary && v != 1.0 {
                    return Err(format!("non-binary value {v} at ({i}, {j})"));
                }
            }
        }
        Ok(())
    }

    fn normalized(&self) -> SparseSym {
        let n = self.n;
        let degree: Vec<f64> = (0..n)
            .map(|i| 1.0 + self.row(i).1.iter().sum::<f64>())
            .collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.nnz() + n);
        let mut values = Vec::with_capacity(self.nnz() + n);
        for i in 0..n {
            let (cols, vals) = self.row(i);
            let mut diag_done = false;
            for (&j, &v) in cols.iter().zip(vals) {
                if !diag_done && j >= i {
                    diag_done = true;
                    if j == i {
                        col_idx.push(i);
                        values.push((1.0 + v) / (degree[i] * degree[i]).sqrt());
                        continue;
                    }
                    col_idx.push(i);
                    values.push(1.0 / (degree[i] * degree[i]).sqrt());
                }
                col_idx.push(j);
                values.push(v / (degree[i] * degree[j]).sqrt());
            }
            if !diag_done {
                col_idx.push(i);
                values.push(1.0 / (degree[i] * degree[i]).sqrt());
            }
            row_ptr.push(col_idx.len());
        }
        SparseSym {
            n,
            row_ptr,
            col_idx,
            values,
            binary: false,
        }
    }

    /// Exact product `self · rhs`. Each output entry is accumulated in stored
    /// column order, so the result does not depend on the thread count.
    pub fn spmm(&self, rhs: &DenseMat) -> Result<DenseMat> {
        if rhs.rows() != self.n {
            return Err(Error::Shape(format!(
                "spmm: {}x{} sparse times {}x{} dense",
                self.n,
                self.n,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let k = rhs.cols();
        let mut out = DenseMat::zeros(self.n, k);
        if k == 0 {
            return Ok(out);
        }
        out.data_mut()
            .par_chunks_mut(k)
            .enumerate()
            .for_each(|(i, out_row)| {
                let (cols, vals) = self.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    for (o, &b) in out_row.iter_mut().zip(rhs.row(j)) {
                        *o += v * b;
                    }
                }
            });
        Ok(out)
    }

    /// Toggles the undirected edge `{i, j}`; returns a new matrix.
    pub fn flip_edge(&self, i: usize, j: usize) -> Result<SparseSym> {
        self.flip_edges(&[(i, j)])
    }

    /// Toggles every listed pair in one pass. A pair listed twice cancels out.
    pub fn flip_edges(&self, pairs: &[(usize, usize)]) -> Result<SparseSym> {
        if !self.binary {
            return Err(Error::Config("edge flips require a binary matrix".into()));
        }
        let n = self.n;
        let mut toggles: Vec<(usize, usize)> = Vec::with_capacity(2 * pairs.len());
        for &(i, j) in pairs {
            for x in [i, j] {
                if x >= n {
                    return Err(Error::OutOfRange { index: x, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            toggles.push((i, j));
            toggles.push((j, i));
        }
        toggles.sort_unstable();
        // an even number of toggles on one coordinate is a no-op
        let mut net: Vec<(usize, usize)> = Vec::with_capacity(toggles.len());
        for t in toggles {
            if net.last() == Some(&t) {
                net.pop();
            } else {
                net.push(t);
            }
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.nnz() + net.len());
        let mut t = 0;
        for r in 0..n {
            let (cols, _) = self.row(r);
            let start = t;
            while t < net.len() && net[t].0 == r {
                t += 1;
            }
            let tog = &net[start..t];
            let (mut a, mut b) = (0, 0);
            while a < cols.len() || b < tog.len() {
                match (cols.get(a), tog.get(b).map(|p| p.1)) {
                    (Some(&c), Some(tc)) if c == tc => {
                        a += 1;
                        b += 1;
                    }
                    (Some(&c), Some(tc)) if c < tc => {
                        col_idx.push(c);
                        a += 1;
                    }
                    (Some(&c), None) => {
                        col_idx.push(c);
                        a += 1;
                    }
                    (_, Some(tc)) => {
                        col_idx.push(tc);
                        b += 1;
                    }
                    (None, None) => unreachable!(),
                }
            }
            row_ptr.push(col_idx.len());
        }
        let values = vec![1.0; col_idx.len()];
        Ok(SparseSym {
            n,
            row_ptr,
            col_idx,
            values,
            binary: true,
        })
    }
}
