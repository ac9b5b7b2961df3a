//! Compressed sparse row matrices and deterministic parallel kernels.
//!
//! All reductions use fixed-size blocking so results are bit-identical
//! regardless of the number of worker threads.

use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Chunk size for row-parallel kernels and blocked reductions.
const PAR_BLOCK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), nrows + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        debug_assert_eq!(*row_ptr.last().unwrap(), col_idx.len());
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    /// Build from triplets. Duplicate entries are summed in their insertion
    /// order, so a deterministic triplet order yields bit-identical values.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1, t));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (r, c, v) = triplets[t];
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Simultaneous access to the structure and mutable values.
    pub fn parts_mut(&mut self) -> (&[usize], &[usize], &mut [f64]) {
        (&self.row_ptr, &self.col_idx, &mut self.values)
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// Position of entry (i, j) in the value array, if present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let a = self.row_ptr[i];
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|p| a + p)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// y = A x, row-parallel.
    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(
            x.len(),
            self.ncols,
            "spmv dimension mismatch: matrix is {}x{}, vector has {}",
            self.nrows,
            self.ncols,
            x.len()
        );
        assert_eq!(y.len(), self.nrows);
        let rp = &self.row_ptr;
        let ci = &self.col_idx;
        let vv = &self.values;
        y.par_chunks_mut(PAR_BLOCK).enumerate().for_each(|(chunk, out)| {
            let base = chunk * PAR_BLOCK;
            for (k, yi) in out.iter_mut().enumerate() {
                let i = base + k;
                let mut acc = 0.0;
                for p in rp[i]..rp[i + 1] {
                    acc += vv[p] * x[ci[p]];
                }
                *yi = acc;
            }
        });
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut count = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            count[c + 1] += 1;
        }
        for i in 0..self.ncols {
            count[i + 1] += count[i];
        }
        let mut row_ptr = count.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.col_idx[p];
                let dst = row_ptr[c];
                col_idx[dst] = i;
                values[dst] = self.values[p];
                row_ptr[c] += 1;
            }
        }
        CsrMatrix::from_parts(self.ncols, self.nrows, count, col_idx, values)
    }

    /// C = A * B with sorted rows; row-sequential merge keeps it deterministic.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..self.nrows)
            .into_par_iter()
            .map(|i| {
                // accumulate row i of C = sum_k a_ik * B[k,:]
                let mut acc: Vec<(usize, f64)> = Vec::new();
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    let k = self.col_idx[p];
                    let a = self.values[p];
                    for q in other.row_ptr[k]..other.row_ptr[k + 1] {
                        acc.push((other.col_idx[q], a * other.values[q]));
                    }
                }
                acc.sort_by_key(|e| e.0);
                let mut cols = Vec::new();
                let mut vals: Vec<f64> = Vec::new();
                for (c, v) in acc {
                    if cols.last() == Some(&c) {
                        *vals.last_mut().unwrap() += v;
                    } else {
                        cols.push(c);
                        vals.push(v);
                    }
                }
                (cols, vals)
            })
            .collect();
        let mut row_ptr = vec![0usize; self.nrows + 1];
        for (i, (cols, _)) in rows.iter().enumerate() {
            row_ptr[i + 1] = row_ptr[i] + cols.len();
        }
        let mut col_idx = Vec::with_capacity(row_ptr[self.nrows]);
        let mut values = Vec::with_capacity(row_ptr[self.nrows]);
        for (cols, vals) in rows {
            col_idx.extend(cols);
            values.extend(vals);
        }
        CsrMatrix::from_parts(self.nrows, other.ncols, row_ptr, col_idx, values)
    }

    /// Extract the square sub-block with the given contiguous index range.
    pub fn extract_block(&self, row_start: usize, row_len: usize, col_start: usize, col_len: usize) -> CsrMatrix {
        let mut row_ptr = vec![0usize; row_len + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..row_len {
            let (cols, vals) = self.row(row_start + i);
            for (c, v) in cols.iter().zip(vals) {
                if *c >= col_start && *c < col_start + col_len {
                    col_idx.push(c - col_start);
                    values.push(*v);
                }
            }
            row_ptr[i + 1] = col_idx.len();
        }
        CsrMatrix::from_parts(row_len, col_len, row_ptr, col_idx, values)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d[i][*c] = *v;
            }
        }
        d
    }

    /// Write in Matrix Market coordinate format (1-based indices).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(f, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(f, "{} {} {:e}", i + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Triplet buffer filled cell-by-cell during assembly. Parallel assembly
/// writes into per-chunk buffers that are concatenated in chunk order, so
/// the final triplet sequence is independent of the worker count.
#[derive(Debug, Default)]
pub struct TripletBuffer {
    pub entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn build(&self, nrows: usize, ncols: usize) -> CsrMatrix {
        CsrMatrix::from_triplets(nrows, ncols, &self.entries)
    }
}

// ---------------------------------------------------------------------------
// Deterministic vector kernels
// ---------------------------------------------------------------------------

/// Dot product with fixed-size blocking: block sums are computed sequentially
/// within each block (possibly on different threads) and combined in block
/// order, so the result does not depend on the thread count.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let partials: Vec<f64> = a
        .par_chunks(PAR_BLOCK)
        .zip(b.par_chunks(PAR_BLOCK))
        .map(|(xa, xb)| {
            let mut s = 0.0;
            for (u, v) in xa.iter().zip(xb) {
                s += u * v;
            }
            s
        })
        .collect();
    partials.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_chunks_mut(PAR_BLOCK).zip(x.par_chunks(PAR_BLOCK)).for_each(|(yc, xc)| {
        for (yi, xi) in yc.iter_mut().zip(xc) {
            *yi += alpha * xi;
        }
    });
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.par_chunks_mut(PAR_BLOCK).for_each(|c| {
        for v in c {
            *v *= alpha;
        }
    });
}

/// out = a - b
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

// ---------------------------------------------------------------------------
// Dense helpers for coarse solves and small systems
// ---------------------------------------------------------------------------

/// Dense LU factorization with partial pivoting, row-major storage.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factor(n: usize, a: &[f64]) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut lu = a.to_vec();
        let mut piv = vec![0usize; n];
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for k in 0..n {
            let mut p = k;
            let mut pmax = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax <= 1e-14 * scale {
                return Err(Error::Singular(format!("dense pivot {pmax:.3e} at column {k}")));
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let l = lu[i * n + k] / d;
                lu[i * n + k] = l;
                for j in k + 1..n {
                    lu[i * n + j] -= l * lu[k * n + j];
                }
            }
        }
        Ok(DenseLu { n, lu, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn triplets_sum_duplicates() {
        let t = vec![(0, 0, 1.0), (0, 1, 2.0), (0, 0, 0.5), (1, 1, 3.0)];
        let a = CsrMatrix::from_triplets(2, 2, &t);
        assert_eq!(a.get(0, 0), 1.5);
        assert_eq!(a.get(0, 1), 2.0);
        assert_eq!(a.get(1, 1), 3.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn spmv_identity() {
        let a = CsrMatrix::identity(5);
        let x = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        assert_eq!(a.spmv(&x), x);
    }

    #[test]
    fn spmv_zero_matrix() {
        let a = CsrMatrix::from_triplets(3, 3, &[]);
        assert_eq!(a.spmv(&[1.0, 2.0, 3.0]), vec![0.0; 3]);
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn spmv_dimension_mismatch() {
        let a = CsrMatrix::identity(3);
        a.spmv(&[1.0, 2.0]);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        let b = CsrMatrix::from_triplets(3, 2, &[(0, 0, 3.0), (1, 0, 1.0), (2, 1, 4.0)]);
        let c = a.matmul(&b);
        let d = c.to_dense();
        assert_eq!(d[0], vec![3.0, 8.0]);
        assert_eq!(d[1], vec![-1.0, 0.0]);
    }

    #[test]
    fn dense_lu_roundtrip() {
        let a = vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let lu = DenseLu::factor(3, &a).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        // residual check
        let r0 = 4.0 * x[0] + x[1] - 1.0;
        let r1 = x[0] + 3.0 * x[1] + x[2] - 2.0;
        let r2 = x[1] + 2.0 * x[2] - 3.0;
        assert!(r0.abs() + r1.abs() + r2.abs() < 1e-12);
    }

    #[test]
    fn dense_lu_singular() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(DenseLu::factor(2, &a).is_err());
    }

    proptest! {
        // spmv agrees with a dense product on random small matrices
        #[test]
        fn spmv_matches_dense(entries in proptest::collection::vec((0usize..8, 0usize..8, -10.0f64..10.0), 0..40),
                              x in proptest::collection::vec(-5.0f64..5.0, 8)) {
            let a = CsrMatrix::from_triplets(8, 8, &entries);
            let y = a.spmv(&x);
            let d = a.to_dense();
            for i in 0..8 {
                let want: f64 = (0..8).map(|j| d[i][j] * x[j]).sum();
                prop_assert!((y[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }
}
