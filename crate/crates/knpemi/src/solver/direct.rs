//! Sparse LU with partial pivoting for small and mid-size systems.
//!
//! Left-looking (Gilbert-Peierls) factorization on a reverse Cuthill-McKee
//! preordering of the symmetrized pattern. Threshold pivoting prefers the
//! structural diagonal to limit fill while keeping numerical safety.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const DEFAULT_DIRECT_CAP: usize = 200_000;

/// Reverse Cuthill-McKee ordering of the symmetrized pattern.
/// Returns `perm` with `perm[new] = old`.
fn rcm_order(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    // symmetrized adjacency
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let (cols, _) = a.row(i);
        for &j in cols {
            if j != i {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    loop {
        // lowest-degree unvisited seed (deterministic)
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i));
        let seed = match seed {
            Some(s) => s,
            None => break,
        };
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nb.sort_by_key(|&u| (degree[u], u));
            for u in nb {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

struct Csc {
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    values: Vec<f64>,
}

pub struct SparseLu {
    n: usize,
    /// Column permutation (and symmetric row preorder): perm[new] = old.
    perm: Vec<usize>,
    /// Row pivoting of the preordered matrix: pinv[preordered row] = pivot k.
    pinv: Vec<usize>,
    l: Csc,
    u: Csc,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(a.ncols(), n);
        let perm = rcm_order(a);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // CSC of the preordered matrix
        let mut count = vec![0usize; n + 1];
        for i in 0..n {
            let (cols, _) = a.row(i);
            for &j in cols {
                count[iperm[j] + 1] += 1;
            }
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let nnz = a.nnz();
        let mut colptr = count.clone();
        let mut rowidx = vec![0usize; nnz];
        let mut values = vec![0.0f64; nnz];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let pi = iperm[i];
            for (&j, &v) in cols.iter().zip(vals) {
                let pj = iperm[j];
                let dst = colptr[pj];
                rowidx[dst] = pi;
                values[dst] = v;
                colptr[pj] += 1;
            }
        }
        let ap = Csc { colptr: count, rowidx, values };

        let mut l = Csc { colptr: vec![0], rowidx: Vec::new(), values: Vec::new() };
        let mut u = Csc { colptr: vec![0], rowidx: Vec::new(), values: Vec::new() };
        let mut pinv = vec![usize::MAX; n];
        let mut x = vec![0.0f64; n];
        let mut marks = vec![usize::MAX; n];
        let mut topo: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for k in 0..n {
            // ----- symbolic: reach of A(:,k) in the graph of L -----
            topo.clear();
            let acol = ap.colptr[k]..ap.colptr[k + 1];
            for p in acol.clone() {
                let r0 = ap.rowidx[p];
                if marks[r0] == k {
                    continue;
                }
                stack.push((r0, 0));
                marks[r0] = k;
                while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
                    let col = pinv[node];
                    let mut descended = false;
                    if col != usize::MAX {
                        let lo = l.colptr[col] + 1; // skip the unit diagonal
                        let hi = l.colptr[col + 1];
                        while lo + *pos < hi {
                            let child = l.rowidx[lo + *pos];
                            *pos += 1;
                            if marks[child] != k {
                                marks[child] = k;
                                stack.push((child, 0));
                                descended = true;
                                break;
                            }
                        }
                    }
                    if !descended {
                        if let Some((done, _)) = stack.pop() {
                            topo.push(done);
                        }
                    }
                }
            }
            topo.reverse(); // reverse postorder = dependency order

            // ----- numeric sparse triangular solve x = L \ A(:,k) -----
            for &r in &topo {
                x[r] = 0.0;
            }
            let mut col_scale = 0.0f64;
            for p in acol {
                x[ap.rowidx[p]] = ap.values[p];
                col_scale = col_scale.max(ap.values[p].abs());
            }
            for &j in &topo {
                let jcol = pinv[j];
                if jcol == usize::MAX {
                    continue;
                }
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                for p in l.colptr[jcol] + 1..l.colptr[jcol + 1] {
                    x[l.rowidx[p]] -= l.values[p] * xj;
                }
            }

            // ----- pivot selection (threshold, diagonal preferred) -----
            let mut pmax = 0.0f64;
            let mut ipiv = usize::MAX;
            for &r in &topo {
                if pinv[r] == usize::MAX {
                    let t = x[r].abs();
                    if t > pmax {
                        pmax = t;
                        ipiv = r;
                    }
                }
            }
            if ipiv == usize::MAX || pmax <= 1e-13 * col_scale.max(1e-300) {
                return Err(Error::Singular(format!(
                    "sparse LU: no acceptable pivot in column {k} (max candidate {pmax:.3e})"
                )));
            }
            if pinv[k] == usize::MAX && x[k].abs() >= 0.1 * pmax && marks[k] == k {
                ipiv = k; // keep the RCM diagonal when it is large enough
            }
            let pivot = x[ipiv];

            // ----- store U(:,k) and L(:,k) -----
            for &r in &topo {
                let pr = pinv[r];
                if pr != usize::MAX && x[r] != 0.0 {
                    u.rowidx.push(pr);
                    u.values.push(x[r]);
                }
            }
            u.rowidx.push(k);
            u.values.push(pivot);
            u.colptr.push(u.rowidx.len());

            pinv[ipiv] = k;
            l.rowidx.push(ipiv);
            l.values.push(1.0);
            for &r in &topo {
                if pinv[r] == usize::MAX && x[r] != 0.0 {
                    l.rowidx.push(r);
                    l.values.push(x[r] / pivot);
                }
            }
            l.colptr.push(l.rowidx.len());
        }

        // remap L's row indices into pivot coordinates
        for r in l.rowidx.iter_mut() {
            *r = pinv[*r];
        }

        Ok(SparseLu { n, perm, pinv, l, u })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        // z in pivot coordinates: z[pinv[i_pre]] = b[perm[i_pre]]
        let mut z = vec![0.0; n];
        for i_pre in 0..n {
            z[self.pinv[i_pre]] = b[self.perm[i_pre]];
        }
        // forward solve L z = z (unit diagonal first in each column)
        for j in 0..n {
            let zj = z[j];
            if zj != 0.0 {
                for p in self.l.colptr[j] + 1..self.l.colptr[j + 1] {
                    z[self.l.rowidx[p]] -= self.l.values[p] * zj;
                }
            }
        }
        // backward solve U z = z (diagonal entry last in each column)
        for j in (0..n).rev() {
            let hi = self.u.colptr[j + 1];
            let diag = self.u.values[hi - 1];
            let zj = z[j] / diag;
            z[j] = zj;
            if zj != 0.0 {
                for p in self.u.colptr[j]..hi - 1 {
                    z[self.u.rowidx[p]] -= self.u.values[p] * zj;
                }
            }
        }
        // scatter back through the column preorder
        let mut xout = vec![0.0; n];
        for j_pre in 0..n {
            xout[self.perm[j_pre]] = z[j_pre];
        }
        xout
    }

    pub fn nnz(&self) -> usize {
        self.l.rowidx.len() + self.u.rowidx.len()
    }
}

impl crate::solver::Precondition for SparseLu {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        self.solve(r)
    }
}

/// Factor and solve with a size cap and one step of iterative refinement;
/// verifies the final relative residual.
pub fn direct_solve(a: &CsrMatrix, b: &[f64], cap: usize) -> Result<Vec<f64>> {
    if a.nrows() > cap {
        return Err(Error::SizeCap { size: a.nrows(), cap });
    }
    let lu = SparseLu::factor(a)?;
    let mut x = lu.solve(b);
    let r = crate::sparse::sub(b, &a.spmv(&x));
    let dx = lu.solve(&r);
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    let r = crate::sparse::sub(b, &a.spmv(&x));
    let bn = crate::sparse::norm(b);
    let rel = if bn > 0.0 { crate::sparse::norm(&r) / bn } else { crate::sparse::norm(&r) };
    if rel > 1e-10 {
        return Err(Error::Singular(format!(
            "direct solve residual {rel:.3e} exceeds 1e-10; matrix is ill-conditioned or singular"
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::norm;

    fn laplace_2d(nx: usize) -> CsrMatrix {
        let n = nx * nx;
        let id = |i: usize, j: usize| i * nx + j;
        let mut t = Vec::new();
        for i in 0..nx {
            for j in 0..nx {
                t.push((id(i, j), id(i, j), 4.0));
                if i > 0 {
                    t.push((id(i, j), id(i - 1, j), -1.0));
                }
                if i + 1 < nx {
                    t.push((id(i, j), id(i + 1, j), -1.0));
                }
                if j > 0 {
                    t.push((id(i, j), id(i, j - 1), -1.0));
                }
                if j + 1 < nx {
                    t.push((id(i, j), id(i, j + 1), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn identity_solve() {
        let a = CsrMatrix::identity(9);
        let b: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
        let x = direct_solve(&a, &b, 100).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn solves_2d_laplace() {
        let a = laplace_2d(20);
        let n = a.nrows();
        let xtrue: Vec<f64> = (0..n).map(|i| ((i % 23) as f64) / 23.0).collect();
        let b = a.spmv(&xtrue);
        let x = direct_solve(&a, &b, 1000).unwrap();
        let err: f64 = x.iter().zip(&xtrue).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(err <= 1e-10 * norm(&xtrue));
    }

    #[test]
    fn solves_unsymmetric_with_pivoting() {
        // a matrix needing row exchanges
        let t = vec![
            (0usize, 0usize, 1e-12),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (1, 1, 1.0),
            (2, 2, 3.0),
            (0, 2, 0.5),
            (2, 0, -0.5),
        ];
        let a = CsrMatrix::from_triplets(3, 3, &t);
        let xtrue = vec![1.0, -2.0, 0.5];
        let b = a.spmv(&xtrue);
        let x = direct_solve(&a, &b, 10).unwrap();
        for (u, v) in x.iter().zip(&xtrue) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn detects_singularity() {
        let t = vec![
            (0usize, 0usize, 1.0),
            (0, 1, 2.0),
            (1, 0, 2.0),
            (1, 1, 4.0),
            (2, 2, 1.0),
        ];
        let a = CsrMatrix::from_triplets(3, 3, &t);
        let r = direct_solve(&a, &[1.0, 2.0, 3.0], 10);
        assert!(matches!(r, Err(Error::Singular(_))), "{r:?}");
    }

    #[test]
    fn size_cap_enforced() {
        let a = CsrMatrix::identity(100);
        let b = vec![1.0; 100];
        assert!(matches!(direct_solve(&a, &b, 99), Err(Error::SizeCap { .. })));
    }
}
