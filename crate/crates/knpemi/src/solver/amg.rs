//! Classical Ruge-Stueben algebraic multigrid.
//!
//! Strength of connection on negative couplings, greedy C/F splitting,
//! direct interpolation normalized to reproduce constants exactly, Galerkin
//! coarse operators, damped-Jacobi V(1,1) cycles and a dense factorization of
//! the coarsest level. Setup is single-threaded and fully deterministic; the
//! cycle itself uses the deterministic parallel kernels.

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, DenseLu};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmgOptions {
    /// Strength-of-connection threshold.
    pub theta: f64,
    /// Damped-Jacobi relaxation weight.
    pub omega: f64,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    /// Coarsen until at most this many unknowns, then factor directly.
    pub coarse_cap: usize,
    pub max_levels: usize,
}

impl Default for AmgOptions {
    fn default() -> Self {
        AmgOptions {
            theta: 0.25,
            omega: 2.0 / 3.0,
            pre_sweeps: 1,
            post_sweeps: 1,
            coarse_cap: 200,
            max_levels: 30,
        }
    }
}

struct Level {
    a: CsrMatrix,
    dinv: Vec<f64>,
    /// Interpolation to this level from the next coarser one.
    prolongation: Option<CsrMatrix>,
    restriction: Option<CsrMatrix>,
}

pub struct AmgHierarchy {
    levels: Vec<Level>,
    coarse_lu: Option<DenseLu>,
    options: AmgOptions,
}

impl AmgHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_size(&self, l: usize) -> usize {
        self.levels[l].a.nrows()
    }

    pub fn options(&self) -> &AmgOptions {
        &self.options
    }

    pub fn prolongation(&self, l: usize) -> Option<&CsrMatrix> {
        self.levels[l].prolongation.as_ref()
    }

    /// Operator complexity: total nnz across levels over fine-level nnz.
    pub fn operator_complexity(&self) -> f64 {
        let fine = self.levels[0].a.nnz() as f64;
        let total: usize = self.levels.iter().map(|l| l.a.nnz()).sum();
        total as f64 / fine
    }
}

/// Strength sets S_i = { j != i : -a_ij >= theta * max_l(-a_il) }.
fn strength_graph(a: &CsrMatrix, theta: f64) -> (Vec<usize>, Vec<usize>) {
    let n = a.nrows();
    let mut ptr = vec![0usize; n + 1];
    let mut idx = Vec::new();
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let mut mneg = 0.0f64;
        for (c, v) in cols.iter().zip(vals) {
            if *c != i && *v < 0.0 {
                mneg = mneg.max(-v);
            }
        }
        if mneg > 0.0 {
            let cut = theta * mneg;
            for (c, v) in cols.iter().zip(vals) {
                if *c != i && -*v >= cut {
                    idx.push(*c);
                }
            }
        }
        ptr[i + 1] = idx.len();
    }
    (ptr, idx)
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    Unassigned,
    Coarse,
    Fine,
}

/// Greedy first-pass Ruge-Stueben C/F splitting with deterministic
/// tie-breaking by index.
fn cf_splitting(n: usize, sptr: &[usize], sidx: &[usize]) -> Vec<Mark> {
    // transpose of the strength graph
    let mut tcount = vec![0usize; n + 1];
    for &j in sidx {
        tcount[j + 1] += 1;
    }
    for i in 0..n {
        tcount[i + 1] += tcount[i];
    }
    let mut tidx = vec![0usize; sidx.len()];
    let mut fill = tcount.clone();
    for i in 0..n {
        for p in sptr[i]..sptr[i + 1] {
            let j = sidx[p];
            tidx[fill[j]] = i;
            fill[j] += 1;
        }
    }

    let mut lambda: Vec<usize> = (0..n).map(|i| tcount[i + 1] - tcount[i]).collect();
    let mut marks = vec![Mark::Unassigned; n];

    // bucket queue over lambda values
    let max_possible = n + sidx.len() + 1;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); 2];
    for i in 0..n {
        let l = lambda[i];
        if buckets.len() <= l {
            buckets.resize(l + 1, Vec::new());
        }
        buckets[l].push(i);
    }
    let mut remaining = n;
    let mut top = buckets.len() - 1;

    let mut bump = |buckets: &mut Vec<Vec<usize>>, lambda: &mut Vec<usize>, i: usize| {
        lambda[i] += 1;
        let l = lambda[i];
        if buckets.len() <= l {
            buckets.resize((l + 1).min(max_possible), Vec::new());
        }
        buckets[l].push(i);
    };

    while remaining > 0 {
        // pop the unassigned point with the largest lambda; stale entries are
        // skipped (lambda mismatch or already assigned)
        let mut pick = None;
        'outer: loop {
            if top >= buckets.len() {
                top = buckets.len() - 1;
            }
            while !buckets[top].is_empty() {
                // smallest index among the candidates pushed for this lambda:
                // entries were pushed in ascending discovery order, but
                // lambda updates can reorder; scan for the minimum index to
                // keep the choice deterministic
                let mut best_pos = 0;
                for (pos, &cand) in buckets[top].iter().enumerate() {
                    if cand < buckets[top][best_pos] {
                        best_pos = pos;
                    }
                }
                let cand = buckets[top].swap_remove(best_pos);
                if marks[cand] == Mark::Unassigned && lambda[cand] == top {
                    pick = Some(cand);
                    break 'outer;
                }
            }
            if top == 0 {
                break;
            }
            top -= 1;
        }
        let c = match pick {
            Some(c) => c,
            None => {
                // everything left is stale; assign remaining as coarse
                for i in 0..n {
                    if marks[i] == Mark::Unassigned {
                        marks[i] = Mark::Coarse;
                        remaining -= 1;
                    }
                }
                break;
            }
        };
        marks[c] = Mark::Coarse;
        remaining -= 1;
        for p in tcount[c]..tcount[c + 1] {
            let i = tidx[p];
            if marks[i] == Mark::Unassigned {
                marks[i] = Mark::Fine;
                remaining -= 1;
                for q in sptr[i]..sptr[i + 1] {
                    let l = sidx[q];
                    if marks[l] == Mark::Unassigned {
                        bump(&mut buckets, &mut lambda, l);
                        if lambda[l] > top {
                            top = lambda[l];
                        }
                    }
                }
            }
        }
    }
    marks
}

/// Direct interpolation with rows normalized to sum to one, so constants are
/// reproduced exactly on every level.
fn interpolation(
    a: &CsrMatrix,
    sptr: &[usize],
    sidx: &[usize],
    marks: &[Mark],
) -> (CsrMatrix, usize) {
    let n = a.nrows();
    let mut cmap = vec![usize::MAX; n];
    let mut nc = 0usize;
    for i in 0..n {
        if marks[i] == Mark::Coarse {
            cmap[i] = nc;
            nc += 1;
        }
    }
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        match marks[i] {
            Mark::Coarse => triplets.push((i, cmap[i], 1.0)),
            Mark::Fine => {
                // strong coarse neighbours carry the (negative) couplings
                let strong: Vec<usize> = sidx[sptr[i]..sptr[i + 1]]
                    .iter()
                    .copied()
                    .filter(|&j| marks[j] == Mark::Coarse)
                    .collect();
                if strong.is_empty() {
                    // no interpolatory set; the point is handled by smoothing
                    continue;
                }
                let mut weights = Vec::with_capacity(strong.len());
                let mut total = 0.0;
                for &j in &strong {
                    let v = a.get(i, j);
                    weights.push(v);
                    total += v;
                }
                if total == 0.0 {
                    let w = 1.0 / strong.len() as f64;
                    for &j in &strong {
                        triplets.push((i, cmap[j], w));
                    }
                } else {
                    for (&j, &v) in strong.iter().zip(&weights) {
                        triplets.push((i, cmap[j], v / total));
                    }
                }
            }
            Mark::Unassigned => unreachable!(),
        }
    }
    (CsrMatrix::from_triplets(n, nc, &triplets), nc)
}

pub fn amg_setup(a: &CsrMatrix, options: AmgOptions) -> Result<AmgHierarchy> {
    assert_eq!(a.nrows(), a.ncols());
    let diag_inv = |m: &CsrMatrix| -> Result<Vec<f64>> {
        let d = m.diagonal();
        let mut inv = Vec::with_capacity(d.len());
        for (i, v) in d.iter().enumerate() {
            if *v == 0.0 {
                return Err(Error::Singular(format!(
                    "zero diagonal at row {i} during multigrid setup"
                )));
            }
            inv.push(1.0 / v);
        }
        Ok(inv)
    };

    let mut levels = vec![Level {
        dinv: diag_inv(a)?,
        a: a.clone(),
        prolongation: None,
        restriction: None,
    }];

    while levels.len() < options.max_levels {
        let fine_n = levels.last().unwrap().a.nrows();
        if fine_n <= options.coarse_cap {
            break;
        }
        let (p, nc) = {
            let fine = &levels.last().unwrap().a;
            let (sptr, sidx) = strength_graph(fine, options.theta);
            let marks = cf_splitting(fine_n, &sptr, &sidx);
            interpolation(fine, &sptr, &sidx, &marks)
        };
        if nc == 0 || nc >= fine_n {
            break; // no progress possible (e.g. diagonal matrices)
        }
        let r = p.transpose();
        let ac = {
            let fine = &levels.last().unwrap().a;
            r.matmul(&fine.matmul(&p))
        };
        let dinv = diag_inv(&ac)?;
        let last = levels.last_mut().unwrap();
        last.prolongation = Some(p);
        last.restriction = Some(r);
        levels.push(Level { a: ac, dinv, prolongation: None, restriction: None });
    }

    let coarse_lu = {
        let coarse = &levels.last().unwrap().a;
        if coarse.nrows() <= options.coarse_cap {
            let n = coarse.nrows();
            let mut dense = vec![0.0; n * n];
            for i in 0..n {
                let (cols, vals) = coarse.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    dense[i * n + c] = *v;
                }
            }
            // a singular coarse operator falls back to smoothing only
            DenseLu::factor(n, &dense).ok()
        } else {
            None
        }
    };

    Ok(AmgHierarchy { levels, coarse_lu, options })
}

fn jacobi_sweeps(level: &Level, rhs: &[f64], x: &mut Vec<f64>, omega: f64, sweeps: usize) {
    for _ in 0..sweeps {
        let ax = level.a.spmv(x);
        for i in 0..x.len() {
            x[i] += omega * level.dinv[i] * (rhs[i] - ax[i]);
        }
    }
}

fn cycle(h: &AmgHierarchy, level: usize, rhs: &[f64]) -> Vec<f64> {
    let lev = &h.levels[level];
    let n = lev.a.nrows();
    if level + 1 == h.levels.len() {
        if let Some(lu) = &h.coarse_lu {
            return lu.solve(rhs);
        }
        let mut x = vec![0.0; n];
        jacobi_sweeps(lev, rhs, &mut x, h.options.omega, 1);
        return x;
    }
    let mut x = vec![0.0; n];
    jacobi_sweeps(lev, rhs, &mut x, h.options.omega, h.options.pre_sweeps);
    let ax = lev.a.spmv(&x);
    let residual: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let rc = lev.restriction.as_ref().unwrap().spmv(&residual);
    let ec = cycle(h, level + 1, &rc);
    let ef = lev.prolongation.as_ref().unwrap().spmv(&ec);
    for i in 0..n {
        x[i] += ef[i];
    }
    jacobi_sweeps(lev, rhs, &mut x, h.options.omega, h.options.post_sweeps);
    x
}

/// One V-cycle applied to a residual; a fixed linear, stationary operation.
pub fn v_cycle(h: &AmgHierarchy, r: &[f64]) -> Vec<f64> {
    cycle(h, 0, r)
}

/// Convenience preconditioner wrapper around one V-cycle.
pub struct VCyclePrecond<'a>(pub &'a AmgHierarchy);

impl crate::solver::Precondition for VCyclePrecond<'_> {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        v_cycle(self.0, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::norm;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

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
    fn one_vcycle_contracts_1d_poisson() {
        let n = 64;
        let a = laplace_1d(n);
        // force a true multilevel hierarchy
        let opts = AmgOptions { coarse_cap: 8, ..Default::default() };
        let h = amg_setup(&a, opts).unwrap();
        assert!(h.num_levels() >= 2);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let x = v_cycle(&h, &b);
        let r = crate::sparse::sub(&b, &a.spmv(&x));
        assert!(
            norm(&r) * 5.0 <= norm(&b),
            "one V-cycle should reduce the residual by 5x: {} vs {}",
            norm(&r),
            norm(&b)
        );
    }

    #[test]
    fn small_problem_is_single_level_exact() {
        let a = laplace_1d(64);
        let h = amg_setup(&a, AmgOptions::default()).unwrap();
        assert_eq!(h.num_levels(), 1);
        let b = vec![1.0; 64];
        let x = v_cycle(&h, &b);
        let r = crate::sparse::sub(&b, &a.spmv(&x));
        assert!(norm(&r) <= 1e-10 * norm(&b));
    }

    #[test]
    fn constants_interpolate_exactly() {
        let a = laplace_2d(24);
        let opts = AmgOptions { coarse_cap: 20, ..Default::default() };
        let h = amg_setup(&a, opts).unwrap();
        assert!(h.num_levels() >= 2);
        for l in 0..h.num_levels() - 1 {
            let p = h.prolongation(l).unwrap();
            let ones = vec![1.0; p.ncols()];
            let fine = p.spmv(&ones);
            // interior F points interpolate from nonempty coarse sets;
            // every row must sum to exactly one
            for (i, v) in fine.iter().enumerate() {
                let (cols, _) = p.row(i);
                if cols.is_empty() {
                    continue;
                }
                assert!((v - 1.0).abs() <= 1e-12, "row {i} of P sums to {v}");
            }
        }
    }

    #[test]
    fn diagonal_matrix_terminates_at_one_level() {
        let t: Vec<(usize, usize, f64)> = (0..500).map(|i| (i, i, 2.0 + i as f64)).collect();
        let a = CsrMatrix::from_triplets(500, 500, &t);
        let h = amg_setup(&a, AmgOptions::default()).unwrap();
        assert_eq!(h.num_levels(), 1);
        // coarsest level above the cap: one smoother sweep
        let r = vec![1.0; 500];
        let z = v_cycle(&h, &r);
        for (i, zi) in z.iter().enumerate() {
            let want = (2.0 / 3.0) / (2.0 + i as f64);
            assert!((zi - want).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_residual_maps_to_zero() {
        let a = laplace_1d(100);
        let h = amg_setup(&a, AmgOptions { coarse_cap: 10, ..Default::default() }).unwrap();
        let z = v_cycle(&h, &vec![0.0; 100]);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vcycle_is_linear() {
        let a = laplace_2d(16);
        let h = amg_setup(&a, AmgOptions { coarse_cap: 16, ..Default::default() }).unwrap();
        let r: Vec<f64> = (0..256).map(|i| (i as f64 * 0.61).cos()).collect();
        let r2: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let z1 = v_cycle(&h, &r);
        let z2 = v_cycle(&h, &r2);
        let scale = z1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in z1.iter().zip(&z2) {
            assert!((2.0 * a - b).abs() <= 1e-13 * scale.max(1e-300));
        }
    }

    #[test]
    fn zero_diagonal_rejected() {
        let t = vec![(0usize, 1usize, 1.0), (1, 0, 1.0)];
        let a = CsrMatrix::from_triplets(2, 2, &t);
        assert!(matches!(amg_setup(&a, AmgOptions::default()), Err(Error::Singular(_))));
    }

    #[test]
    fn vcycle_preconditioned_cg_is_h_robust() {
        // iteration counts may not grow more than 2x across a 8x mesh range
        let mut counts = Vec::new();
        for nx in [16usize, 32, 64, 128] {
            let a = laplace_2d(nx);
            let h = amg_setup(&a, AmgOptions { coarse_cap: 40, ..Default::default() }).unwrap();
            let n = nx * nx;
            let b: Vec<f64> = (0..n).map(|i| ((i % 17) as f64) / 17.0 - 0.5).collect();
            // count CG iterations via the residual trajectory
            let mut iters = 0;
            let mut x = vec![0.0; n];
            let mut r = b.clone();
            let mut z = v_cycle(&h, &r);
            let mut p = z.clone();
            let mut rz = crate::sparse::dot(&r, &z);
            let bnorm = norm(&b);
            while norm(&r) > 1e-8 * bnorm && iters < 200 {
                let ap = a.spmv(&p);
                let alpha = rz / crate::sparse::dot(&p, &ap);
                crate::sparse::axpy(alpha, &p, &mut x);
                crate::sparse::axpy(-alpha, &ap, &mut r);
                z = v_cycle(&h, &r);
                let rz2 = crate::sparse::dot(&r, &z);
                let beta = rz2 / rz;
                rz = rz2;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
                iters += 1;
            }
            counts.push(iters);
        }
        let max = *counts.iter().max().unwrap() as f64;
        let min = *counts.iter().min().unwrap().max(&1) as f64;
        assert!(max / min < 2.0, "iteration counts not h-robust: {counts:?}");
    }
}
