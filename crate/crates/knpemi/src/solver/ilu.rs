//! Zero-fill incomplete LU factorization on the matrix's own pattern.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub struct Ilu0 {
    factors: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let mut m = a.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            match m.position(i, i) {
                Some(p) => diag_pos[i] = p,
                None => {
                    return Err(Error::Singular(format!("ILU(0): missing diagonal in row {i}")))
                }
            }
        }
        let rp: Vec<usize> = m.row_ptr().to_vec();
        let ci: Vec<usize> = m.col_idx().to_vec();
        for i in 1..n {
            let row_start = rp[i];
            let row_end = rp[i + 1];
            for kp in row_start..row_end {
                let k = ci[kp];
                if k >= i {
                    break;
                }
                let ukk = m.values()[diag_pos[k]];
                if ukk == 0.0 {
                    return Err(Error::Singular(format!("ILU(0): zero pivot at row {k}")));
                }
                let lik = m.values()[kp] / ukk;
                m.values_mut()[kp] = lik;
                // subtract lik * U(k, j) for j > k restricted to the pattern
                let krow = rp[k]..rp[k + 1];
                let mut jp = kp + 1;
                for kq in krow {
                    let j = ci[kq];
                    if j <= k {
                        continue;
                    }
                    while jp < row_end && ci[jp] < j {
                        jp += 1;
                    }
                    if jp < row_end && ci[jp] == j {
                        m.values_mut()[jp] -= lik * m.values()[kq];
                    }
                }
            }
        }
        Ok(Ilu0 { factors: m, diag_pos })
    }

    /// Solve L U z = r with unit-lower L.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = self.factors.nrows();
        let rp = self.factors.row_ptr();
        let ci = self.factors.col_idx();
        let vv = self.factors.values();
        let mut z = r.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for p in rp[i]..rp[i + 1] {
                let j = ci[p];
                if j >= i {
                    break;
                }
                s -= vv[p] * z[j];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in (rp[i]..rp[i + 1]).rev() {
                let j = ci[p];
                if j <= i {
                    break;
                }
                s -= vv[p] * z[j];
            }
            z[i] = s / vv[self.diag_pos[i]];
        }
        z
    }
}

impl crate::solver::Precondition for Ilu0 {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        self.solve(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_full_pattern() {
        // a dense-pattern matrix factors exactly
        let t = vec![
            (0usize, 0usize, 4.0),
            (0, 1, 1.0),
            (0, 2, 0.5),
            (1, 0, 1.0),
            (1, 1, 3.0),
            (1, 2, 1.0),
            (2, 0, 0.5),
            (2, 1, 1.0),
            (2, 2, 5.0),
        ];
        let a = CsrMatrix::from_triplets(3, 3, &t);
        let ilu = Ilu0::factor(&a).unwrap();
        let b = vec![1.0, 2.0, 3.0];
        let z = ilu.solve(&b);
        let r = crate::sparse::sub(&b, &a.spmv(&z));
        assert!(crate::sparse::norm(&r) < 1e-12);
    }

    #[test]
    fn reduces_residual_on_sparse_spd() {
        let n = 100;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
            if i + 10 < n {
                t.push((i, i + 10, -0.5));
                t.push((i + 10, i, -0.5));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let ilu = Ilu0::factor(&a).unwrap();
        let b = vec![1.0; n];
        let z = ilu.solve(&b);
        let r = crate::sparse::sub(&b, &a.spmv(&z));
        assert!(crate::sparse::norm(&r) < 0.5 * crate::sparse::norm(&b));
    }

    #[test]
    fn missing_diagonal_is_an_error() {
        let t = vec![(0usize, 1usize, 1.0), (1, 0, 1.0), (1, 1, 1.0)];
        let a = CsrMatrix::from_triplets(2, 2, &t);
        assert!(Ilu0::factor(&a).is_err());
    }
}
