//! Sparse linear solvers: restarted GMRES/FGMRES, preconditioned CG, a
//! self-contained Ruge-Stueben AMG, ILU(0) and a sparse direct LU.

pub mod amg;
pub mod direct;
pub mod ilu;
pub mod precond;

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm, CsrMatrix};

/// Krylov solver configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KrylovConfig {
    /// Restart length of the Arnoldi process.
    pub restart: usize,
    /// Relative tolerance on the (preconditioned) residual.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { restart: 30, tolerance: 1e-6, max_iterations: 1000 }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restart < 1 {
            return Err(Error::Config {
                field: "solver.restart".into(),
                message: "restart length must be at least 1".into(),
            });
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::Config {
                field: "solver.tolerance".into(),
                message: format!("tolerance {} must lie in (0, 1)", self.tolerance),
            });
        }
        Ok(())
    }
}

/// A fixed linear operation approximating the inverse of the system operator.
pub trait Precondition: Sync {
    fn apply(&self, r: &[f64]) -> Vec<f64>;
    /// False when the application involves inner iterations with a tolerance
    /// (use FGMRES in that case).
    fn is_stationary(&self) -> bool {
        true
    }
}

/// Identity preconditioner (unpreconditioned Krylov).
pub struct IdentityPrecond;

impl Precondition for IdentityPrecond {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.to_vec()
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    /// Total Arnoldi steps across restarts.
    pub iterations: usize,
    /// Relative residual per iteration, in the solver's convergence norm.
    pub residual_history: Vec<f64>,
    /// Final relative residual in the convergence norm.
    pub residual: f64,
    pub converged: bool,
}

/// Left-preconditioned restarted GMRES.
///
/// Convergence is declared when the preconditioned residual satisfies
/// `||P^{-1}(b - A x)|| <= tol * ||P^{-1} b||`.
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    precond: &dyn Precondition,
    config: &KrylovConfig,
) -> Result<KrylovOutcome> {
    config.validate()?;
    let n = b.len();
    assert_eq!(a.nrows(), n);
    assert_eq!(x0.len(), n);
    let m = config.restart.min(n.max(1));

    let ref_norm = {
        let pb = precond.apply(b);
        norm(&pb)
    };
    if ref_norm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual_history: vec![],
            residual: 0.0,
            converged: true,
        });
    }

    let mut x = x0.to_vec();
    let mut total_iters = 0usize;
    let mut history = Vec::new();

    loop {
        let mut r = {
            let ax = a.spmv(&x);
            let raw: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            precond.apply(&raw)
        };
        let beta = norm(&r);
        if beta <= config.tolerance * ref_norm {
            return Ok(KrylovOutcome {
                x,
                iterations: total_iters,
                residual_history: history,
                residual: beta / ref_norm,
                converged: true,
            });
        }
        if total_iters >= config.max_iterations {
            return Ok(KrylovOutcome {
                x,
                iterations: total_iters,
                residual_history: history,
                residual: beta / ref_norm,
                converged: false,
            });
        }

        let inv = 1.0 / beta;
        for v in r.iter_mut() {
            *v *= inv;
        }
        let mut basis: Vec<Vec<f64>> = vec![r];
        let mut hcols: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            let mut w = precond.apply(&a.spmv(&basis[k]));
            let mut hcol = vec![0.0; k + 2];
            for (j, vj) in basis.iter().enumerate() {
                let hjk = dot(&w, vj);
                hcol[j] = hjk;
                axpy(-hjk, vj, &mut w);
            }
            let hnext = norm(&w);
            hcol[k + 1] = hnext;

            // previous Givens rotations
            for j in 0..k {
                let t = cs[j] * hcol[j] + sn[j] * hcol[j + 1];
                hcol[j + 1] = -sn[j] * hcol[j] + cs[j] * hcol[j + 1];
                hcol[j] = t;
            }
            // new rotation annihilating hcol[k+1]
            let (c, s) = givens(hcol[k], hcol[k + 1]);
            cs.push(c);
            sn.push(s);
            hcol[k] = c * hcol[k] + s * hcol[k + 1];
            hcol[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            hcols.push(hcol);

            total_iters += 1;
            k_used = k + 1;
            let res = g[k + 1].abs();
            history.push(res / ref_norm);

            let happy = hnext <= 1e-14 * beta.max(1e-300);
            if res <= config.tolerance * ref_norm || happy || total_iters >= config.max_iterations {
                break;
            }
            let inv = 1.0 / hnext;
            let mut v = w;
            for t in v.iter_mut() {
                *t *= inv;
            }
            basis.push(v);
        }

        // back-substitute y and update x
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hcols[j][i] * y[j];
            }
            y[i] = s / hcols[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &basis[j], &mut x);
        }

        let res = g[k_used].abs();
        if res <= config.tolerance * ref_norm {
            return Ok(KrylovOutcome {
                x,
                iterations: total_iters,
                residual_history: history,
                residual: res / ref_norm,
                converged: true,
            });
        }
        if total_iters >= config.max_iterations {
            return Ok(KrylovOutcome {
                x,
                iterations: total_iters,
                residual_history: history,
                residual: res / ref_norm,
                converged: false,
            });
        }
    }
}

/// Flexible (right-preconditioned) restarted GMRES; the preconditioner may
/// change between applications. Convergence is declared on the true relative
/// residual `||b - A x|| <= tol * ||b||`.
pub fn fgmres(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    precond: &dyn Precondition,
    config: &KrylovConfig,
) -> Result<KrylovOutcome> {
    config.validate()?;
    let n = b.len();
    let m = config.restart.min(n.max(1));
    let ref_norm = norm(b);
    if ref_norm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual_history: vec![],
            residual: 0.0,
            converged: true,
        });
    }

    let mut x = x0.to_vec();
    let mut total_iters = 0usize;
    let mut history = Vec::new();

    loop {
        let ax = a.spmv(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta <= config.tolerance * ref_norm {
            return Ok(KrylovOutcome {
                x,
                iterations: total_iters,
                residual_history: history,
                residual: beta / ref_norm,
                converged: true,
            });
        }
        if total_iters >= config.max_iterations {
            return Ok(KrylovOutcome {
                x,
                iterations: total_iters,
                residual_history: history,
                residual: beta / ref_norm,
                converged: false,
            });
        }
        let inv = 1.0 / beta;
        for v in r.iter_mut() {
            *v *= inv;
        }
        let mut basis: Vec<Vec<f64>> = vec![r];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut hcols: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            let z = precond.apply(&basis[k]);
            let mut w = a.spmv(&z);
            zs.push(z);
            let mut hcol = vec![0.0; k + 2];
            for (j, vj) in basis.iter().enumerate() {
                let hjk = dot(&w, vj);
                hcol[j] = hjk;
                axpy(-hjk, vj, &mut w);
            }
            let hnext = norm(&w);
            hcol[k + 1] = hnext;
            for j in 0..k {
                let t = cs[j] * hcol[j] + sn[j] * hcol[j + 1];
                hcol[j + 1] = -sn[j] * hcol[j] + cs[j] * hcol[j + 1];
                hcol[j] = t;
            }
            let (c, s) = givens(hcol[k], hcol[k + 1]);
            cs.push(c);
            sn.push(s);
            hcol[k] = c * hcol[k] + s * hcol[k + 1];
            hcol[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            hcols.push(hcol);

            total_iters += 1;
            k_used = k + 1;
            let res = g[k + 1].abs();
            history.push(res / ref_norm);

            let happy = hnext <= 1e-14 * beta.max(1e-300);
            if res <= config.tolerance * ref_norm || happy || total_iters >= config.max_iterations {
                break;
            }
            let inv = 1.0 / hnext;
            let mut v = w;
            for t in v.iter_mut() {
                *t *= inv;
            }
            basis.push(v);
        }

        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hcols[j][i] * y[j];
            }
            y[i] = s / hcols[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &zs[j], &mut x);
        }

        let res = g[k_used].abs();
        if res <= config.tolerance * ref_norm {
            return Ok(KrylovOutcome {
                x,
                iterations: total_iters,
                residual_history: history,
                residual: res / ref_norm,
                converged: true,
            });
        }
        if total_iters >= config.max_iterations {
            return Ok(KrylovOutcome {
                x,
                iterations: total_iters,
                residual_history: history,
                residual: res / ref_norm,
                converged: false,
            });
        }
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else if a == 0.0 {
        (0.0, 1.0)
    } else {
        let t = (a * a + b * b).sqrt();
        (a / t, b / t)
    }
}

/// Preconditioned conjugate gradients for symmetric positive definite
/// operators. `label` names the operator in diagnostics.
pub fn cg(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    precond: &dyn Precondition,
    tol: f64,
    max_iterations: usize,
    label: &str,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = x0.to_vec();
    let ax = a.spmv(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z = precond.apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iterations {
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        let ap = a.spmv(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Indefinite(label.to_string()));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        z = precond.apply(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm(&r) <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::NoConvergence { iterations: max_iterations, residual: norm(&r) / bnorm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

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

    #[test]
    fn gmres_identity_converges_immediately() {
        let a = CsrMatrix::identity(7);
        let b = vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0, 4.0];
        let out = gmres(&a, &b, &vec![0.0; 7], &IdentityPrecond, &KrylovConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 1);
        for (x, want) in out.x.iter().zip(&b) {
            assert!((x - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gmres_solves_spd_system() {
        let n = 40;
        let a = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let cfg = KrylovConfig { tolerance: 1e-10, ..Default::default() };
        let out = gmres(&a, &b, &vec![0.0; n], &IdentityPrecond, &cfg).unwrap();
        assert!(out.converged, "residual {}", out.residual);
        let r = crate::sparse::sub(&b, &a.spmv(&out.x));
        assert!(norm(&r) <= 1e-8 * norm(&b));
    }

    #[test]
    fn gmres_residuals_monotone_and_match_dense_arnoldi() {
        // mathematical GMRES on a tiny nonsymmetric system: residual norms
        // are nonincreasing and the final residual matches a dense
        // least-squares oracle computed from explicit Krylov vectors
        let t = vec![
            (0usize, 0usize, 4.0),
            (0, 1, 1.0),
            (1, 0, -2.0),
            (1, 1, 3.0),
            (1, 2, 1.0),
            (2, 1, 0.5),
            (2, 2, 5.0),
            (3, 3, 1.5),
            (2, 3, -1.0),
            (3, 0, 0.3),
        ];
        let a = CsrMatrix::from_triplets(4, 4, &t);
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let cfg = KrylovConfig { tolerance: 1e-14, restart: 30, max_iterations: 4 };
        let out = gmres(&a, &b, &vec![0.0; 4], &IdentityPrecond, &cfg).unwrap();
        for w in out.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "history not monotone: {w:?}");
        }
        // dense oracle: minimize ||b - A x|| over the full space (4 steps)
        // via the normal equations A^T A x = A^T b
        let d = a.to_dense();
        let mut ata = vec![0.0; 16];
        let mut atb = vec![0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    ata[i * 4 + j] += d[k][i] * d[k][j];
                }
            }
            for k in 0..4 {
                atb[i] += d[k][i] * b[k];
            }
        }
        let lu = crate::sparse::DenseLu::factor(4, &ata).unwrap();
        let xstar = lu.solve(&atb);
        for (x, w) in out.x.iter().zip(&xstar) {
            assert!((x - w).abs() < 1e-10, "{x} vs {w}");
        }
    }

    #[test]
    fn gmres_nonconvergence_reports_best_iterate() {
        let n = 60;
        let a = laplace_1d(n);
        let b = vec![1.0; n];
        let cfg = KrylovConfig { tolerance: 1e-14, restart: 5, max_iterations: 3 };
        let out = gmres(&a, &b, &vec![0.0; n], &IdentityPrecond, &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
        assert!(out.residual > 0.0);
    }

    #[test]
    fn fgmres_matches_gmres_for_stationary_precond() {
        let n = 30;
        let a = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let cfg = KrylovConfig { tolerance: 1e-12, ..Default::default() };
        let g = gmres(&a, &b, &vec![0.0; n], &IdentityPrecond, &cfg).unwrap();
        let f = fgmres(&a, &b, &vec![0.0; n], &IdentityPrecond, &cfg).unwrap();
        assert!(g.converged && f.converged);
        for (x, y) in g.x.iter().zip(&f.x) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn cg_solves_diagonal_exactly() {
        let t: Vec<(usize, usize, f64)> = (0..5).map(|i| (i, i, (i + 1) as f64)).collect();
        let a = CsrMatrix::from_triplets(5, 5, &t);
        let b = vec![1.0; 5];
        let x = cg(&a, &b, &vec![0.0; 5], &IdentityPrecond, 1e-14, 10, "diag").unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - 1.0 / (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_detects_indefiniteness() {
        let t = vec![(0usize, 0usize, 1.0), (1, 1, -1.0)];
        let a = CsrMatrix::from_triplets(2, 2, &t);
        let r = cg(&a, &[0.1, 1.0], &[0.0, 0.0], &IdentityPrecond, 1e-10, 10, "block phi_e");
        match r {
            Err(Error::Indefinite(name)) => assert_eq!(name, "block phi_e"),
            other => panic!("expected indefiniteness error, got {other:?}"),
        }
    }

    #[test]
    fn cg_solves_laplace() {
        let n = 50;
        let a = laplace_1d(n);
        let b = vec![1.0; n];
        let x = cg(&a, &b, &vec![0.0; n], &IdentityPrecond, 1e-12, 200, "lap").unwrap();
        let r = crate::sparse::sub(&b, &a.spmv(&x));
        assert!(norm(&r) <= 1e-10 * norm(&b));
    }
}
