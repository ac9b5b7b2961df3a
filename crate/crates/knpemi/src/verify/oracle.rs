//! Independent dense assembly of the coupled operator and right-hand side.
//!
//! Everything is recomputed from scratch on tiny meshes: quadrature nodes by
//! Newton iteration on Legendre polynomials, basis functions from closed
//! forms, dense matrices filled by direct loops over cells and membrane
//! facets. No sparsity machinery or assembly caches are shared with the
//! production path; only the DOF numbering and the per-node membrane
//! formulas are common, as they define the discrete problem itself.

use crate::error::{Error, Result};
use crate::fem::DofMap;
use crate::membrane::{alpha_fractions, channel_currents, NodeState};
use crate::mesh::{Mesh, Region};
use crate::system::operator::REGIONS;
use crate::system::Simulation;

/// Gauss-Legendre rule on [0, 1] computed by Newton iteration.
fn gauss_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess on [-1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and P_n'(x) by recurrence
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0f64, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs.push(0.5 * (1.0 - x)); // note: descending cos order, harmless
        ws.push(0.5 * w);
    }
    (xs, ws)
}

/// Quadrature on the reference simplex by the collapsed-coordinate map.
fn simplex_quadrature(dim: usize, degree: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let pts_per = |d: usize| d / 2 + 1;
    match dim {
        2 => {
            let (xu, wu) = gauss_01(pts_per(degree + 1));
            let (xv, wv) = gauss_01(pts_per(degree));
            let mut pts = Vec::new();
            let mut ws = Vec::new();
            for (u, a) in xu.iter().zip(&wu) {
                for (v, b) in xv.iter().zip(&wv) {
                    pts.push([*u, v * (1.0 - u), 0.0]);
                    ws.push(a * b * (1.0 - u));
                }
            }
            (pts, ws)
        }
        3 => {
            let (xu, wu) = gauss_01(pts_per(degree + 2));
            let (xv, wv) = gauss_01(pts_per(degree + 1));
            let (xw, ww) = gauss_01(pts_per(degree));
            let mut pts = Vec::new();
            let mut ws = Vec::new();
            for (u, a) in xu.iter().zip(&wu) {
                for (v, b) in xv.iter().zip(&wv) {
                    for (w, c) in xw.iter().zip(&ww) {
                        pts.push([*u, v * (1.0 - u), w * (1.0 - u) * (1.0 - v)]);
                        ws.push(a * b * c * (1.0 - u) * (1.0 - u) * (1.0 - v));
                    }
                }
            }
            (pts, ws)
        }
        _ => unreachable!(),
    }
}

/// Lagrange basis on the reference simplex, vertices then edge midpoints.
fn basis(dim: usize, p: usize, xi: [f64; 3]) -> Vec<f64> {
    let l: Vec<f64> = match dim {
        2 => vec![1.0 - xi[0] - xi[1], xi[0], xi[1]],
        _ => vec![1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]],
    };
    let edges: &[(usize, usize)] =
        if dim == 2 { &[(0, 1), (1, 2), (2, 0)] } else { &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] };
    match p {
        1 => l,
        2 => {
            let mut out: Vec<f64> = l.iter().map(|li| li * (2.0 * li - 1.0)).collect();
            for &(a, b) in edges {
                out.push(4.0 * l[a] * l[b]);
            }
            out
        }
        _ => panic!("unsupported degree"),
    }
}

fn basis_grad(dim: usize, p: usize, xi: [f64; 3]) -> Vec<[f64; 3]> {
    let (l, gl): (Vec<f64>, Vec<[f64; 3]>) = match dim {
        2 => (
            vec![1.0 - xi[0] - xi[1], xi[0], xi[1]],
            vec![[-1.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        ),
        _ => (
            vec![1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]],
            vec![
                [-1.0, -1.0, -1.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
        ),
    };
    let edges: &[(usize, usize)] =
        if dim == 2 { &[(0, 1), (1, 2), (2, 0)] } else { &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] };
    match p {
        1 => gl,
        2 => {
            let mut out: Vec<[f64; 3]> = (0..l.len())
                .map(|v| {
                    let s = 4.0 * l[v] - 1.0;
                    [s * gl[v][0], s * gl[v][1], s * gl[v][2]]
                })
                .collect();
            for &(a, b) in edges {
                out.push([
                    4.0 * (l[a] * gl[b][0] + l[b] * gl[a][0]),
                    4.0 * (l[a] * gl[b][1] + l[b] * gl[a][1]),
                    4.0 * (l[a] * gl[b][2] + l[b] * gl[a][2]),
                ]);
            }
            out
        }
        _ => panic!("unsupported degree"),
    }
}

/// Facet restriction basis in facet-local coordinates.
fn facet_basis(dim: usize, p: usize, s: [f64; 2]) -> Vec<f64> {
    match (dim, p) {
        (2, 1) => vec![1.0 - s[0], s[0]],
        (2, 2) => {
            let t = s[0];
            vec![(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)]
        }
        (3, 1) => vec![1.0 - s[0] - s[1], s[0], s[1]],
        (3, 2) => {
            let (l1, l2) = (s[0], s[1]);
            let l0 = 1.0 - l1 - l2;
            vec![
                l0 * (2.0 * l0 - 1.0),
                l1 * (2.0 * l1 - 1.0),
                l2 * (2.0 * l2 - 1.0),
                4.0 * l0 * l1,
                4.0 * l0 * l2,
                4.0 * l1 * l2,
            ]
        }
        _ => panic!("unsupported"),
    }
}

/// Dense realization of the step operator and right-hand side.
pub struct DenseSystem {
    pub n: usize,
    /// Row-major dense matrix.
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl DenseSystem {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }
}

/// Assemble the dense oracle for the step the simulation is about to take.
///
/// Call `assemble_step_system` on the simulation first so that gating has
/// advanced identically; this routine then rebuilds the whole linear system
/// by dense quadrature loops from the same state.
pub fn dense_oracle_assemble(sim: &Simulation) -> Result<DenseSystem> {
    let mesh = &sim.scenario.mesh;
    let dofmap = &sim.dofmap;
    let layout = sim.layout();
    let n = layout.total();
    if n > 2000 {
        return Err(Error::SizeCap { size: n, cap: 2000 });
    }
    let dim = mesh.dim();
    let p = sim.scenario.degree;
    let species = &sim.scenario.species;
    let constants = &sim.scenario.constants;
    let n_species = species.len();
    let dt = sim.scenario.dt;
    let psi = constants.psi();
    let cm = constants.membrane_capacitance;
    let faraday = constants.faraday;
    let t_prev = sim.state.time;
    let t_next = t_prev + dt;

    let mut matrix = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];

    // ---- per-membrane-node data (same definitions, independent loops) ----
    let n_gamma = dofmap.n_gamma();
    let mut cap_w = vec![vec![vec![0.0; n_gamma]; n_species]; 2];
    let mut g_nod = vec![vec![vec![0.0; n_gamma]; n_species]; 2];
    let mut h_nod = vec![vec![0.0; n_gamma]; 2];
    {
        let mut ci = vec![0.0; n_species];
        let mut ce = vec![0.0; n_species];
        let mut alpha = [vec![0.0; n_species], vec![0.0; n_species]];
        for pair in 0..n_gamma {
            let (di, de) = dofmap.gamma_pairs[pair];
            for k in 0..n_species {
                ci[k] = sim.state.u[layout.conc_offset(Region::Intra, k) + di];
                ce[k] = sim.state.u[layout.conc_offset(Region::Extra, k) + de];
            }
            alpha_fractions(species, Region::Intra, &ci, &mut alpha[0])?;
            alpha_fractions(species, Region::Extra, &ce, &mut alpha[1])?;
            let active = match &sim.scenario.stimulus {
                Some(s) => match &s.predicate {
                    crate::membrane::SpatialPredicate::All => true,
                    crate::membrane::SpatialPredicate::HalfSpaceX { x0 } => {
                        dofmap.gamma_coords[pair][0] < *x0
                    }
                    crate::membrane::SpatialPredicate::Labels(_) => {
                        unimplemented!("label stimuli are not exercised by the oracle cases")
                    }
                },
                None => false,
            };
            let g_stim = sim.scenario.stimulus.as_ref().map_or(0.0, |s| s.value(t_next, active));
            let phi_m = sim.state.phi_m[pair];
            let node = NodeState {
                phi_m,
                conc_intra: &ci,
                conc_extra: &ce,
                gates: [
                    sim.state.gating.n[pair],
                    sim.state.gating.m[pair],
                    sim.state.gating.h[pair],
                ],
                g_stim,
                ek0: sim.state.ek0[pair],
                ke0: sim.state.ke0[pair],
            };
            let ich = channel_currents(&sim.scenario.membrane, &node, species, constants)?;
            let ich_total: f64 = ich.iter().sum();
            for (ri, sign) in [(0usize, 1.0f64), (1, -1.0)] {
                for k in 0..n_species {
                    let zk = species[k].valence;
                    cap_w[ri][k][pair] = alpha[ri][k] * cm / (faraday * zk);
                    g_nod[ri][k][pair] =
                        sign * (dt * ich[k] - alpha[ri][k] * cm * phi_m) / (faraday * zk);
                }
                h_nod[ri][pair] = sign * (dt * ich_total - cm * phi_m) / faraday;
            }
        }
    }

    // ---- bulk terms ----
    let nloc = basis(dim, p, [0.0; 3]).len();
    let (qp, qw) = simplex_quadrature(dim, 2 * p + 2);
    for (ri, r) in REGIONS.iter().enumerate() {
        let space = dofmap.space(*r);
        for (ci_local, &cell) in space.cells.iter().enumerate() {
            let dofs = &space.cell_dofs[ci_local * nloc..(ci_local + 1) * nloc];
            let vs = mesh.cell(cell);
            let p0 = mesh.vertex(vs[0]);
            // affine geometry
            let mut jac = [[0.0f64; 3]; 3];
            for c in 0..dim {
                let pv = mesh.vertex(vs[c + 1]);
                for rdim in 0..dim {
                    jac[rdim][c] = pv[rdim] - p0[rdim];
                }
            }
            let detj = match dim {
                2 => jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0],
                _ => {
                    jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
                        - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
                        + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0])
                }
            };
            // inverse transpose by cofactors
            let mut jit = [[0.0f64; 3]; 3];
            match dim {
                2 => {
                    jit[0][0] = jac[1][1] / detj;
                    jit[0][1] = -jac[1][0] / detj;
                    jit[1][0] = -jac[0][1] / detj;
                    jit[1][1] = jac[0][0] / detj;
                }
                _ => {
                    for a in 0..3 {
                        for b in 0..3 {
                            let (a1, a2) = ((a + 1) % 3, (a + 2) % 3);
                            let (b1, b2) = ((b + 1) % 3, (b + 2) % 3);
                            jit[a][b] =
                                (jac[a1][b1] * jac[a2][b2] - jac[a1][b2] * jac[a2][b1]) / detj;
                        }
                    }
                }
            }

            // previous concentrations on this cell
            let mut local_mass = vec![0.0; nloc * nloc];
            let mut local_stiff = vec![0.0; nloc * nloc];
            let mut local_wstiff = vec![vec![0.0; nloc * nloc]; n_species];
            let mut local_load = vec![vec![0.0; nloc]; n_species];
            for (pt, w) in qp.iter().zip(&qw) {
                let vals = basis(dim, p, *pt);
                let grads = basis_grad(dim, p, *pt);
                let mut pg = vec![[0.0f64; 3]; nloc];
                for a in 0..nloc {
                    for rdim in 0..dim {
                        let mut s = 0.0;
                        for c in 0..dim {
                            s += jit[rdim][c] * grads[a][c];
                        }
                        pg[a][rdim] = s;
                    }
                }
                let weight = w * detj;
                let mut x = p0;
                for (c, &v) in vs.iter().enumerate().skip(1) {
                    let pv = mesh.vertex(v);
                    for rdim in 0..3 {
                        x[rdim] += pt[c - 1] * (pv[rdim] - p0[rdim]);
                    }
                }
                for a in 0..nloc {
                    for b in 0..nloc {
                        local_mass[a * nloc + b] += weight * vals[a] * vals[b];
                        let gg: f64 = (0..dim).map(|d| pg[a][d] * pg[b][d]).sum();
                        local_stiff[a * nloc + b] += weight * gg;
                    }
                }
                for k in 0..n_species {
                    let coff = layout.conc_offset(*r, k);
                    let mut ch = 0.0;
                    for a in 0..nloc {
                        ch += sim.state.u[coff + dofs[a]] * vals[a];
                    }
                    for a in 0..nloc {
                        for b in 0..nloc {
                            let gg: f64 = (0..dim).map(|d| pg[a][d] * pg[b][d]).sum();
                            local_wstiff[k][a * nloc + b] += weight * ch * gg;
                        }
                    }
                    let f = sim.scenario.sources.species_source(*r, k, x, t_next);
                    if f != 0.0 {
                        for a in 0..nloc {
                            local_load[k][a] += weight * f * vals[a];
                        }
                    }
                }
            }

            // scatter into the dense blocks
            let phi_off = layout.phi_offset(*r);
            for k in 0..n_species {
                let coff = layout.conc_offset(*r, k);
                let tau = dt * species[k].diffusion(*r);
                let ttilde = tau * species[k].valence / psi;
                let zk = species[k].valence;
                for a in 0..nloc {
                    let ga = coff + dofs[a];
                    for b in 0..nloc {
                        let m = local_mass[a * nloc + b];
                        let s = local_stiff[a * nloc + b];
                        let ws = local_wstiff[k][a * nloc + b];
                        matrix[ga * n + coff + dofs[b]] += m + tau * s;
                        matrix[ga * n + phi_off + dofs[b]] += ttilde * ws;
                        matrix[(phi_off + dofs[a]) * n + coff + dofs[b]] += zk * tau * s;
                        matrix[(phi_off + dofs[a]) * n + phi_off + dofs[b]] += zk * ttilde * ws;
                    }
                    // rhs: mass action of the previous concentrations + source
                    let mut mc = 0.0;
                    for b in 0..nloc {
                        mc += local_mass[a * nloc + b] * sim.state.u[coff + dofs[b]];
                    }
                    rhs[ga] += mc + dt * local_load[k][a];
                }
            }
        }
    }

    // ---- membrane terms ----
    let nfl = facet_basis(dim, p, [0.0, 0.0]).len();
    let (fq, fw): (Vec<[f64; 2]>, Vec<f64>) = if dim == 2 {
        let (x, w) = gauss_01(4);
        (x.iter().map(|&t| [t, 0.0]).collect(), w)
    } else {
        let (pts, ws) = simplex_quadrature(2, 3 * p + 2);
        (pts.iter().map(|q| [q[0], q[1]]).collect(), ws)
    };
    for (f, facet) in mesh.interface_facets().iter().enumerate() {
        let pairs = &dofmap.facet_pairs[f * nfl..(f + 1) * nfl];
        let measure = mesh.facet_measure(&facet.vertices[..dim]);
        let factor = if dim == 2 { measure } else { 2.0 * measure };
        for (q, wq) in fq.iter().zip(&fw) {
            let vals = facet_basis(dim, p, *q);
            let w = wq * factor;
            for (ri, r) in REGIONS.iter().enumerate() {
                let rows: Vec<usize> = match r {
                    Region::Intra => {
                        dofmap.intra.facet_dofs[f * nfl..(f + 1) * nfl].to_vec()
                    }
                    Region::Extra => {
                        dofmap.extra.facet_dofs[f * nfl..(f + 1) * nfl].to_vec()
                    }
                };
                let cols_other: Vec<usize> = match r {
                    Region::Intra => dofmap.extra.facet_dofs[f * nfl..(f + 1) * nfl].to_vec(),
                    Region::Extra => dofmap.intra.facet_dofs[f * nfl..(f + 1) * nfl].to_vec(),
                };
                let phi_own = layout.phi_offset(*r);
                let phi_other = layout.phi_offset(r.other());
                for k in 0..n_species {
                    let coff = layout.conc_offset(*r, k);
                    // interpolated capacitive weight and membrane data
                    let mut cw = 0.0;
                    let mut gh = 0.0;
                    for a in 0..nfl {
                        cw += cap_w[ri][k][pairs[a]] * vals[a];
                        gh += g_nod[ri][k][pairs[a]] * vals[a];
                    }
                    for a in 0..nfl {
                        for b in 0..nfl {
                            let mab = w * vals[a] * vals[b];
                            matrix[(coff + rows[a]) * n + phi_own + rows[b]] += cw * mab;
                            matrix[(coff + rows[a]) * n + phi_other + cols_other[b]] -= cw * mab;
                        }
                        rhs[coff + rows[a]] -= w * gh * vals[a];
                    }
                }
                let mut hh = 0.0;
                for a in 0..nfl {
                    hh += h_nod[ri][pairs[a]] * vals[a];
                }
                for a in 0..nfl {
                    for b in 0..nfl {
                        let mab = w * vals[a] * vals[b];
                        matrix[(phi_own + rows[a]) * n + phi_own + rows[b]] += cm / faraday * mab;
                        matrix[(phi_own + rows[a]) * n + phi_other + cols_other[b]] -=
                            cm / faraday * mab;
                    }
                    rhs[phi_own + rows[a]] -= w * hh * vals[a];
                }
            }
        }
    }

    // ---- pin: replace the row by the identity row ----
    let pin = sim.system.pin_row;
    for v in matrix[pin * n..(pin + 1) * n].iter_mut() {
        *v = 0.0;
    }
    matrix[pin * n + pin] = 1.0;
    rhs[pin] = sim.scenario.solver.pin_value;

    Ok(DenseSystem { n, matrix, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_gauss_rule_is_exact() {
        for n in 1..=8usize {
            let (x, w) = gauss_01(n);
            for deg in 0..=(2 * n - 1) as u32 {
                let got: f64 =
                    x.iter().zip(&w).map(|(xi, wi)| xi.powi(deg as i32) * wi).sum();
                let want = 1.0 / (deg as f64 + 1.0);
                assert!((got - want).abs() < 1e-13, "n={n} deg={deg}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn oracle_rejects_large_systems() {
        let s = crate::system::Scenario::model_a(16, 2, 2).unwrap();
        let sim = Simulation::new(s).unwrap();
        assert!(matches!(dense_oracle_assemble(&sim), Err(Error::SizeCap { .. })));
    }
}
