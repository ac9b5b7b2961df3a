//! Method of manufactured solutions on the two-region coupled system.
//!
//! The manufactured fields are smooth, electroneutral by construction, and
//! violate the physical membrane and exterior boundary conditions; the
//! mismatch is injected as extra right-hand-side data so the fields solve
//! the discrete problem up to discretization error. One time step of size
//! dt = h^2 is taken per level so spatial error dominates.

use crate::error::Result;
use crate::membrane::{IonSpecies, MembraneModel, PhysicalConstants};
use crate::mesh::{build_model_a_mesh_with_side, Region};
use crate::solver::precond::PrecondMode;
use crate::system::sources::SourceSet;
use crate::system::{InitialFields, Quantity, Scenario, Simulation, SolverSettings};

use std::f64::consts::PI;

/// Coefficients of the manufactured fields
///   [k]_r = a_r^k + b_r^k sin(2 pi x) sin(2 pi y) e^{-t}
///   phi_r = c_r   cos(2 pi x) cos(2 pi y) e^{-t}
/// with sum_k z_k a_r^k = sum_k z_k b_r^k = 0 in both regions.
#[derive(Debug, Clone)]
pub struct MmsCase {
    pub a: [[f64; 3]; 2],
    pub b: [[f64; 3]; 2],
    pub c: [f64; 2],
    pub valences: [f64; 3],
    pub diffusion: [[f64; 3]; 2],
    pub constants: PhysicalConstants,
}

impl Default for MmsCase {
    fn default() -> Self {
        MmsCase {
            a: [[3.0, 2.0, 5.0], [2.0, 3.0, 5.0]],
            b: [[0.4, 0.6, 1.0], [0.5, 0.3, 0.8]],
            c: [1.0, 0.7],
            valences: [1.0, 1.0, -1.0],
            diffusion: [[1.0, 1.2, 0.8], [1.1, 0.9, 1.3]],
            constants: PhysicalConstants {
                gas_constant: 1.0,
                temperature: 1.0,
                faraday: 2.0,
                membrane_capacitance: 0.3,
                phi_rest: 0.0,
            },
        }
    }
}

fn region_id(r: Region) -> usize {
    match r {
        Region::Intra => 0,
        Region::Extra => 1,
    }
}

impl MmsCase {
    pub fn conc(&self, r: Region, k: usize, x: [f64; 3], t: f64) -> f64 {
        let ri = region_id(r);
        self.a[ri][k] + self.b[ri][k] * s_xy(x) * (-t).exp()
    }

    pub fn phi(&self, r: Region, x: [f64; 3], t: f64) -> f64 {
        self.c[region_id(r)] * c_xy(x) * (-t).exp()
    }

    pub fn phi_m(&self, x: [f64; 3], t: f64) -> f64 {
        (self.c[0] - self.c[1]) * c_xy(x) * (-t).exp()
    }

    fn grad_conc(&self, r: Region, k: usize, x: [f64; 3], t: f64) -> [f64; 2] {
        let g = grad_s(x);
        let f = self.b[region_id(r)][k] * (-t).exp();
        [f * g[0], f * g[1]]
    }

    fn grad_phi(&self, r: Region, x: [f64; 3], t: f64) -> [f64; 2] {
        let g = grad_c(x);
        let f = self.c[region_id(r)] * (-t).exp();
        [f * g[0], f * g[1]]
    }

    /// Ion flux J_r^k = -D grad c - (D z / psi) c grad phi.
    pub fn flux(&self, r: Region, k: usize, x: [f64; 3], t: f64) -> [f64; 2] {
        let ri = region_id(r);
        let d = self.diffusion[ri][k];
        let z = self.valences[k];
        let psi = self.constants.psi();
        let gc = self.grad_conc(r, k, x, t);
        let gp = self.grad_phi(r, x, t);
        let c = self.conc(r, k, x, t);
        [
            -d * gc[0] - d * z / psi * c * gp[0],
            -d * gc[1] - d * z / psi * c * gp[1],
        ]
    }

    /// Bulk source f_r^k = dt c + div J.
    pub fn bulk_source(&self, r: Region, k: usize, x: [f64; 3], t: f64) -> f64 {
        let ri = region_id(r);
        let d = self.diffusion[ri][k];
        let z = self.valences[k];
        let psi = self.constants.psi();
        let (a, b, c) = (self.a[ri][k], self.b[ri][k], self.c[ri]);
        let t_fac = (-t).exp();
        let s = s_xy(x);
        let cc = c_xy(x);
        let (sx, cx) = (2.0 * PI * x[0]).sin_cos();
        let (sy, cy) = (2.0 * PI * x[1]).sin_cos();
        let pi2 = 4.0 * PI * PI;
        // d/dt
        let dt_term = -b * s * t_fac;
        // -D lap c = 2 pi2 D b S T
        let diff_term = 2.0 * pi2 * d * b * s * t_fac;
        // -(Dz/psi) div(c grad phi)
        //   grad S . grad C = -2 pi2 sx cx sy cy
        //   lap C = -2 pi2 C
        let grad_dot = -2.0 * pi2 * sx * cx * sy * cy;
        let div_cgp = b * t_fac * c * t_fac * grad_dot
            + (a + b * s * t_fac) * (-2.0 * pi2) * cc * c * t_fac;
        dt_term + diff_term - d * z / psi * div_cgp
    }

    /// Source of the charge-conservation equation, sum_k z_k f_r^k.
    pub fn potential_source(&self, r: Region, x: [f64; 3], t: f64) -> f64 {
        (0..3).map(|k| self.valences[k] * self.bulk_source(r, k, x, t)).sum()
    }

    /// Membrane correction rho_r^k: the mismatch between the exact normal
    /// flux and the (zero-current) capacitive membrane balance with the
    /// scheme's backward difference.
    pub fn gamma_correction(
        &self,
        r: Region,
        k: usize,
        x: [f64; 3],
        normal_i: [f64; 3],
        t_prev: f64,
        t_next: f64,
    ) -> f64 {
        let sign = r.sign();
        let j = self.flux(r, k, x, t_next);
        let n = match r {
            Region::Intra => [normal_i[0], normal_i[1]],
            Region::Extra => [-normal_i[0], -normal_i[1]],
        };
        let jn = j[0] * n[0] + j[1] * n[1];
        let dphidt = (self.phi_m(x, t_next) - self.phi_m(x, t_prev)) / (t_next - t_prev);
        let alpha = self.alpha(r, k, x, t_prev);
        let cap = alpha * self.constants.membrane_capacitance * dphidt
            / (self.constants.faraday * self.valences[k]);
        jn - sign * cap
    }

    pub fn gamma_potential_correction(
        &self,
        r: Region,
        x: [f64; 3],
        normal_i: [f64; 3],
        t_prev: f64,
        t_next: f64,
    ) -> f64 {
        let sign = r.sign();
        let mut jn = 0.0;
        for k in 0..3 {
            let j = self.flux(r, k, x, t_next);
            let n = match r {
                Region::Intra => [normal_i[0], normal_i[1]],
                Region::Extra => [-normal_i[0], -normal_i[1]],
            };
            jn += self.valences[k] * (j[0] * n[0] + j[1] * n[1]);
        }
        let dphidt = (self.phi_m(x, t_next) - self.phi_m(x, t_prev)) / (t_next - t_prev);
        jn - sign * self.constants.membrane_capacitance * dphidt / self.constants.faraday
    }

    pub fn alpha(&self, r: Region, k: usize, x: [f64; 3], t: f64) -> f64 {
        let ri = region_id(r);
        let num = self.diffusion[ri][k] * self.valences[k] * self.valences[k]
            * self.conc(r, k, x, t);
        let den: f64 = (0..3)
            .map(|l| {
                self.diffusion[ri][l] * self.valences[l] * self.valences[l]
                    * self.conc(r, l, x, t)
            })
            .sum();
        num / den
    }

    /// Exterior-boundary normal flux of species k at t (extracellular side).
    pub fn boundary_flux(&self, k: usize, x: [f64; 3], n: [f64; 3], t: f64) -> f64 {
        let j = self.flux(Region::Extra, k, x, t);
        j[0] * n[0] + j[1] * n[1]
    }

    /// Species set carrying the MMS diffusivities; conductances are zero so
    /// the only membrane physics left is the capacitive coupling.
    pub fn species(&self) -> Vec<IonSpecies> {
        let names = ["Na", "K", "Cl"];
        (0..3)
            .map(|k| IonSpecies {
                name: names[k].into(),
                valence: self.valences[k],
                d_intra: self.diffusion[0][k],
                d_extra: self.diffusion[1][k],
                c0_intra: self.a[0][k],
                c0_extra: self.a[1][k],
                g_leak: 0.0,
                g_bar: 0.0,
            })
            .collect()
    }
}

fn s_xy(x: [f64; 3]) -> f64 {
    (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
}

fn c_xy(x: [f64; 3]) -> f64 {
    (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos()
}

fn grad_s(x: [f64; 3]) -> [f64; 2] {
    [
        2.0 * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin(),
        2.0 * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(),
    ]
}

fn grad_c(x: [f64; 3]) -> [f64; 2] {
    [
        -2.0 * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(),
        -2.0 * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin(),
    ]
}

/// Build the one-step MMS scenario on the unit square at resolution nx.
pub fn mms_scenario(case: &MmsCase, nx: usize, degree: usize) -> Result<Scenario> {
    let mesh = build_model_a_mesh_with_side(nx, 2, 1.0)?;
    let h = 1.0 / nx as f64;
    let dt = h * h;
    let case_a = case.clone();
    let case_b = case.clone();
    let case_c = case.clone();
    let case_d = case.clone();
    let case_e = case.clone();
    let case_f = case.clone();
    let case_g = case.clone();

    // the membrane corrections need the facet normal; the hooks receive the
    // intra-to-extra normal through the assembler
    let sources = SourceSet {
        bulk: Vec::new(),
        bulk_fn: Some(Box::new(move |r, k, x, t| case_a.bulk_source(r, k, x, t))),
        potential_fn: Some(Box::new(move |r, x, t| case_b.potential_source(r, x, t))),
        gamma_fn: None,    // installed below with normals
        gamma_potential_fn: None,
        boundary_fn: Some(Box::new(move |k, x, n, t| case_c.boundary_flux(k, x, n, t))),
    };

    let mut scenario = Scenario {
        mesh,
        degree,
        species: case.species(),
        constants: case.constants,
        membrane: MembraneModel::Leak,
        stimulus: None,
        phi_m0: 0.0, // overridden by the exact initial fields
        gating0: [0.0; 3],
        dt,
        n_steps: 1,
        n_ode: 1,
        solver: SolverSettings {
            mode: PrecondMode::ExactBlockCg,
            krylov: crate::solver::KrylovConfig { tolerance: 1e-11, ..Default::default() },
            ..SolverSettings::for_dimension(2)
        },
        sources,
        initial: InitialFields {
            conc: Some(Box::new(move |r, k, x| case_d.conc(r, k, x, 0.0))),
            phi: Some(Box::new(move |r, x| case_e.phi(r, x, 0.0))),
        },
    };
    scenario.sources.gamma_fn = Some(Box::new(move |r, k, x, n, t_prev, t_next| {
        case_f.gamma_correction(r, k, x, n, t_prev, t_next)
    }));
    scenario.sources.gamma_potential_fn = Some(Box::new(move |r, x, n, t_prev, t_next| {
        case_g.gamma_potential_correction(r, x, n, t_prev, t_next)
    }));
    Ok(scenario)
}

/// L2 errors of all fields after one step at resolution nx.
pub fn mms_level_errors(case: &MmsCase, nx: usize, degree: usize) -> Result<Vec<(String, f64)>> {
    let scenario = mms_scenario(case, nx, degree)?;
    let mut sim = Simulation::new(scenario)?;
    // pin to the exact potential value at the pinned node
    let pin_x = sim.dofmap.extra.dof_coords[sim.system.pin_local];
    let t1 = sim.scenario.dt;
    sim.scenario.solver.pin_value = case.phi(Region::Extra, pin_x, t1);
    sim.run()?;

    // potentials are defined up to one common additive constant; measure
    // their errors in the gauge-aligned (quotient) norm
    let gauge = super::potential_gauge_misfit(&sim, |r, x| case.phi(r, x, t1));

    let mut out = Vec::new();
    let names = ["Na", "K", "Cl"];
    for r in [Region::Intra, Region::Extra] {
        for (k, name) in names.iter().enumerate() {
            let e = super::l2_error(&sim, r, Quantity::Species(k), |x| case.conc(r, k, x, t1));
            out.push((format!("{name}_{}", r.name()), e));
        }
        let e = super::l2_error(&sim, r, Quantity::Phi, |x| case.phi(r, x, t1) + gauge);
        out.push((format!("phi_{}", r.name()), e));
    }
    Ok(out)
}

/// One row of a convergence table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub nx: usize,
    pub h: f64,
    pub quantity: String,
    pub l2_error: f64,
    /// log2(e_coarse / e_fine) against the previous level; None on level 0.
    pub rate: Option<f64>,
}

/// Run the convergence study over the given resolutions.
pub fn run_mms(case: &MmsCase, degree: usize, levels: &[usize]) -> Result<Vec<ConvergenceRow>> {
    let mut table: Vec<ConvergenceRow> = Vec::new();
    let mut prev: Option<Vec<(String, f64)>> = None;
    for (li, &nx) in levels.iter().enumerate() {
        let errs = mms_level_errors(case, nx, degree)?;
        for (q, e) in &errs {
            let rate = prev.as_ref().and_then(|p| {
                p.iter().find(|(pq, _)| pq == q).map(|(_, pe)| (pe / e).log2())
            });
            table.push(ConvergenceRow {
                level: li,
                nx,
                h: 1.0 / nx as f64,
                quantity: q.clone(),
                l2_error: *e,
                rate,
            });
        }
        prev = Some(errs);
    }
    Ok(table)
}
