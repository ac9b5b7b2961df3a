//! The coupled time-stepping system: scenario definition, global operator
//! refresh, right-hand sides, membrane coupling and the simulation loop.

pub mod operator;
pub mod sources;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::fem::{assembly, build_dofmap, DofMap};
use crate::membrane::{
    alpha_fractions, channel_currents, check_electroneutral, reversal_potential, rush_larsen_step,
    GatingState, IonSpecies, MembraneModel, NodeState, PhysicalConstants, SpatialPredicate,
    Stimulus, K,
};
use crate::mesh::{Mesh, Region};
use crate::solver::precond::{BlockPrecond, PrecondMode};
use crate::solver::{amg::AmgOptions, direct, gmres, KrylovConfig};
use crate::sparse::{norm, sub};
use operator::{BlockSystem, FieldLayout, REGIONS};
use sources::SourceSet;

/// Solver-related scenario settings.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub mode: PrecondMode,
    pub krylov: KrylovConfig,
    /// AMG strong-coupling threshold (0.25 for 2D, 0.5 for 3D runs).
    pub amg_theta: f64,
    /// Build the preconditioner once at the first step and reuse it.
    pub freeze_p0: bool,
    /// Inner CG tolerance of the exact block mode.
    pub inner_tol: f64,
    pub direct_cap: usize,
    /// Override the pinned extracellular potential DOF (region-local index).
    pub pin_dof: Option<usize>,
    /// Value imposed at the pinned DOF.
    pub pin_value: f64,
}

impl SolverSettings {
    pub fn for_dimension(dim: usize) -> Self {
        SolverSettings {
            mode: PrecondMode::AmgMonolithic,
            krylov: KrylovConfig::default(),
            amg_theta: if dim == 3 { 0.5 } else { 0.25 },
            freeze_p0: true,
            inner_tol: 1e-8,
            direct_cap: direct::DEFAULT_DIRECT_CAP,
            pin_dof: None,
            pin_value: 0.0,
        }
    }

    pub fn amg_options(&self) -> AmgOptions {
        AmgOptions { theta: self.amg_theta, ..Default::default() }
    }
}

type InitialConc = dyn Fn(Region, usize, [f64; 3]) -> f64 + Sync + Send;
type InitialPhi = dyn Fn(Region, [f64; 3]) -> f64 + Sync + Send;

/// Pointwise initial data overriding the uniform scenario defaults.
#[derive(Default)]
pub struct InitialFields {
    pub conc: Option<Box<InitialConc>>,
    pub phi: Option<Box<InitialPhi>>,
}

/// A complete problem definition.
pub struct Scenario {
    pub mesh: Mesh,
    pub degree: usize,
    pub species: Vec<IonSpecies>,
    pub constants: PhysicalConstants,
    pub membrane: MembraneModel,
    pub stimulus: Option<Stimulus>,
    /// Initial membrane potential, V.
    pub phi_m0: f64,
    /// Initial gating state (n0, m0, h0).
    pub gating0: [f64; 3],
    pub dt: f64,
    pub n_steps: usize,
    /// Rush-Larsen substeps per time step.
    pub n_ode: usize,
    pub solver: SolverSettings,
    pub sources: SourceSet,
    pub initial: InitialFields,
}

impl Scenario {
    /// The idealized box scenario with Hodgkin-Huxley dynamics and the
    /// periodic whole-membrane sodium stimulus.
    pub fn model_a(nx: usize, dim: usize, degree: usize) -> Result<Self> {
        let mesh = crate::mesh::build_model_a_mesh(nx, dim)?;
        Ok(Scenario {
            mesh,
            degree,
            species: crate::membrane::default_species(),
            constants: PhysicalConstants::default(),
            membrane: MembraneModel::HodgkinHuxley,
            stimulus: Some(Stimulus::default()),
            phi_m0: -67.74e-3,
            gating0: [0.276, 0.0379, 0.688],
            dt: 0.05e-3,
            n_steps: 300,
            n_ode: 25,
            solver: SolverSettings::for_dimension(dim),
            sources: SourceSet::default(),
            initial: InitialFields::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 {
            return Err(Error::Config {
                field: "time.dt".into(),
                message: format!("time step {} must be positive", self.dt),
            });
        }
        if self.n_ode < 1 {
            return Err(Error::Config {
                field: "time.n_ode".into(),
                message: "at least one gating substep per time step is required".into(),
            });
        }
        if self.initial.conc.is_none() {
            check_electroneutral(&self.species)?;
        }
        self.sources
            .validate_electroneutral(&self.species.iter().map(|s| s.valence).collect::<Vec<_>>())?;
        self.solver.krylov.validate()?;
        Ok(())
    }
}

/// Per-step runtime record.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StepStats {
    pub step: usize,
    pub time: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual in the solver's convergence norm.
    pub residual: f64,
    /// True relative residual of the monolithic system.
    pub true_residual: f64,
    pub setup_seconds: f64,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
    pub min_concentration: f64,
    #[serde(skip)]
    pub residual_history: Vec<f64>,
}

/// Time-discrete solution state.
pub struct SimState {
    pub step: usize,
    pub time: f64,
    /// Monolithic coefficient vector.
    pub u: Vec<f64>,
    /// Membrane potential trace per membrane pair, recomputed after every
    /// solve, never integrated independently.
    pub phi_m: Vec<f64>,
    pub gating: GatingState,
    /// Frozen t=0 references for the Kir rectifier, per pair.
    pub ek0: Vec<f64>,
    pub ke0: Vec<f64>,
}

pub struct Simulation {
    pub scenario: Scenario,
    pub dofmap: DofMap,
    pub system: BlockSystem,
    pub state: SimState,
    precond: Option<BlockPrecond>,
    /// Stimulus support per membrane pair.
    stim_mask: Vec<bool>,
    pub stats: Vec<StepStats>,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let dofmap = build_dofmap(&scenario.mesh, scenario.degree)?;
        let system = BlockSystem::new(
            &scenario.mesh,
            &dofmap,
            &scenario.species,
            &scenario.constants,
            scenario.dt,
            scenario.solver.pin_dof,
        )?;
        let state = initial_state(&scenario, &dofmap, &system.layout)?;
        let stim_mask = stimulus_mask(&scenario, &dofmap);
        Ok(Simulation {
            scenario,
            dofmap,
            system,
            state,
            precond: None,
            stim_mask,
            stats: Vec::new(),
        })
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.system.layout
    }

    pub fn n_unknowns(&self) -> usize {
        self.system.layout.total()
    }

    pub fn conc(&self, r: Region, k: usize) -> &[f64] {
        let off = self.system.layout.conc_offset(r, k);
        &self.state.u[off..off + self.system.layout.region_size(r)]
    }

    pub fn phi(&self, r: Region) -> &[f64] {
        let off = self.system.layout.phi_offset(r);
        &self.state.u[off..off + self.system.layout.region_size(r)]
    }

    /// Reset to the initial state with a new time step, keeping all cached
    /// assembly data.
    pub fn reset(&mut self, dt: f64) -> Result<()> {
        if dt <= 0.0 {
            return Err(Error::Config {
                field: "time.dt".into(),
                message: format!("time step {dt} must be positive"),
            });
        }
        self.scenario.dt = dt;
        self.system.set_dt(&self.scenario.species, &self.scenario.constants, dt);
        self.state = initial_state(&self.scenario, &self.dofmap, &self.system.layout)?;
        self.precond = None;
        self.stats.clear();
        Ok(())
    }

    /// Gating, membrane currents and capacitive fractions evaluated from the
    /// previous state; returns (cap_weight[region][k][pair], g_nodal
    /// [region][k][pair], h_nodal[region][pair]).
    #[allow(clippy::type_complexity)]
    fn membrane_data(
        &mut self,
        t_prev: f64,
    ) -> Result<(Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>)> {
        let n_gamma = self.dofmap.n_gamma();
        let n_species = self.scenario.species.len();
        let constants = &self.scenario.constants;
        let dt = self.scenario.dt;

        // 1. advance gating at frozen phi_M
        if matches!(self.scenario.membrane, MembraneModel::HodgkinHuxley) {
            let dt_ode = dt / self.scenario.n_ode as f64;
            for _ in 0..self.scenario.n_ode {
                rush_larsen_step(&mut self.state.gating, &self.state.phi_m, constants, dt_ode);
            }
        }

        // 2. per-node currents and fractions
        let mut cap = vec![vec![vec![0.0; n_gamma]; n_species]; 2];
        let mut g = vec![vec![vec![0.0; n_gamma]; n_species]; 2];
        let mut h = vec![vec![0.0; n_gamma]; 2];
        let cm = constants.membrane_capacitance;
        let faraday = constants.faraday;
        let mut ci = vec![0.0; n_species];
        let mut ce = vec![0.0; n_species];
        let mut alpha = [vec![0.0; n_species], vec![0.0; n_species]];
        for pair in 0..n_gamma {
            let (di, de) = self.dofmap.gamma_pairs[pair];
            for k in 0..n_species {
                ci[k] = self.state.u[self.system.layout.conc_offset(Region::Intra, k) + di];
                ce[k] = self.state.u[self.system.layout.conc_offset(Region::Extra, k) + de];
            }
            alpha_fractions(&self.scenario.species, Region::Intra, &ci, &mut alpha[0]).map_err(
                |e| {
                    let x = self.dofmap.gamma_coords[pair];
                    Error::Domain(format!("at membrane node {x:?}: {e}"))
                },
            )?;
            alpha_fractions(&self.scenario.species, Region::Extra, &ce, &mut alpha[1]).map_err(
                |e| {
                    let x = self.dofmap.gamma_coords[pair];
                    Error::Domain(format!("at membrane node {x:?}: {e}"))
                },
            )?;
            // prescribed data is sampled at the target time of the step,
            // like the bulk sources; only state-dependent quantities lag
            let g_stim = match &self.scenario.stimulus {
                Some(s) => s.value(t_prev + self.scenario.dt, self.stim_mask[pair]),
                None => 0.0,
            };
            let phi_m = self.state.phi_m[pair];
            let node = NodeState {
                phi_m,
                conc_intra: &ci,
                conc_extra: &ce,
                gates: [
                    self.state.gating.n[pair],
                    self.state.gating.m[pair],
                    self.state.gating.h[pair],
                ],
                g_stim,
                ek0: self.state.ek0[pair],
                ke0: self.state.ke0[pair],
            };
            let ich =
                channel_currents(&self.scenario.membrane, &node, &self.scenario.species, constants)
                    .map_err(|e| {
                        let x = self.dofmap.gamma_coords[pair];
                        Error::Domain(format!("at membrane node {x:?}: {e}"))
                    })?;
            let ich_total: f64 = ich.iter().sum();
            for (ri, sign) in [(0usize, 1.0f64), (1, -1.0)] {
                for k in 0..n_species {
                    let zk = self.scenario.species[k].valence;
                    cap[ri][k][pair] = alpha[ri][k] * cm / (faraday * zk);
                    g[ri][k][pair] =
                        sign * (dt * ich[k] - alpha[ri][k] * cm * phi_m) / (faraday * zk);
                }
                h[ri][pair] = sign * (dt * ich_total - cm * phi_m) / faraday;
            }
        }
        Ok((cap, g, h))
    }

    fn assemble_rhs(
        &self,
        g_nodal: &[Vec<Vec<f64>>],
        h_nodal: &[Vec<f64>],
        t_next: f64,
        t_prev: f64,
    ) -> Vec<f64> {
        let layout = &self.system.layout;
        let n_species = self.scenario.species.len();
        let dt = self.scenario.dt;
        let mesh = &self.scenario.mesh;
        let mut rhs = vec![0.0; layout.total()];
        let srcs = &self.scenario.sources;

        for (ri, r) in REGIONS.iter().enumerate() {
            let space = self.dofmap.space(*r);
            let nr = layout.region_size(*r);
            for k in 0..n_species {
                let off = layout.conc_offset(*r, k);
                let c_prev = &self.state.u[off..off + nr];
                let mut block = self.system.mass(*r).spmv(c_prev);
                if srcs.has_species_source(*r, k) {
                    let load = self.system.bulk_assembler(*r).assemble_load(
                        mesh,
                        space,
                        2 * self.scenario.degree + 4,
                        |x| srcs.species_source(*r, k, x, t_next),
                    );
                    for (b, l) in block.iter_mut().zip(&load) {
                        *b += dt * l;
                    }
                }
                let gload = self.system.gamma.load_nodal(mesh, &self.dofmap, *r, &g_nodal[ri][k]);
                for (b, l) in block.iter_mut().zip(&gload) {
                    *b -= l;
                }
                if let Some(f) = &srcs.gamma_fn {
                    let load = self.system.gamma.load_fn(mesh, &self.dofmap, *r, |x, n| {
                        f(*r, k, x, n, t_prev, t_next)
                    });
                    for (b, l) in block.iter_mut().zip(&load) {
                        *b -= dt * l;
                    }
                }
                if *r == Region::Extra {
                    if let Some(f) = &srcs.boundary_fn {
                        let load = assembly::assemble_boundary_load(mesh, &self.dofmap, |x, n| {
                            f(k, x, n, t_next)
                        });
                        for (b, l) in block.iter_mut().zip(&load) {
                            *b -= dt * l;
                        }
                    }
                }
                rhs[off..off + nr].copy_from_slice(&block);
            }

            let off = layout.phi_offset(*r);
            let mut block = self.system.gamma.load_nodal(mesh, &self.dofmap, *r, &h_nodal[ri]);
            for b in block.iter_mut() {
                *b = -*b;
            }
            if let Some(f) = &srcs.potential_fn {
                let load = self.system.bulk_assembler(*r).assemble_load(
                    mesh,
                    space,
                    2 * self.scenario.degree + 4,
                    |x| f(*r, x, t_next),
                );
                for (b, l) in block.iter_mut().zip(&load) {
                    *b += dt * l;
                }
            }
            if let Some(f) = &srcs.gamma_potential_fn {
                let load = self
                    .system
                    .gamma
                    .load_fn(mesh, &self.dofmap, *r, |x, n| f(*r, x, n, t_prev, t_next));
                for (b, l) in block.iter_mut().zip(&load) {
                    *b -= dt * l;
                }
            }
            if *r == Region::Extra {
                if let Some(f) = &srcs.boundary_fn {
                    let valences: Vec<f64> =
                        self.scenario.species.iter().map(|s| s.valence).collect();
                    let load = assembly::assemble_boundary_load(mesh, &self.dofmap, |x, n| {
                        (0..n_species).map(|k| valences[k] * f(k, x, n, t_next)).sum()
                    });
                    for (b, l) in block.iter_mut().zip(&load) {
                        *b -= dt * l;
                    }
                }
            }
            rhs[off..off + nr].copy_from_slice(&block);
        }
        rhs[self.system.pin_row] = self.scenario.solver.pin_value;
        rhs
    }

    /// Assemble the operator and right-hand side of the upcoming step from
    /// the current state, without solving. Gating advances as part of the
    /// explicit membrane evaluation.
    pub fn assemble_step_system(&mut self) -> Result<Vec<f64>> {
        let t_prev = self.state.time;
        let t_next = t_prev + self.scenario.dt;
        let (cap, g_nodal, h_nodal) = self.membrane_data(t_prev)?;
        {
            let layout = self.system.layout.clone();
            let u = &self.state.u;
            let conc = |r: Region, k: usize| -> Vec<f64> {
                let off = layout.conc_offset(r, k);
                u[off..off + layout.region_size(r)].to_vec()
            };
            let cap_ref = &cap;
            let region_id = |r: Region| match r {
                Region::Intra => 0usize,
                Region::Extra => 1,
            };
            let cap_weight = |r: Region, k: usize| -> Vec<f64> { cap_ref[region_id(r)][k].clone() };
            let dofmap = &self.dofmap;
            self.system.refresh(dofmap, conc, cap_weight);
        }
        Ok(self.assemble_rhs(&g_nodal, &h_nodal, t_next, t_prev))
    }

    /// Advance one time step. Order: gating, explicit membrane data,
    /// operator refresh, right-hand side, pin, solve, trace update.
    pub fn step(&mut self) -> Result<&StepStats> {
        let t_prev = self.state.time;
        let t_next = t_prev + self.scenario.dt;
        let asm_start = Instant::now();
        let rhs = self.assemble_step_system()?;
        let assembly_seconds = asm_start.elapsed().as_secs_f64();

        // preconditioner (frozen at the first step by default)
        let setup_start = Instant::now();
        let mode = self.scenario.solver.mode;
        if self.precond.is_none() || !self.scenario.solver.freeze_p0 {
            self.precond = Some(BlockPrecond::build(
                mode,
                self.system.matrix(),
                &self.system.layout.block_specs(&self.scenario.species),
                Some(self.system.pin_row),
                self.scenario.solver.amg_options(),
                self.scenario.solver.inner_tol,
            )?);
        }
        let setup_seconds = setup_start.elapsed().as_secs_f64();

        let solve_start = Instant::now();
        let a = self.system.matrix();
        // the convergence criterion is the preconditioned relative residual,
        // so every Krylov mode runs left-preconditioned; the inner CG of the
        // exact block mode is stationary to its 1e-8 tolerance, far below
        // the outer one
        let (x, iterations, residual, history, converged) = match mode {
            PrecondMode::Direct => {
                let x = direct::direct_solve(a, &rhs, self.scenario.solver.direct_cap)?;
                (x, 1, 0.0, Vec::new(), true)
            }
            _ => {
                let out = gmres(
                    a,
                    &rhs,
                    &self.state.u,
                    self.precond.as_ref().unwrap(),
                    &self.scenario.solver.krylov,
                )?;
                (out.x, out.iterations, out.residual, out.residual_history, out.converged)
            }
        };
        let solve_seconds = solve_start.elapsed().as_secs_f64();

        let true_residual = {
            let r = sub(&rhs, &a.spmv(&x));
            let bn = norm(&rhs);
            if bn > 0.0 {
                norm(&r) / bn
            } else {
                norm(&r)
            }
        };

        if !converged {
            eprintln!(
                "step {}: solver stalled at residual {residual:.3e} after {iterations} iterations; \
                 history tail: {:?}",
                self.state.step + 1,
                &history[history.len().saturating_sub(5)..]
            );
            return Err(Error::NoConvergence { iterations, residual });
        }

        // accept the step
        self.state.u = x;
        for (pair, &(di, de)) in self.dofmap.gamma_pairs.iter().enumerate() {
            let phi_i = self.state.u[self.system.layout.phi_offset(Region::Intra) + di];
            let phi_e = self.state.u[self.system.layout.phi_offset(Region::Extra) + de];
            self.state.phi_m[pair] = phi_i - phi_e;
        }
        self.state.step += 1;
        self.state.time = t_next;

        let min_concentration = {
            let layout = &self.system.layout;
            let mut m = f64::INFINITY;
            for r in REGIONS {
                for k in 0..self.scenario.species.len() {
                    let off = layout.conc_offset(r, k);
                    for v in &self.state.u[off..off + layout.region_size(r)] {
                        m = m.min(*v);
                    }
                }
            }
            m
        };
        if min_concentration < 0.0 {
            eprintln!(
                "step {}: minimum concentration {min_concentration:.3e} mol/m^3 is negative",
                self.state.step
            );
        }

        self.stats.push(StepStats {
            step: self.state.step,
            time: t_next,
            iterations,
            converged,
            residual,
            true_residual,
            setup_seconds,
            assembly_seconds,
            solve_seconds,
            min_concentration,
            residual_history: history,
        });
        Ok(self.stats.last().unwrap())
    }

    pub fn run(&mut self) -> Result<()> {
        for _ in 0..self.scenario.n_steps {
            self.step()?;
        }
        Ok(())
    }

    /// Run all steps, invoking the callback after each accepted step.
    pub fn run_with<F>(&mut self, mut on_step: F) -> Result<()>
    where
        F: FnMut(&Simulation) -> Result<()>,
    {
        for _ in 0..self.scenario.n_steps {
            self.step()?;
            on_step(self)?;
        }
        Ok(())
    }

    /// Evaluate a field at a physical point; the region is resolved by the
    /// containing cell's tag.
    pub fn probe(&self, x: [f64; 3], quantity: Quantity) -> Option<(Region, f64)> {
        let (cell, bary) = self.scenario.mesh.locate(x)?;
        let region = self.scenario.mesh.cell_tag(cell);
        let space = self.dofmap.space(region);
        let ci = space.cells.binary_search(&cell).ok()?;
        let nloc = crate::fem::reference::n_cell_dofs(self.scenario.mesh.dim(), self.scenario.degree);
        let dofs = &space.cell_dofs[ci * nloc..(ci + 1) * nloc];
        let xi = [
            bary[1],
            bary.get(2).copied().unwrap_or(0.0),
            bary.get(3).copied().unwrap_or(0.0),
        ];
        let mut basis = vec![0.0; nloc];
        crate::fem::reference::eval_basis(self.scenario.mesh.dim(), self.scenario.degree, xi, &mut basis);
        let off = match quantity {
            Quantity::Species(k) => self.system.layout.conc_offset(region, k),
            Quantity::Phi => self.system.layout.phi_offset(region),
        };
        let mut v = 0.0;
        for (a, &d) in basis.iter().zip(dofs) {
            v += a * self.state.u[off + d];
        }
        Some((region, v))
    }

    pub fn mean_phi_m(&self) -> f64 {
        if self.state.phi_m.is_empty() {
            return 0.0;
        }
        self.state.phi_m.iter().sum::<f64>() / self.state.phi_m.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Species(usize),
    Phi,
}

fn initial_state(scenario: &Scenario, dofmap: &DofMap, layout: &FieldLayout) -> Result<SimState> {
    let n_species = scenario.species.len();
    let mut u = vec![0.0; layout.total()];
    for r in REGIONS {
        let space = dofmap.space(r);
        for (k, sp) in scenario.species.iter().enumerate() {
            let off = layout.conc_offset(r, k);
            match &scenario.initial.conc {
                Some(f) => {
                    for (d, x) in space.dof_coords.iter().enumerate() {
                        u[off + d] = f(r, k, *x);
                    }
                }
                None => {
                    let c0 = sp.c0(r);
                    for d in 0..space.ndofs {
                        u[off + d] = c0;
                    }
                }
            }
        }
        let off = layout.phi_offset(r);
        match &scenario.initial.phi {
            Some(f) => {
                for (d, x) in space.dof_coords.iter().enumerate() {
                    u[off + d] = f(r, *x);
                }
            }
            None => {
                // seed the first solve with the membrane jump carried by the
                // intracellular side; the initial membrane potential itself
                // enters the coupling as data below
                let v = if r == Region::Intra { scenario.phi_m0 } else { 0.0 };
                for d in 0..space.ndofs {
                    u[off + d] = v;
                }
            }
        }
    }

    let n_gamma = dofmap.n_gamma();
    let mut phi_m = vec![scenario.phi_m0; n_gamma];
    if scenario.initial.phi.is_some() {
        for (pair, &(di, de)) in dofmap.gamma_pairs.iter().enumerate() {
            let phi_i = u[layout.phi_offset(Region::Intra) + di];
            let phi_e = u[layout.phi_offset(Region::Extra) + de];
            phi_m[pair] = phi_i - phi_e;
        }
    }

    let gating = GatingState::uniform(n_gamma, scenario.gating0);
    let (mut ek0, mut ke0) = (vec![0.0; n_gamma], vec![4.0; n_gamma]);
    if matches!(scenario.membrane, MembraneModel::KirNaK(_)) {
        for (pair, &(di, de)) in dofmap.gamma_pairs.iter().enumerate() {
            let ki = u[layout.conc_offset(Region::Intra, K) + di];
            let ke = u[layout.conc_offset(Region::Extra, K) + de];
            ek0[pair] =
                reversal_potential(scenario.species[K].valence, ki, ke, &scenario.constants)?;
            ke0[pair] = ke;
        }
    }
    let _ = n_species;

    Ok(SimState { step: 0, time: 0.0, u, phi_m, gating, ek0, ke0 })
}

fn stimulus_mask(scenario: &Scenario, dofmap: &DofMap) -> Vec<bool> {
    let n_gamma = dofmap.n_gamma();
    let mut mask = vec![false; n_gamma];
    let Some(stim) = &scenario.stimulus else {
        return mask;
    };
    match &stim.predicate {
        SpatialPredicate::All => mask.fill(true),
        SpatialPredicate::HalfSpaceX { x0 } => {
            for (pair, x) in dofmap.gamma_coords.iter().enumerate() {
                mask[pair] = x[0] < *x0;
            }
        }
        SpatialPredicate::Labels(labels) => {
            let nfl = crate::fem::reference::n_facet_dofs(scenario.mesh.dim(), scenario.degree);
            for (f, label) in dofmap.facet_labels.iter().enumerate() {
                if labels.contains(label) {
                    for &pair in &dofmap.facet_pairs[f * nfl..(f + 1) * nfl] {
                        mask[pair] = true;
                    }
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_scenario() -> Scenario {
        let mut s = Scenario::model_a(4, 2, 1).unwrap();
        s.n_steps = 3;
        s.solver.mode = PrecondMode::ExactBlockCg;
        s
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let mut s = tiny_scenario();
        s.dt = 0.0;
        assert!(matches!(Simulation::new(s), Err(Error::Config { .. })));
    }

    #[test]
    fn pattern_has_section_4_1_zero_blocks() {
        // intra and extra concentrations couple only through potentials;
        // concentration blocks of different species never touch
        let sim = Simulation::new(tiny_scenario()).unwrap();
        let layout = sim.layout();
        let a = sim.system.matrix();
        let n_species = 3;
        let in_range = |c: usize, off: usize, len: usize| c >= off && c < off + len;
        for r in REGIONS {
            let nr = layout.region_size(r);
            let q = r.other();
            for k in 0..n_species {
                let off = layout.conc_offset(r, k);
                for i in 0..nr {
                    let (cols, _) = a.row(off + i);
                    for &c in cols {
                        // allowed: own block, own potential, other-region potential
                        let ok = in_range(c, off, nr)
                            || in_range(c, layout.phi_offset(r), nr)
                            || in_range(c, layout.phi_offset(q), layout.region_size(q));
                        assert!(ok, "concentration row {} has a forbidden column {}", off + i, c);
                    }
                }
            }
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        // all conductances zero, no pump, no stimulus, flat initial membrane
        // potential and uniform electroneutral concentrations
        let mut s = tiny_scenario();
        for sp in &mut s.species {
            sp.g_leak = 0.0;
            sp.g_bar = 0.0;
        }
        s.membrane = MembraneModel::Leak;
        s.stimulus = None;
        s.phi_m0 = 0.0;
        s.n_steps = 3;
        s.solver.krylov.tolerance = 1e-10;
        let mut sim = Simulation::new(s).unwrap();
        let u0 = sim.state.u.clone();
        sim.run().unwrap();
        let scale = norm(&u0);
        let diff = norm(&sub(&sim.state.u, &u0));
        assert!(diff <= 1e-8 * scale, "equilibrium drifted: {diff:e} vs {scale:e}");
    }

    #[test]
    fn pinned_row_is_identity() {
        let mut sim = Simulation::new(tiny_scenario()).unwrap();
        sim.step().unwrap();
        let a = sim.system.matrix();
        let (cols, vals) = a.row(sim.system.pin_row);
        let mut nonzero = 0;
        for (c, v) in cols.iter().zip(vals) {
            if *v != 0.0 {
                nonzero += 1;
                assert_eq!(*c, sim.system.pin_row);
                assert_eq!(*v, 1.0);
            }
        }
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn charge_balance_of_potential_rows() {
        // constant test functions in the two potential equations produce
        // opposite membrane terms; checked on the assembled operator applied
        // to the (uniform-field) initial state, and on the right-hand side
        let mut sim = Simulation::new(tiny_scenario()).unwrap();
        let rhs = sim.assemble_step_system().unwrap();
        let layout = sim.layout().clone();
        let a = sim.system.matrix();
        let au = a.spmv(&sim.state.u);
        let mut sums = [0.0f64; 2];
        let mut rhs_sums = [0.0f64; 2];
        let mut scale = 0.0f64;
        for (ri, r) in REGIONS.iter().enumerate() {
            let off = layout.phi_offset(*r);
            for i in 0..layout.region_size(*r) {
                let row = off + i;
                if row == sim.system.pin_row {
                    continue;
                }
                sums[ri] += au[row];
                rhs_sums[ri] += rhs[row];
                scale += au[row].abs();
            }
        }
        assert!(scale > 0.0, "membrane terms should be active");
        let total = sums[0] + sums[1];
        assert!(
            total.abs() <= 1e-10 * scale,
            "membrane charge terms do not cancel: {sums:?}"
        );
        let rhs_total = rhs_sums[0] + rhs_sums[1];
        let rhs_scale = rhs_sums[0].abs() + rhs_sums[1].abs();
        assert!(
            rhs_total.abs() <= 1e-10 * rhs_scale.max(1e-300),
            "membrane charge data do not cancel: {rhs_sums:?}"
        );
    }

    #[test]
    fn model_a_smoke_run_iterations_bounded() {
        let mut s = Scenario::model_a(16, 2, 1).unwrap();
        s.n_steps = 10;
        s.solver.mode = PrecondMode::ExactBlockCg;
        let mut sim = Simulation::new(s).unwrap();
        sim.run().unwrap();
        for st in &sim.stats {
            assert!(st.converged);
            assert!(st.iterations <= 6, "step {} took {} iterations", st.step, st.iterations);
            assert!(st.true_residual <= 1e-4, "true residual {}", st.true_residual);
        }
    }

    #[test]
    fn probe_resolves_region_by_cell_tag() {
        let sim = Simulation::new(tiny_scenario()).unwrap();
        let s = 1e-6;
        let (r, v) = sim.probe([0.5 * s, 0.5 * s, 0.0], Quantity::Species(0)).unwrap();
        assert_eq!(r, Region::Intra);
        assert!((v - 12.0).abs() < 1e-12);
        let (r, v) = sim.probe([0.15 * s, 0.15 * s, 0.0], Quantity::Species(0)).unwrap();
        assert_eq!(r, Region::Extra);
        assert!((v - 100.0).abs() < 1e-12);
    }
}
