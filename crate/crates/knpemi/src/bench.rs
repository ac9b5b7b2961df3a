//! Benchmark harnesses: iteration-robustness sweeps across mesh resolution,
//! polynomial degree, time step and preconditioner mode, and a shared-memory
//! thread-scaling study.

use std::fmt::Write as FmtWrite;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::solver::precond::PrecondMode;
use crate::system::{Scenario, Simulation};

#[derive(Debug, Clone)]
pub struct RobustnessRow {
    pub nx: usize,
    pub degree: usize,
    pub dt_ms: f64,
    pub precond: PrecondMode,
    pub n_unknowns: usize,
    pub steps: usize,
    /// None when the iteration cap was reached without convergence.
    pub mean_iterations: Option<f64>,
    pub max_iterations: usize,
    pub assembly_seconds: f64,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
}

impl RobustnessRow {
    pub fn csv_header() -> &'static str {
        "nx,p,dt_ms,precond,n_dofs,steps,mean_iters,max_iters,assembly_s,setup_s,solve_s"
    }

    pub fn to_csv(&self) -> String {
        let mean = match self.mean_iterations {
            Some(m) => m.to_string(),
            None => "cap-reached".to_string(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.nx,
            self.degree,
            self.dt_ms,
            self.precond.name(),
            self.n_unknowns,
            self.steps,
            mean,
            self.max_iterations,
            self.assembly_seconds,
            self.setup_seconds,
            self.solve_seconds
        )
    }
}

pub fn format_robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut text = String::from(RobustnessRow::csv_header());
    text.push('\n');
    for r in rows {
        writeln!(text, "{}", r.to_csv()).unwrap();
    }
    text
}

/// Sweep specification for the robustness benchmark.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub dim: usize,
    pub nx: Vec<usize>,
    pub degrees: Vec<usize>,
    pub dt_ms: Vec<f64>,
    pub modes: Vec<PrecondMode>,
    pub steps: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            dim: 2,
            nx: vec![16, 32, 64, 128, 256],
            degrees: vec![1, 2],
            dt_ms: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            modes: vec![PrecondMode::AmgMonolithic],
            steps: 10,
        }
    }
}

/// Run the sweep; the mesh, DOF map and assembly caches are reused across
/// time steps sizes within one (nx, degree) pair.
pub fn robustness_sweep(spec: &SweepSpec) -> Result<Vec<RobustnessRow>> {
    let mut rows = Vec::new();
    for &p in &spec.degrees {
        for &nx in &spec.nx {
            let mut scenario = Scenario::model_a(nx, spec.dim, p)?;
            scenario.n_steps = spec.steps;
            let mut sim = Simulation::new(scenario)?;
            for &mode in &spec.modes {
                for &dt_ms in &spec.dt_ms {
                    sim.scenario.solver.mode = mode;
                    sim.reset(dt_ms * 1e-3)?;
                    rows.push(run_one(&mut sim, nx, p, dt_ms, mode, spec.steps)?);
                }
            }
        }
    }
    Ok(rows)
}

fn run_one(
    sim: &mut Simulation,
    nx: usize,
    p: usize,
    dt_ms: f64,
    mode: PrecondMode,
    steps: usize,
) -> Result<RobustnessRow> {
    let mut capped = false;
    for _ in 0..steps {
        match sim.step() {
            Ok(_) => {}
            Err(Error::NoConvergence { .. }) => {
                capped = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let iters: Vec<usize> = sim.stats.iter().map(|s| s.iterations).collect();
    let mean = if capped || iters.is_empty() {
        None
    } else {
        Some(iters.iter().sum::<usize>() as f64 / iters.len() as f64)
    };
    let max_iterations = if capped {
        sim.scenario.solver.krylov.max_iterations
    } else {
        iters.iter().copied().max().unwrap_or(0)
    };
    Ok(RobustnessRow {
        nx,
        degree: p,
        dt_ms,
        precond: mode,
        n_unknowns: sim.n_unknowns(),
        steps: sim.stats.len(),
        mean_iterations: mean,
        max_iterations,
        assembly_seconds: sim.stats.iter().map(|s| s.assembly_seconds).sum(),
        setup_seconds: sim.stats.iter().map(|s| s.setup_seconds).sum(),
        solve_seconds: sim.stats.iter().map(|s| s.solve_seconds).sum(),
    })
}

#[derive(Debug, Clone)]
pub struct ThreadScalingRow {
    pub threads: usize,
    pub iterations: Vec<usize>,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
}

pub fn format_thread_csv(rows: &[ThreadScalingRow]) -> String {
    let mut text = String::from("threads,steps,total_iters,assembly_s,solve_s,total_s\n");
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            r.threads,
            r.iterations.len(),
            r.iterations.iter().sum::<usize>(),
            r.assembly_seconds,
            r.solve_seconds,
            r.total_seconds
        )
        .unwrap();
    }
    text
}

/// Solve the same scenario at each thread count. Deterministic kernels make
/// the iteration counts identical across counts; this is asserted here.
pub fn thread_scaling(
    make_scenario: impl Fn() -> Result<Scenario>,
    thread_counts: &[usize],
) -> Result<Vec<ThreadScalingRow>> {
    let mut rows: Vec<ThreadScalingRow> = Vec::new();
    for &threads in thread_counts {
        if threads == 0 {
            return Err(Error::Config {
                field: "threads".into(),
                message: "thread count must be at least 1".into(),
            });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config { field: "threads".into(), message: e.to_string() })?;
        let scenario = make_scenario()?;
        let row = pool.install(|| -> Result<ThreadScalingRow> {
            let start = Instant::now();
            let mut sim = Simulation::new(scenario)?;
            sim.run()?;
            Ok(ThreadScalingRow {
                threads,
                iterations: sim.stats.iter().map(|s| s.iterations).collect(),
                assembly_seconds: sim.stats.iter().map(|s| s.assembly_seconds).sum(),
                solve_seconds: sim.stats.iter().map(|s| s.solve_seconds).sum(),
                total_seconds: start.elapsed().as_secs_f64(),
            })
        })?;
        if let Some(first) = rows.first() {
            if first.iterations != row.iterations {
                return Err(Error::Config {
                    field: "determinism".into(),
                    message: format!(
                        "iteration counts changed with the thread count: {:?} (1 thread) vs {:?} \
                         ({} threads)",
                        first.iterations, row.iterations, threads
                    ),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
