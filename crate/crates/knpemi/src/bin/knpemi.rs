//! Command-line front end: run scenarios, benchmark solver robustness and
//! thread scaling, run the verification suite, export meshes.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use knpemi::bench::{self, SweepSpec};
use knpemi::config::ScenarioConfig;
use knpemi::error::Result;
use knpemi::output;
use knpemi::solver::precond::PrecondMode;
use knpemi::system::Simulation;
use knpemi::verify;

#[derive(Parser)]
#[command(
    name = "knpemi",
    about = "Finite element simulator for ionic electrodiffusion in excitable tissue",
    version
)]
struct Cli {
    /// Worker threads for parallel kernels (fallback: KNPEMI_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write probes, iteration logs and snapshots.
    Run(RunArgs),
    /// Iteration-robustness sweep over resolution, degree, time step and
    /// preconditioner.
    BenchRobustness(BenchRobustnessArgs),
    /// Solve one configuration at several thread counts.
    BenchThreads(BenchThreadsArgs),
    /// Run the verification suites (manufactured solutions, assembly oracle,
    /// cross-solver agreement, invariants).
    Verify(VerifyArgs),
    /// Mesh utilities.
    Mesh(MeshArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML); defaults to the built-in idealized scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the scenario file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Preconditioner mode override.
    #[arg(long)]
    precond: Option<String>,
    /// Krylov tolerance override.
    #[arg(long)]
    tol: Option<f64>,
    /// GMRES restart length override.
    #[arg(long)]
    restart: Option<usize>,
}

#[derive(Args)]
struct BenchRobustnessArgs {
    /// Mesh resolutions, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![16usize, 32, 64, 128, 256])]
    nx: Vec<usize>,
    /// Polynomial degrees.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2])]
    degrees: Vec<usize>,
    /// Time steps in milliseconds.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.1, 1.0, 10.0, 100.0])]
    dt_ms: Vec<f64>,
    /// Preconditioner modes.
    #[arg(long, value_delimiter = ',', default_values_t = vec!["amg_monolithic".to_string()])]
    precond: Vec<String>,
    /// Time steps per configuration.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Spatial dimension of the idealized scenario.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Output directory for the CSV table.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchThreadsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Thread counts to test.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8])]
    counts: Vec<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Directory for convergence tables (optional).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeshArgs {
    #[command(subcommand)]
    command: MeshCommand,
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Build the scenario's mesh and write it in the exchange format.
    Export {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output mesh file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_or_default(path: &Option<PathBuf>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut cfg = load_or_default(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output.dir = out.display().to_string();
    }
    if let Some(p) = &args.precond {
        PrecondMode::from_str(p)?;
        cfg.solver.precond = p.clone();
    }
    if let Some(t) = args.tol {
        cfg.solver.tolerance = t;
    }
    if let Some(r) = args.restart {
        cfg.solver.restart = r;
    }
    cfg.validate()?;

    let out_dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&out_dir)?;
    let scenario = cfg.to_scenario()?;
    let n_steps = scenario.n_steps;
    let mut sim = Simulation::new(scenario)?;
    println!(
        "scenario: {} unknowns, {} steps of {} ms, preconditioner {}",
        sim.n_unknowns(),
        n_steps,
        sim.scenario.dt * 1e3,
        sim.scenario.solver.mode.name()
    );

    let requests = output::probe_requests(&cfg);
    let mut samples = Vec::new();
    output::sample_probes(&sim, &requests, &mut samples);
    let snapshot_every = cfg.output.snapshot_every.max(1);
    let snapshots = cfg.output.snapshots;
    if snapshots {
        output::write_vtk_snapshot(&sim, &out_dir, 0)?;
    }
    sim.run_with(|sim| {
        output::sample_probes(sim, &requests, &mut samples);
        if snapshots && sim.state.step % snapshot_every == 0 {
            output::write_vtk_snapshot(sim, &out_dir, sim.state.step)?;
        }
        Ok(())
    })?;

    output::write_probe_csv(&samples, &out_dir.join("probes.csv"))?;
    output::write_iteration_log(&sim.stats, &out_dir.join("iterations.csv"))?;
    output::write_solver_stats(&sim, &out_dir.join("solver_stats.json"))?;
    let iters: Vec<usize> = sim.stats.iter().map(|s| s.iterations).collect();
    let mean = iters.iter().sum::<usize>() as f64 / iters.len().max(1) as f64;
    println!(
        "done: {} steps, iterations mean {:.1} max {}, final membrane potential {:.2} mV",
        sim.stats.len(),
        mean,
        iters.iter().max().copied().unwrap_or(0),
        sim.mean_phi_m() * 1e3
    );
    println!("outputs in {}", out_dir.display());
    Ok(())
}

fn cmd_bench_robustness(args: &BenchRobustnessArgs) -> Result<()> {
    let modes: Result<Vec<PrecondMode>> =
        args.precond.iter().map(|s| PrecondMode::from_str(s)).collect();
    let spec = SweepSpec {
        dim: args.dim,
        nx: args.nx.clone(),
        degrees: args.degrees.clone(),
        dt_ms: args.dt_ms.clone(),
        modes: modes?,
        steps: args.steps,
    };
    let rows = bench::robustness_sweep(&spec)?;
    let csv = bench::format_robustness_csv(&rows);
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("robustness.csv");
    std::fs::write(&path, &csv)?;
    print!("{csv}");
    println!("table written to {}", path.display());
    Ok(())
}

fn cmd_bench_threads(args: &BenchThreadsArgs) -> Result<()> {
    let cfg = load_or_default(&args.config)?;
    let rows = bench::thread_scaling(|| cfg.to_scenario(), &args.counts)?;
    let csv = bench::format_thread_csv(&rows);
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("thread_scaling.csv");
    std::fs::write(&path, &csv)?;
    print!("{csv}");
    println!("iteration counts identical across thread counts");
    println!("table written to {}", path.display());
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{}: {name} ({detail})", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    // assembly oracle on tiny meshes
    for (dim, p, stim) in [(2, 1, true), (2, 1, false), (2, 2, true), (3, 1, true), (3, 2, false)] {
        let mut s = knpemi::system::Scenario::model_a(4, dim, p)?;
        if !stim {
            s.stimulus = None;
        }
        let mut sim = Simulation::new(s)?;
        let rep = verify::compare_with_oracle(&mut sim)?;
        check(
            &format!("dense assembly oracle d={dim} p={p} stimulus={stim}"),
            rep.max_matrix_diff <= 1e-12 && rep.max_rhs_diff <= 1e-12 && rep.zero_pattern_ok,
            format!("matrix {:.2e}, rhs {:.2e}", rep.max_matrix_diff, rep.max_rhs_diff),
        );
    }

    // manufactured solutions
    let case = verify::mms::MmsCase::default();
    for (p, levels) in [(1usize, vec![8usize, 16, 32, 64]), (2, vec![8, 16, 32])] {
        let table = verify::mms::run_mms(&case, p, &levels)?;
        let want = p as f64 + 1.0;
        let last_nx = *levels.last().unwrap();
        let mut worst:到 = (f64::INFINITY, String::new());
        for row in table.iter().filter(|r| r.nx == last_nx) {
            if let Some(rate) = row.rate {
                if (rate - want).abs() > (worst.0 - want).abs() {
                    worst = (rate, row.quantity.clone());
                }
            }
        }
        let ok = table
            .iter()
            .filter(|r| r.nx == last_nx)
            .all(|r| r.rate.map(|x| (x - want).abs() <= 0.3).unwrap_or(false));
        check(
            &format!("manufactured-solution rates p={p}"),
            ok,
            format!("farthest rate {:.2} ({}), target {want} +/- 0.3", worst.0, worst.1),
        );
        if let Some(dir) = &args.out {
            std::fs::create_dir_all(dir)?;
            output::write_convergence_csv(&table, &dir.join(format!("mms_p{p}.csv")))?;
        }
    }

    // cross-solver agreement
    let report = verify::cross_solver_check(
        || {
            let mut s = knpemi::system::Scenario::model_a(16, 2, 1)?;
            s.solver.krylov.tolerance = 1e-6;
            Ok(s)
        },
        5,
    )?;
    check(
        "iterative vs direct solver agreement",
        report.max <= 1e-5 && report.pins_match,
        format!("max relative discrepancy {:.2e} over 5 steps", report.max),
    );

    // physical invariants
    let mut s = knpemi::system::Scenario::model_a(32, 2, 1)?;
    s.n_steps = 10;
    let mut sim = Simulation::new(s)?;
    let initial = verify::check_electroneutrality(&sim);
    sim.run()?;
    let after = verify::check_electroneutrality(&sim);
    check(
        "bulk electroneutrality",
        initial <= 1e-12 && after <= 1e-3,
        format!("initial {initial:.2e}, after 10 steps {after:.2e} mol/m^3"),
    );

    Ok(all_ok)
}

fn cmd_mesh(args: &MeshArgs) -> Result<()> {
    match &args.command {
        MeshCommand::Export { config, out } => {
            let cfg = load_or_default(config)?;
            let mesh = cfg.build_mesh()?;
            knpemi::mesh::export_mesh(&mesh, out)?;
            println!(
                "mesh with {} vertices, {} cells, {} membrane facets written to {}",
                mesh.num_vertices(),
                mesh.num_cells(),
                mesh.interface_facets().len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("KNPEMI_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: thread count must be at least 1");
            return ExitCode::FAILURE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::BenchRobustness(a) => cmd_bench_robustness(a),
        Command::BenchThreads(a) => cmd_bench_threads(a),
        Command::Verify(a) => match cmd_verify(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("verification failed");
                return ExitCode::FAILURE;
            }
            Err(e) => Err(e),
        },
        Command::Mesh(a) => cmd_mesh(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
