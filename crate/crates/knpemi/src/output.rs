//! File outputs: probe and iteration-log CSVs, legacy VTK snapshots, solver
//! statistics JSON.
//!
//! All numbers are written with Rust's shortest-round-trip float formatting,
//! so identical runs produce byte-identical files.

use std::fmt::Write as FmtWrite;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::mesh::Region;
use crate::system::{Quantity, Simulation, StepStats};

/// One probe sample.
#[derive(Debug, Clone)]
pub struct ProbeSample {
    pub t: f64,
    pub quantity: String,
    pub region: &'static str,
    pub x: [f64; 3],
    pub value: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeRequest {
    pub point: [f64; 3],
    pub quantity: Quantity,
}

/// Resolve probe requests against a simulation state.
pub fn sample_probes(
    sim: &Simulation,
    requests: &[(String, ProbeRequest)],
    out: &mut Vec<ProbeSample>,
) {
    for (name, req) in requests {
        if let Some((region, value)) = sim.probe(req.point, req.quantity) {
            out.push(ProbeSample {
                t: sim.state.time,
                quantity: name.clone(),
                region: region.name(),
                x: req.point,
                value,
            });
        }
    }
}

pub fn write_probe_csv(samples: &[ProbeSample], path: &Path) -> Result<()> {
    let mut text = String::from("t_s,quantity,region,x,y,z,value\n");
    for s in samples {
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            s.t, s.quantity, s.region, s.x[0], s.x[1], s.x[2], s.value
        )
        .unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_iteration_log(stats: &[StepStats], path: &Path) -> Result<()> {
    let mut text = String::from("step,t_s,gmres_iters,true_residual,setup_s,solve_s\n");
    for s in stats {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            s.step, s.time, s.iterations, s.true_residual, s.setup_seconds, s.solve_seconds
        )
        .unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Solver statistics for one run, serialized to JSON.
#[derive(Debug, serde::Serialize)]
pub struct SolverStats<'a> {
    pub mode: &'a str,
    pub n_unknowns: usize,
    pub steps: Vec<StepSummary>,
}

#[derive(Debug, serde::Serialize)]
pub struct StepSummary {
    pub step: usize,
    pub t_s: f64,
    pub iterations: usize,
    pub converged: bool,
    pub true_residual: f64,
    pub setup_s: f64,
    pub assembly_s: f64,
    pub solve_s: f64,
    pub residual_history: Vec<f64>,
}

pub fn write_solver_stats(sim: &Simulation, path: &Path) -> Result<()> {
    let stats = SolverStats {
        mode: sim.scenario.solver.mode.name(),
        n_unknowns: sim.n_unknowns(),
        steps: sim
            .stats
            .iter()
            .map(|s| StepSummary {
                step: s.step,
                t_s: s.time,
                iterations: s.iterations,
                converged: s.converged,
                true_residual: s.true_residual,
                setup_s: s.setup_seconds,
                assembly_s: s.assembly_seconds,
                solve_s: s.solve_seconds,
                residual_history: s.residual_history.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    std::fs::write(path, json)?;
    Ok(())
}

/// Write one legacy-VTK unstructured-grid snapshot per region, with point
/// data arrays named after the species plus `phi`. Degree-2 runs export the
/// vertex subset (snapshots are for visual inspection).
pub fn write_vtk_snapshot(sim: &Simulation, dir: &Path, step: usize) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mesh = &sim.scenario.mesh;
    let dim = mesh.dim();
    let mut written = Vec::new();
    for region in [Region::Intra, Region::Extra] {
        let space = sim.dofmap.space(region);
        // vertex dofs come first within each cell's dof list; collect the
        // region's vertex set and a compact renumbering
        let nloc = crate::fem::reference::n_cell_dofs(dim, sim.scenario.degree);
        let mut vertex_of_dof: Vec<(usize, usize)> = Vec::new(); // (dof, mesh vertex)
        let mut seen = std::collections::HashMap::new();
        for (ci, &cell) in space.cells.iter().enumerate() {
            let dofs = &space.cell_dofs[ci * nloc..(ci + 1) * nloc];
            for (local, &v) in mesh.cell(cell).iter().enumerate() {
                if !seen.contains_key(&dofs[local]) {
                    seen.insert(dofs[local], ());
                    vertex_of_dof.push((dofs[local], v));
                }
            }
        }
        vertex_of_dof.sort_unstable();
        let index_of_dof: std::collections::HashMap<usize, usize> =
            vertex_of_dof.iter().enumerate().map(|(i, &(d, _))| (d, i)).collect();

        let mut text = String::new();
        text.push_str("# vtk DataFile Version 3.0\n");
        let _ = writeln!(text, "ionic electrodiffusion snapshot step {step} ({})", region.name());
        text.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
        let _ = writeln!(text, "POINTS {} double", vertex_of_dof.len());
        for &(_, v) in &vertex_of_dof {
            let p = mesh.vertex(v);
            let _ = writeln!(text, "{} {} {}", p[0], p[1], p[2]);
        }
        let ncells = space.cells.len();
        let nv = dim + 1;
        let _ = writeln!(text, "CELLS {} {}", ncells, ncells * (nv + 1));
        for (ci, _) in space.cells.iter().enumerate() {
            let dofs = &space.cell_dofs[ci * nloc..(ci + 1) * nloc];
            let _ = write!(text, "{nv}");
            for &d in dofs.iter().take(nv) {
                let _ = write!(text, " {}", index_of_dof[&d]);
            }
            text.push('\n');
        }
        let _ = writeln!(text, "CELL_TYPES {ncells}");
        let cell_type = if dim == 2 { 5 } else { 10 };
        for _ in 0..ncells {
            let _ = writeln!(text, "{cell_type}");
        }
        let _ = writeln!(text, "POINT_DATA {}", vertex_of_dof.len());
        for (k, sp) in sim.scenario.species.iter().enumerate() {
            let _ = writeln!(text, "SCALARS {} double 1\nLOOKUP_TABLE default", sp.name);
            let field = sim.conc(region, k);
            for &(d, _) in &vertex_of_dof {
                let _ = writeln!(text, "{}", field[d]);
            }
        }
        let _ = writeln!(text, "SCALARS phi double 1\nLOOKUP_TABLE default");
        let field = sim.phi(region);
        for &(d, _) in &vertex_of_dof {
            let _ = writeln!(text, "{}", field[d]);
        }

        let path = dir.join(format!("snapshot_{}_{:06}.vtk", region.name(), step));
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

/// Convergence table rows as CSV (`level,nx,h,quantity,l2_error,rate`).
pub fn write_convergence_csv(rows: &[crate::verify::mms::ConvergenceRow], path: &Path) -> Result<()> {
    let mut text = String::from("level,nx,h,quantity,l2_error,rate\n");
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            r.level,
            r.nx,
            r.h,
            r.quantity,
            r.l2_error,
            r.rate.map(|x| x.to_string()).unwrap_or_default()
        )
        .unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Build probe requests from a configuration.
pub fn probe_requests(cfg: &crate::config::ScenarioConfig) -> Vec<(String, ProbeRequest)> {
    let mut out = Vec::new();
    for point in cfg.probe_points() {
        for q in &cfg.probes.quantities {
            let quantity = if q == "phi" {
                Quantity::Phi
            } else if let Some(k) = cfg.species.iter().position(|s| &s.name == q) {
                Quantity::Species(k)
            } else {
                continue;
            };
            out.push((q.clone(), ProbeRequest { point, quantity }));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Scenario;

    #[test]
    fn vtk_snapshot_writes_both_regions() {
        let mut s = Scenario::model_a(4, 2, 1).unwrap();
        s.n_steps = 0;
        let sim = crate::system::Simulation::new(s).unwrap();
        let dir = std::env::temp_dir().join("knpemi-vtk-test");
        let files = write_vtk_snapshot(&sim, &dir, 0).unwrap();
        assert_eq!(files.len(), 2);
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("SCALARS Na double 1"));
        assert!(text.contains("SCALARS phi double 1"));
    }

    #[test]
    fn probe_csv_format() {
        let samples = vec![ProbeSample {
            t: 5e-5,
            quantity: "Na".into(),
            region: "intra",
            x: [0.5e-6, 0.5e-6, 0.0],
            value: 12.0,
        }];
        let path = std::env::temp_dir().join("knpemi-probe-test.csv");
        write_probe_csv(&samples, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t_s,quantity,region,x,y,z,value\n"));
        assert!(text.contains("0.00005,Na,intra,"));
    }
}
