use knpemi::solver::precond::PrecondMode;
use knpemi::system::{Scenario, Simulation};

fn main() {
    let mut s = Scenario::model_a(64, 2, 1).unwrap();
    s.n_steps = 300;
    s.solver.mode = PrecondMode::AmgMonolithic;
    let mut sim = Simulation::new(s).unwrap();
    let mut trace: Vec<(f64, f64)> = vec![(0.0, sim.mean_phi_m())];
    sim.run_with(|sim| {
        trace.push((sim.state.time, sim.mean_phi_m()));
        Ok(())
    })
    .unwrap();
    // spike shape summary
    let peak = trace.iter().cloned().fold(f64::NEG_INFINITY, |m, (_, v)| m.max(v));
    let vmin = trace.iter().cloned().fold(f64::INFINITY, |m, (_, v)| m.min(v));
    let mut crossings = Vec::new();
    for w in trace.windows(2) {
        if w[0].1 <= 0.0 && w[1].1 > 0.0 {
            crossings.push(w[1].0);
        }
    }
    println!("phi_M start {:.2} mV, peak {:.2} mV, min {:.2} mV", trace[0].1 * 1e3, peak * 1e3, vmin * 1e3);
    println!("upward zero crossings at t(ms): {:?}", crossings.iter().map(|t| t * 1e3).collect::<Vec<_>>());
    // trace every ms
    for (t, v) in trace.iter().filter(|(t, _)| (t * 1e3).fract() < 1e-9) {
        println!("t={:5.1} ms  phi_M={:8.2} mV", t * 1e3, v * 1e3);
    }
    let iters: Vec<usize> = sim.stats.iter().map(|s| s.iterations).collect();
    println!("iters: min {} max {}", iters.iter().min().unwrap(), iters.iter().max().unwrap());
}
