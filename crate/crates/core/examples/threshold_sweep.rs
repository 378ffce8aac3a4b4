//! Bisect the stable/unstable amplitude for a single viscosity.

use stablab::experiments::{run_experiment, ExperimentConfig, ExperimentKind};

fn main() -> stablab::Result<()> {
    let mu: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let sets = [format!("sweep.mu_list=[{mu}]"), "sweep.bisection_steps=4".to_string()];
    let cfg = ExperimentConfig::load(ExperimentKind::ThresholdSweep, None, &sets)?;
    let art = run_experiment(&cfg)?;
    for t in &art.tables {
        print!("{}\n{}", t.file, t.to_csv());
    }
    for n in &art.notes {
        println!("note: {n}");
    }
    Ok(())
}
