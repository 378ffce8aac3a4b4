//! Numerical verification gates: temporal order, spectral convergence and consistency.

use stablab::experiments::{run_experiment, ExperimentConfig, ExperimentKind};

fn main() -> stablab::Result<()> {
    let art = run_experiment(&ExperimentConfig::for_kind(ExperimentKind::Convergence))?;
    for c in &art.checks {
        println!("{} {} = {:.4e} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.target);
    }
    Ok(())
}
