//! W-equation residual of a simulated trajectory at several sampling intervals.

use stablab::initdata::{generate, InitSpec};
use stablab::linear::PhysParams;
use stablab::nonlinear::{run_simulation, DiagnosticsConfig, StepperConfig};
use stablab::residual::{w_equation_residual, ResidualOptions};
use stablab::spectral::Grid;

fn main() -> stablab::Result<()> {
    let grid = Grid::new(4, 32, 16.0)?;
    let phys = PhysParams::new(1e-2, 5e-3, 1.4)?;
    let init = generate(grid, phys, &InitSpec { amplitude: 1e-3, width: 1.0, ..Default::default() })?;
    let diag = DiagnosticsConfig {
        energy: false,
        keep_states: true,
        ..Default::default()
    };
    let mut prev: Option<f64> = None;
    for h in [0.02, 0.01, 0.005] {
        let cfg = StepperConfig {
            t_end: 1.0,
            output_dt: h,
            ..Default::default()
        };
        let run = run_simulation(&init, &cfg, &diag)?;
        let res = w_equation_residual(&run.states, &ResidualOptions::default())?;
        let r = res.iter().map(|s| s.residual).fold(0.0, f64::max);
        let dw = res.iter().map(|s| s.dt_w).fold(0.0, f64::max);
        let order = prev.map(|p| (p / r).log2());
        println!("h={h:<6} max residual {r:.3e}  relative {:.3e}  order {order:.2?}", r / dw);
        prev = Some(r);
    }
    Ok(())
}
