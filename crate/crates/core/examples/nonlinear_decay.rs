//! Small-data nonlinear run: zero-mode power-law decay and energy bound.

use stablab::fit::{fit_decay, DecayModel};
use stablab::initdata::{generate, InitSpec};
use stablab::linear::PhysParams;
use stablab::nonlinear::{run_simulation, DiagnosticsConfig, StepperConfig};
use stablab::spectral::Grid;

fn main() -> stablab::Result<()> {
    let mu = 1e-2;
    let grid = Grid::new(16, 128, 64.0)?;
    let params = PhysParams::new(mu, 0.5 * mu, 1.4)?;
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let init = generate(grid, params, &InitSpec { amplitude: 1e-4 * mu, seed, ..Default::default() })?;
    let cfg = StepperConfig {
        t_end: 20.0 / mu,
        output_dt: 10.0,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let res = run_simulation(&init, &cfg, &DiagnosticsConfig::default())?;
    println!("outcome {:?} after {} steps in {:.1?}", res.outcome, res.steps, start.elapsed());

    let series: Vec<(f64, f64)> = res.series.iter().map(|r| (r.t, r.zero_mode_norm())).collect();
    let fit = fit_decay(&series, DecayModel::Power { a: Some(mu), sigma: None }, None)?;
    println!("zero-mode exponent {:.3} (R² {:.3})", fit.sigma, fit.r2);

    let e0 = res.energy.rows[0].e_total;
    let last = res.energy.rows.last().expect("energy rows");
    println!("sup E / E(0) = {:.3}", res.energy.sup_energy() / e0);
    println!("∫D / E(0) = {:.3e}", last.d_integral / e0);
    let m0 = res.series[0].mass;
    let drift = res.series.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max);
    println!("mass drift {:.2e} (area {:.1})", drift, grid.area());
    for r in res.series.iter().step_by(20) {
        println!("t {:7.1} zero {:.3e} nonzero N {:.3e} rows {:2} dt {:.3e} max|η| {:.1}", r.t, r.zero_mode_norm(), r.nonzero_n, r.active_rows, r.dt, r.max_eta);
    }
    Ok(())
}
