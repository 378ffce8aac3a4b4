//! Energy and dissipation functionals of a generated initial state.

use stablab::energy::{EnergyReport, EnergyWeights};
use stablab::initdata::{generate, DataFamily, InitSpec};
use stablab::linear::PhysParams;
use stablab::multipliers::MultiplierParams;
use stablab::nonlinear::extract_ndw;
use stablab::spectral::Grid;

fn main() -> stablab::Result<()> {
    let grid = Grid::new(8, 64, 32.0)?;
    let phys = PhysParams::new(1e-2, 5e-3, 1.4)?;
    let mut report = EnergyReport::new(EnergyWeights::default(), MultiplierParams::with_nu(phys.nu));
    for family in [DataFamily::Mixed, DataFamily::Density, DataFamily::Vortical] {
        let state = generate(grid, phys, &InitSpec { family, amplitude: 1e-3, width: 2.0, ..Default::default() })?;
        let ndw = extract_ndw(&state);
        let row = report.push(&ndw.n, &ndw.d, &ndw.w, state.t, &phys)?;
        println!("{family:?}: E = {:.4e}  D = {:.4e}", row.e_total, row.d_total);
        println!("  E^com,l {:?}", row.e_com_l.map(|v| format!("{v:.2e}")));
        println!("  E^in    {:?}", row.e_in.map(|v| format!("{v:.2e}")));
        println!("  E^com   {:?}", row.e_com.map(|v| format!("{v:.2e}")));
    }
    print!("{}", report.to_csv());
    Ok(())
}
