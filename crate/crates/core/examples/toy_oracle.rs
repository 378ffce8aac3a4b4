//! Generic adaptive integrator against the closed-form toy model.

use num_complex::Complex64 as C64;
use stablab::linear::{solve_toy, toy_exact};
use stablab::ode::Dopri5Options;

fn main() -> stablab::Result<()> {
    let rtol = 1e-8;
    let opts = Dopri5Options {
        rtol,
        atol: rtol * 1e-6,
        ..Default::default()
    };
    let d0 = C64::new(1.0, 0.5);
    for nu in [1e-1f64, 1e-3] {
        for k in 1..=3 {
            for ratio in [-5.0, 0.0, 5.0, 20.0] {
                let xi = ratio * k as f64;
                let t_end = 2.0 * (ratio + 5.0 / nu.cbrt());
                let times: Vec<f64> = (1..=200).map(|i| t_end * i as f64 / 200.0).collect();
                let num = solve_toy(k, xi, nu, d0, &times, &opts)?;
                let mut sup = d0.norm();
                let mut err = 0.0f64;
                for (t, y) in times.iter().zip(&num) {
                    let exact = toy_exact(*t, k, xi, nu, d0)?;
                    sup = sup.max(exact.norm());
                    err = err.max((y - exact).norm());
                }
                println!("nu={nu:.0e} k={k} xi={xi:6.1}  rel error {:.2e}", err / sup);
            }
        }
    }
    Ok(())
}
