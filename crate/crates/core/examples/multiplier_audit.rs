//! Check the multiplier inequalities on a dense (t, k, ξ) sample set.

use stablab::multipliers::{audit_inequalities, default_audit_samples, MultiplierParams};

fn main() -> stablab::Result<()> {
    for nu in [1.0, 1e-2, 1e-4] {
        let params = MultiplierParams::with_nu(nu);
        let t_max = 3.0 * params.window();
        let samples = default_audit_samples(&params, 4, t_max, 80, 300);
        let report = audit_inequalities(&samples, &params)?;
        println!("nu={nu:.0e}  samples={}  all_pass={}", report.samples, report.all_pass);
        for c in &report.checks {
            println!("  {:<24} min slack {:+.3e}  violations {}", c.name, c.min_slack, c.violations);
        }
        let r = &report.phi_upper_reference;
        println!("  {:<24} min slack {:+.3e}  (reference)", r.name, r.min_slack);
    }
    Ok(())
}
