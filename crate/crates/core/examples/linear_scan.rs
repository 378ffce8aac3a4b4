//! Envelope scan of single-mode linear dynamics across viscosities.

use stablab::linear::{envelope_scan, loglog_slope, InitFamily, ScanConfig};

fn main() -> stablab::Result<()> {
    for family in [InitFamily::WOnly, InitFamily::NOnly, InitFamily::Equipartition] {
        let cfg = ScanConfig {
            family,
            ..Default::default()
        };
        let res = envelope_scan(&cfg)?;
        println!("family {}", family.name());
        for s in &res.summaries {
            println!(
                "  mu={:.0e}  amp_W={:.4}  amp_NU={:.4}  rate={:.5}  r2={:.4}  window=[{:.1}, {:.1}]",
                s.mu, s.amp_w, s.amp_nu, s.rate, s.fit_r2, s.fit_window.0, s.fit_window.1
            );
        }
        for w in res.summaries.windows(2) {
            println!("  rate ratio {:.3} (10^(1/3) = 2.154)", w[0].rate / w[1].rate);
        }
        let mus: Vec<f64> = res.summaries.iter().map(|s| s.mu).collect();
        let amps: Vec<f64> = res.summaries.iter().map(|s| s.amp_nu).collect();
        println!("  amplification slope {:.4}", loglog_slope(&mus, &amps));
    }
    Ok(())
}
