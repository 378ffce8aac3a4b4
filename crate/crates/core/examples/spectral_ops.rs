//! Moving-frame derivatives and dealiased products on a small grid.

use num_complex::Complex64 as C64;
use stablab::spectral::{curl_tilde, dealiased_product, div_tilde, FieldLabel, Grid, SpectralField, Transformer};

fn main() -> stablab::Result<()> {
    let grid = Grid::new(8, 32, 16.0)?;
    let mut f = SpectralField::zeros(grid, FieldLabel::N);
    f.set(1, 2, C64::new(0.5, 0.0))?;
    f.set(-1, -2, C64::new(0.5, 0.0))?;
    let sq = dealiased_product(&f, &f)?;
    println!("|f|² norm {:.6e}, f² modes (2,4) {:.4e} (0,0) {:.4e}", f.norm(), sq.get(2, 4), sq.get(0, 0));

    let tr = Transformer::new(grid);
    let phys = tr.to_physical(&f);
    println!("sup f {:.4e}, reality defect {:.1e}", phys.iter().fold(0.0f64, |m, v| m.max(v.abs())), f.reality_defect());

    for t in [0.0, 1.0, 5.0] {
        let d = div_tilde(&f, &f, t)?;
        let c = curl_tilde(&f, &f, t)?;
        println!("t={t}: div {:.4e}  curl {:.4e}", d.norm(), c.norm());
    }
    Ok(())
}
