//! Multiplier-weighted energy and dissipation functionals.
//!
//! For `0 ≤ j ≤ s ≤ 3` the weighted unknowns are, with `w₁ = m₁⁻¹m₂⁻¹φ^{-1/4}`,
//! `w₂ = m₁⁻¹m₂⁻¹` and `⟨k,ξ⟩ = (1 + k² + ξ²)^{1/2}`:
//!
//! ```text
//! N_{j,s-j}   = w₁ ⟨k,ξ⟩^{s-j} p^{j/2}     N̂
//! U_{j,s-j}   = w₁ ⟨k,ξ⟩^{s-j} p^{(j-1)/2} D̂
//! W_{j,s-j}   = w₂ ⟨k,ξ⟩^{s-j} p^{j/2}     Ŵ
//! N_{j+1,s-j} = w₂ ⟨k,ξ⟩^{s-j} p^{(j+1)/2} N̂
//! D_{j,s-j}   = w₂ ⟨k,ξ⟩^{s-j} p^{j/2}     D̂
//! ```
//!
//! On the `k = 0` row every `(j, s-j)` entry is replaced by its `(0, s)` form
//! (`(1, s)` for `N_{j+1,s-j}`), so that zero modes carry no anisotropic
//! weight. `p^{-1/2}` at `(0, 0)` is taken to be zero.
//!
//! Integrals over `ξ` are `dξ`-weighted sums over the grid.

use ndarray::{Array2, Zip};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::PhysParams;
use crate::multipliers::{MultiplierEval, MultiplierParams};
use crate::spectral::{Grid, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyWeights {
    pub c: [f64; 4],
    pub delta1_t: f64,
    pub delta2_t: f64,
    /// Small parameters of the auxiliary functionals; recorded, not used in `E`/`D`.
    pub deltas: [f64; 6],
    pub c1: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            c: [1.0, 0.25, 0.0625, 0.015625],
            delta1_t: 0.1,
            delta2_t: 0.1,
            deltas: [0.05; 6],
            c1: 1.0,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .c
            .iter()
            .chain(&self.deltas)
            .chain([&self.delta1_t, &self.delta2_t, &self.c1]);
        if all.into_iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParams("energy weights must be positive".into()));
        }
        for j in 1..4 {
            if self.c[j] > self.c1 * self.c[j - 1] {
                return Err(Error::InvalidParams(format!(
                    "c_{j} = {} exceeds C1 c_{} = {}",
                    self.c[j],
                    j - 1,
                    self.c1 * self.c[j - 1]
                )));
            }
        }
        Ok(())
    }
}

/// Japanese bracket `⟨k,ξ⟩ = (1 + k² + ξ²)^{1/2}`.
pub fn bracket(k: i64, xi: f64) -> f64 {
    (1.0 + (k * k) as f64 + xi * xi).sqrt()
}

/// Weighted unknowns indexed by `(j, s)` with `0 ≤ j ≤ s ≤ 3`.
#[derive(Debug, Clone)]
pub struct WeightedUnknowns {
    pub grid: Grid,
    pub t: f64,
    /// `p(t, k, ξ)` per mode.
    pub p: Array2<f64>,
    pub n: Vec<Vec<Array2<C64>>>,
    pub u: Vec<Vec<Array2<C64>>>,
    pub w: Vec<Vec<Array2<C64>>>,
    pub n1: Vec<Vec<Array2<C64>>>,
    pub d: Vec<Vec<Array2<C64>>>,
}

impl WeightedUnknowns {
    /// Array for `(j, s)`; `s ≥ j` is required.
    fn idx(j: usize, s: usize) -> (usize, usize) {
        debug_assert!(j <= s && s <= 3);
        (j, s - j)
    }

    pub fn n_js(&self, j: usize, s: usize) -> &Array2<C64> {
        let (a, b) = Self::idx(j, s);
        &self.n[a][b]
    }

    pub fn u_js(&self, j: usize, s: usize) -> &Array2<C64> {
        let (a, b) = Self::idx(j, s);
        &self.u[a][b]
    }

    pub fn w_js(&self, j: usize, s: usize) -> &Array2<C64> {
        let (a, b) = Self::idx(j, s);
        &self.w[a][b]
    }

    pub fn n1_js(&self, j: usize, s: usize) -> &Array2<C64> {
        let (a, b) = Self::idx(j, s);
        &self.n1[a][b]
    }

    pub fn d_js(&self, j: usize, s: usize) -> &Array2<C64> {
        let (a, b) = Self::idx(j, s);
        &self.d[a][b]
    }
}

fn pow_half(p: f64, e: i32) -> f64 {
    // p^{e/2} with p^{negative} := 0 at p = 0
    if p == 0.0 {
        if e == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        p.powf(0.5 * e as f64)
    }
}

/// Build every weighted unknown from `(N, D, W)` at time `t`.
pub fn weighted_unknowns(
    n: &SpectralField,
    d: &SpectralField,
    w: &SpectralField,
    t: f64,
    mult: &MultiplierEval,
) -> Result<WeightedUnknowns> {
    let grid = n.grid;
    if d.grid != grid || w.grid != grid || mult.grid != grid {
        return Err(Error::GridMismatch);
    }
    if (mult.t - t).abs() > 1e-12 * t.abs().max(1.0) {
        return Err(Error::TimeMismatch {
            fields: t,
            multipliers: mult.t,
        });
    }
    let shape = grid.shape();
    let p = Array2::from_shape_fn(shape, |(ix, iy)| {
        crate::spectral::p_symbol(t, grid.k_at(ix), grid.xi_at(iy))
    });
    let w2 = Zip::from(&mult.m1)
        .and(&mult.m2)
        .map_collect(|a, b| 1.0 / (a * b));
    let w1 = Zip::from(&w2).and(&mult.phi).map_collect(|a, f| a * f.powf(-0.25));
    let br = Array2::from_shape_fn(shape, |(ix, iy)| bracket(grid.k_at(ix), grid.xi_at(iy)));

    // p exponent (in halves) is j + off; the k = 0 row uses j = 0
    let build = |j: usize, s: usize, wt: &Array2<f64>, off: i32, f: &SpectralField| {
        let mut out = Array2::<C64>::zeros(shape);
        Zip::indexed(&mut out).for_each(|(ix, iy), o| {
            let jj = if grid.k_at(ix) == 0 { 0 } else { j };
            let pj = pow_half(p[[ix, iy]], jj as i32 + off);
            *o = f.coeffs[[ix, iy]] * wt[[ix, iy]] * br[[ix, iy]].powi((s - jj) as i32) * pj;
        });
        out
    };
    let mut nn = Vec::new();
    let mut uu = Vec::new();
    let mut ww = Vec::new();
    let mut n1 = Vec::new();
    let mut dd = Vec::new();
    for j in 0..=3usize {
        let (mut a, mut b, mut c, mut e, mut g) = (vec![], vec![], vec![], vec![], vec![]);
        for s in j..=3usize {
            a.push(build(j, s, &w1, 0, n));
            b.push(build(j, s, &w1, -1, d));
            c.push(build(j, s, &w2, 0, w));
            e.push(build(j, s, &w2, 1, n));
            g.push(build(j, s, &w2, 0, d));
        }
        nn.push(a);
        uu.push(b);
        ww.push(c);
        n1.push(e);
        dd.push(g);
    }
    Ok(WeightedUnknowns {
        grid,
        t,
        p,
        n: nn,
        u: uu,
        w: ww,
        n1,
        d: dd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ComL,
    In,
    Com,
}

/// `(E_{j,3-j}, D_{j,3-j})` of one functional family.
pub fn energy_family(
    which: Family,
    j: usize,
    wu: &WeightedUnknowns,
    phys: &PhysParams,
    mult: &MultiplierParams,
) -> (f64, f64) {
    assert!(j <= 3, "j must lie in 0..=3");
    let grid = wu.grid;
    let dxi = grid.dxi();
    let mu = phys.mu;
    let mu13 = mu.cbrt();
    let mut e = 0.0;
    let mut dsum = 0.0;
    for s in j..=3 {
        let fields: Vec<&Array2<C64>> = match which {
            Family::ComL => vec![wu.n_js(j, s), wu.u_js(j, s)],
            Family::In => vec![wu.w_js(j, s)],
            Family::Com => vec![wu.n1_js(j, s), wu.d_js(j, s)],
        };
        // the field multiplied by μ p in the dissipation
        let visc = match which {
            Family::ComL => wu.u_js(j, s),
            Family::In => wu.w_js(j, s),
            Family::Com => wu.d_js(j, s),
        };
        for ((ix, iy), p) in wu.p.indexed_iter() {
            let k = grid.k_at(ix);
            let sq: f64 = fields.iter().map(|f| f[[ix, iy]].norm_sqr()).sum();
            e += sq;
            dsum += mu * p * visc[[ix, iy]].norm_sqr();
            if k != 0 {
                dsum += (mu13 + mult.a * (k * k) as f64 / p) * sq;
            } else if s > j && which != Family::In {
                let zero_field = match which {
                    Family::ComL => wu.n_js(j, s),
                    _ => wu.n1_js(j, s),
                };
                dsum += (3 - j) as f64 * mu * zero_field[[ix, iy]].norm_sqr();
            }
        }
    }
    (e * dxi, dsum * dxi)
}

/// Composite `(E, D)`.
pub fn total_energy(
    wu: &WeightedUnknowns,
    phys: &PhysParams,
    mult: &MultiplierParams,
    weights: &EnergyWeights,
) -> (f64, f64) {
    let rows = family_table(wu, phys, mult);
    combine(&rows, phys.mu, weights)
}

/// All twelve family values, indexed `[family][j]` as `(E, D)`.
pub fn family_table(
    wu: &WeightedUnknowns,
    phys: &PhysParams,
    mult: &MultiplierParams,
) -> [[(f64, f64); 4]; 3] {
    let mut out = [[(0.0, 0.0); 4]; 3];
    for (fi, fam) in [Family::ComL, Family::In, Family::Com].into_iter().enumerate() {
        for (j, slot) in out[fi].iter_mut().enumerate() {
            *slot = energy_family(fam, j, wu, phys, mult);
        }
    }
    out
}

fn combine(rows: &[[(f64, f64); 4]; 3], mu: f64, w: &EnergyWeights) -> (f64, f64) {
    let mut e = 0.0;
    let mut d = 0.0;
    let m53 = mu.powf(5.0 / 3.0);
    for j in 0..4 {
        let cj = w.c[j] * mu.powf(2.0 * j as f64 / 3.0);
        e += cj * (rows[0][j].0 + w.delta1_t * rows[1][j].0 + w.delta2_t * m53 * rows[2][j].0);
        d += cj * (rows[0][j].1 + w.delta1_t * rows[1][j].1 + w.delta2_t * m53 * rows[2][j].1);
    }
    (e, d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub t: f64,
    pub e_com_l: [f64; 4],
    pub d_com_l: [f64; 4],
    pub e_in: [f64; 4],
    pub d_in: [f64; 4],
    pub e_com: [f64; 4],
    pub d_com: [f64; 4],
    pub e_total: f64,
    pub d_total: f64,
    /// `∫₀ᵗ D` by the trapezoid rule on the sample times.
    pub d_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub weights: EnergyWeights,
    pub multipliers: MultiplierParams,
    pub rows: Vec<EnergyRow>,
}

impl EnergyReport {
    pub fn new(weights: EnergyWeights, multipliers: MultiplierParams) -> Self {
        EnergyReport {
            weights,
            multipliers,
            rows: Vec::new(),
        }
    }

    /// Evaluate every functional on `(N, D, W)` at `t` and append a row.
    pub fn push(
        &mut self,
        n: &SpectralField,
        d: &SpectralField,
        w: &SpectralField,
        t: f64,
        phys: &PhysParams,
    ) -> Result<&EnergyRow> {
        let mult = MultiplierEval::on_grid(t, &n.grid, &self.multipliers);
        let wu = weighted_unknowns(n, d, w, t, &mult)?;
        let table = family_table(&wu, phys, &self.multipliers);
        let (e_total, d_total) = combine(&table, phys.mu, &self.weights);
        let d_integral = match self.rows.last() {
            Some(prev) => prev.d_integral + 0.5 * (t - prev.t) * (prev.d_total + d_total),
            None => 0.0,
        };
        let pick = |f: usize, e: bool| {
            let mut a = [0.0; 4];
            for j in 0..4 {
                a[j] = if e { table[f][j].0 } else { table[f][j].1 };
            }
            a
        };
        self.rows.push(EnergyRow {
            t,
            e_com_l: pick(0, true),
            d_com_l: pick(0, false),
            e_in: pick(1, true),
            d_in: pick(1, false),
            e_com: pick(2, true),
            d_com: pick(2, false),
            e_total,
            d_total,
            d_integral,
        });
        Ok(self.rows.last().expect("row just pushed"))
    }

    pub fn csv_header() -> String {
        let mut cols = vec!["t".to_string()];
        for fam in ["com_l", "in", "com"] {
            for kind in ["E", "D"] {
                for j in 0..4 {
                    cols.push(format!("{kind}_{fam}_{j}"));
                }
            }
        }
        cols.extend(["E", "D", "int_D"].map(String::from));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header();
        out.push('\n');
        for r in &self.rows {
            let mut vals = vec![r.t];
            for (e, d) in [(&r.e_com_l, &r.d_com_l), (&r.e_in, &r.d_in), (&r.e_com, &r.d_com)] {
                vals.extend_from_slice(e);
                vals.extend_from_slice(d);
            }
            vals.extend([r.e_total, r.d_total, r.d_integral]);
            let line: Vec<String> = vals.iter().map(|v| format!("{v:.12e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn sup_energy(&self) -> f64 {
        self.rows.iter().map(|r| r.e_total).fold(0.0, f64::max)
    }
}

/// `(‖P₀∂_y N‖, ‖P₀D‖, ‖P₀∂_y Ω‖)` over the `k = 0` row, spectral L² norms.
pub fn zero_mode_norms(n: &SpectralField, d: &SpectralField, omega: &SpectralField) -> (f64, f64, f64) {
    let grid = n.grid;
    let dxi = grid.dxi();
    let row = grid.ix_of(0).expect("k = 0 row");
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = 0.0;
    for iy in 0..grid.my() {
        let xi = grid.xi_at(iy);
        a += xi * xi * n.coeffs[[row, iy]].norm_sqr();
        b += d.coeffs[[row, iy]].norm_sqr();
        c += xi * xi * omega.coeffs[[row, iy]].norm_sqr();
    }
    ((a * dxi).sqrt(), (b * dxi).sqrt(), (c * dxi).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FieldLabel;
    use proptest::prelude::*;

    fn setup() -> (Grid, PhysParams, MultiplierParams) {
        let g = Grid::new(4, 16, 8.0).unwrap();
        let phys = PhysParams::new(1e-2, 5e-3, 1.4).unwrap();
        let mp = MultiplierParams::with_nu(phys.nu);
        (g, phys, mp)
    }

    fn random_field(g: Grid, label: FieldLabel, seed: u64) -> SpectralField {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        SpectralField::from_fn(g, label, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn zero_fields_give_zero() {
        let (g, phys, mp) = setup();
        let z = SpectralField::zeros(g, FieldLabel::N);
        let mult = MultiplierEval::on_grid(1.0, &g, &mp);
        let wu = weighted_unknowns(&z, &z, &z, 1.0, &mult).unwrap();
        for fam in [Family::ComL, Family::In, Family::Com] {
            for j in 0..4 {
                assert_eq!(energy_family(fam, j, &wu, &phys, &mp), (0.0, 0.0));
            }
        }
        assert_eq!(total_energy(&wu, &phys, &mp, &EnergyWeights::default()), (0.0, 0.0));
    }

    #[test]
    fn initial_weights_are_brackets() {
        let (g, _, mp) = setup();
        let n = random_field(g, FieldLabel::N, 1);
        let mult = MultiplierEval::on_grid(0.0, &g, &mp);
        let wu = weighted_unknowns(&n, &n, &n, 0.0, &mult).unwrap();
        for s in 0..=3 {
            for mode in g.modes() {
                let expect = n.coeffs[[mode.ix, mode.iy]] * bracket(mode.k, mode.xi).powi(s as i32);
                assert!((wu.n_js(0, s)[[mode.ix, mode.iy]] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn u_example() {
        let (g, _, mp) = setup();
        let mut d = SpectralField::zeros(g, FieldLabel::D);
        d.set(1, 0, C64::new(1.0, 0.0)).unwrap();
        let z = SpectralField::zeros(g, FieldLabel::N);
        let mult = MultiplierEval::on_grid(0.0, &g, &mp);
        let wu = weighted_unknowns(&z, &d, &z, 0.0, &mult).unwrap();
        let ix = g.ix_of(1).unwrap();
        assert!((wu.u_js(1, 1)[[ix, 0]] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn e_in_single_mode() {
        let (g, phys, mp) = setup();
        let mut w = SpectralField::zeros(g, FieldLabel::W);
        w.set(1, 0, C64::new(1.0, 0.0)).unwrap();
        let z = SpectralField::zeros(g, FieldLabel::N);
        let mult = MultiplierEval::on_grid(0.0, &g, &mp);
        let wu = weighted_unknowns(&z, &z, &w, 0.0, &mult).unwrap();
        let (e, _) = energy_family(Family::In, 0, &wu, &phys, &mp);
        assert!((e - 15.0 * g.dxi()).abs() < 1e-12);
    }

    #[test]
    fn zero_mode_dissipation_term() {
        let (g, phys, mp) = setup();
        let mut n = SpectralField::zeros(g, FieldLabel::N);
        n.set(0, 2, C64::new(0.7, -0.1)).unwrap();
        let z = SpectralField::zeros(g, FieldLabel::D);
        let t = 2.0;
        let mult = MultiplierEval::on_grid(t, &g, &mp);
        let wu = weighted_unknowns(&n, &z, &z, t, &mult).unwrap();
        let (_, dval) = energy_family(Family::ComL, 0, &wu, &phys, &mp);
        let iy = g.iy_of(2).unwrap();
        let expect: f64 = (1..=3)
            .map(|s| wu.n_js(0, s)[[0, iy]].norm_sqr())
            .sum::<f64>()
            * 3.0
            * phys.mu
            * g.dxi();
        assert!((dval - expect).abs() <= 1e-14 * expect.max(1e-300));
    }

    #[test]
    fn zero_mode_collapse() {
        let (g, _, mp) = setup();
        let n = random_field(g, FieldLabel::N, 2);
        let d = random_field(g, FieldLabel::D, 3);
        let w = random_field(g, FieldLabel::W, 4);
        let t = 3.7;
        let mult = MultiplierEval::on_grid(t, &g, &mp);
        let wu = weighted_unknowns(&n, &d, &w, t, &mult).unwrap();
        for j in 0..=3 {
            for s in j..=3 {
                for iy in 0..g.my() {
                    assert_eq!(wu.n_js(j, s)[[0, iy]], wu.n_js(0, s)[[0, iy]]);
                    assert_eq!(wu.u_js(j, s)[[0, iy]], wu.u_js(0, s)[[0, iy]]);
                    assert_eq!(wu.w_js(j, s)[[0, iy]], wu.w_js(0, s)[[0, iy]]);
                    assert_eq!(wu.n1_js(j, s)[[0, iy]], wu.n1_js(0, s)[[0, iy]]);
                    assert_eq!(wu.d_js(j, s)[[0, iy]], wu.d_js(0, s)[[0, iy]]);
                    // (1, s) form of N_{j+1}: |ξ| ⟨0,ξ⟩^s N̂
                    let xi = g.xi_at(iy);
                    let expect = n.coeffs[[0, iy]] * xi.abs() * bracket(0, xi).powi(s as i32);
                    assert!((wu.n1_js(j, s)[[0, iy]] - expect).norm() < 1e-12 * expect.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn time_mismatch_rejected() {
        let (g, _, mp) = setup();
        let z = SpectralField::zeros(g, FieldLabel::N);
        let mult = MultiplierEval::on_grid(1.0, &g, &mp);
        assert!(matches!(
            weighted_unknowns(&z, &z, &z, 2.0, &mult),
            Err(Error::TimeMismatch { .. })
        ));
    }

    #[test]
    fn single_term_total() {
        let (g, phys, mp) = setup();
        let mut n = SpectralField::zeros(g, FieldLabel::N);
        n.set(0, 0, C64::new(1.0, 0.0)).unwrap();
        let z = SpectralField::zeros(g, FieldLabel::D);
        let mult = MultiplierEval::on_grid(0.0, &g, &mp);
        let wu = weighted_unknowns(&n, &z, &z, 0.0, &mult).unwrap();
        // only com,l and com carry N; com vanishes at (0,0) since p = 0
        let w = EnergyWeights::default();
        let (e, _) = total_energy(&wu, &phys, &mp, &w);
        let e0 = energy_family(Family::ComL, 0, &wu, &phys, &mp).0;
        let rest: f64 = (1..4)
            .map(|j| w.c[j] * phys.mu.powf(2.0 * j as f64 / 3.0) * energy_family(Family::ComL, j, &wu, &phys, &mp).0)
            .sum();
        assert!((e - (w.c[0] * e0 + rest)).abs() < 1e-14);
    }

    #[test]
    fn additivity_at_unit_weights() {
        let (g, _, mp) = setup();
        let phys = PhysParams::new(1.0, -1.0, 1.4).unwrap();
        let n = random_field(g, FieldLabel::N, 5);
        let d = random_field(g, FieldLabel::D, 6);
        let w = random_field(g, FieldLabel::W, 7);
        let mult = MultiplierEval::on_grid(0.5, &g, &mp);
        let wu = weighted_unknowns(&n, &d, &w, 0.5, &mult).unwrap();
        let weights = EnergyWeights {
            c: [1.0, 0.0, 0.0, 0.0],
            delta1_t: 1.0,
            delta2_t: 1.0,
            ..Default::default()
        };
        let (e, _) = total_energy(&wu, &phys, &mp, &weights);
        let sum: f64 = [Family::ComL, Family::In, Family::Com]
            .iter()
            .map(|f| energy_family(*f, 0, &wu, &phys, &mp).0)
            .sum();
        assert!((e - sum).abs() < 1e-12 * sum);
    }

    #[test]
    fn zero_mode_norm_examples() {
        let g = Grid::new(3, 16, 10.0).unwrap();
        let z = SpectralField::zeros(g, FieldLabel::N);
        assert_eq!(zero_mode_norms(&z, &z, &z), (0.0, 0.0, 0.0));
        let mut n = z.clone();
        n.set(0, 3, C64::new(1.0, 0.0)).unwrap();
        let xi0 = 3.0 * g.dxi();
        let (a, _, _) = zero_mode_norms(&n, &z, &z);
        assert!((a - xi0 * g.dxi().sqrt()).abs() < 1e-14);
        let mut x = z.clone();
        x.set(2, 1, C64::new(1.0, 0.0)).unwrap();
        x.set(-1, 0, C64::new(1.0, 0.0)).unwrap();
        assert_eq!(zero_mode_norms(&x, &x, &x), (0.0, 0.0, 0.0));
    }

    #[test]
    fn report_csv_shape() {
        let (g, phys, mp) = setup();
        let n = random_field(g, FieldLabel::N, 8);
        let mut rep = EnergyReport::new(EnergyWeights::default(), mp);
        rep.push(&n, &n, &n, 0.0, &phys).unwrap();
        rep.push(&n, &n, &n, 1.0, &phys).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        let ncol = lines[0].split(',').count();
        assert_eq!(ncol, 1 + 24 + 3);
        assert!(lines.iter().all(|l| l.split(',').count() == ncol));
        assert!(rep.rows[1].d_integral > 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(EnergyWeights::default().validate().is_ok());
        let mut w = EnergyWeights::default();
        w.c[2] = 1.0;
        assert!(w.validate().is_err());
        let mut w = EnergyWeights::default();
        w.delta1_t = 0.0;
        assert!(w.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nonnegative_and_quadratic(seed in 0u64..1000, t in 0.0f64..40.0, lambda in 0.1f64..10.0) {
            let (g, phys, mp) = setup();
            let n = random_field(g, FieldLabel::N, seed);
            let d = random_field(g, FieldLabel::D, seed + 1);
            let w = random_field(g, FieldLabel::W, seed + 2);
            let mult = MultiplierEval::on_grid(t, &g, &mp);
            let wu = weighted_unknowns(&n, &d, &w, t, &mult).unwrap();
            let weights = EnergyWeights::default();
            let (e, dd) = total_energy(&wu, &phys, &mp, &weights);
            for fam in [Family::ComL, Family::In, Family::Com] {
                for j in 0..4 {
                    let (a, b) = energy_family(fam, j, &wu, &phys, &mp);
                    prop_assert!(a >= 0.0 && b >= 0.0);
                }
            }
            let wu2 = weighted_unknowns(&n.scaled(lambda), &d.scaled(lambda), &w.scaled(lambda), t, &mult).unwrap();
            let (e2, d2) = total_energy(&wu2, &phys, &mp, &weights);
            prop_assert!((e2 - lambda * lambda * e).abs() <= 1e-12 * e2.max(1e-300));
            prop_assert!((d2 - lambda * lambda * dd).abs() <= 1e-12 * d2.max(1e-300));
        }

        #[test]
        fn weights_equivalent_to_sobolev(seed in 0u64..1000, t in 0.0f64..60.0) {
            let (g, _, mp) = setup();
            let n = random_field(g, FieldLabel::N, seed);
            let mult = MultiplierEval::on_grid(t, &g, &mp);
            let wu = weighted_unknowns(&n, &n, &n, t, &mult).unwrap();
            let bound = (2.0 * std::f64::consts::PI).exp() * (mp.a * std::f64::consts::PI).exp()
                * mp.phi_bound().powf(0.25);
            for mode in g.modes() {
                let raw = n.coeffs[[mode.ix, mode.iy]].norm() * bracket(mode.k, mode.xi).powi(3);
                let weighted = wu.n_js(0, 3)[[mode.ix, mode.iy]].norm();
                prop_assert!(weighted <= raw * (1.0 + 1e-12));
                prop_assert!(weighted * bound >= raw * (1.0 - 1e-12));
            }
        }
    }
}
