//! Residual of the good-unknown equation evaluated on a sampled trajectory.
//!
//! The primitive solver never evolves `W` directly, so plugging its output
//! into the `W` equation checks the two formulations against each other.
//! `∂ₜW` is taken by central differences of the extracted `W`; every other
//! term is evaluated spectrally at the sample time.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinear::{extract_ndw, SimState};
use crate::spectral::{FieldLabel, Grid, SpectralField, Transformer};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualOptions {
    /// Include the nonlinear forcing; switching it off is an ablation hook.
    pub include_f3: bool,
    pub dealias: bool,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        ResidualOptions {
            include_f3: true,
            dealias: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub t: f64,
    /// Spectral L² norm of the residual.
    pub residual: f64,
    pub dt_w: f64,
    pub f3: f64,
}

struct Ops<'a> {
    grid: Grid,
    t: f64,
    tr: &'a Transformer,
    dealias: bool,
}

impl Ops<'_> {
    fn sym(&self, x: &Array2<C64>, f: impl Fn(f64, f64) -> C64) -> Array2<C64> {
        let g = self.grid;
        let t = self.t;
        let mut out = x.clone();
        for ((ix, iy), c) in out.indexed_iter_mut() {
            let k = g.k_at(ix) as f64;
            *c *= f(k, g.xi_at(iy) - k * t);
        }
        out
    }

    fn dx(&self, x: &Array2<C64>) -> Array2<C64> {
        self.sym(x, |k, _| I * k)
    }

    fn dy(&self, x: &Array2<C64>) -> Array2<C64> {
        self.sym(x, |_, eta| I * eta)
    }

    fn phys(&self, x: &Array2<C64>) -> Array2<f64> {
        self.tr.inverse_real(x)
    }

    fn spec(&self, x: &Array2<f64>) -> Array2<C64> {
        let mut c = self.tr.forward_real(x);
        if self.dealias {
            let g = self.grid;
            for ((ix, iy), v) in c.indexed_iter_mut() {
                if !g.retained(ix, iy) {
                    *v = C64::new(0.0, 0.0);
                }
            }
        }
        c
    }
}

/// Nonlinear forcing of the good-unknown equation at one state.
fn forcing(state: &SimState, tr: &Transformer, dealias: bool) -> Array2<C64> {
    let grid = state.grid();
    let t = state.t;
    let p = state.params;
    let ops = Ops { grid, t, tr, dealias };
    let ndw = extract_ndw(state);
    let (d, om, w) = (&ndw.d.coeffs, &ndw.omega.coeffs, &ndw.w.coeffs);

    let v1 = ops.phys(&state.v1.coeffs);
    let v2 = ops.phys(&state.v2.coeffs);
    let n = ops.phys(&state.n.coeffs);
    let dp = ops.phys(d);
    let wp = ops.phys(w);
    let wx = ops.phys(&ops.dx(w));
    let wy = ops.phys(&ops.dy(w));
    let v1x = ops.phys(&ops.dx(&state.v1.coeffs));
    let v1y = ops.phys(&ops.dy(&state.v1.coeffs));
    let v2x = ops.phys(&ops.dx(&state.v2.coeffs));
    let v2y = ops.phys(&ops.dy(&state.v2.coeffs));
    let nx = ops.phys(&ops.dx(&state.n.coeffs));
    let ny = ops.phys(&ops.dy(&state.n.coeffs));
    // L = ν∇̃D + μ∇̃⊥Ω
    let l1 = ops.phys(&(&ops.dx(d).mapv(|c| c * p.nu) - &ops.dy(om).mapv(|c| c * p.mu)));
    let l2 = ops.phys(&(&ops.dy(d).mapv(|c| c * p.nu) + &ops.dx(om).mapv(|c| c * p.mu)));

    let f_raw = n.mapv(|x| (1.0 + x).powf(p.gamma - 2.0) - 1.0);
    let g_raw = n.mapv(|x| x / (1.0 + x));
    let (f, g) = if dealias {
        (ops.phys(&ops.spec(&f_raw)), ops.phys(&ops.spec(&g_raw)))
    } else {
        (f_raw, g_raw)
    };

    // −V·∇̃W − D(W + μD) + μ[(∂₁V¹)² + (∂̃₂V²)² + 2∂̃₂V¹∂₁V²]
    let mut local = Array2::<f64>::zeros(n.dim());
    for (idx, o) in local.indexed_iter_mut() {
        let quad = v1x[idx].powi(2) + v2y[idx].powi(2) + 2.0 * v1y[idx] * v2x[idx];
        *o = -(v1[idx] * wx[idx] + v2[idx] * wy[idx]) - dp[idx] * (wp[idx] + p.mu * dp[idx]) + p.mu * quad;
    }
    let fn1 = &f * &nx;
    let fn2 = &f * &ny;
    let gl1 = &g * &l1;
    let gl2 = &g * &l2;

    let local = ops.spec(&local);
    let (fn1, fn2) = (ops.spec(&fn1), ops.spec(&fn2));
    let (gl1, gl2) = (ops.spec(&gl1), ops.spec(&gl2));
    // μ diṽ(f∇̃N + gL) − ∇̃⊥·(gL)
    let div_part = &ops.dx(&(&fn1 + &gl1)) + &ops.dy(&(&fn2 + &gl2));
    let perp_div = &ops.dx(&gl2) - &ops.dy(&gl1);
    &local + &div_part.mapv(|c| c * p.mu) - perp_div
}

/// Linear part `μΔ̃W − μ(μ+μ')Δ̃D + 2μ∂₁∂̃₂Δ̃⁻¹D + 2μ∂₁²Δ̃⁻¹(W − N + μD)`.
fn linear_part(state: &SimState) -> Array2<C64> {
    let grid = state.grid();
    let t = state.t;
    let p = state.params;
    let lam = p.mu + p.mu_prime;
    let ndw = extract_ndw(state);
    let mut out = Array2::<C64>::zeros(grid.shape());
    for ((ix, iy), o) in out.indexed_iter_mut() {
        let k = grid.k_at(ix) as f64;
        let eta = grid.xi_at(iy) - k * t;
        let pp = k * k + eta * eta;
        let (n, d, w) = (ndw.n.coeffs[[ix, iy]], ndw.d.coeffs[[ix, iy]], ndw.w.coeffs[[ix, iy]]);
        let mut v = -p.mu * pp * w + p.mu * lam * pp * d;
        if pp > 0.0 {
            v += 2.0 * p.mu * (k * eta / pp) * d + 2.0 * p.mu * (k * k / pp) * (w - n + p.mu * d);
        }
        *o = v;
    }
    out
}

fn norm(grid: &Grid, x: &Array2<C64>) -> f64 {
    (grid.dxi() * x.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
}

/// Residual at every interior sample of `states` (at least three, increasing
/// in time, not necessarily uniform).
pub fn w_equation_residual(states: &[SimState], opts: &ResidualOptions) -> Result<Vec<ResidualSample>> {
    if states.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: states.len(),
        });
    }
    let grid = states[0].grid();
    for s in states {
        s.check()?;
        if s.grid() != grid {
            return Err(Error::GridMismatch);
        }
    }
    let tr = Transformer::new(grid);
    let ws: Vec<Array2<C64>> = states.iter().map(|s| extract_ndw(s).w.coeffs).collect();
    let mut out = Vec::with_capacity(states.len() - 2);
    for i in 1..states.len() - 1 {
        let (t0, t1, t2) = (states[i - 1].t, states[i].t, states[i + 1].t);
        let (h0, h1) = (t1 - t0, t2 - t1);
        if !(h0 > 0.0 && h1 > 0.0) {
            return Err(Error::InvalidParams("sample times must increase".into()));
        }
        // second-order derivative on a possibly uneven stencil
        let c0 = -h1 / (h0 * (h0 + h1));
        let c1 = (h1 - h0) / (h0 * h1);
        let c2 = h0 / (h1 * (h0 + h1));
        let dtw = &ws[i - 1].mapv(|c| c * c0) + &ws[i].mapv(|c| c * c1) + &ws[i + 1].mapv(|c| c * c2);
        let lin = linear_part(&states[i]);
        let f3 = if opts.include_f3 {
            forcing(&states[i], &tr, opts.dealias)
        } else {
            Array2::zeros(grid.shape())
        };
        let res = &(&dtw - &lin) - &f3;
        out.push(ResidualSample {
            t: t1,
            residual: norm(&grid, &res),
            dt_w: norm(&grid, &dtw),
            f3: norm(&grid, &f3),
        });
    }
    Ok(out)
}

/// Forcing field alone, for inspection.
pub fn w_forcing(state: &SimState, opts: &ResidualOptions) -> SpectralField {
    let tr = Transformer::new(state.grid());
    SpectralField {
        grid: state.grid(),
        label: FieldLabel::Other,
        coeffs: forcing(state, &tr, opts.dealias),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::PhysParams;
    use crate::nonlinear::{run_simulation, DiagnosticsConfig, StepperConfig};

    fn trajectory(amp: f64, out_dt: f64) -> Vec<SimState> {
        let g = Grid::new(4, 32, 12.0).unwrap();
        let params = PhysParams::new(2e-2, 1e-2, 1.4).unwrap();
        let mut s = SimState::zeros(g, params);
        let env = |xi: f64| C64::from_polar((-0.5 * xi * xi).exp(), -6.0 * xi);
        s.n = SpectralField::from_fn(g, FieldLabel::N, |k, xi| match k {
            0 => amp * env(xi),
            1 | -1 => 0.5 * amp * env(xi),
            _ => C64::new(0.0, 0.0),
        });
        s.v2 = SpectralField::from_fn(g, FieldLabel::V2, |k, xi| match k {
            1 => amp * C64::new(0.3, 0.2) * env(xi),
            -1 => amp * C64::new(0.3, -0.2) * env(xi),
            _ => C64::new(0.0, 0.0),
        });
        let cfg = StepperConfig {
            t_end: 1.0,
            output_dt: out_dt,
            dt_max: out_dt.min(0.02),
            retire_rel: 0.0,
            ..Default::default()
        };
        let diag = DiagnosticsConfig {
            energy: false,
            keep_states: true,
            ..Default::default()
        };
        let res = run_simulation(&s, &cfg, &diag).unwrap();
        assert!(res.completed());
        res.states
    }

    #[test]
    fn zero_trajectory_has_zero_residual() {
        let g = Grid::new(2, 8, 6.0).unwrap();
        let params = PhysParams::new(1e-2, 0.0, 1.4).unwrap();
        let states: Vec<SimState> = (0..4)
            .map(|i| {
                let mut s = SimState::zeros(g, params);
                s.t = i as f64 * 0.1;
                s
            })
            .collect();
        let r = w_equation_residual(&states, &ResidualOptions::default()).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|x| x.residual == 0.0));
    }

    #[test]
    fn too_few_samples() {
        let g = Grid::new(2, 8, 6.0).unwrap();
        let s = SimState::zeros(g, PhysParams::new(1e-2, 0.0, 1.4).unwrap());
        assert!(w_equation_residual(&[s.clone(), s], &ResidualOptions::default()).is_err());
    }

    fn max_at(samples: &[ResidualSample], t: f64) -> ResidualSample {
        *samples.iter().find(|s| (s.t - t).abs() < 1e-9).expect("sample at t")
    }

    #[test]
    fn residual_converges_at_second_order() {
        let amp = 0.05;
        let coarse = w_equation_residual(&trajectory(amp, 0.1), &ResidualOptions::default()).unwrap();
        let fine = w_equation_residual(&trajectory(amp, 0.05), &ResidualOptions::default()).unwrap();
        let a = max_at(&coarse, 0.5);
        let b = max_at(&fine, 0.5);
        let order = (a.residual / b.residual).log2();
        assert!(order > 1.8, "order {order}: {a:?} {b:?}");
        let off = w_equation_residual(
            &trajectory(amp, 0.05),
            &ResidualOptions {
                include_f3: false,
                ..Default::default()
            },
        )
        .unwrap();
        let c = max_at(&off, 0.5);
        assert!(c.residual > 10.0 * b.residual, "{c:?} {b:?}");
    }
}
