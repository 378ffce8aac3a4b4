//! Pseudospectral integration of the full perturbation system in the sheared
//! frame, in primitive variables `(N, V¹, V²)`.
//!
//! Time stepping is a Lawson (integrating-factor) RK4 scheme in rotated
//! velocity variables. With `e = (k, η)/√p` and `e⊥ = (-η, k)/√p`, write
//! `V̂ = a e + b e⊥`, so that `D̂ = i√p a` and `Ω̂ = i√p b`. The viscous terms
//! are then diagonal: `a` is damped by `exp(-ν∫p)` and `b` by `exp(-μ∫p)`,
//! both applied exactly. What remains explicit is the acoustic coupling
//! (frequency `√p`), the bounded rotation of the basis and the nonlinear terms.
//!
//! Rows `k ≠ 0` whose coefficients fall below a retirement threshold are
//! zeroed and left out of the step-size bound; they are re-admitted as soon as
//! nonlinear forcing lifts them above the threshold again.

use ndarray::{Array2, Zip};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::energy::{zero_mode_norms, EnergyReport, EnergyWeights};
use crate::error::{Error, Result};
use crate::linear::PhysParams;
use crate::multipliers::MultiplierParams;
use crate::spectral::{p_integral, FieldLabel, Grid, SpectralField, Transformer};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub n: SpectralField,
    pub v1: SpectralField,
    pub v2: SpectralField,
    pub params: PhysParams,
}

impl SimState {
    pub fn zeros(grid: Grid, params: PhysParams) -> Self {
        SimState {
            t: 0.0,
            n: SpectralField::zeros(grid, FieldLabel::N),
            v1: SpectralField::zeros(grid, FieldLabel::V1),
            v2: SpectralField::zeros(grid, FieldLabel::V2),
            params,
        }
    }

    pub fn grid(&self) -> Grid {
        self.n.grid
    }

    pub fn check(&self) -> Result<()> {
        let g = self.grid();
        if self.v1.grid != g || self.v2.grid != g {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Largest coefficient magnitude over the three fields.
    pub fn max_abs(&self) -> f64 {
        self.n.max_abs().max(self.v1.max_abs()).max(self.v2.max_abs())
    }

    pub fn is_finite(&self) -> bool {
        self.n.is_finite() && self.v1.is_finite() && self.v2.is_finite()
    }

    /// Largest violation of reality symmetry over the three fields.
    pub fn reality_defect(&self) -> f64 {
        self.n
            .reality_defect()
            .max(self.v1.reality_defect())
            .max(self.v2.reality_defect())
    }
}

/// Switches for isolating parts of the dynamics in tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TermSwitches {
    pub nonlinear: bool,
    /// Acoustic coupling, lift-up and basis rotation.
    pub explicit_linear: bool,
}

impl Default for TermSwitches {
    fn default() -> Self {
        TermSwitches {
            nonlinear: true,
            explicit_linear: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepperConfig {
    /// Upper bound on the first step.
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Fraction of the explicit stability bound used per step.
    pub safety: f64,
    pub output_dt: f64,
    pub t_end: f64,
    pub dealias: bool,
    /// Constant step, bypassing the adaptive bound (order studies).
    pub fixed_dt: Option<f64>,
    /// Row retirement threshold relative to the initial largest coefficient;
    /// zero disables retirement.
    pub retire_rel: f64,
    pub max_steps: usize,
    /// Admissible range of `1 + N`.
    pub density_min: f64,
    pub density_max: f64,
    pub switches: TermSwitches,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt_init: 0.05,
            dt_min: 1e-8,
            dt_max: 0.5,
            safety: 0.2,
            output_dt: 1.0,
            t_end: 10.0,
            dealias: true,
            fixed_dt: None,
            retire_rel: 1e-13,
            max_steps: 10_000_000,
            density_min: 0.5,
            density_max: 2.0,
            switches: TermSwitches::default(),
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.dt_init > 0.0 && self.dt_min > 0.0 && self.dt_max > 0.0) {
            return bad("time steps must be positive");
        }
        if !(self.dt_min < self.dt_init) {
            return bad("dt_min must be smaller than dt_init");
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad("safety must lie in (0, 1]");
        }
        if !(self.output_dt > 0.0 && self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("output cadence and end time must be positive and finite");
        }
        if let Some(h) = self.fixed_dt {
            if !(h > 0.0) {
                return bad("fixed_dt must be positive");
            }
        }
        if !(self.retire_rel >= 0.0) {
            return bad("retire_rel must be nonnegative");
        }
        if !(self.density_min < 1.0 && self.density_max > 1.0) {
            return bad("density bounds must bracket 1");
        }
        Ok(())
    }
}

/// `(N, D, Ω, W)` with `D = diṽ V`, `Ω = curl̃ V`, `W = Ω + N - μD`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ndw {
    pub n: SpectralField,
    pub d: SpectralField,
    pub omega: SpectralField,
    pub w: SpectralField,
}

pub fn extract_ndw(state: &SimState) -> Ndw {
    let grid = state.grid();
    let t = state.t;
    let mu = state.params.mu;
    let mut d = SpectralField::zeros(grid, FieldLabel::D);
    let mut omega = SpectralField::zeros(grid, FieldLabel::Omega);
    let mut w = SpectralField::zeros(grid, FieldLabel::W);
    for m in grid.modes() {
        let k = m.k as f64;
        let eta = m.xi - k * t;
        let (ix, iy) = (m.ix, m.iy);
        let a = state.v1.coeffs[[ix, iy]];
        let b = state.v2.coeffs[[ix, iy]];
        let dd = I * (k * a + eta * b);
        let om = I * (k * b - eta * a);
        d.coeffs[[ix, iy]] = dd;
        omega.coeffs[[ix, iy]] = om;
        w.coeffs[[ix, iy]] = om + state.n.coeffs[[ix, iy]] - mu * dd;
    }
    Ndw {
        n: state.n.clone(),
        d,
        omega,
        w,
    }
}

/// `∫∫ N dx1 dy1` over the periodic box.
pub fn mass_integral(state: &SimState) -> f64 {
    let g = state.grid();
    g.area() * g.dxi() * state.n.get(0, 0).re
}

/// Pointwise extremes gathered while evaluating the nonlinear terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointStats {
    pub rho_min: f64,
    pub rho_max: f64,
    pub f_max: f64,
    pub g_max: f64,
    pub v_max: f64,
}

impl Default for PointStats {
    fn default() -> Self {
        PointStats {
            rho_min: 1.0,
            rho_max: 1.0,
            f_max: 0.0,
            g_max: 0.0,
            v_max: 0.0,
        }
    }
}

struct Cartesian {
    n: Array2<C64>,
    v1: Array2<C64>,
    v2: Array2<C64>,
}

#[derive(Clone)]
struct Rot {
    n: Array2<C64>,
    a: Array2<C64>,
    b: Array2<C64>,
}

impl Rot {
    fn zeros(shape: (usize, usize)) -> Self {
        Rot {
            n: Array2::zeros(shape),
            a: Array2::zeros(shape),
            b: Array2::zeros(shape),
        }
    }

    fn axpy(&self, h: f64, k: &Rot) -> Rot {
        let f = |x: &Array2<C64>, y: &Array2<C64>| {
            Zip::from(x).and(y).map_collect(|&u, &v| u + h * v)
        };
        Rot {
            n: f(&self.n, &k.n),
            a: f(&self.a, &k.a),
            b: f(&self.b, &k.b),
        }
    }
}

/// Per-mode exact viscous factors over one interval.
struct Factors {
    a: Array2<f64>,
    b: Array2<f64>,
}

impl Factors {
    fn apply(&self, y: &Rot) -> Rot {
        Rot {
            n: y.n.clone(),
            a: Zip::from(&y.a).and(&self.a).map_collect(|&v, &f| v * f),
            b: Zip::from(&y.b).and(&self.b).map_collect(|&v, &f| v * f),
        }
    }
}

/// Reusable stepping machinery for one grid and parameter set.
pub struct Stepper {
    grid: Grid,
    params: PhysParams,
    cfg: StepperConfig,
    tr: Transformer,
    retire_abs: f64,
}

impl std::fmt::Debug for Stepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper")
            .field("grid", &self.grid)
            .field("params", &self.params)
            .field("cfg", &self.cfg)
            .finish()
    }
}

/// Diagnostics of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub stats: PointStats,
    pub active_rows: usize,
}

impl Stepper {
    pub fn new(grid: Grid, params: PhysParams, cfg: StepperConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Stepper {
            grid,
            params,
            cfg,
            tr: Transformer::new(grid),
            retire_abs: 0.0,
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// Fix the retirement threshold from the initial data.
    pub fn set_reference_amplitude(&mut self, amp: f64) {
        self.retire_abs = self.cfg.retire_rel * amp;
    }

    fn mask(&self, x: &mut Array2<C64>) {
        let g = self.grid;
        if self.cfg.dealias {
            Zip::indexed(x).for_each(|(ix, iy), c| {
                if !g.retained(ix, iy) {
                    *c = ZERO;
                }
            });
        } else {
            x.column_mut(g.my() / 2).fill(ZERO);
        }
    }

    fn to_phys(&self, x: &Array2<C64>) -> Array2<f64> {
        self.tr.inverse_real(x)
    }

    fn to_spec(&self, x: &Array2<f64>) -> Array2<C64> {
        let mut c = self.tr.forward_real(x);
        self.mask(&mut c);
        c
    }

    fn symbol_map(&self, x: &Array2<C64>, t: f64, f: impl Fn(f64, f64) -> C64) -> Array2<C64> {
        let g = self.grid;
        let mut out = x.clone();
        Zip::indexed(&mut out).for_each(|(ix, iy), c| {
            let k = g.k_at(ix) as f64;
            let eta = g.xi_at(iy) - k * t;
            *c *= f(k, eta);
        });
        out
    }

    /// Nonlinear terms `(F_N, F_V¹, F_V²)` in Cartesian form.
    fn nonlinear(&self, t: f64, s: &Cartesian) -> (Cartesian, PointStats) {
        let mu = self.params.mu;
        let lam = self.params.mu + self.params.mu_prime;
        let gamma = self.params.gamma;
        let dx = |x: &Array2<C64>| self.symbol_map(x, t, |k, _| I * k);
        let dy = |x: &Array2<C64>| self.symbol_map(x, t, |_, eta| I * eta);
        // μΔ̃V + (μ+μ')∇̃D
        let d = {
            let g = self.grid;
            let mut d = Array2::<C64>::zeros(g.shape());
            Zip::indexed(&mut d)
                .and(&s.v1)
                .and(&s.v2)
                .for_each(|(ix, iy), o, &a, &b| {
                    let k = g.k_at(ix) as f64;
                    let eta = g.xi_at(iy) - k * t;
                    *o = I * (k * a + eta * b);
                });
            d
        };
        let visc = |v: &Array2<C64>, comp: usize| {
            let g = self.grid;
            let mut out = Array2::<C64>::zeros(g.shape());
            Zip::indexed(&mut out)
                .and(v)
                .and(&d)
                .for_each(|(ix, iy), o, &vv, &dd| {
                    let k = g.k_at(ix) as f64;
                    let eta = g.xi_at(iy) - k * t;
                    let p = k * k + eta * eta;
                    let kc = if comp == 0 { k } else { eta };
                    *o = -mu * p * vv + lam * I * kc * dd;
                });
            out
        };
        let n = self.to_phys(&s.n);
        let v1 = self.to_phys(&s.v1);
        let v2 = self.to_phys(&s.v2);
        let nx = self.to_phys(&dx(&s.n));
        let ny = self.to_phys(&dy(&s.n));
        let v1x = self.to_phys(&dx(&s.v1));
        let v1y = self.to_phys(&dy(&s.v1));
        let v2x = self.to_phys(&dx(&s.v2));
        let v2y = self.to_phys(&dy(&s.v2));
        let l1 = self.to_phys(&visc(&s.v1, 0));
        let l2 = self.to_phys(&visc(&s.v2, 1));

        let mut stats = PointStats {
            rho_min: f64::INFINITY,
            rho_max: f64::NEG_INFINITY,
            ..Default::default()
        };
        for (&nv, (&a, &b)) in n.iter().zip(v1.iter().zip(v2.iter())) {
            stats.rho_min = stats.rho_min.min(1.0 + nv);
            stats.rho_max = stats.rho_max.max(1.0 + nv);
            stats.v_max = stats.v_max.max(a.hypot(b));
        }
        let f_raw = n.mapv(|x| (1.0 + x).powf(gamma - 2.0) - 1.0);
        let g_raw = n.mapv(|x| x / (1.0 + x));
        let (f, g) = if self.cfg.dealias {
            (self.to_phys(&self.to_spec(&f_raw)), self.to_phys(&self.to_spec(&g_raw)))
        } else {
            (f_raw, g_raw)
        };
        stats.f_max = f.iter().fold(0.0, |m, x| m.max(x.abs()));
        stats.g_max = g.iter().fold(0.0, |m, x| m.max(x.abs()));

        let nv1 = &n * &v1;
        let nv2 = &n * &v2;
        let mut fv1 = Array2::<f64>::zeros(n.dim());
        let mut fv2 = Array2::<f64>::zeros(n.dim());
        for (i, (o1, o2)) in fv1.iter_mut().zip(fv2.iter_mut()).enumerate() {
            let (r, c) = (i / n.ncols(), i % n.ncols());
            let ix = [r, c];
            let (a, b) = (v1[ix], v2[ix]);
            let (ff, gg) = (f[ix], g[ix]);
            *o1 = -(a * v1x[ix] + b * v1y[ix]) - ff * nx[ix] - gg * l1[ix];
            *o2 = -(a * v2x[ix] + b * v2y[ix]) - ff * ny[ix] - gg * l2[ix];
        }
        let nv1h = self.to_spec(&nv1);
        let nv2h = self.to_spec(&nv2);
        let gr = self.grid;
        let mut fnh = Array2::<C64>::zeros(gr.shape());
        Zip::indexed(&mut fnh)
            .and(&nv1h)
            .and(&nv2h)
            .for_each(|(ix, iy), o, &a, &b| {
                let k = gr.k_at(ix) as f64;
                let eta = gr.xi_at(iy) - k * t;
                *o = -I * (k * a + eta * b);
            });
        (
            Cartesian {
                n: fnh,
                v1: self.to_spec(&fv1),
                v2: self.to_spec(&fv2),
            },
            stats,
        )
    }

    fn to_rot(&self, t: f64, v1: &Array2<C64>, v2: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
        let g = self.grid;
        let mut a = Array2::<C64>::zeros(g.shape());
        let mut b = Array2::<C64>::zeros(g.shape());
        Zip::indexed(&mut a)
            .and(&mut b)
            .and(v1)
            .and(v2)
            .for_each(|(ix, iy), oa, ob, &x, &y| {
                let k = g.k_at(ix) as f64;
                let eta = g.xi_at(iy) - k * t;
                let sp = (k * k + eta * eta).sqrt();
                if sp == 0.0 {
                    *oa = x;
                    *ob = y;
                } else {
                    *oa = (k * x + eta * y) / sp;
                    *ob = (-eta * x + k * y) / sp;
                }
            });
        (a, b)
    }

    fn from_rot(&self, t: f64, a: &Array2<C64>, b: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
        let g = self.grid;
        let mut v1 = Array2::<C64>::zeros(g.shape());
        let mut v2 = Array2::<C64>::zeros(g.shape());
        Zip::indexed(&mut v1)
            .and(&mut v2)
            .and(a)
            .and(b)
            .for_each(|(ix, iy), o1, o2, &x, &y| {
                let k = g.k_at(ix) as f64;
                let eta = g.xi_at(iy) - k * t;
                let sp = (k * k + eta * eta).sqrt();
                if sp == 0.0 {
                    *o1 = x;
                    *o2 = y;
                } else {
                    *o1 = (k * x - eta * y) / sp;
                    *o2 = (eta * x + k * y) / sp;
                }
            });
        (v1, v2)
    }

    /// Explicit part of the rotated system at time `t`.
    fn g_rot(&self, t: f64, y: &Rot, active: &[bool]) -> (Rot, PointStats) {
        let g = self.grid;
        let sw = self.cfg.switches;
        let (v1, v2) = self.from_rot(t, &y.a, &y.b);
        let (nl, stats) = if sw.nonlinear {
            self.nonlinear(t, &Cartesian { n: y.n.clone(), v1, v2 })
        } else {
            let z = Array2::<C64>::zeros(g.shape());
            (
                Cartesian {
                    n: z.clone(),
                    v1: z.clone(),
                    v2: z,
                },
                PointStats::default(),
            )
        };
        let mut out = Rot::zeros(g.shape());
        let (fa, fb) = self.to_rot(t, &nl.v1, &nl.v2);
        Zip::indexed(&mut out.n)
            .and(&mut out.a)
            .and(&mut out.b)
            .for_each(|(ix, iy), on, oa, ob| {
                let mut dn = nl.n[[ix, iy]];
                let mut da = fa[[ix, iy]];
                let mut db = fb[[ix, iy]];
                if sw.explicit_linear && active[ix] {
                    let k = g.k_at(ix) as f64;
                    let eta = g.xi_at(iy) - k * t;
                    let p = k * k + eta * eta;
                    let (n, a, b) = (y.n[[ix, iy]], y.a[[ix, iy]], y.b[[ix, iy]]);
                    if p == 0.0 {
                        da += -b;
                    } else {
                        let sp = p.sqrt();
                        let ke = k * eta / p;
                        let kk = k * k / p;
                        dn += -I * sp * a;
                        da += -ke * a - 2.0 * kk * b - I * sp * n;
                        db += a + ke * b;
                    }
                }
                *on = dn;
                *oa = da;
                *ob = db;
            });
        self.mask(&mut out.n);
        self.mask(&mut out.a);
        self.mask(&mut out.b);
        (out, stats)
    }

    fn factors(&self, t0: f64, t1: f64) -> Factors {
        let g = self.grid;
        let (nu, mu) = (self.params.nu, self.params.mu);
        let mut a = Array2::<f64>::zeros(g.shape());
        let mut b = Array2::<f64>::zeros(g.shape());
        Zip::indexed(&mut a).and(&mut b).for_each(|(ix, iy), fa, fb| {
            let ip = p_integral(t0, t1, g.k_at(ix), g.xi_at(iy));
            *fa = (-nu * ip).exp();
            *fb = (-mu * ip).exp();
        });
        Factors { a, b }
    }

    /// Rows (indexed by `ix`) whose `|k|` pair is above the retirement threshold.
    fn active_rows(&self, y: &Rot) -> Vec<bool> {
        let g = self.grid;
        let nx = g.nx();
        let mut row_max = vec![0.0f64; nx];
        for ((ix, _), c) in y.n.indexed_iter() {
            row_max[ix] = row_max[ix].max(c.norm());
        }
        for ((ix, _), c) in y.a.indexed_iter() {
            row_max[ix] = row_max[ix].max(c.norm());
        }
        for ((ix, _), c) in y.b.indexed_iter() {
            row_max[ix] = row_max[ix].max(c.norm());
        }
        (0..nx)
            .map(|ix| {
                let k = g.k_at(ix);
                if k == 0 || self.retire_abs == 0.0 {
                    return true;
                }
                let jx = g.ix_of(-k).expect("mirror row");
                row_max[ix].max(row_max[jx]) >= self.retire_abs
            })
            .collect()
    }

    fn retire(&self, y: &mut Rot, active: &[bool]) {
        for (ix, &on) in active.iter().enumerate() {
            if !on {
                y.n.row_mut(ix).fill(ZERO);
                y.a.row_mut(ix).fill(ZERO);
                y.b.row_mut(ix).fill(ZERO);
            }
        }
    }

    fn stable_dt(&self, t: f64, stats: &PointStats, active: &[bool]) -> f64 {
        let g = self.grid;
        let mut p_max: f64 = 0.0;
        for ix in 0..g.nx() {
            if !active[ix] {
                continue;
            }
            let k = g.k_at(ix);
            for iy in 0..g.my() {
                if self.cfg.dealias && !g.retained(ix, iy) {
                    continue;
                }
                p_max = p_max.max(crate::spectral::p_symbol(t, k, g.xi_at(iy)));
            }
        }
        let sp = p_max.sqrt();
        let rate = (sp + 2.0) / 2.8 * (1.0 + stats.f_max)
            + stats.v_max * sp
            + stats.g_max * self.params.nu * p_max / 2.7;
        self.cfg.safety / rate
    }

    fn pack(&self, s: &SimState) -> Rot {
        let (a, b) = self.to_rot(s.t, &s.v1.coeffs, &s.v2.coeffs);
        Rot {
            n: s.n.coeffs.clone(),
            a,
            b,
        }
    }

    fn unpack(&self, t: f64, y: &Rot) -> SimState {
        let (v1, v2) = self.from_rot(t, &y.a, &y.b);
        let g = self.grid;
        SimState {
            t,
            n: SpectralField {
                grid: g,
                label: FieldLabel::N,
                coeffs: y.n.clone(),
            },
            v1: SpectralField {
                grid: g,
                label: FieldLabel::V1,
                coeffs: v1,
            },
            v2: SpectralField {
                grid: g,
                label: FieldLabel::V2,
                coeffs: v2,
            },
            params: self.params,
        }
    }

    /// Cartesian time derivative of the full system.
    pub fn rhs(&self, state: &SimState) -> Result<(SpectralField, SpectralField, SpectralField)> {
        state.check()?;
        if state.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let t = state.t;
        let g = self.grid;
        let sw = self.cfg.switches;
        let cart = Cartesian {
            n: state.n.coeffs.clone(),
            v1: state.v1.coeffs.clone(),
            v2: state.v2.coeffs.clone(),
        };
        let (nl, stats) = if sw.nonlinear {
            self.nonlinear(t, &cart)
        } else {
            let z = Array2::<C64>::zeros(g.shape());
            (
                Cartesian {
                    n: z.clone(),
                    v1: z.clone(),
                    v2: z,
                },
                PointStats::default(),
            )
        };
        self.check_density(t, &stats)?;
        let (mu, lam) = (self.params.mu, self.params.mu + self.params.mu_prime);
        let mut dn = nl.n;
        let mut d1 = nl.v1;
        let mut d2 = nl.v2;
        for m in g.modes() {
            let (ix, iy) = (m.ix, m.iy);
            let k = m.k as f64;
            let eta = m.xi - k * t;
            let p = k * k + eta * eta;
            let (n, a, b) = (cart.n[[ix, iy]], cart.v1[[ix, iy]], cart.v2[[ix, iy]]);
            let d = I * (k * a + eta * b);
            let mut ln = ZERO;
            let mut l1 = -mu * p * a + lam * I * k * d;
            let mut l2 = -mu * p * b + lam * I * eta * d;
            if sw.explicit_linear {
                ln += -d;
                l1 += -b - I * k * n;
                l2 += -I * eta * n;
            }
            dn[[ix, iy]] += ln;
            d1[[ix, iy]] += l1;
            d2[[ix, iy]] += l2;
        }
        let wrap = |c, label| SpectralField {
            grid: g,
            label,
            coeffs: c,
        };
        let mut out = (wrap(dn, FieldLabel::N), wrap(d1, FieldLabel::V1), wrap(d2, FieldLabel::V2));
        if self.cfg.dealias {
            out.0.apply_mask();
            out.1.apply_mask();
            out.2.apply_mask();
        }
        Ok(out)
    }

    fn check_density(&self, t: f64, s: &PointStats) -> Result<()> {
        if !(s.rho_min >= self.cfg.density_min && s.rho_max <= self.cfg.density_max) {
            return Err(Error::DensityViolation {
                t,
                min: s.rho_min,
                max: s.rho_max,
            });
        }
        Ok(())
    }

    /// Advance by one step no longer than `dt_cap`, returning the new state.
    pub fn step(&self, state: &SimState, dt_cap: f64) -> Result<(SimState, StepInfo)> {
        let t = state.t;
        let mut y = self.pack(state);
        let active = self.active_rows(&y);
        self.retire(&mut y, &active);
        let (k1, stats) = self.g_rot(t, &y, &active);
        self.check_density(t, &stats)?;
        let h = match self.cfg.fixed_dt {
            Some(h) => h.min(dt_cap),
            None => {
                let h = self.stable_dt(t, &stats, &active).min(self.cfg.dt_max).min(dt_cap);
                if h < self.cfg.dt_min {
                    return Err(Error::StepUnderflow { t, h });
                }
                h
            }
        };
        let half = self.factors(t, t + 0.5 * h);
        let half2 = self.factors(t + 0.5 * h, t + h);
        let full = Factors {
            a: &half.a * &half2.a,
            b: &half.b * &half2.b,
        };
        let ya = half.apply(&y.axpy(0.5 * h, &k1));
        let (k2, _) = self.g_rot(t + 0.5 * h, &ya, &active);
        let yb = half.apply(&y).axpy(0.5 * h, &k2);
        let (k3, _) = self.g_rot(t + 0.5 * h, &yb, &active);
        let yc = full.apply(&y).axpy(h, &half2.apply(&k3));
        let (k4, _) = self.g_rot(t + h, &yc, &active);
        let mut sum = full.apply(&k1);
        let k23 = half2.apply(&k2.axpy(1.0, &k3));
        sum = sum.axpy(2.0, &k23).axpy(1.0, &k4);
        let mut ynew = full.apply(&y).axpy(h / 6.0, &sum);
        // drop what nonlinear forcing put into retired rows unless it is significant
        let still = self.active_rows(&ynew);
        self.retire(&mut ynew, &still);
        let out = self.unpack(t + h, &ynew);
        if !out.is_finite() {
            return Err(Error::NonFinite { t: t + h });
        }
        Ok((
            out,
            StepInfo {
                dt: h,
                stats,
                active_rows: still.iter().filter(|&&a| a).count(),
            },
        ))
    }

    /// Largest `|ξ - k t|` over active retained modes.
    pub fn max_active_eta(&self, state: &SimState) -> f64 {
        let g = self.grid;
        let y = self.pack(state);
        let active = self.active_rows(&y);
        let mut m: f64 = 0.0;
        for ix in 0..g.nx() {
            if !active[ix] {
                continue;
            }
            let k = g.k_at(ix) as f64;
            for iy in 0..g.my() {
                if g.retained(ix, iy) {
                    m = m.max((g.xi_at(iy) - k * state.t).abs());
                }
            }
        }
        m
    }
}

/// Cartesian time derivative `(dN/dt, dV¹/dt, dV²/dt)` with default switches.
pub fn nonlinear_rhs(state: &SimState) -> Result<(SpectralField, SpectralField, SpectralField)> {
    Stepper::new(state.grid(), state.params, StepperConfig::default())?.rhs(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Completed,
    DensityViolation,
    Blowup,
    DtUnderflow,
    MaxSteps,
}

impl RunOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            RunOutcome::Completed => "completed",
            RunOutcome::DensityViolation => "density_violation",
            RunOutcome::Blowup => "blowup",
            RunOutcome::DtUnderflow => "dt_underflow",
            RunOutcome::MaxSteps => "max_steps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub t: f64,
    pub mass: f64,
    pub zero_dn: f64,
    pub zero_d: f64,
    pub zero_domega: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub dt: f64,
    pub steps: usize,
    pub active_rows: usize,
    pub max_eta: f64,
    pub norm_n: f64,
    pub norm_v: f64,
    /// `‖P≠N‖` and `‖P≠W‖`, spectral L² norms over the rows `k ≠ 0`.
    pub nonzero_n: f64,
    pub nonzero_w: f64,
}

impl DiagRow {
    /// `‖(P₀∂_y N, P₀D, P₀∂_y Ω)‖`.
    pub fn zero_mode_norm(&self) -> f64 {
        (self.zero_dn.powi(2) + self.zero_d.powi(2) + self.zero_domega.powi(2)).sqrt()
    }

    pub fn csv_header() -> &'static str {
        "t,mass,zero_dyN,zero_D,zero_dyOmega,zero_norm,rho_min,rho_max,dt,steps,active_rows,max_eta,norm_N,norm_V,nonzero_N,nonzero_W"
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{:.12e},{:.16e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{},{},{:.6e},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.t,
            self.mass,
            self.zero_dn,
            self.zero_d,
            self.zero_domega,
            self.zero_mode_norm(),
            self.rho_min,
            self.rho_max,
            self.dt,
            self.steps,
            self.active_rows,
            self.max_eta,
            self.norm_n,
            self.norm_v,
            self.nonzero_n,
            self.nonzero_w
        )
    }
}

/// Options for the diagnostics recorded at each output time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    pub energy: bool,
    pub multipliers: MultiplierParams,
    pub weights: EnergyWeights,
    /// Keep every output state (needed for residual checks).
    pub keep_states: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            energy: true,
            multipliers: MultiplierParams::default(),
            weights: EnergyWeights::default(),
            keep_states: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub t_final: f64,
    pub steps: usize,
    pub series: Vec<DiagRow>,
    pub energy: EnergyReport,
    pub events: Vec<Event>,
    pub states: Vec<SimState>,
    pub final_state: SimState,
}

impl RunResult {
    pub fn completed(&self) -> bool {
        self.outcome == RunOutcome::Completed
    }

    pub fn series_csv(&self) -> String {
        let mut s = String::from(DiagRow::csv_header());
        s.push('\n');
        for r in &self.series {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }
}

fn nonzero_norm(f: &SpectralField) -> f64 {
    let g = f.grid;
    let s: f64 = f
        .coeffs
        .indexed_iter()
        .filter(|((ix, _), _)| g.k_at(*ix) != 0)
        .map(|(_, c)| c.norm_sqr())
        .sum();
    (g.dxi() * s).sqrt()
}

fn record(
    stepper: &Stepper,
    state: &SimState,
    info: Option<&StepInfo>,
    steps: usize,
    diag: &DiagnosticsConfig,
    series: &mut Vec<DiagRow>,
    energy: &mut EnergyReport,
    states: &mut Vec<SimState>,
) -> Result<()> {
    let ndw = extract_ndw(state);
    let (a, b, c) = zero_mode_norms(&ndw.n, &ndw.d, &ndw.omega);
    let stats = info.map(|i| i.stats).unwrap_or_default();
    series.push(DiagRow {
        t: state.t,
        mass: mass_integral(state),
        zero_dn: a,
        zero_d: b,
        zero_domega: c,
        rho_min: stats.rho_min,
        rho_max: stats.rho_max,
        dt: info.map(|i| i.dt).unwrap_or(0.0),
        steps,
        active_rows: info.map(|i| i.active_rows).unwrap_or(state.grid().nx()),
        max_eta: stepper.max_active_eta(state),
        norm_n: state.n.norm(),
        norm_v: state.v1.norm().hypot(state.v2.norm()),
        nonzero_n: nonzero_norm(&ndw.n),
        nonzero_w: nonzero_norm(&ndw.w),
    });
    if diag.energy {
        energy.push(&ndw.n, &ndw.d, &ndw.w, state.t, &state.params)?;
    }
    if diag.keep_states {
        states.push(state.clone());
    }
    Ok(())
}

/// Integrate from `init` to `cfg.t_end`, recording diagnostics every
/// `cfg.output_dt`. Numerical failures end the run with the matching outcome;
/// only invalid inputs produce an error.
pub fn run_simulation(init: &SimState, cfg: &StepperConfig, diag: &DiagnosticsConfig) -> Result<RunResult> {
    init.check()?;
    init.params.validate()?;
    let grid = init.grid();
    let mut stepper = Stepper::new(grid, init.params, *cfg)?;
    stepper.set_reference_amplitude(init.max_abs());
    let mut energy = EnergyReport::new(diag.weights, diag.multipliers);
    let mut series = Vec::new();
    let mut states = Vec::new();
    let mut events = Vec::new();

    let mut state = init.clone();
    if cfg.dealias {
        state.n.apply_mask();
        state.v1.apply_mask();
        state.v2.apply_mask();
    }
    let n_out = (cfg.t_end / cfg.output_dt + 1e-9).floor() as usize;
    let out_times: Vec<f64> = (1..=n_out)
        .map(|i| init.t + i as f64 * cfg.output_dt)
        .chain(std::iter::once(init.t + cfg.t_end))
        .filter(|&t| t <= init.t + cfg.t_end + 1e-12)
        .collect::<Vec<_>>();
    let mut out_times = out_times;
    out_times.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * cfg.output_dt);

    // the initial density check is part of the first step; record t0 regardless
    record(&stepper, &state, None, 0, diag, &mut series, &mut energy, &mut states)?;
    let mut steps = 0usize;
    let mut first = true;
    let mut outcome = RunOutcome::Completed;
    let mut last_info: Option<StepInfo> = None;
    'outer: for &t_out in &out_times {
        while state.t < t_out - 1e-12 * t_out.abs().max(1.0) {
            if steps >= cfg.max_steps {
                outcome = RunOutcome::MaxSteps;
                events.push(Event {
                    t: state.t,
                    kind: "max_steps".into(),
                    detail: format!("{steps} steps"),
                });
                break 'outer;
            }
            let mut cap = t_out - state.t;
            if first {
                cap = cap.min(cfg.dt_init);
            }
            match stepper.step(&state, cap) {
                Ok((mut next, info)) => {
                    if (next.t - t_out).abs() < 1e-12 * t_out.abs().max(1.0) {
                        next.t = t_out;
                    }
                    state = next;
                    steps += 1;
                    first = false;
                    last_info = Some(info);
                }
                Err(e) => {
                    let (oc, kind) = match &e {
                        Error::DensityViolation { .. } => (RunOutcome::DensityViolation, "density_violation"),
                        Error::StepUnderflow { .. } => (RunOutcome::DtUnderflow, "dt_underflow"),
                        _ => (RunOutcome::Blowup, "blowup"),
                    };
                    outcome = oc;
                    events.push(Event {
                        t: state.t,
                        kind: kind.into(),
                        detail: e.to_string(),
                    });
                    break 'outer;
                }
            }
        }
        record(&stepper, &state, last_info.as_ref(), steps, diag, &mut series, &mut energy, &mut states)?;
    }
    if outcome == RunOutcome::Completed {
        events.push(Event {
            t: state.t,
            kind: "completed".into(),
            detail: format!("{steps} steps"),
        });
    }
    Ok(RunResult {
        outcome,
        t_final: state.t,
        steps,
        series,
        energy,
        events,
        states,
        final_state: state,
    })
}

/// Versioned JSON container for a [`SimState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub t: f64,
    pub grid: Grid,
    pub params: PhysParams,
    /// Shape `[nx, my]` in FFT order; each field is `[re, im]` pairs, row-major.
    pub shape: [usize; 2],
    pub n: Vec<[f64; 2]>,
    pub v1: Vec<[f64; 2]>,
    pub v2: Vec<[f64; 2]>,
}

pub const SNAPSHOT_FORMAT: &str = "stablab-snapshot-v1";

impl Snapshot {
    pub fn from_state(s: &SimState) -> Self {
        let flat = |f: &SpectralField| f.coeffs.iter().map(|c| [c.re, c.im]).collect();
        let (nx, my) = s.grid().shape();
        Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            t: s.t,
            grid: s.grid(),
            params: s.params,
            shape: [nx, my],
            n: flat(&s.n),
            v1: flat(&s.v1),
            v2: flat(&s.v2),
        }
    }

    pub fn to_state(&self) -> Result<SimState> {
        if self.format != SNAPSHOT_FORMAT {
            return Err(Error::Config(format!("unknown snapshot format {}", self.format)));
        }
        let grid = Grid::new(self.grid.kmax(), self.grid.my(), self.grid.ly())?;
        let shape = grid.shape();
        if self.shape != [shape.0, shape.1] {
            return Err(Error::Config("snapshot shape does not match its grid".into()));
        }
        let field = |v: &[[f64; 2]], label| -> Result<SpectralField> {
            let coeffs = Array2::from_shape_vec(shape, v.iter().map(|p| C64::new(p[0], p[1])).collect())
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(SpectralField { grid, label, coeffs })
        };
        Ok(SimState {
            t: self.t,
            n: field(&self.n, FieldLabel::N)?,
            v1: field(&self.v1, FieldLabel::V1)?,
            v2: field(&self.v2, FieldLabel::V2)?,
            params: self.params,
        })
    }
}
