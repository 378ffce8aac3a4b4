//! Single-mode linearized dynamics of `(N̂, D̂, Ŵ)` in the sheared frame.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_decay, DecayModel};
use crate::ode::{dopri5, Dopri5Options, Dopri5Stats};
use crate::spectral::{dtp_over_p, p_integral, p_symbol};

/// Viscosities and pressure law `P(ρ) = ρ^γ / γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub mu: f64,
    pub mu_prime: f64,
    /// `2μ + μ'`, kept in sync by the constructors.
    pub nu: f64,
    pub gamma: f64,
}

impl PhysParams {
    pub fn new(mu: f64, mu_prime: f64, gamma: f64) -> Result<Self> {
        let p = PhysParams {
            mu,
            mu_prime,
            nu: 2.0 * mu + mu_prime,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    /// `μ = μ' = 0`. Not a valid viscous configuration; used for conservation checks.
    pub fn inviscid() -> Self {
        PhysParams {
            mu: 0.0,
            mu_prime: 0.0,
            nu: 0.0,
            gamma: 1.4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return bad(format!("mu must lie in (0, 1], got {}", self.mu));
        }
        if !(self.mu + self.mu_prime >= 0.0) {
            return bad(format!("mu + mu' must be nonnegative, got {}", self.mu + self.mu_prime));
        }
        if (self.nu - (2.0 * self.mu + self.mu_prime)).abs() > 1e-12 * self.nu.abs().max(1.0) {
            return bad(format!("nu = {} differs from 2 mu + mu'", self.nu));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return bad(format!("nu must lie in (0, 1], got {}", self.nu));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        Ok(())
    }

    /// Pressure derivative `P'(ρ) = ρ^{γ-1}`; equals 1 at `ρ = 1`.
    pub fn pressure_derivative(&self, rho: f64) -> f64 {
        rho.powf(self.gamma - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub n: C64,
    pub d: C64,
    pub w: C64,
    pub k: i64,
    pub xi: f64,
    pub t: f64,
}

impl ModeState {
    pub fn new(k: i64, xi: f64, t: f64, n: C64, d: C64, w: C64) -> Self {
        ModeState { n, d, w, k, xi, t }
    }

    /// `Û = p^{-1/2} D̂`, zero where `p = 0`.
    pub fn u(&self) -> C64 {
        let p = p_symbol(self.t, self.k, self.xi);
        if p == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            self.d / p.sqrt()
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.n, self.d, self.w]
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    fn pack(&self) -> [f64; 6] {
        [self.n.re, self.n.im, self.d.re, self.d.im, self.w.re, self.w.im]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeNorms {
    pub n: f64,
    pub d: f64,
    pub w: f64,
    pub u: f64,
}

impl ModeNorms {
    /// `(|N̂|² + |Û|²)^{1/2}`.
    pub fn acoustic(&self) -> f64 {
        self.n.hypot(self.u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTrajectory {
    pub k: i64,
    pub xi: f64,
    pub samples: Vec<ModeState>,
    pub norms: Vec<ModeNorms>,
    pub stats: Dopri5Stats,
}

/// Time derivative `(dN̂/dt, dD̂/dt, dŴ/dt)` of the unforced linear system.
pub fn linear_rhs(state: &ModeState, params: &PhysParams) -> [C64; 3] {
    let (t, k, xi) = (state.t, state.k, state.xi);
    let p = p_symbol(t, k, xi);
    let (k2p, r3) = if k == 0 || p == 0.0 {
        (0.0, 0.0)
    } else {
        ((k * k) as f64 / p, dtp_over_p(t, k, xi))
    };
    let (n, d, w) = (state.n, state.d, state.w);
    let mu = params.mu;
    let lift = w - n + mu * d;
    let dn = -d;
    let dd = r3 * d - 2.0 * k2p * lift + p * n - params.nu * p * d;
    let dw = -mu * p * w + mu * (mu + params.mu_prime) * p * d - mu * r3 * d + 2.0 * mu * k2p * lift;
    [dn, dd, dw]
}

/// Integrate one mode from `init.t` and sample it at `times`.
pub fn integrate_mode(
    init: &ModeState,
    times: &[f64],
    opts: &Dopri5Options,
    params: &PhysParams,
) -> Result<ModeTrajectory> {
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.first().is_some_and(|&t| t < init.t) {
        return Err(Error::InvalidParams("output times must increase from the initial time".into()));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidParams("tolerances must be positive".into()));
    }
    let (k, xi) = (init.k, init.xi);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let s = ModeState {
            n: C64::new(y[0], y[1]),
            d: C64::new(y[2], y[3]),
            w: C64::new(y[4], y[5]),
            k,
            xi,
            t,
        };
        let r = linear_rhs(&s, params);
        for (i, c) in r.iter().enumerate() {
            dy[2 * i] = c.re;
            dy[2 * i + 1] = c.im;
        }
    };
    let (ys, stats) = dopri5(rhs, init.t, &init.pack(), times, opts)?;
    let mut samples = Vec::with_capacity(ys.len());
    let mut norms = Vec::with_capacity(ys.len());
    for (&t, y) in times.iter().zip(&ys) {
        let s = ModeState {
            n: C64::new(y[0], y[1]),
            d: C64::new(y[2], y[3]),
            w: C64::new(y[4], y[5]),
            k,
            xi,
            t,
        };
        if !s.is_finite() {
            return Err(Error::NonFinite { t });
        }
        norms.push(ModeNorms {
            n: s.n.norm(),
            d: s.d.norm(),
            w: s.w.norm(),
            u: s.u().norm(),
        });
        samples.push(s);
    }
    Ok(ModeTrajectory {
        k,
        xi,
        samples,
        norms,
        stats,
    })
}

/// Closed-form solution of `dD̂/dt = (∂ₜp/p) D̂ - ν p D̂` from `D̂(0) = d0`.
pub fn toy_exact(t: f64, k: i64, xi: f64, nu: f64, d0: C64) -> Result<C64> {
    if k == 0 {
        return Err(Error::InvalidParams("toy model requires k != 0".into()));
    }
    let ratio = p_symbol(t, k, xi) / p_symbol(0.0, k, xi);
    Ok(d0 * ratio * (-nu * p_integral(0.0, t, k, xi)).exp())
}

/// Integrate the toy model numerically with the generic integrator.
pub fn solve_toy(k: i64, xi: f64, nu: f64, d0: C64, times: &[f64], opts: &Dopri5Options) -> Result<Vec<C64>> {
    if k == 0 {
        return Err(Error::InvalidParams("toy model requires k != 0".into()));
    }
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let g = dtp_over_p(t, k, xi) - nu * p_symbol(t, k, xi);
        dy[0] = g * y[0];
        dy[1] = g * y[1];
    };
    let (ys, _) = dopri5(rhs, 0.0, &[d0.re, d0.im], times, opts)?;
    Ok(ys.into_iter().map(|y| C64::new(y[0], y[1])).collect())
}

/// Initial data families for envelope scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitFamily {
    WOnly,
    NOnly,
    Equipartition,
}

impl InitFamily {
    pub fn name(&self) -> &'static str {
        match self {
            InitFamily::WOnly => "w_only",
            InitFamily::NOnly => "n_only",
            InitFamily::Equipartition => "equipartition",
        }
    }

    /// Data at `t = 0` with `(|N̂|² + |Û|² + |Ŵ|²)^{1/2} = 1`.
    pub fn initial_state(&self, k: i64, xi: f64) -> ModeState {
        let z = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let sp = p_symbol(0.0, k, xi).sqrt();
        match self {
            InitFamily::WOnly => ModeState::new(k, xi, 0.0, z, z, one),
            InitFamily::NOnly => ModeState::new(k, xi, 0.0, one, z, z),
            InitFamily::Equipartition => {
                let c = 1.0 / 3f64.sqrt();
                let u = if sp == 0.0 { z } else { C64::new(c * sp, 0.0) };
                let scale = if sp == 0.0 { 1.0 / (2.0 * c * c).sqrt() } else { 1.0 };
                ModeState::new(k, xi, 0.0, one * c * scale, u, one * c * scale)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub mu_list: Vec<f64>,
    /// `μ' = ratio · μ`.
    pub mu_prime_ratio: f64,
    pub gamma: f64,
    pub k: i64,
    /// `ξ ∈ [-xi_scale, xi_scale] · μ^{-1/3}`.
    pub xi_scale: f64,
    pub n_xi: usize,
    /// `T = t_scale · μ^{-1/3}`.
    pub t_scale: f64,
    pub n_out: usize,
    pub family: InitFamily,
    /// The tail window starts at `max(t*, tail_fraction · T)`.
    pub tail_fraction: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            mu_list: vec![1e-2, 1e-3, 1e-4],
            mu_prime_ratio: 0.5,
            gamma: 1.4,
            k: 1,
            xi_scale: 3.0,
            n_xi: 129,
            t_scale: 6.0,
            n_out: 400,
            family: InitFamily::WOnly,
            tail_fraction: 0.5,
            rtol: 1e-9,
            atol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub mu: f64,
    pub k: i64,
    pub xi: f64,
    pub amp_w: f64,
    pub amp_nu: f64,
    /// Set when the mode failed to integrate.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuSummary {
    pub mu: f64,
    pub t_end: f64,
    /// `sup_{t,ξ} |Ŵ|`.
    pub amp_w: f64,
    /// `sup_{t,ξ} (|N̂|² + |Û|²)^{1/2}`.
    pub amp_nu: f64,
    /// Decay rate of the `|Ŵ|` envelope tail.
    pub rate: f64,
    pub fit_r2: f64,
    pub fit_window: (f64, f64),
    pub failed_modes: usize,
    pub times: Vec<f64>,
    pub envelope_w: Vec<f64>,
    pub envelope_nu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub config: ScanConfig,
    pub rows: Vec<ScanRow>,
    pub summaries: Vec<MuSummary>,
}

/// Log-log least-squares slope of `ys` against `xs`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn scan_one(mu: f64, cfg: &ScanConfig) -> Result<(Vec<ScanRow>, MuSummary)> {
    let params = PhysParams::new(mu, cfg.mu_prime_ratio * mu, cfg.gamma)?;
    let scale = mu.powf(-1.0 / 3.0);
    let t_end = cfg.t_scale * scale;
    let n_out = cfg.n_out.max(2);
    let times: Vec<f64> = (0..n_out).map(|i| t_end * i as f64 / (n_out - 1) as f64).collect();
    let n_xi = cfg.n_xi.max(1);
    let xis: Vec<f64> = (0..n_xi)
        .map(|i| {
            if n_xi == 1 {
                0.0
            } else {
                cfg.xi_scale * scale * (2.0 * i as f64 / (n_xi - 1) as f64 - 1.0)
            }
        })
        .collect();
    let opts = Dopri5Options {
        rtol: cfg.rtol,
        atol: cfg.atol,
        ..Default::default()
    };
    let runs: Vec<(f64, Result<ModeTrajectory>)> = xis
        .par_iter()
        .map(|&xi| {
            let init = cfg.family.initial_state(cfg.k, xi);
            (xi, integrate_mode(&init, &times, &opts, &params))
        })
        .collect();
    let mut env_w = vec![0.0f64; n_out];
    let mut env_nu = vec![0.0f64; n_out];
    let mut rows = Vec::with_capacity(runs.len());
    let mut failed = 0;
    for (xi, run) in runs {
        match run {
            Ok(tr) => {
                let mut aw: f64 = 0.0;
                let mut anu: f64 = 0.0;
                for (i, nm) in tr.norms.iter().enumerate() {
                    env_w[i] = env_w[i].max(nm.w);
                    env_nu[i] = env_nu[i].max(nm.acoustic());
                    aw = aw.max(nm.w);
                    anu = anu.max(nm.acoustic());
                }
                rows.push(ScanRow { mu, k: cfg.k, xi, amp_w: aw, amp_nu: anu, error: None });
            }
            Err(e) => {
                failed += 1;
                rows.push(ScanRow {
                    mu,
                    k: cfg.k,
                    xi,
                    amp_w: f64::NAN,
                    amp_nu: f64::NAN,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let imax = env_w
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let t_start = times[imax].max(cfg.tail_fraction * t_end);
    let series: Vec<(f64, f64)> = times.iter().cloned().zip(env_w.iter().cloned()).collect();
    let (rate, r2, window) = match fit_decay(&series, DecayModel::ExpRate { sigma: Some(0.0) }, Some((t_start, t_end))) {
        Ok(f) => (f.rate.unwrap_or(f64::NAN), f.r2, f.window),
        Err(_) => (f64::NAN, f64::NAN, (t_start, t_end)),
    };
    let summary = MuSummary {
        mu,
        t_end,
        amp_w: env_w.iter().cloned().fold(0.0, f64::max),
        amp_nu: env_nu.iter().cloned().fold(0.0, f64::max),
        rate,
        fit_r2: r2,
        fit_window: window,
        failed_modes: failed,
        times,
        envelope_w: env_w,
        envelope_nu: env_nu,
    };
    Ok((rows, summary))
}

/// Envelope scan over `ξ` for every `μ` in the configuration.
///
/// Individual mode failures are recorded in the rows and excluded from the
/// envelopes; invalid parameters abort the scan.
pub fn envelope_scan(cfg: &ScanConfig) -> Result<ScanResult> {
    if cfg.mu_list.is_empty() {
        return Err(Error::InvalidParams("mu_list is empty".into()));
    }
    if cfg.k == 0 {
        return Err(Error::InvalidParams("envelope scans need k != 0".into()));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &mu in &cfg.mu_list {
        let (r, s) = scan_one(mu, cfg)?;
        rows.extend(r);
        summaries.push(s);
    }
    Ok(ScanResult {
        config: cfg.clone(),
        rows,
        summaries,
    })
}
