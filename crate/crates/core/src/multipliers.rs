//! Time-dependent Fourier multipliers `φ`, `m₁`, `m₂` and their audits.
//!
//! All three are written in terms of the critical time `t_c = ξ/k`, at which
//! `p(t) = k²(1 + (t - t_c)²)` reaches its minimum. `φ` follows `p` across the
//! window `[t_c, t_c + β ν^{-1/3}]` (clipped to `t ≥ 0`) and is frozen
//! elsewhere, so it is evaluated exactly as a ratio of `p` values.

use std::f64::consts::PI;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{dtp_over_p, p_symbol, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiplierParams {
    pub beta: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub delta_beta: f64,
    pub nu: f64,
}

impl Default for MultiplierParams {
    fn default() -> Self {
        MultiplierParams {
            beta: 5.0,
            a: 10.0,
            delta_beta: 0.9,
            nu: 1e-3,
        }
    }
}

impl MultiplierParams {
    /// Default `β`, `A`, `δ_β` at viscosity `nu`.
    pub fn with_nu(nu: f64) -> Self {
        MultiplierParams {
            nu,
            ..Default::default()
        }
    }

    /// Lower end of the admissible `δ_β` range.
    pub fn delta_beta_floor(&self) -> f64 {
        let b = self.beta;
        (2.0 / (b * (b * b - 1.0))).max(4.0 / b)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.beta > 4.0) {
            return bad(format!("beta must exceed 4, got {}", self.beta));
        }
        if !(self.a > 0.0) {
            return bad(format!("A must be positive, got {}", self.a));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return bad(format!("nu must lie in (0, 1], got {}", self.nu));
        }
        let lo = self.delta_beta_floor();
        if !(self.delta_beta > lo && self.delta_beta <= 1.0) {
            return bad(format!(
                "delta_beta must lie in ({lo}, 1], got {}",
                self.delta_beta
            ));
        }
        Ok(())
    }

    /// Length `β ν^{-1/3}` of the active window of `φ`.
    pub fn window(&self) -> f64 {
        self.beta * self.nu.powf(-1.0 / 3.0)
    }

    /// Value of `φ` at the end of a window lying entirely in `t ≥ 0`.
    pub fn phi_bound(&self) -> f64 {
        1.0 + self.beta * self.beta * self.nu.powf(-2.0 / 3.0)
    }
}

/// `(t₀, t_e)`: start and end of the active window of `φ`, or `None` when
/// `φ ≡ 1` for this wavenumber.
fn phi_window(k: i64, xi: f64, params: &MultiplierParams) -> Option<(f64, f64, f64)> {
    if k == 0 {
        return None;
    }
    let tc = xi / k as f64;
    let te = tc + params.window();
    if te <= 0.0 {
        return None;
    }
    Some((tc, tc.max(0.0), te))
}

pub fn phi(t: f64, k: i64, xi: f64, params: &MultiplierParams) -> f64 {
    match phi_window(k, xi, params) {
        Some((tc, t0, te)) if t > t0 => {
            let ts = t.min(te);
            let a = ts - tc;
            let b = t0 - tc;
            (1.0 + a * a) / (1.0 + b * b)
        }
        _ => 1.0,
    }
}

pub fn m1(t: f64, k: i64, xi: f64, params: &MultiplierParams) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let c = params.nu.cbrt();
    let tc = xi / k as f64;
    (2.0 * (c * (t - tc)).atan() + 2.0 * (c * tc).atan()).exp()
}

pub fn m2(t: f64, k: i64, xi: f64, params: &MultiplierParams) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let tc = xi / k as f64;
    (params.a * (t - tc).atan() + params.a * tc.atan()).exp()
}

/// Logarithmic derivatives `∂ₜm/m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlogMultipliers {
    pub dlog_phi: f64,
    pub dlog_m1: f64,
    pub dlog_m2: f64,
}

/// `∂ₜφ/φ`, `∂ₜm₁/m₁`, `∂ₜm₂/m₂`; right derivatives at the breakpoints of `φ`.
pub fn dlog_multipliers(t: f64, k: i64, xi: f64, params: &MultiplierParams) -> DlogMultipliers {
    if k == 0 {
        return DlogMultipliers {
            dlog_phi: 0.0,
            dlog_m1: 0.0,
            dlog_m2: 0.0,
        };
    }
    let tc = xi / k as f64;
    let d = tc - t;
    let nu13 = params.nu.cbrt();
    let dlog_phi = match phi_window(k, xi, params) {
        Some((_, t0, te)) if t >= t0 && t < te => dtp_over_p(t, k, xi),
        _ => 0.0,
    };
    DlogMultipliers {
        dlog_phi,
        dlog_m1: 2.0 * nu13 / (1.0 + nu13 * nu13 * d * d),
        dlog_m2: params.a / (1.0 + d * d),
    }
}

/// Multiplier values and log-derivatives on every mode of a grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierEval {
    pub grid: Grid,
    pub t: f64,
    pub phi: Array2<f64>,
    pub m1: Array2<f64>,
    pub m2: Array2<f64>,
    pub dlog_phi: Array2<f64>,
    pub dlog_m1: Array2<f64>,
    pub dlog_m2: Array2<f64>,
}

impl MultiplierEval {
    pub fn on_grid(t: f64, grid: &Grid, params: &MultiplierParams) -> Self {
        let shape = grid.shape();
        let at = |f: &dyn Fn(i64, f64) -> f64| {
            Array2::from_shape_fn(shape, |(ix, iy)| f(grid.k_at(ix), grid.xi_at(iy)))
        };
        MultiplierEval {
            grid: *grid,
            t,
            phi: at(&|k, xi| phi(t, k, xi, params)),
            m1: at(&|k, xi| m1(t, k, xi, params)),
            m2: at(&|k, xi| m2(t, k, xi, params)),
            dlog_phi: at(&|k, xi| dlog_multipliers(t, k, xi, params).dlog_phi),
            dlog_m1: at(&|k, xi| dlog_multipliers(t, k, xi, params).dlog_m1),
            dlog_m2: at(&|k, xi| dlog_multipliers(t, k, xi, params).dlog_m2),
        }
    }
}

/// One audit point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSample {
    pub t: f64,
    pub k: i64,
    pub xi: f64,
}

/// Result of checking one inequality over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub description: String,
    pub min_slack: f64,
    pub argmin: Option<AuditSample>,
    pub violations: usize,
    pub first_violation: Option<AuditSample>,
    pub samples: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub params: MultiplierParams,
    pub samples: usize,
    /// Gating checks.
    pub checks: Vec<InequalityCheck>,
    /// `φ ≤ β² ν^{-2/3}`, reported but not gating.
    pub phi_upper_reference: InequalityCheck,
    pub all_pass: bool,
}

impl AuditReport {
    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Relative round-off allowance applied to every slack.
const AUDIT_RTOL: f64 = 1e-12;

struct Tracker {
    name: &'static str,
    description: String,
    min_slack: f64,
    argmin: Option<AuditSample>,
    violations: usize,
    first_violation: Option<AuditSample>,
    samples: usize,
}

impl Tracker {
    fn new(name: &'static str, description: String) -> Self {
        Tracker {
            name,
            description,
            min_slack: f64::INFINITY,
            argmin: None,
            violations: 0,
            first_violation: None,
            samples: 0,
        }
    }

    /// Record `lhs ≥ rhs` at `s`.
    fn record(&mut self, s: AuditSample, lhs: f64, rhs: f64) {
        let slack = lhs - rhs;
        self.samples += 1;
        if slack < self.min_slack || self.argmin.is_none() {
            self.min_slack = slack;
            self.argmin = Some(s);
        }
        let tol = AUDIT_RTOL * lhs.abs().max(rhs.abs()).max(1.0);
        if !(slack >= -tol) {
            self.violations += 1;
            if self.first_violation.is_none() {
                self.first_violation = Some(s);
            }
        }
    }

    fn merge(mut self, other: Tracker) -> Tracker {
        if other.min_slack < self.min_slack || self.argmin.is_none() {
            self.min_slack = other.min_slack;
            self.argmin = other.argmin;
        }
        self.violations += other.violations;
        self.samples += other.samples;
        if self.first_violation.is_none() {
            self.first_violation = other.first_violation;
        }
        self
    }

    fn finish(self) -> InequalityCheck {
        InequalityCheck {
            name: self.name.to_string(),
            description: self.description,
            min_slack: self.min_slack,
            argmin: self.argmin,
            pass: self.violations == 0,
            violations: self.violations,
            first_violation: self.first_violation,
            samples: self.samples,
        }
    }
}

fn fresh_trackers() -> Vec<Tracker> {
    vec![
        Tracker::new("phi_lower", "phi >= 1".into()),
        Tracker::new("phi_upper", "phi <= 1 + beta^2 nu^(-2/3)".into()),
        Tracker::new("phi_over_p", "phi/p <= 1/k^2 (k != 0)".into()),
        Tracker::new(
            "decay_full",
            "db (dm1/m1 + nu p) + dphi/phi - dp/p >= db nu^(1/3) (k != 0)".into(),
        ),
        Tracker::new(
            "decay_weak",
            "db (dm1/m1 + nu^(1/3)) + dphi/phi - dp/p >= db nu^(1/3) / 2 (k != 0)".into(),
        ),
        Tracker::new("m1_range", "1 <= m1 <= e^(2 pi)".into()),
        Tracker::new("m2_range", "1 <= m2 <= e^(A pi)".into()),
        Tracker::new("phi_upper_reference", "phi <= beta^2 nu^(-2/3)".into()),
    ]
}

fn audit_point(tr: &mut [Tracker], s: AuditSample, params: &MultiplierParams) {
    let (t, k, xi) = (s.t, s.k, s.xi);
    let ph = phi(t, k, xi, params);
    let a = m1(t, k, xi, params);
    let b = m2(t, k, xi, params);
    let nu13 = params.nu.cbrt();
    let db = params.delta_beta;
    tr[0].record(s, ph, 1.0);
    tr[1].record(s, params.phi_bound(), ph);
    tr[5].record(s, a.min((2.0 * PI).exp() - a + 1.0), 1.0);
    tr[6].record(s, b.min((params.a * PI).exp() - b + 1.0), 1.0);
    tr[7].record(s, params.beta * params.beta * params.nu.powf(-2.0 / 3.0), ph);
    if k != 0 {
        let p = p_symbol(t, k, xi);
        let kk = (k * k) as f64;
        tr[2].record(s, 1.0 / kk, ph / p);
        let d = dlog_multipliers(t, k, xi, params);
        let dp = dtp_over_p(t, k, xi);
        let common = d.dlog_phi - dp;
        tr[3].record(s, db * (d.dlog_m1 + params.nu * p) + common, db * nu13);
        tr[4].record(s, db * (d.dlog_m1 + nu13) + common, 0.5 * db * nu13);
    }
}

/// Evaluate every multiplier inequality over `samples`.
pub fn audit_inequalities(samples: &[AuditSample], params: &MultiplierParams) -> Result<AuditReport> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    params.validate()?;
    let trackers = samples
        .par_chunks(4096)
        .map(|chunk| {
            let mut tr = fresh_trackers();
            for &s in chunk {
                audit_point(&mut tr, s, params);
            }
            tr
        })
        .reduce(fresh_trackers, |a, b| {
            a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect()
        });
    let mut checks: Vec<InequalityCheck> = trackers.into_iter().map(Tracker::finish).collect();
    let phi_upper_reference = checks.pop().expect("reference check");
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(AuditReport {
        params: *params,
        samples: samples.len(),
        checks,
        phi_upper_reference,
        all_pass,
    })
}

/// Sample set for [`audit_inequalities`].
///
/// Critical times `ξ/k` are spread over `[-1.5 L, t_max]` with `L = βν^{-1/3}`,
/// so that windows starting before, inside and after `[0, t_max]` all occur.
/// Each `(k, ξ)` is sampled on a uniform time grid plus the window endpoints
/// and points just beside them. A few `k = 0` and `k < 0` rows are included.
pub fn default_audit_samples(
    params: &MultiplierParams,
    kmax: i64,
    t_max: f64,
    n_critical: usize,
    n_times: usize,
) -> Vec<AuditSample> {
    let l = params.window();
    let lo = -1.5 * l;
    let n_critical = n_critical.max(2);
    let n_times = n_times.max(2);
    let mut out = Vec::new();
    let times: Vec<f64> = (0..n_times)
        .map(|i| t_max * i as f64 / (n_times - 1) as f64)
        .collect();
    for ic in 0..n_critical {
        let tc = lo + (t_max - lo) * ic as f64 / (n_critical - 1) as f64;
        for k in (-kmax..=kmax).filter(|k| *k != 0) {
            let xi = tc * k as f64;
            for &t in &times {
                out.push(AuditSample { t, k, xi });
            }
            for tb in [tc, tc + l] {
                for dt in [-1e-9, 0.0, 1e-9] {
                    let t = tb + dt * tb.abs().max(1.0);
                    if t >= 0.0 && t <= t_max {
                        out.push(AuditSample { t, k, xi });
                    }
                }
            }
        }
        for &t in times.iter().step_by(16) {
            out.push(AuditSample { t, k: 0, xi: tc });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> MultiplierParams {
        MultiplierParams::with_nu(1e-3)
    }

    #[test]
    fn zero_wavenumber_is_identity() {
        let p = params();
        for &(t, xi) in &[(0.0, 0.0), (3.0, -2.0), (100.0, 7.5)] {
            assert_eq!(phi(t, 0, xi, &p), 1.0);
            assert_eq!(m1(t, 0, xi, &p), 1.0);
            assert_eq!(m2(t, 0, xi, &p), 1.0);
            let d = dlog_multipliers(t, 0, xi, &p);
            assert_eq!((d.dlog_phi, d.dlog_m1, d.dlog_m2), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn phi_flat_before_window() {
        let p = params();
        let xi = p.window() + 1.0;
        assert_eq!(phi(0.5 * xi, 1, xi, &p), 1.0);
    }

    #[test]
    fn phi_window_end_value() {
        let p = params();
        let t = 1.0 + p.window();
        let v = phi(t, 1, 1.0, &p);
        let expect = p_symbol(t, 1, 1.0);
        assert!((v - expect).abs() <= 1e-12 * expect);
        assert!((v - (1.0 + 25.0 * p.nu.powf(-2.0 / 3.0))).abs() <= 1e-10 * v);
        // frozen afterwards
        assert_eq!(phi(t + 50.0, 1, 1.0, &p), v);
    }

    #[test]
    fn phi_bound_at_unit_viscosity() {
        let p = MultiplierParams::with_nu(1.0);
        assert_eq!(p.phi_bound(), 26.0);
        let v = phi(10.0, 1, 1.0, &p);
        assert!((v - 26.0).abs() < 1e-12);
    }

    #[test]
    fn initial_values() {
        let p = params();
        for &(k, xi) in &[(1, 0.0), (3, -7.0), (-2, 40.0)] {
            assert_eq!(m1(0.0, k, xi, &p), 1.0);
            assert_eq!(m2(0.0, k, xi, &p), 1.0);
            assert_eq!(phi(0.0, k, xi, &p), 1.0);
        }
    }

    #[test]
    fn m2_long_time_limit() {
        let p = params();
        let v = m2(1e12, 1, 0.0, &p);
        let expect = (p.a * PI / 2.0).exp();
        assert!((v - expect).abs() <= 1e-9 * expect);
    }

    #[test]
    fn dlog_m2_at_critical_time() {
        let p = params();
        assert_eq!(dlog_multipliers(2.5, 1, 2.5, &p).dlog_m2, p.a);
    }

    #[test]
    fn dlog_m1_matches_central_difference() {
        let p = params();
        let h = 1e-6;
        for &(t, k, xi) in &[(1.0, 1, 3.0), (20.0, 2, 5.0), (4.0, -3, 30.0)] {
            let fd = (m1(t + h, k, xi, &p) - m1(t - h, k, xi, &p)) / (2.0 * h);
            let an = dlog_multipliers(t, k, xi, &p).dlog_m1 * m1(t, k, xi, &p);
            assert!((fd - an).abs() < 1e-6, "{fd} vs {an}");
        }
    }

    #[test]
    fn right_derivative_at_breakpoints() {
        let p = params();
        let (k, xi) = (1, 2.0);
        // window start: active, value 0 since p is minimal there
        assert_eq!(dlog_multipliers(2.0, k, xi, &p).dlog_phi, dtp_over_p(2.0, k, xi));
        // window end: frozen
        let te = 2.0 + p.window();
        assert_eq!(dlog_multipliers(te, k, xi, &p).dlog_phi, 0.0);
        // window clipped at the origin
        let xi = -3.0;
        let d = dlog_multipliers(0.0, 1, xi, &p).dlog_phi;
        assert_eq!(d, dtp_over_p(0.0, 1, xi));
        assert!(d > 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        let mut p = params();
        p.beta = 3.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.delta_beta = 0.5;
        assert!(p.validate().is_err());
        let mut p = params();
        p.nu = 1.5;
        assert!(p.validate().is_err());
        let mut p = params();
        p.a = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn audit_default_dense() {
        let p = params();
        let samples = default_audit_samples(&p, 4, 3.0 * p.window(), 80, 300);
        assert!(samples.len() >= 100_000);
        let r = audit_inequalities(&samples, &p).unwrap();
        assert!(r.all_pass, "{:#?}", r.checks);
        let weak = r.check("decay_weak").unwrap();
        assert!(weak.min_slack >= 0.0);
        assert!(r.check("decay_full").unwrap().min_slack >= 0.0);
    }

    #[test]
    fn audit_zero_mode_only() {
        let p = params();
        let samples: Vec<_> = (0..10)
            .map(|i| AuditSample { t: i as f64, k: 0, xi: 0.3 * i as f64 })
            .collect();
        let r = audit_inequalities(&samples, &p).unwrap();
        assert!(r.all_pass);
        assert_eq!(r.check("decay_full").unwrap().samples, 0);
    }

    #[test]
    fn audit_rejects_empty() {
        assert_eq!(audit_inequalities(&[], &params()), Err(Error::EmptySamples));
    }

    fn centred_dlog(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (f(t + h).ln() - f(t - h).ln()) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn monotone_in_time(k in -6i64..=6, xi in -400.0f64..400.0, t in 0.0f64..300.0, dt in 0.0f64..50.0) {
            let p = params();
            prop_assert!(phi(t + dt, k, xi, &p) >= phi(t, k, xi, &p));
            prop_assert!(m1(t + dt, k, xi, &p) >= m1(t, k, xi, &p) * (1.0 - 1e-14));
            prop_assert!(m2(t + dt, k, xi, &p) >= m2(t, k, xi, &p) * (1.0 - 1e-14));
        }

        #[test]
        fn reflection_symmetric(k in 1i64..=6, xi in -400.0f64..400.0, t in 0.0f64..300.0) {
            let p = params();
            prop_assert_eq!(phi(t, k, xi, &p), phi(t, -k, -xi, &p));
            prop_assert_eq!(m1(t, k, xi, &p), m1(t, -k, -xi, &p));
            prop_assert_eq!(m2(t, k, xi, &p), m2(t, -k, -xi, &p));
        }

        #[test]
        fn log_derivatives_consistent(k in 1i64..=4, tc in -60.0f64..120.0, t in 0.01f64..150.0) {
            let p = params();
            let xi = tc * k as f64;
            let h = 1e-4;
            let d = dlog_multipliers(t, k, xi, &p);
            prop_assert!((centred_dlog(|s| m1(s, k, xi, &p), t, h) - d.dlog_m1).abs() < 1e-7);
            prop_assert!((centred_dlog(|s| m2(s, k, xi, &p), t, h) - d.dlog_m2).abs() < 1e-6 * p.a);
            let t0 = tc.max(0.0);
            let te = tc + p.window();
            let near_break = (t - t0).abs() < 2.0 * h || (t - te).abs() < 2.0 * h;
            if !near_break {
                prop_assert!((centred_dlog(|s| phi(s, k, xi, &p), t, h) - d.dlog_phi).abs() < 1e-6);
            }
        }

        #[test]
        fn range_bounds(k in -6i64..=6, xi in -1e4f64..1e4, t in 0.0f64..1e4) {
            let p = params();
            let a = m1(t, k, xi, &p);
            let b = m2(t, k, xi, &p);
            let f = phi(t, k, xi, &p);
            prop_assert!(a >= 1.0 - 1e-14 && a <= (2.0 * PI).exp());
            prop_assert!(b >= 1.0 - 1e-12 && b <= (p.a * PI).exp());
            prop_assert!(f >= 1.0 && f <= p.phi_bound() * (1.0 + 1e-12));
            if k != 0 {
                prop_assert!(f / p_symbol(t, k, xi) <= (1.0 + 1e-12) / (k * k) as f64);
            }
        }
    }
}
