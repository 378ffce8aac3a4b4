//! Least-squares fits of decay laws to positive time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of samples inside the fit window.
pub const MIN_FIT_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayModel {
    /// `C (1+t)^σ e^{-c t}`; `σ` fitted when `None`.
    ExpRate { sigma: Option<f64> },
    /// `C (1+a t)^σ`; `a` searched when `None`, `σ` fitted when `None`.
    Power { a: Option<f64>, sigma: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Exponential rate `c` (exp_rate model only).
    pub rate: Option<f64>,
    /// Time scale `a` (power model only).
    pub a: Option<f64>,
    pub sigma: f64,
    pub sigma_fitted: bool,
    pub prefactor: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

struct Regression {
    coef: Vec<f64>,
    ssr: f64,
    r2: f64,
}

/// Ordinary least squares of `y` on the columns of `x` (an intercept is the
/// caller's responsibility). Solved by normal equations with at most three
/// unknowns.
fn ols(x: &[Vec<f64>], y: &[f64]) -> Result<Regression> {
    let m = x.len();
    let n = y.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = (0..n).map(|r| x[i][r] * x[j][r]).sum();
        }
        b[i] = (0..n).map(|r| x[i][r] * y[r]).sum();
    }
    // Gaussian elimination with partial pivoting
    for c in 0..m {
        let piv = (c..m)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        if a[piv][c].abs() < 1e-300 {
            return Err(Error::Fit("singular design matrix".into()));
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..m {
            let f = a[r][c] / a[c][c];
            for cc in c..m {
                a[r][cc] -= f * a[c][cc];
            }
            b[r] -= f * b[c];
        }
    }
    let mut coef = vec![0.0; m];
    for c in (0..m).rev() {
        let s: f64 = (c + 1..m).map(|j| a[c][j] * coef[j]).sum();
        coef[c] = (b[c] - s) / a[c][c];
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for r in 0..n {
        let pred: f64 = (0..m).map(|i| coef[i] * x[i][r]).sum();
        ssr += (y[r] - pred).powi(2);
        sst += (y[r] - mean).powi(2);
    }
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else if ssr == 0.0 { 1.0 } else { 0.0 };
    if !coef.iter().all(|c| c.is_finite()) {
        return Err(Error::Fit("non-finite coefficients".into()));
    }
    Ok(Regression { coef, ssr, r2 })
}

fn select(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<(Vec<f64>, Vec<f64>, (f64, f64))> {
    let (t1, t2) = match window {
        Some(w) => w,
        None => {
            let first = series.first().ok_or(Error::EmptySamples)?.0;
            let last = series.last().ok_or(Error::EmptySamples)?.0;
            (first, last)
        }
    };
    if !(t1 < t2) {
        return Err(Error::Fit(format!("degenerate window [{t1}, {t2}]")));
    }
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for &(t, v) in series {
        if t >= t1 && t <= t2 {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Fit(format!("non-positive value {v} at t={t}")));
            }
            ts.push(t);
            logs.push(v.ln());
        }
    }
    if ts.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: ts.len(),
        });
    }
    Ok((ts, logs, (t1, t2)))
}

fn power_fit_at(ts: &[f64], logs: &[f64], a: f64, sigma: Option<f64>) -> Result<(Regression, f64)> {
    let l: Vec<f64> = ts.iter().map(|t| (a * t).ln_1p()).collect();
    let ones = vec![1.0; ts.len()];
    match sigma {
        Some(s) => {
            let y: Vec<f64> = logs.iter().zip(&l).map(|(v, li)| v - s * li).collect();
            let r = ols(&[ones], &y)?;
            Ok((r, s))
        }
        None => {
            let r = ols(&[ones, l], logs)?;
            let s = r.coef[1];
            Ok((r, s))
        }
    }
}

/// Fit `model` to `series` over `window` (the full range when `None`).
pub fn fit_decay(series: &[(f64, f64)], model: DecayModel, window: Option<(f64, f64)>) -> Result<DecayFit> {
    let (ts, logs, window) = select(series, window)?;
    let n = ts.len();
    let ones = vec![1.0; n];
    match model {
        DecayModel::ExpRate { sigma } => {
            let l: Vec<f64> = ts.iter().map(|t| t.ln_1p()).collect();
            let (reg, s) = match sigma {
                Some(s) => {
                    let y: Vec<f64> = logs.iter().zip(&l).map(|(v, li)| v - s * li).collect();
                    (ols(&[ones, ts.clone()], &y)?, s)
                }
                None => {
                    let r = ols(&[ones, ts.clone(), l], &logs)?;
                    let s = r.coef[2];
                    (r, s)
                }
            };
            Ok(DecayFit {
                model,
                rate: Some(-reg.coef[1]),
                a: None,
                sigma: s,
                sigma_fitted: sigma.is_none(),
                prefactor: reg.coef[0].exp(),
                r2: reg.r2,
                window,
                samples: n,
            })
        }
        DecayModel::Power { a: Some(a), sigma } => {
            if !(a > 0.0) {
                return Err(Error::Fit(format!("power-law scale must be positive, got {a}")));
            }
            let (reg, s) = power_fit_at(&ts, &logs, a, sigma)?;
            Ok(DecayFit {
                model,
                rate: None,
                a: Some(a),
                sigma: s,
                sigma_fitted: sigma.is_none(),
                prefactor: reg.coef[0].exp(),
                r2: reg.r2,
                window,
                samples: n,
            })
        }
        DecayModel::Power { a: None, sigma } => {
            let tmax = ts.iter().cloned().fold(0.0, f64::max).max(1e-300);
            let cost = |la: f64| {
                power_fit_at(&ts, &logs, la.exp(), sigma)
                    .map(|(r, _)| r.ssr)
                    .unwrap_or(f64::INFINITY)
            };
            // coarse scan then golden-section refinement on log a
            let lo = (1e-6 / tmax).ln();
            let hi = (1e6 / tmax).ln();
            let m = 240;
            let grid: Vec<f64> = (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect();
            let best = (0..=m)
                .min_by(|&i, &j| cost(grid[i]).partial_cmp(&cost(grid[j])).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap();
            let mut x0 = grid[best.saturating_sub(1)];
            let mut x3 = grid[(best + 1).min(m)];
            let g = (5f64.sqrt() - 1.0) / 2.0;
            let mut x1 = x3 - g * (x3 - x0);
            let mut x2 = x0 + g * (x3 - x0);
            let mut f1 = cost(x1);
            let mut f2 = cost(x2);
            for _ in 0..200 {
                if (x3 - x0).abs() < 1e-12 {
                    break;
                }
                if f1 < f2 {
                    x3 = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = x3 - g * (x3 - x0);
                    f1 = cost(x1);
                } else {
                    x0 = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = x0 + g * (x3 - x0);
                    f2 = cost(x2);
                }
            }
            let a = (0.5 * (x0 + x3)).exp();
            let (reg, s) = power_fit_at(&ts, &logs, a, sigma)?;
            Ok(DecayFit {
                model,
                rate: None,
                a: Some(a),
                sigma: s,
                sigma_fitted: sigma.is_none(),
                prefactor: reg.coef[0].exp(),
                r2: reg.r2,
                window,
                samples: n,
            })
        }
    }
}
