//! Adaptive Dormand–Prince 5(4) integrator with continuous output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; estimated when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Dopri5Options {
            rtol: 1e-10,
            atol: 1e-14,
            h0: None,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Dopri5Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn err_norm(y: &[f64], y1: &[f64], e: &[f64], opts: &Dopri5Options) -> f64 {
    let n = y.len().max(1) as f64;
    let s: f64 = y
        .iter()
        .zip(y1)
        .zip(e)
        .map(|((a, b), d)| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (d / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<F>(f: &mut F, t0: f64, y0: &[f64], f0: &[f64], dir: f64, opts: &Dopri5Options) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|y| opts.atol + opts.rtol * y.abs()).collect();
    let norm = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(opts.h_max);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + dir * h * d).collect();
    let mut f1 = vec![0.0; n];
    f(t0 + dir * h, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (1e-6f64).max(h * 1e-3)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h).min(h1).min(opts.h_max)
}

/// Integrate `y' = f(t, y)` from `t0` and report `y` at each time in
/// `t_out` (monotone in the direction of integration, all beyond `t0`).
pub fn dopri5<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_out: &[f64],
    opts: &Dopri5Options,
) -> Result<(Vec<Vec<f64>>, Dopri5Stats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut stats = Dopri5Stats::default();
    let mut out = Vec::with_capacity(t_out.len());
    let Some(&t_end) = t_out.last() else {
        return Ok((out, stats));
    };
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut next = 0;
    while next < t_out.len() && t_out[next] == t0 {
        out.push(y0.to_vec());
        next += 1;
    }
    if next == t_out.len() {
        return Ok((out, stats));
    }

    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    f(t0, &y, &mut k1);
    stats.evaluations += 1;
    if !k1.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { t: t0 });
    }
    let mut h = match opts.h0 {
        Some(h) => h.abs(),
        None => {
            stats.evaluations += 1;
            initial_step(&mut f, t0, &y, &k1, dir, opts)
        }
    };
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut rcont = vec![vec![0.0; n]; 5];

    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let safe = 0.9;
    let facc1 = 1.0 / 0.2;
    let facc2 = 1.0 / 10.0;
    let mut facold: f64 = 1e-4;
    let mut t = t0;
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            return Err(Error::MaxSteps { t, steps });
        }
        steps += 1;
        h = h.min(opts.h_max);
        let remaining = (t_end - t).abs();
        let mut hs = h;
        if hs >= remaining {
            hs = remaining;
        }
        if hs < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h: hs });
        }
        let hd = dir * hs;

        for i in 0..n {
            ys[i] = y[i] + hd * A21 * k1[i];
        }
        f(t + C2 * hd, &ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + hd * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * hd, &ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + hd * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * hd, &ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + hd * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * hd, &ys, &mut k5);
        for i in 0..n {
            ys[i] = y[i]
                + hd * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + hd, &ys, &mut k6);
        for i in 0..n {
            y1[i] = y[i]
                + hd * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + hd, &y1, &mut k7);
        stats.evaluations += 6;
        for i in 0..n {
            err[i] = hd
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = err_norm(&y, &y1, &err, opts);
        if !en.is_finite() {
            // treat as a rejection with maximal shrink
            stats.rejected += 1;
            h = hs * 0.2;
            last_rejected = true;
            if !y1.iter().all(|v| v.is_finite()) && hs < 1e-10 * t.abs().max(1.0) {
                return Err(Error::NonFinite { t });
            }
            continue;
        }
        let fac11 = en.powf(expo1);
        let fac = (fac11 / facold.powf(beta) / safe).clamp(facc2, facc1);
        let hnew = hs / fac;
        if en <= 1.0 {
            facold = en.max(1e-4);
            stats.accepted += 1;
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = hd * k1[i] - ydiff;
                rcont[0][i] = y[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - hd * k7[i] - bspl;
                rcont[4][i] = hd
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if hs == remaining { t_end } else { t + hd };
            while next < t_out.len() && (t_out[next] - t_new) * dir <= 0.0 {
                let theta = (t_out[next] - t) / hd;
                let theta1 = 1.0 - theta;
                let v: Vec<f64> = (0..n)
                    .map(|i| {
                        rcont[0][i]
                            + theta
                                * (rcont[1][i]
                                    + theta1
                                        * (rcont[2][i]
                                            + theta * (rcont[3][i] + theta1 * rcont[4][i])))
                    })
                    .collect();
                out.push(v);
                next += 1;
            }
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            if next == t_out.len() {
                return Ok((out, stats));
            }
            h = if last_rejected { hnew.min(hs) } else { hnew };
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h = hs / (fac11 / safe).min(facc1);
            last_rejected = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let ts: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let (ys, stats) = dopri5(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            &[1.0],
            &ts,
            &Dopri5Options::default(),
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-10);
        }
        assert!(stats.accepted > 0);
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let ts: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        let opts = Dopri5Options {
            rtol: 1e-11,
            atol: 1e-13,
            ..Default::default()
        };
        let (ys, _) = dopri5(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            &ts,
            &opts,
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-9, "t={t}");
            assert!((y[1] + t.sin()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn backward_in_time() {
        let (ys, _) = dopri5(
            |_, y, dy| dy[0] = y[0],
            1.0,
            &[1.0],
            &[0.0],
            &Dopri5Options::default(),
        )
        .unwrap();
        assert!((ys[0][0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn max_steps_reported() {
        let opts = Dopri5Options {
            max_steps: 3,
            h0: Some(1e-3),
            h_max: 1e-3,
            ..Default::default()
        };
        let r = dopri5(|_, y, dy| dy[0] = -y[0], 0.0, &[1.0], &[10.0], &opts);
        assert!(matches!(r, Err(Error::MaxSteps { .. })));
    }

    #[test]
    fn fifth_order_convergence() {
        // fixed steps via h_max with loose tolerance: error ratio near 2^5
        let run = |h: f64| {
            let opts = Dopri5Options {
                rtol: 1.0,
                atol: 1.0,
                h0: Some(h),
                h_max: h,
                ..Default::default()
            };
            let (ys, _) = dopri5(|t, y, dy| dy[0] = y[0] * t.cos(), 0.0, &[1.0], &[4.0], &opts).unwrap();
            (ys[0][0] - (4.0f64).sin().exp()).abs()
        };
        let e1 = run(0.2);
        let e2 = run(0.1);
        let order = (e1 / e2).log2();
        assert!(order > 4.5 && order < 6.5, "order {order}");
    }
}
