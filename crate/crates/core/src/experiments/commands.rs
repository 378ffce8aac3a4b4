use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{num, Artifacts, Check, Table};
use super::svg::{Axis, Plot, Series};
use crate::error::{Error, Result};
use crate::fit::{fit_decay, DecayModel};
use crate::initdata::generate;
use crate::linear::{
    envelope_scan, integrate_mode, loglog_slope, solve_toy, toy_exact, ModeState, PhysParams,
    ScanConfig, ScanResult,
};
use crate::multipliers::{audit_inequalities, default_audit_samples, MultiplierParams};
use crate::nonlinear::{
    extract_ndw, mass_integral, run_simulation, DiagnosticsConfig, RunOutcome, RunResult, SimState, Snapshot,
    StepperConfig,
};
use crate::ode::Dopri5Options;
use crate::residual::{w_equation_residual, ResidualOptions};
use crate::spectral::{FieldLabel, Grid, SpectralField, Transformer};

/// Run one experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Artifacts> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::MultiplierAudit => cmd_multiplier_audit(cfg),
        ExperimentKind::ToyOracle => cmd_toy_oracle(cfg),
        ExperimentKind::LinearScan => cmd_linear_scan(cfg),
        ExperimentKind::AmplificationScan => cmd_amplification_scan(cfg),
        ExperimentKind::NonlinearDecay => cmd_nonlinear_decay(cfg),
        ExperimentKind::ThresholdSweep => cmd_threshold_sweep(cfg),
        ExperimentKind::Convergence => cmd_convergence(cfg),
        ExperimentKind::ResidualCheck => cmd_residual_check(cfg),
    }
}

fn fmt_e(v: f64) -> String {
    format!("{v:.0e}")
}

pub fn cmd_multiplier_audit(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let a = &cfg.audit;
    let mut art = Artifacts::default();
    let mut table = Table::new(
        "audit.csv",
        &["nu", "check", "samples", "min_slack", "violations", "pass", "argmin_t", "argmin_k", "argmin_xi"],
    );
    let reports: Vec<_> = a
        .nu_list
        .par_iter()
        .map(|&nu| {
            let params = MultiplierParams { nu, ..cfg.multipliers };
            let samples = default_audit_samples(&params, a.kmax, a.t_windows * params.window(), a.n_critical, a.n_times);
            audit_inequalities(&samples, &params)
        })
        .collect::<Result<_>>()?;
    let mut slack_series = Vec::new();
    for (nu, rep) in a.nu_list.iter().zip(&reports) {
        for c in rep.checks.iter().chain(std::iter::once(&rep.phi_upper_reference)) {
            let (t, k, xi) = c.argmin.map(|s| (s.t, s.k, s.xi)).unwrap_or((f64::NAN, 0, f64::NAN));
            table.push(vec![
                num(*nu),
                c.name.clone(),
                c.samples.to_string(),
                num(c.min_slack),
                c.violations.to_string(),
                c.pass.to_string(),
                num(t),
                k.to_string(),
                num(xi),
            ]);
        }
        let worst = rep.checks.iter().map(|c| c.min_slack).fold(f64::INFINITY, f64::min);
        art.checks.push(Check::new(
            &format!("inequalities[nu={}]", fmt_e(*nu)),
            worst,
            "all checks with nonnegative slack",
            rep.all_pass,
        ));
        art.checks
            .push(Check::at_least(&format!("samples[nu={}]", fmt_e(*nu)), rep.samples as f64, 1e5));
        if let Some(c) = rep.check("decay_full") {
            slack_series.push((*nu, c.min_slack));
        }
    }
    art.set("reports", &reports);
    art.tables.push(table);
    art.plots.push(Plot {
        file: "decay_slack.svg".into(),
        title: "minimum slack of the full decay bound".into(),
        x_label: "nu".into(),
        y_label: "min slack".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: vec![Series {
            name: "decay_full".into(),
            points: slack_series,
        }],
    });
    Ok(art)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ToyCase {
    pub k: i64,
    pub xi: f64,
    pub nu: f64,
    /// `max_t |numeric − exact| / max_t |exact|`.
    pub error: f64,
}

pub fn toy_cases(cfg: &ExperimentConfig) -> Result<Vec<ToyCase>> {
    let toy = &cfg.toy;
    let opts = Dopri5Options {
        rtol: toy.rtol,
        atol: toy.rtol * 1e-6,
        ..Default::default()
    };
    let mut jobs = Vec::new();
    for &k in &toy.k_list {
        for c in toy.xi_over_k.0..=toy.xi_over_k.1 {
            for &nu in &toy.nu_list {
                jobs.push((k, (c * k) as f64, nu, c));
            }
        }
    }
    jobs.par_iter()
        .map(|&(k, xi, nu, c)| {
            let t_end = toy.horizon_factor * (c as f64 + cfg.multipliers.beta * nu.cbrt().recip());
            let n = toy.n_out.max(2);
            let times: Vec<f64> = (1..=n).map(|i| t_end * i as f64 / n as f64).collect();
            let d0 = num_complex::Complex64::new(1.0, 0.0);
            let numeric = solve_toy(k, xi, nu, d0, &times, &opts)?;
            let mut err: f64 = 0.0;
            let mut sup: f64 = 1.0;
            for (t, z) in times.iter().zip(&numeric) {
                let e = toy_exact(*t, k, xi, nu, d0)?;
                err = err.max((z - e).norm());
                sup = sup.max(e.norm());
            }
            Ok(ToyCase { k, xi, nu, error: err / sup })
        })
        .collect()
}

pub fn cmd_toy_oracle(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let cases = toy_cases(cfg)?;
    let mut art = Artifacts::default();
    let mut table = Table::new("toy.csv", &["k", "xi", "nu", "rel_error"]);
    for c in &cases {
        table.push(vec![c.k.to_string(), num(c.xi), num(c.nu), num(c.error)]);
    }
    let worst = cases.iter().map(|c| c.error).fold(0.0, f64::max);
    art.checks.push(Check::at_most("toy_max_rel_error", worst, 10.0 * cfg.toy.rtol));
    art.set("cases", cases.len());
    art.set("max_rel_error", worst);
    art.tables.push(table);
    Ok(art)
}

fn scan_tables(res: &ScanResult, tag: &str, art: &mut Artifacts) {
    let mut rates = Table::new(
        &format!("rates_{tag}.csv"),
        &["mu", "t_end", "rate", "rate_over_mu13", "fit_r2", "window_lo", "window_hi", "amp_w", "amp_nu", "failed_modes"],
    );
    let mut env = Table::new(&format!("envelopes_{tag}.csv"), &["mu", "t", "envelope_w", "envelope_nu"]);
    let mut modes = Table::new(&format!("modes_{tag}.csv"), &["mu", "k", "xi", "amp_w", "amp_nu", "error"]);
    let mut env_series = Vec::new();
    for s in &res.summaries {
        rates.push(vec![
            num(s.mu),
            num(s.t_end),
            num(s.rate),
            num(s.rate / s.mu.cbrt()),
            num(s.fit_r2),
            num(s.fit_window.0),
            num(s.fit_window.1),
            num(s.amp_w),
            num(s.amp_nu),
            s.failed_modes.to_string(),
        ]);
        for ((t, w), nu) in s.times.iter().zip(&s.envelope_w).zip(&s.envelope_nu) {
            env.push(vec![num(s.mu), num(*t), num(*w), num(*nu)]);
        }
        env_series.push(Series {
            name: format!("mu={}", fmt_e(s.mu)),
            points: s.times.iter().map(|t| t * s.mu.cbrt()).zip(s.envelope_w.iter().copied()).collect(),
        });
    }
    for r in &res.rows {
        modes.push(vec![
            num(r.mu),
            r.k.to_string(),
            num(r.xi),
            num(r.amp_w),
            num(r.amp_nu),
            r.error.clone().unwrap_or_default().replace(',', ";"),
        ]);
    }
    art.tables.extend([rates, env, modes]);
    art.plots.push(Plot {
        file: format!("envelopes_{tag}.svg"),
        title: "sup over xi of |W|".into(),
        x_label: "t mu^(1/3)".into(),
        y_label: "|W| envelope".into(),
        x_axis: Axis::Linear,
        y_axis: Axis::Log,
        series: env_series,
    });
}

pub fn cmd_linear_scan(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let res = envelope_scan(&cfg.scan)?;
    let mut art = Artifacts::default();
    for s in &res.summaries {
        art.checks
            .push(Check::at_least(&format!("rate_r2[mu={}]", fmt_e(s.mu)), s.fit_r2, cfg.min_rate_r2));
    }
    for w in res.summaries.windows(2) {
        art.checks.push(Check::within(
            &format!("rate_ratio[{}/{}]", fmt_e(w[0].mu), fmt_e(w[1].mu)),
            w[0].rate / w[1].rate,
            cfg.rate_ratio_band,
        ));
    }
    let mus: Vec<f64> = res.summaries.iter().map(|s| s.mu).collect();
    let rates: Vec<f64> = res.summaries.iter().map(|s| s.rate).collect();
    let amps: Vec<f64> = res.summaries.iter().map(|s| s.amp_nu).collect();
    let amp_slope = loglog_slope(&mus, &amps);
    art.checks.push(Check::within("amplification_slope", amp_slope, cfg.amplification_band));
    art.set("family", res.config.family.name());
    art.set("rate_slope", loglog_slope(&mus, &rates));
    art.set("amplification_slope", amp_slope);
    art.set("summaries", res.summaries.iter().map(|s| {
        serde_json::json!({"mu": s.mu, "rate": s.rate, "r2": s.fit_r2, "amp_w": s.amp_w, "amp_nu": s.amp_nu})
    }).collect::<Vec<_>>());
    scan_tables(&res, res.config.family.name(), &mut art);
    art.plots.push(Plot {
        file: "rate_scaling.svg".into(),
        title: "tail decay rate".into(),
        x_label: "mu".into(),
        y_label: "rate".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: vec![Series {
            name: "fitted".into(),
            points: mus.iter().copied().zip(rates.iter().copied()).collect(),
        }],
    });
    art.plots.push(Plot {
        file: "amplification.svg".into(),
        title: "sup_t (|N|^2 + |U|^2)^(1/2)".into(),
        x_label: "mu".into(),
        y_label: "amplification".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: vec![Series {
            name: res.config.family.name().into(),
            points: mus.iter().copied().zip(amps.iter().copied()).collect(),
        }],
    });
    Ok(art)
}

pub fn cmd_amplification_scan(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut art = Artifacts::default();
    let mut slopes = Table::new("amplification_slopes.csv", &["family", "slope"]);
    let mut series = Vec::new();
    let mut per_family = serde_json::Map::new();
    for &family in &cfg.families {
        let res = envelope_scan(&ScanConfig {
            family,
            ..cfg.scan.clone()
        })?;
        let mus: Vec<f64> = res.summaries.iter().map(|s| s.mu).collect();
        let amps: Vec<f64> = res.summaries.iter().map(|s| s.amp_nu).collect();
        let slope = loglog_slope(&mus, &amps);
        slopes.push(vec![family.name().into(), num(slope)]);
        art.checks.push(Check::within(
            &format!("amplification_slope[{}]", family.name()),
            slope,
            cfg.amplification_band,
        ));
        per_family.insert(family.name().into(), serde_json::json!({"slope": slope, "amp_nu": amps}));
        series.push(Series {
            name: family.name().into(),
            points: mus.into_iter().zip(amps).collect(),
        });
        scan_tables(&res, family.name(), &mut art);
    }
    art.set("families", per_family);
    art.tables.push(slopes);
    art.plots.push(Plot {
        file: "amplification.svg".into(),
        title: "sup_t (|N|^2 + |U|^2)^(1/2)".into(),
        x_label: "mu".into(),
        y_label: "amplification".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series,
    });
    Ok(art)
}

fn energy_multipliers(cfg: &ExperimentConfig, phys: &PhysParams) -> MultiplierParams {
    MultiplierParams {
        nu: phys.nu,
        ..cfg.multipliers
    }
}

/// Physical `max |N|` of a state.
pub fn sup_density(state: &SimState) -> f64 {
    let tr = Transformer::new(state.grid());
    tr.to_physical(&state.n).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Largest `|mass(t) − mass(0)|` and the conservation bound for it.
pub fn mass_drift(init: &SimState, run: &RunResult) -> (f64, f64) {
    let m0 = mass_integral(init);
    let drift = run.series.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max);
    (drift, 1e-10 * init.grid().area() * sup_density(init).max(1.0))
}

pub fn cmd_nonlinear_decay(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let grid = cfg.grid.build()?;
    let phys = cfg.physics.build()?;
    let mu = phys.mu;
    let d = &cfg.decay;
    let spec = crate::initdata::InitSpec {
        amplitude: d.amplitude_over_mu * mu,
        ..cfg.init
    };
    let init = generate(grid, phys, &spec)?;
    let t_end = d.horizon / mu;
    let stepper = StepperConfig {
        t_end,
        output_dt: t_end / d.n_out.max(1) as f64,
        ..cfg.stepper
    };
    let diag = DiagnosticsConfig {
        energy: true,
        multipliers: energy_multipliers(cfg, &phys),
        weights: cfg.weights,
        keep_states: false,
    };
    let run = run_simulation(&init, &stepper, &diag)?;
    let mut art = Artifacts::default();
    art.set("outcome", run.outcome);
    art.set("steps", run.steps);
    art.set("t_final", run.t_final);
    art.set("amplitude", spec.amplitude);
    art.set("events", &run.events);
    art.checks.push(Check::new(
        "outcome",
        run.t_final,
        "completed",
        run.outcome == RunOutcome::Completed,
    ));
    let (drift, bound) = mass_drift(&init, &run);
    art.checks.push(Check::at_most("mass_drift", drift, bound));

    let mut series = Table::new("series.csv", &[]);
    series.header = crate::nonlinear::DiagRow::csv_header().split(',').map(String::from).collect();
    for r in &run.series {
        series.push(r.csv_line().split(',').map(String::from).collect());
    }
    art.tables.push(series);
    let mut energy = Table::new("energy.csv", &[]);
    let csv = run.energy.to_csv();
    let mut lines = csv.lines();
    energy.header = lines.next().unwrap_or_default().split(',').map(String::from).collect();
    for l in lines {
        energy.push(l.split(',').map(String::from).collect());
    }
    art.tables.push(energy);
    art.raw.push((
        "final_state.json".into(),
        serde_json::to_string(&Snapshot::from_state(&run.final_state))?,
    ));

    if spec.amplitude == 0.0 {
        art.notes.push("zero amplitude: trivial run, fits skipped".into());
        return Ok(art);
    }

    let zero: Vec<(f64, f64)> = run
        .series
        .iter()
        .map(|r| (r.t, r.zero_mode_norm()))
        .filter(|p| p.1 > 0.0)
        .collect();
    let fit = fit_decay(&zero, DecayModel::Power { a: Some(mu), sigma: None }, None)?;
    art.checks.push(Check::within("zero_mode_exponent", fit.sigma, d.exponent_band));
    art.checks.push(Check::at_least("zero_mode_r2", fit.r2, d.min_r2));
    art.set("zero_mode_fit", &fit);

    let e0 = run.energy.rows.first().map(|r| r.e_total).unwrap_or(0.0);
    let sup = run.energy.sup_energy();
    let d_int = run.energy.rows.last().map(|r| r.d_integral).unwrap_or(0.0);
    art.checks.push(Check::new(
        "energy_sup_ratio",
        sup / e0,
        format!("<= {}", d.energy_factor),
        sup <= d.energy_factor * e0,
    ));
    art.checks.push(Check::new(
        "dissipation_integral_over_e0",
        d_int / e0,
        "finite",
        (d_int / e0).is_finite(),
    ));
    art.set("energy_sup_ratio", sup / e0);
    art.set("dissipation_integral_over_e0", d_int / e0);

    // non-zero modes: (1+t)^{±1/2} e^{-c t}, reported per unknown
    let mut nonzero_fits = serde_json::Map::new();
    for (name, sigma, pick) in [
        ("nonzero_N", 0.5, (|r: &crate::nonlinear::DiagRow| r.nonzero_n) as fn(&_) -> f64),
        ("nonzero_W", -0.5, |r: &crate::nonlinear::DiagRow| r.nonzero_w),
    ] {
        let pts: Vec<(f64, f64)> = run
            .series
            .iter()
            .map(|r| (r.t, pick(r)))
            .take_while(|p| p.1 > 0.0)
            .collect();
        match fit_decay(&pts, DecayModel::ExpRate { sigma: Some(sigma) }, None) {
            Ok(f) => {
                let rate = f.rate.unwrap_or(f64::NAN);
                art.exploratory.push(Check::new(
                    &format!("{name}_rate_over_mu13"),
                    rate / mu.cbrt(),
                    "> 0",
                    rate > 0.0,
                ));
                nonzero_fits.insert(name.into(), serde_json::to_value(&f)?);
            }
            Err(e) => {
                art.notes.push(format!("{name}: fit skipped ({e})"));
            }
        }
    }
    art.set("nonzero_fits", nonzero_fits);

    let scale = |t: f64| 1.0 + mu * t;
    art.plots.push(Plot {
        file: "zero_mode.svg".into(),
        title: "zero-mode norm".into(),
        x_label: "1 + mu t".into(),
        y_label: "|(P0 dy N, P0 D, P0 dy Omega)|".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: vec![
            Series {
                name: "measured".into(),
                points: zero.iter().map(|&(t, v)| (scale(t), v)).collect(),
            },
            Series {
                name: format!("fit {:.3}", fit.sigma),
                points: zero
                    .iter()
                    .map(|&(t, _)| (scale(t), fit.prefactor * scale(t).powf(fit.sigma)))
                    .collect(),
            },
        ],
    });
    art.plots.push(Plot {
        file: "nonzero_modes.svg".into(),
        title: "non-zero modes".into(),
        x_label: "t".into(),
        y_label: "norm".into(),
        x_axis: Axis::Linear,
        y_axis: Axis::Log,
        series: vec![
            Series {
                name: "N".into(),
                points: run.series.iter().map(|r| (r.t, r.nonzero_n)).collect(),
            },
            Series {
                name: "W".into(),
                points: run.series.iter().map(|r| (r.t, r.nonzero_w)).collect(),
            },
        ],
    });
    art.plots.push(Plot {
        file: "energy.svg".into(),
        title: "energy functional".into(),
        x_label: "t".into(),
        y_label: "E(t) / E(0)".into(),
        x_axis: Axis::Linear,
        y_axis: Axis::Log,
        series: vec![Series {
            name: "E".into(),
            points: run.energy.rows.iter().map(|r| (r.t, r.e_total / e0)).collect(),
        }],
    });
    Ok(art)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

/// Classify one run: stable iff it completes with `sup E ≤ factor · E(0)`.
pub fn classify(run: &RunResult, factor: f64) -> Stability {
    let e0 = run.energy.rows.first().map(|r| r.e_total).unwrap_or(0.0);
    if run.outcome == RunOutcome::Completed && run.energy.sup_energy() <= factor * e0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepCell {
    pub mu: f64,
    /// Geometric mean of the final bracket; `None` when the bracket is invalid.
    pub threshold: Option<f64>,
    pub bracket: (f64, f64),
    pub trials: Vec<(f64, Stability, RunOutcome)>,
    pub note: Option<String>,
}

fn sweep_cell(cfg: &ExperimentConfig, mu: f64) -> Result<SweepCell> {
    let s = &cfg.sweep;
    let grid = cfg.grid.build()?;
    let ratio = cfg.physics.mu_prime / cfg.physics.mu;
    let phys = PhysParams::new(mu, ratio * mu, cfg.physics.gamma)?;
    let t_end = s.t_scale * mu.cbrt().recip();
    let stepper = StepperConfig {
        t_end,
        output_dt: t_end / 40.0,
        ..cfg.stepper
    };
    let diag = DiagnosticsConfig {
        energy: true,
        multipliers: energy_multipliers(cfg, &phys),
        weights: cfg.weights,
        keep_states: false,
    };
    let mut trials = Vec::new();
    let mut trial = |amp: f64| -> Result<Stability> {
        let init = generate(grid, phys, &crate::initdata::InitSpec { amplitude: amp, ..cfg.init })?;
        let run = run_simulation(&init, &stepper, &diag)?;
        let c = classify(&run, s.energy_factor);
        trials.push((amp, c, run.outcome));
        Ok(c)
    };
    let (mut lo, mut hi) = s.amplitude_bracket;
    let mut note = None;
    if trial(lo)? == Stability::Unstable {
        note = Some("lower bracket already unstable".into());
    } else if trial(hi)? == Stability::Stable {
        note = Some("upper bracket still stable".into());
    } else {
        for _ in 0..s.bisection_steps {
            let mid = (lo * hi).sqrt();
            match trial(mid)? {
                Stability::Stable => lo = mid,
                Stability::Unstable => hi = mid,
            }
        }
    }
    Ok(SweepCell {
        mu,
        threshold: note.is_none().then(|| (lo * hi).sqrt()),
        bracket: (lo, hi),
        trials,
        note,
    })
}

/// Least-squares line `y = a + b x` with the standard error of `b`.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let se = if n > 2 {
        let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some((a, b, se))
}

/// Two-sided 95% Student t quantile.
fn t95(dof: usize) -> f64 {
    const T: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];
    if dof == 0 {
        f64::NAN
    } else {
        T.get(dof - 1).copied().unwrap_or(1.96)
    }
}

pub fn cmd_threshold_sweep(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let cells: Vec<SweepCell> = cfg
        .sweep
        .mu_list
        .par_iter()
        .map(|&mu| sweep_cell(cfg, mu))
        .collect::<Result<_>>()?;
    let mut art = Artifacts::default();
    art.notes.push(format!(
        "stable iff the run completes and sup_t E(t) <= {} E(0); unstable on density violation, blowup or energy growth",
        cfg.sweep.energy_factor
    ));
    let mut table = Table::new("thresholds.csv", &["mu", "threshold", "bracket_lo", "bracket_hi", "note"]);
    let mut trials = Table::new("trials.csv", &["mu", "amplitude", "class", "outcome"]);
    for c in &cells {
        table.push(vec![
            num(c.mu),
            c.threshold.map(num).unwrap_or_else(|| "nan".into()),
            num(c.bracket.0),
            num(c.bracket.1),
            c.note.clone().unwrap_or_default(),
        ]);
        for (a, s, o) in &c.trials {
            trials.push(vec![
                num(c.mu),
                num(*a),
                format!("{s:?}").to_lowercase(),
                o.name().into(),
            ]);
        }
    }
    let found: Vec<(f64, f64)> = cells.iter().filter_map(|c| Some((c.mu, c.threshold?))).collect();
    let mut sorted = found.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = found.len() == cells.len() && sorted.windows(2).all(|w| w[1].1 >= w[0].1);
    art.exploratory.push(Check::new(
        "threshold_monotone",
        found.len() as f64,
        "threshold non-decreasing in mu",
        monotone,
    ));
    let xs: Vec<f64> = found.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = found.iter().map(|p| p.1.ln()).collect();
    match line_fit(&xs, &ys) {
        Some((_, slope, se)) => {
            let half = t95(found.len().saturating_sub(2)) * se;
            art.exploratory
                .push(Check::within("threshold_slope", slope, cfg.sweep.target_band));
            art.set("slope", slope);
            art.set("slope_ci95", (slope - half, slope + half));
        }
        None => {
            art.notes.push("slope undefined: fewer than two thresholds".into());
            art.set("slope", serde_json::Value::Null);
        }
    }
    art.set("cells", &cells);
    art.tables.push(table);
    art.tables.push(trials);
    art.plots.push(Plot {
        file: "thresholds.svg".into(),
        title: "stability threshold".into(),
        x_label: "mu".into(),
        y_label: "threshold amplitude".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: vec![Series {
            name: "bisection".into(),
            points: sorted,
        }],
    });
    Ok(art)
}

fn state_distance(a: &SimState, b: &SimState) -> Result<f64> {
    let n = a.n.sub(&b.n)?.norm();
    let v1 = a.v1.sub(&b.v1)?.norm();
    let v2 = a.v2.sub(&b.v2)?.norm();
    Ok((n * n + v1 * v1 + v2 * v2).sqrt())
}

fn state_norm(a: &SimState) -> f64 {
    (a.n.norm().powi(2) + a.v1.norm().powi(2) + a.v2.norm().powi(2)).sqrt()
}

fn advance(init: &SimState, stepper: &StepperConfig) -> Result<SimState> {
    let diag = DiagnosticsConfig {
        energy: false,
        ..Default::default()
    };
    let run = run_simulation(init, stepper, &diag)?;
    match run.outcome {
        RunOutcome::Completed => Ok(run.final_state),
        o => Err(Error::RunFailed(format!("reference run ended with {}", o.name()))),
    }
}

/// Observed temporal order from fixed steps `dt, dt/2, dt/4`.
pub fn temporal_order(cfg: &ExperimentConfig) -> Result<(f64, [f64; 2])> {
    let c = &cfg.convergence;
    let grid = cfg.grid.build()?;
    let phys = cfg.physics.build()?;
    let init = generate(grid, phys, &crate::initdata::InitSpec { amplitude: c.amplitude, ..cfg.init })?;
    let states = [c.dt, c.dt / 2.0, c.dt / 4.0]
        .iter()
        .map(|&h| {
            advance(
                &init,
                &StepperConfig {
                    t_end: c.t_end,
                    output_dt: c.t_end,
                    fixed_dt: Some(h),
                    retire_rel: 0.0,
                    ..cfg.stepper
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let e1 = state_distance(&states[0], &states[1])?;
    let e2 = state_distance(&states[1], &states[2])?;
    Ok(((e1 / e2).log2(), [e1, e2]))
}

/// Analytic data with geometric Fourier decay in `x₁` on a grid with `kmax`.
fn analytic_state(kmax: usize, cfg: &ExperimentConfig, amp: f64) -> Result<SimState> {
    let g = cfg.grid;
    let grid = Grid::new(kmax, g.my, g.ly)?;
    let phys = cfg.physics.build()?;
    let tr = Transformer::new(grid);
    let xs = grid.x_coords();
    let ys = grid.y_coords();
    let w = cfg.init.width;
    let yc = 0.5 * g.ly;
    let field = |phase: f64, shift: f64, label| {
        let v = ndarray::Array2::from_shape_fn(grid.shape(), |(i, j)| {
            let y = ys[j] - yc - shift;
            let env = (-0.5 * y * y / (w * w)).exp();
            amp * env * (1.0 / (2.0 - (xs[i] + phase).cos()) - 1.0 / 3f64.sqrt())
        });
        let mut f: SpectralField = tr.from_physical(&v, label);
        f.apply_mask();
        f.symmetrize();
        f
    };
    let mut s = SimState::zeros(grid, phys);
    s.n = field(0.0, 0.0, FieldLabel::N);
    s.v1 = field(1.0, 0.3 * w, FieldLabel::V1);
    s.v2 = field(2.0, -0.3 * w, FieldLabel::V2);
    Ok(s)
}

/// Distance between states on grids differing only in `kmax`; modes missing
/// on the coarser grid count as zero.
fn cross_grid_distance(coarse: &SimState, fine: &SimState) -> f64 {
    let gc = coarse.grid();
    let gf = fine.grid();
    let mut s = 0.0;
    for (fc, ff) in [(&coarse.n, &fine.n), (&coarse.v1, &fine.v1), (&coarse.v2, &fine.v2)] {
        for ((ix, iy), z) in ff.coeffs.indexed_iter() {
            let k = gf.k_at(ix);
            let c = match gc.ix_of(k) {
                Some(jx) => fc.coeffs[[jx, iy]],
                None => num_complex::Complex64::new(0.0, 0.0),
            };
            s += (z - c).norm_sqr();
        }
    }
    (s * gf.dxi()).sqrt()
}

/// Errors against the finest `kmax` of the ladder, with successive reductions.
pub fn spatial_convergence(cfg: &ExperimentConfig) -> Result<Vec<(usize, f64)>> {
    let c = &cfg.convergence;
    let states = c
        .kmax_list
        .par_iter()
        .map(|&k| {
            let init = analytic_state(k, cfg, c.amplitude)?;
            advance(
                &init,
                &StepperConfig {
                    t_end: c.spatial_t_end,
                    output_dt: c.spatial_t_end,
                    fixed_dt: Some(c.spatial_dt),
                    retire_rel: 0.0,
                    ..cfg.stepper
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = states.last().ok_or(Error::EmptySamples)?;
    let scale = state_norm(reference);
    Ok(c.kmax_list
        .iter()
        .zip(&states)
        .take(states.len() - 1)
        .map(|(&k, s)| (k, cross_grid_distance(s, reference) / scale))
        .collect())
}

/// Largest relative per-time deviation of the nonlinear `(N, D, W)` from
/// mode-by-mode linear integration.
pub fn linear_consistency(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64)>> {
    let c = &cfg.convergence;
    let grid = cfg.grid.build()?;
    let phys = cfg.physics.build()?;
    let init = generate(grid, phys, &crate::initdata::InitSpec { amplitude: c.linear_amplitude, ..cfg.init })?;
    let stepper = StepperConfig {
        t_end: c.linear_t_end,
        output_dt: c.linear_t_end / 10.0,
        ..cfg.stepper
    };
    let run = run_simulation(
        &init,
        &stepper,
        &DiagnosticsConfig {
            energy: false,
            keep_states: true,
            ..Default::default()
        },
    )?;
    if run.outcome != RunOutcome::Completed {
        return Err(Error::RunFailed(format!("consistency run ended with {}", run.outcome.name())));
    }
    let ndw: Vec<_> = run.states.iter().map(extract_ndw).collect();
    let times: Vec<f64> = run.states.iter().skip(1).map(|s| s.t).collect();
    let opts = Dopri5Options {
        rtol: 1e-10,
        atol: 1e-22,
        ..Default::default()
    };
    let modes: Vec<_> = grid.modes().filter(|m| grid.retained(m.ix, m.iy)).collect();
    let trajectories = modes
        .par_iter()
        .map(|m| {
            let q0 = &ndw[0];
            let s0 = ModeState::new(
                m.k,
                m.xi,
                0.0,
                q0.n.coeffs[[m.ix, m.iy]],
                q0.d.coeffs[[m.ix, m.iy]],
                q0.w.coeffs[[m.ix, m.iy]],
            );
            integrate_mode(&s0, &times, &opts, &phys)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (i, t) in times.iter().enumerate() {
        let q = &ndw[i + 1];
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (m, tr) in modes.iter().zip(&trajectories) {
            let lin = tr.samples[i];
            let (ix, iy) = (m.ix, m.iy);
            diff += (q.n.coeffs[[ix, iy]] - lin.n).norm_sqr()
                + (q.d.coeffs[[ix, iy]] - lin.d).norm_sqr()
                + (q.w.coeffs[[ix, iy]] - lin.w).norm_sqr();
            norm += lin.n.norm_sqr() + lin.d.norm_sqr() + lin.w.norm_sqr();
        }
        out.push((*t, (diff / norm).sqrt()));
    }
    Ok(out)
}

pub fn cmd_convergence(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let c = &cfg.convergence;
    let mut art = Artifacts::default();

    let (order, errs) = temporal_order(cfg)?;
    art.checks.push(Check::within("temporal_order", order, c.order_band));
    art.set("temporal", serde_json::json!({"order": order, "differences": errs}));

    let spatial = spatial_convergence(cfg)?;
    let mut sp = Table::new("spatial.csv", &["kmax", "rel_error"]);
    for (k, e) in &spatial {
        sp.push(vec![k.to_string(), num(*e)]);
    }
    for w in spatial.windows(2) {
        art.checks.push(Check::at_least(
            &format!("spatial_reduction[{}->{}]", w[0].0, w[1].0),
            w[0].1 / w[1].1,
            c.min_reduction,
        ));
    }
    art.set("spatial", &spatial);
    art.tables.push(sp);
    art.plots.push(Plot {
        file: "spatial.svg".into(),
        title: "spatial convergence".into(),
        x_label: "Kmax".into(),
        y_label: "relative error".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: vec![Series {
            name: "error".into(),
            points: spatial.iter().map(|&(k, e)| (k as f64, e)).collect(),
        }],
    });

    let lin = linear_consistency(cfg)?;
    let worst = lin.iter().map(|p| p.1).fold(0.0, f64::max);
    art.checks.push(Check::at_most("linear_consistency", worst, c.linear_tolerance));
    let mut lt = Table::new("linear_consistency.csv", &["t", "rel_error"]);
    for (t, e) in &lin {
        lt.push(vec![num(*t), num(*e)]);
    }
    art.tables.push(lt);

    let toy = toy_cases(cfg)?;
    let toy_worst = toy.iter().map(|c| c.error).fold(0.0, f64::max);
    art.checks.push(Check::at_most("toy_max_rel_error", toy_worst, 10.0 * cfg.toy.rtol));

    let res = residual_study(cfg)?;
    art.checks.push(Check::at_least("residual_order", res.min_order, cfg.residual.min_order));
    art.set("residual", &res);
    Ok(art)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ResidualStudy {
    /// `(sample dt, max residual, max residual / ‖∂ₜW‖)` over the common times.
    pub levels: Vec<(f64, f64, f64)>,
    pub orders: Vec<f64>,
    pub min_order: f64,
    /// Finest level with the forcing left out.
    pub ablation: f64,
}

pub fn residual_study(cfg: &ExperimentConfig) -> Result<ResidualStudy> {
    let r = &cfg.residual;
    if r.sample_dts.len() < 2 {
        return Err(Error::Config("residual study needs at least two sampling intervals".into()));
    }
    let grid = cfg.grid.build()?;
    let phys = cfg.physics.build()?;
    let init = generate(grid, phys, &crate::initdata::InitSpec { amplitude: r.amplitude, ..cfg.init })?;
    let samples = r
        .sample_dts
        .par_iter()
        .map(|&h| {
            let stepper = StepperConfig {
                t_end: r.t_end,
                output_dt: h,
                dt_max: cfg.stepper.dt_max.min(h),
                retire_rel: 0.0,
                ..cfg.stepper
            };
            let run = run_simulation(
                &init,
                &stepper,
                &DiagnosticsConfig {
                    energy: false,
                    keep_states: true,
                    ..Default::default()
                },
            )?;
            if run.outcome != RunOutcome::Completed {
                return Err(Error::RunFailed(format!("residual run ended with {}", run.outcome.name())));
            }
            let full = w_equation_residual(&run.states, &ResidualOptions::default())?;
            let off = w_equation_residual(
                &run.states,
                &ResidualOptions {
                    include_f3: false,
                    ..Default::default()
                },
            )?;
            Ok((full, off))
        })
        .collect::<Result<Vec<_>>>()?;
    // times shared by every level are the interior samples of the coarsest
    let common: Vec<f64> = samples[0].0.iter().map(|s| s.t).collect();
    let at = |set: &[crate::residual::ResidualSample], t: f64| {
        set.iter().find(|s| (s.t - t).abs() < 1e-9).copied()
    };
    let mut levels = Vec::new();
    let mut ablation = 0.0;
    for (i, (h, (full, off))) in r.sample_dts.iter().zip(&samples).enumerate() {
        let mut res: f64 = 0.0;
        let mut rel: f64 = 0.0;
        let mut abl: f64 = 0.0;
        for &t in &common {
            let s = at(full, t).ok_or(Error::EmptySamples)?;
            res = res.max(s.residual);
            rel = rel.max(s.residual / s.dt_w);
            abl = abl.max(at(off, t).ok_or(Error::EmptySamples)?.residual);
        }
        if i + 1 == samples.len() {
            ablation = abl;
        }
        levels.push((*h, res, rel));
    }
    let orders: Vec<f64> = levels
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ResidualStudy {
        levels,
        orders,
        min_order,
        ablation,
    })
}

pub fn cmd_residual_check(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let study = residual_study(cfg)?;
    let mut art = Artifacts::default();
    let finest = *study.levels.last().expect("at least two levels");
    art.checks.push(Check::at_least("residual_order", study.min_order, cfg.residual.min_order));
    art.checks
        .push(Check::at_most("residual_relative", finest.2, cfg.residual.max_relative));
    art.exploratory.push(Check::at_least(
        "ablation_ratio",
        study.ablation / finest.1,
        10.0,
    ));
    let mut t = Table::new("residual.csv", &["sample_dt", "max_residual", "max_relative"]);
    for (h, r, rel) in &study.levels {
        t.push(vec![num(*h), num(*r), num(*rel)]);
    }
    art.tables.push(t);
    art.plots.push(Plot {
        file: "residual.svg".into(),
        title: "W-equation residual".into(),
        x_label: "sampling interval".into(),
        y_label: "max residual".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: vec![Series {
            name: "residual".into(),
            points: study.levels.iter().map(|l| (l.0, l.1)).collect(),
        }],
    });
    art.set("study", &study);
    Ok(art)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_exact() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x).collect();
        let (a, b, se) = line_fit(&xs, &ys).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && se < 1e-12);
        assert!(line_fit(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn audit_rejects_small_beta() {
        let mut cfg = ExperimentConfig::for_kind(ExperimentKind::MultiplierAudit);
        cfg.multipliers.beta = 3.0;
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_amplitude_decay_is_trivial() {
        let mut cfg = ExperimentConfig::for_kind(ExperimentKind::NonlinearDecay);
        cfg.grid = super::super::config::GridSpec { kmax: 4, my: 32, ly: 16.0 };
        cfg.init.width = 1.0;
        cfg.decay.amplitude_over_mu = 0.0;
        cfg.decay.horizon = 0.1;
        let art = run_experiment(&cfg).unwrap();
        assert!(art.pass());
        assert!(art.notes.iter().any(|n| n.contains("trivial")));
    }

    #[test]
    fn single_mu_sweep_has_no_slope() {
        let mut cfg = ExperimentConfig::for_kind(ExperimentKind::ThresholdSweep);
        cfg.grid = super::super::config::GridSpec { kmax: 4, my: 32, ly: 16.0 };
        cfg.init.width = 1.0;
        cfg.sweep.mu_list = vec![1e-2];
        cfg.sweep.bisection_steps = 1;
        cfg.sweep.t_scale = 0.5;
        let art = run_experiment(&cfg).unwrap();
        assert!(art.check("threshold_slope").is_none());
        assert!(art.notes.iter().any(|n| n.contains("undefined")));
    }
}
