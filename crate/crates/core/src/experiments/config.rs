use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::energy::EnergyWeights;
use crate::error::{Error, Result};
use crate::initdata::InitSpec;
use crate::linear::{InitFamily, PhysParams, ScanConfig};
use crate::multipliers::MultiplierParams;
use crate::nonlinear::StepperConfig;
use crate::spectral::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MultiplierAudit,
    ToyOracle,
    LinearScan,
    AmplificationScan,
    NonlinearDecay,
    ThresholdSweep,
    Convergence,
    ResidualCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::MultiplierAudit,
        ExperimentKind::ToyOracle,
        ExperimentKind::LinearScan,
        ExperimentKind::AmplificationScan,
        ExperimentKind::NonlinearDecay,
        ExperimentKind::ThresholdSweep,
        ExperimentKind::Convergence,
        ExperimentKind::ResidualCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::MultiplierAudit => "multiplier_audit",
            ExperimentKind::ToyOracle => "toy_oracle",
            ExperimentKind::LinearScan => "linear_scan",
            ExperimentKind::AmplificationScan => "amplification_scan",
            ExperimentKind::NonlinearDecay => "nonlinear_decay",
            ExperimentKind::ThresholdSweep => "threshold_sweep",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::ResidualCheck => "residual_check",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Physical parameters as configured; `ν` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysSpec {
    pub mu: f64,
    pub mu_prime: f64,
    pub gamma: f64,
}

impl Default for PhysSpec {
    fn default() -> Self {
        PhysSpec {
            mu: 1e-2,
            mu_prime: 5e-3,
            gamma: 1.4,
        }
    }
}

impl PhysSpec {
    pub fn build(&self) -> Result<PhysParams> {
        PhysParams::new(self.mu, self.mu_prime, self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub kmax: usize,
    pub my: usize,
    pub ly: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            kmax: 16,
            my: 128,
            ly: 64.0,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.kmax, self.my, self.ly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSpec {
    pub nu_list: Vec<f64>,
    pub kmax: i64,
    /// Time horizon in units of the window length `βν^{-1/3}`.
    pub t_windows: f64,
    pub n_critical: usize,
    pub n_times: usize,
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec {
            nu_list: vec![1.0, 1e-2, 1e-4],
            kmax: 4,
            t_windows: 3.0,
            n_critical: 80,
            n_times: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySpec {
    pub k_list: Vec<i64>,
    /// Critical times `ξ/k` sampled as integers in `[lo, hi]`.
    pub xi_over_k: (i64, i64),
    pub nu_list: Vec<f64>,
    pub rtol: f64,
    /// Final time is `horizon_factor · (ξ/k + β ν^{-1/3})`.
    pub horizon_factor: f64,
    pub n_out: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            k_list: vec![1, 2, 3],
            xi_over_k: (-5, 20),
            nu_list: vec![1e-1, 1e-3],
            rtol: 1e-8,
            horizon_factor: 2.0,
            n_out: 200,
        }
    }
}

/// Horizon and amplitude of the small-data decay run, in units of `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySpec {
    /// Final time is `horizon / μ`.
    pub horizon: f64,
    /// `H⁴` amplitude is `amplitude_over_mu · μ`.
    pub amplitude_over_mu: f64,
    /// Number of output samples.
    pub n_out: usize,
    pub exponent_band: (f64, f64),
    pub min_r2: f64,
    pub energy_factor: f64,
}

impl Default for DecaySpec {
    fn default() -> Self {
        DecaySpec {
            horizon: 20.0,
            amplitude_over_mu: 1e-4,
            n_out: 200,
            exponent_band: (-0.7, -0.3),
            min_r2: 0.85,
            energy_factor: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub mu_list: Vec<f64>,
    /// Initial amplitude bracket `[lo, hi]` in `H⁴` norm.
    pub amplitude_bracket: (f64, f64),
    pub bisection_steps: usize,
    /// Final time is `t_scale · μ^{-1/3}`.
    pub t_scale: f64,
    pub energy_factor: f64,
    pub target_band: (f64, f64),
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            mu_list: vec![3e-3, 1e-3, 3e-4],
            amplitude_bracket: (0.1, 1000.0),
            bisection_steps: 6,
            t_scale: 4.0,
            energy_factor: 4.0,
            target_band: (0.7, 1.3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    /// Largest fixed step of the temporal study; halved twice.
    pub dt: f64,
    pub t_end: f64,
    pub amplitude: f64,
    pub order_band: (f64, f64),
    /// `Kmax` ladder of the spatial study; the last entry is the reference.
    pub kmax_list: Vec<usize>,
    pub spatial_t_end: f64,
    pub spatial_dt: f64,
    pub min_reduction: f64,
    /// Linear consistency run.
    pub linear_amplitude: f64,
    pub linear_t_end: f64,
    pub linear_tolerance: f64,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            dt: 0.1,
            t_end: 2.0,
            amplitude: 0.05,
            order_band: (3.5, 4.5),
            kmax_list: vec![8, 16, 32, 64],
            spatial_t_end: 1.0,
            spatial_dt: 0.005,
            min_reduction: 1e2,
            linear_amplitude: 1e-6,
            linear_t_end: 10.0,
            linear_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualSpec {
    /// Sampling intervals, coarse to fine.
    pub sample_dts: Vec<f64>,
    pub t_end: f64,
    pub amplitude: f64,
    pub min_order: f64,
    pub max_relative: f64,
}

impl Default for ResidualSpec {
    fn default() -> Self {
        ResidualSpec {
            sample_dts: vec![0.02, 0.01, 0.005],
            t_end: 1.0,
            amplitude: 1e-3,
            min_order: 1.8,
            max_relative: 1e-3,
        }
    }
}

/// Everything one experiment needs. Sections unused by an experiment are
/// still echoed in its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub physics: PhysSpec,
    pub grid: GridSpec,
    pub multipliers: MultiplierParams,
    pub weights: EnergyWeights,
    pub stepper: StepperConfig,
    pub init: InitSpec,
    pub audit: AuditSpec,
    pub toy: ToySpec,
    pub scan: ScanConfig,
    /// Families covered by the amplification scan.
    pub families: Vec<InitFamily>,
    pub amplification_band: (f64, f64),
    pub rate_ratio_band: (f64, f64),
    pub min_rate_r2: f64,
    pub decay: DecaySpec,
    pub sweep: SweepSpec,
    pub convergence: ConvergenceSpec,
    pub residual: ResidualSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::for_kind(ExperimentKind::MultiplierAudit)
    }
}

impl ExperimentConfig {
    /// Defaults tuned per experiment.
    pub fn for_kind(kind: ExperimentKind) -> Self {
        let tenth_root = 10f64.powf(1.0 / 3.0);
        let mut cfg = ExperimentConfig {
            experiment: kind,
            physics: PhysSpec::default(),
            grid: GridSpec::default(),
            multipliers: MultiplierParams::default(),
            weights: EnergyWeights::default(),
            stepper: StepperConfig::default(),
            init: InitSpec::default(),
            audit: AuditSpec::default(),
            toy: ToySpec::default(),
            scan: ScanConfig {
                family: InitFamily::Equipartition,
                ..Default::default()
            },
            families: vec![InitFamily::WOnly, InitFamily::NOnly, InitFamily::Equipartition],
            amplification_band: (-1.0 / 6.0 - 0.07, -1.0 / 6.0 + 0.07),
            rate_ratio_band: (0.65 * tenth_root, 1.35 * tenth_root),
            min_rate_r2: 0.9,
            decay: DecaySpec::default(),
            sweep: SweepSpec::default(),
            convergence: ConvergenceSpec::default(),
            residual: ResidualSpec::default(),
        };
        match kind {
            ExperimentKind::ThresholdSweep => {
                cfg.grid = GridSpec {
                    kmax: 8,
                    my: 64,
                    ly: 32.0,
                };
                cfg.init.width = 2.0;
            }
            ExperimentKind::Convergence | ExperimentKind::ResidualCheck => {
                cfg.grid = GridSpec {
                    kmax: 4,
                    my: 32,
                    ly: 16.0,
                };
                cfg.init.width = 1.0;
            }
            _ => {}
        }
        cfg
    }

    /// Defaults for `kind`, then `file` merged over them, then `--set`
    /// overrides applied by dotted path.
    pub fn load(kind: ExperimentKind, file: Option<&Value>, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(ExperimentConfig::for_kind(kind))?;
        if let Some(f) = file {
            if let Some(e) = f.get("experiment") {
                let named: ExperimentKind = serde_json::from_value(e.clone())
                    .map_err(|e| Error::Config(format!("experiment: {e}")))?;
                if named != kind {
                    return Err(Error::Config(format!(
                        "config file is for '{}' but '{}' was requested",
                        named.name(),
                        kind.name()
                    )));
                }
            }
            merge(&mut v, f);
        }
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut v, path, value)?;
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_file(kind: ExperimentKind, path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                Some(serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)
            }
            None => None,
        };
        ExperimentConfig::load(kind, file.as_ref(), overrides)
    }

    /// Parameter checks of every section the experiment uses.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        use ExperimentKind::*;
        match self.experiment {
            MultiplierAudit => {
                self.multipliers.validate().map_err(cfg_err)?;
                for &nu in &self.audit.nu_list {
                    MultiplierParams { nu, ..self.multipliers }.validate().map_err(cfg_err)?;
                }
            }
            ToyOracle => {
                if self.toy.k_list.contains(&0) {
                    return Err(Error::Config("toy oracle needs k != 0".into()));
                }
                let beta = self.multipliers.beta;
                let positive = |nu: f64| self.toy.xi_over_k.0 as f64 + beta * nu.cbrt().recip() > 0.0;
                if !(self.toy.horizon_factor > 0.0) || !self.toy.nu_list.iter().all(|&nu| nu > 0.0 && positive(nu)) {
                    return Err(Error::Config("toy horizon must be positive for every case".into()));
                }
            }
            LinearScan | AmplificationScan => {
                if self.scan.mu_list.len() < 2 {
                    return Err(Error::Config("scan needs at least two viscosities".into()));
                }
            }
            NonlinearDecay | ThresholdSweep | Convergence | ResidualCheck => {
                let grid = self.grid.build().map_err(cfg_err)?;
                self.physics.build().map_err(cfg_err)?;
                self.stepper.validate().map_err(cfg_err)?;
                self.init.validate(&grid)?;
                self.weights.validate().map_err(cfg_err)?;
                self.multipliers.validate().map_err(cfg_err)?;
            }
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if !map.contains_key(*part) {
                    return Err(Error::Config(format!("unknown key '{path}'")));
                }
                map.get_mut(*part).expect("checked")
            }
            Value::Array(arr) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config(format!("'{part}' in '{path}' is not an index")))?;
                arr.get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range in '{path}'")))?
            }
            _ => return Err(Error::Config(format!("'{path}' descends into a scalar"))),
        };
        if last {
            *cur = value;
            return Ok(());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_round_trip() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::load(kind, None, &[]).unwrap();
            assert_eq!(cfg, ExperimentConfig::for_kind(kind));
            assert_eq!(kind.name().parse::<ExperimentKind>().unwrap(), kind);
        }
    }

    #[test]
    fn dotted_overrides() {
        let cfg = ExperimentConfig::load(
            ExperimentKind::NonlinearDecay,
            None,
            &[
                "physics.mu=0.02".into(),
                "init.family=density".into(),
                "scan.mu_list.1=5e-4".into(),
                "stepper.dealias=false".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.physics.mu, 0.02);
        assert_eq!(cfg.init.family, crate::initdata::DataFamily::Density);
        assert_eq!(cfg.scan.mu_list[1], 5e-4);
        assert!(!cfg.stepper.dealias);
    }

    #[test]
    fn file_merges_over_defaults() {
        let file = json!({"experiment": "linear_scan", "scan": {"n_xi": 33}});
        let cfg = ExperimentConfig::load(ExperimentKind::LinearScan, Some(&file), &[]).unwrap();
        assert_eq!(cfg.scan.n_xi, 33);
        assert_eq!(cfg.scan.mu_list, vec![1e-2, 1e-3, 1e-4]);
        assert!(ExperimentConfig::load(ExperimentKind::ToyOracle, Some(&file), &[]).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let k = ExperimentKind::MultiplierAudit;
        assert!(ExperimentConfig::load(k, None, &["multipliers.beta=3".into()]).is_err());
        assert!(ExperimentConfig::load(k, None, &["nope=1".into()]).is_err());
        assert!(ExperimentConfig::load(k, None, &["audit".into()]).is_err());
        let file = json!({"grid": {"kmax": 4, "extra": 1}});
        assert!(ExperimentConfig::load(k, Some(&file), &[]).is_err());
    }
}
