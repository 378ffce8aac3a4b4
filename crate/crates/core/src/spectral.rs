//! Truncated Fourier representation on `T × [0, Ly)` in the sheared frame.
//!
//! Coefficients are stored with the continuous-transform normalization
//!
//! ```text
//! q̂(k, ξ) = (2π)^-2 ∫∫ q(x1, y1) e^{-i(k x1 + ξ y1)} dx1 dy1,
//! q(x1, y1) = Σ_k Σ_ξ q̂(k, ξ) e^{i(k x1 + ξ y1)} dξ,
//! ```
//!
//! so that `Σ_k ∫ |q̂|² dξ` is approximated by the `dξ`-weighted sum over the
//! grid and does not depend on `Ly` for data localized in `y1`. Arrays are laid
//! out in FFT order: row `ix` holds `k = ix` for `ix ≤ Kmax` and `k = ix - nx`
//! otherwise; column `iy` holds `ξ = m dξ` with `m = iy` for `iy < My/2` and
//! `m = iy - My` otherwise.
//!
//! In the moving frame every differential operator is a time-dependent
//! Fourier symbol. With `η = ξ - k t` and `p = k² + η²`:
//! `∇̃ ↦ (ik, iη)`, `Δ̃ ↦ -p`, `Δ̃⁻¹ ↦ -1/p`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multipliers::MultiplierEval;

pub type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Discretization of `T × [0, Ly)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    kmax: usize,
    my: usize,
    ly: f64,
}

/// One retained or unretained Fourier mode of a [`Grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub ix: usize,
    pub iy: usize,
    pub k: i64,
    pub m: i64,
    pub xi: f64,
}

impl Grid {
    pub fn new(kmax: usize, my: usize, ly: f64) -> Result<Self> {
        if kmax < 1 {
            return Err(Error::InvalidGrid(format!("Kmax must be >= 1, got {kmax}")));
        }
        if my < 4 || my % 2 != 0 {
            return Err(Error::InvalidGrid(format!("My must be even and >= 4, got {my}")));
        }
        if !(ly > 0.0) || !ly.is_finite() {
            return Err(Error::InvalidGrid(format!("Ly must be positive, got {ly}")));
        }
        Ok(Grid { kmax, my, ly })
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn my(&self) -> usize {
        self.my
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    /// Number of x-modes (and physical x-points), `2 Kmax + 1`.
    pub fn nx(&self) -> usize {
        2 * self.kmax + 1
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx(), self.my)
    }

    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.ly
    }

    pub fn area(&self) -> f64 {
        2.0 * PI * self.ly
    }

    pub fn k_at(&self, ix: usize) -> i64 {
        if ix <= self.kmax {
            ix as i64
        } else {
            ix as i64 - self.nx() as i64
        }
    }

    pub fn m_at(&self, iy: usize) -> i64 {
        if iy < self.my / 2 {
            iy as i64
        } else {
            iy as i64 - self.my as i64
        }
    }

    pub fn xi_at(&self, iy: usize) -> f64 {
        self.m_at(iy) as f64 * self.dxi()
    }

    pub fn ix_of(&self, k: i64) -> Option<usize> {
        let kmax = self.kmax as i64;
        if k.abs() > kmax {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.nx() as i64) as usize)
        }
    }

    pub fn iy_of(&self, m: i64) -> Option<usize> {
        let half = (self.my / 2) as i64;
        if m < -half || m >= half {
            None
        } else if m >= 0 {
            Some(m as usize)
        } else {
            Some((m + self.my as i64) as usize)
        }
    }

    /// Largest retained `|k|` under the 2/3 rule.
    pub fn k_retained(&self) -> i64 {
        (2 * self.kmax / 3) as i64
    }

    /// Largest retained `|ξ|` under the 2/3 rule.
    pub fn xi_retained(&self) -> f64 {
        2.0 / 3.0 * (self.dxi() * (self.my / 2) as f64)
    }

    /// 2/3-rule retention test on integer indices (`|m| ≤ My/3`).
    pub fn retained_km(&self, k: i64, m: i64) -> bool {
        k.abs() <= self.k_retained() && 3 * m.unsigned_abs() as usize <= self.my
    }

    pub fn retained(&self, ix: usize, iy: usize) -> bool {
        self.retained_km(self.k_at(ix), self.m_at(iy))
    }

    pub fn dealias_mask(&self) -> Array2<bool> {
        Array2::from_shape_fn(self.shape(), |(ix, iy)| self.retained(ix, iy))
    }

    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        let (nx, my) = self.shape();
        (0..nx).flat_map(move |ix| {
            (0..my).map(move |iy| Mode {
                ix,
                iy,
                k: self.k_at(ix),
                m: self.m_at(iy),
                xi: self.xi_at(iy),
            })
        })
    }

    pub fn x_coords(&self) -> Vec<f64> {
        let nx = self.nx();
        (0..nx).map(|j| 2.0 * PI * j as f64 / nx as f64).collect()
    }

    pub fn y_coords(&self) -> Vec<f64> {
        (0..self.my)
            .map(|l| self.ly * l as f64 / self.my as f64)
            .collect()
    }
}

/// `p(t, k, ξ) = k² + (ξ - k t)²`, the symbol of `-Δ̃`.
#[inline]
pub fn p_symbol(t: f64, k: i64, xi: f64) -> f64 {
    let kf = k as f64;
    let eta = xi - kf * t;
    kf * kf + eta * eta
}

/// `∂ₜp = -2k(ξ - k t)`.
#[inline]
pub fn dtp_symbol(t: f64, k: i64, xi: f64) -> f64 {
    let kf = k as f64;
    -2.0 * kf * (xi - kf * t)
}

/// `∂ₜp / p`, zero where `p = 0`.
#[inline]
pub fn dtp_over_p(t: f64, k: i64, xi: f64) -> f64 {
    let p = p_symbol(t, k, xi);
    if p == 0.0 {
        0.0
    } else {
        dtp_symbol(t, k, xi) / p
    }
}

/// `∫ₜ₀ᵗ¹ p(s, k, ξ) ds` in closed form.
pub fn p_integral(t0: f64, t1: f64, k: i64, xi: f64) -> f64 {
    if k == 0 {
        return xi * xi * (t1 - t0);
    }
    // k² s + k² (s - ξ/k)³ / 3 is an antiderivative; centring on ξ/k keeps it
    // free of cancellation when the critical time is far from the origin
    let kf = k as f64;
    let tc = xi / kf;
    let g = |s: f64| {
        let d = s - tc;
        kf * kf * (s + d * d * d / 3.0)
    };
    g(t1) - g(t0)
}

/// `p` and `∂ₜp` sampled on a grid at time `t`.
#[derive(Debug, Clone)]
pub struct FrameSymbol {
    pub t: f64,
    pub p: Array2<f64>,
    pub dtp: Array2<f64>,
}

impl FrameSymbol {
    pub fn new(t: f64, grid: &Grid) -> Self {
        let shape = grid.shape();
        let p = Array2::from_shape_fn(shape, |(ix, iy)| {
            p_symbol(t, grid.k_at(ix), grid.xi_at(iy))
        });
        let dtp = Array2::from_shape_fn(shape, |(ix, iy)| {
            dtp_symbol(t, grid.k_at(ix), grid.xi_at(iy))
        });
        FrameSymbol { t, p, dtp }
    }
}

/// Compute `p` and `∂ₜp` for every mode of `grid` at time `t`.
pub fn frame_symbol(t: f64, grid: &Grid) -> FrameSymbol {
    FrameSymbol::new(t, grid)
}

/// Physical role of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldLabel {
    N,
    V1,
    V2,
    D,
    Omega,
    W,
    Other,
}

impl FieldLabel {
    pub fn name(&self) -> &'static str {
        match self {
            FieldLabel::N => "N",
            FieldLabel::V1 => "V1",
            FieldLabel::V2 => "V2",
            FieldLabel::D => "D",
            FieldLabel::Omega => "Omega",
            FieldLabel::W => "W",
            FieldLabel::Other => "Other",
        }
    }
}

/// Fourier coefficients of one scalar field on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub label: FieldLabel,
    pub coeffs: Array2<C64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid, label: FieldLabel) -> Self {
        SpectralField {
            grid,
            label,
            coeffs: Array2::zeros(grid.shape()),
        }
    }

    pub fn from_fn(grid: Grid, label: FieldLabel, mut f: impl FnMut(i64, f64) -> C64) -> Self {
        let coeffs =
            Array2::from_shape_fn(grid.shape(), |(ix, iy)| f(grid.k_at(ix), grid.xi_at(iy)));
        SpectralField {
            grid,
            label,
            coeffs,
        }
    }

    pub fn with_label(mut self, label: FieldLabel) -> Self {
        self.label = label;
        self
    }

    /// Coefficient at integer wavenumbers `(k, m)`; zero outside the grid.
    pub fn get(&self, k: i64, m: i64) -> C64 {
        match (self.grid.ix_of(k), self.grid.iy_of(m)) {
            (Some(ix), Some(iy)) => self.coeffs[[ix, iy]],
            _ => C64::new(0.0, 0.0),
        }
    }

    pub fn set(&mut self, k: i64, m: i64, value: C64) -> Result<()> {
        match (self.grid.ix_of(k), self.grid.iy_of(m)) {
            (Some(ix), Some(iy)) => {
                self.coeffs[[ix, iy]] = value;
                Ok(())
            }
            _ => Err(Error::InvalidGrid(format!("mode ({k}, {m}) is not on the grid"))),
        }
    }

    /// Spectral L² norm `(Σ_k ∫ |q̂|² dξ)^{1/2}`, i.e. `(2π)^-1 ‖q‖_{L²}`.
    pub fn norm(&self) -> f64 {
        (self.grid.dxi() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, c| acc.max(c.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    fn check_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }

    pub fn zip_with(
        &self,
        other: &SpectralField,
        f: impl Fn(C64, C64) -> C64,
    ) -> Result<SpectralField> {
        self.check_grid(other)?;
        let mut out = self.clone();
        Zip::from(&mut out.coeffs)
            .and(&other.coeffs)
            .for_each(|a, &b| *a = f(*a, b));
        Ok(out)
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, s: f64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.mapv_inplace(|c| c * s);
        out
    }

    /// Multiply every coefficient by `symbol(k, ξ)`.
    pub fn map_symbol(&self, symbol: impl Fn(i64, f64) -> C64) -> SpectralField {
        let grid = self.grid;
        let mut out = self.clone();
        Zip::indexed(&mut out.coeffs).for_each(|(ix, iy), c| {
            *c *= symbol(grid.k_at(ix), grid.xi_at(iy));
        });
        out
    }

    /// Zero every coefficient outside the 2/3-rule band.
    pub fn apply_mask(&mut self) {
        let grid = self.grid;
        Zip::indexed(&mut self.coeffs).for_each(|(ix, iy), c| {
            if !grid.retained(ix, iy) {
                *c = C64::new(0.0, 0.0);
            }
        });
    }

    pub fn masked(&self) -> SpectralField {
        let mut out = self.clone();
        out.apply_mask();
        out
    }

    /// Zero the unpaired `m = -My/2` column, which cannot carry a real mode.
    pub fn clear_nyquist(&mut self) {
        let iy = self.grid.my() / 2;
        self.coeffs.column_mut(iy).fill(C64::new(0.0, 0.0));
    }

    /// Largest `|q̂(-k,-ξ) - conj q̂(k,ξ)|` over the paired modes.
    pub fn reality_defect(&self) -> f64 {
        let grid = self.grid;
        let mut worst: f64 = 0.0;
        for mode in grid.modes() {
            if let (Some(jx), Some(jy)) = (grid.ix_of(-mode.k), grid.iy_of(-mode.m)) {
                let d = self.coeffs[[jx, jy]] - self.coeffs[[mode.ix, mode.iy]].conj();
                worst = worst.max(d.norm());
            } else {
                worst = worst.max(self.coeffs[[mode.ix, mode.iy]].norm());
            }
        }
        worst
    }

    /// Project onto the reality-symmetric subspace.
    pub fn symmetrize(&mut self) {
        let grid = self.grid;
        let src = self.coeffs.clone();
        for mode in grid.modes() {
            let value = match (grid.ix_of(-mode.k), grid.iy_of(-mode.m)) {
                (Some(jx), Some(jy)) => 0.5 * (src[[mode.ix, mode.iy]] + src[[jx, jy]].conj()),
                _ => C64::new(0.0, 0.0),
            };
            self.coeffs[[mode.ix, mode.iy]] = value;
        }
    }
}

/// Spectral operators of the sheared frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operator {
    /// scalar → vector `(∂x1, ∂y1 - t∂x1)`
    GradTilde,
    GradTildeX,
    GradTildeY,
    /// vector → scalar
    DivTilde,
    /// vector → scalar, `-∂̃y V¹ + ∂x1 V²`
    CurlTilde,
    LaplaceTilde,
    InvLaplaceTilde,
    /// `m₁⁻¹ m₂⁻¹ φ^{-1/4}`
    R1,
    /// `m₁⁻¹ m₂⁻¹`
    R2,
    /// `∂ₜp / p`
    R3,
    /// `∂y1 |∂y1|⁻¹`
    R4,
    /// vector → scalar, `Δ̃^{-1/2} diṽ`
    R5,
    /// `(-Δ̃)^{s/2}`, symbol `p^{s/2}`
    LambdaTilde(f64),
    /// `(-Δ)^{s/2}`, symbol `(k² + ξ²)^{s/2}`
    Lambda(f64),
}

impl Operator {
    pub fn name(&self) -> &'static str {
        match self {
            Operator::GradTilde => "grad_tilde",
            Operator::GradTildeX => "grad_tilde_x",
            Operator::GradTildeY => "grad_tilde_y",
            Operator::DivTilde => "div_tilde",
            Operator::CurlTilde => "curl_tilde",
            Operator::LaplaceTilde => "laplace_tilde",
            Operator::InvLaplaceTilde => "inv_laplace_tilde",
            Operator::R1 => "R1",
            Operator::R2 => "R2",
            Operator::R3 => "R3",
            Operator::R4 => "R4",
            Operator::R5 => "R5",
            Operator::LambdaTilde(_) => "lambda_tilde",
            Operator::Lambda(_) => "lambda",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Operator::DivTilde | Operator::CurlTilde | Operator::R5 => 2,
            _ => 1,
        }
    }
}

fn safe_pow(base: f64, e: f64) -> f64 {
    if base == 0.0 {
        if e > 0.0 {
            0.0
        } else if e == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        base.powf(e)
    }
}

/// Scalar symbol of `op` at `(t, k, ξ)` for the single-input, single-output operators.
pub fn scalar_symbol(op: Operator, t: f64, k: i64, xi: f64) -> Option<C64> {
    let kf = k as f64;
    let eta = xi - kf * t;
    let p = kf * kf + eta * eta;
    let s = match op {
        Operator::GradTildeX => I * kf,
        Operator::GradTildeY => I * eta,
        Operator::LaplaceTilde => C64::new(-p, 0.0),
        Operator::InvLaplaceTilde => {
            if p == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                C64::new(-1.0 / p, 0.0)
            }
        }
        Operator::R3 => C64::new(dtp_over_p(t, k, xi), 0.0),
        Operator::R4 => {
            if xi == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                I * xi.signum()
            }
        }
        Operator::LambdaTilde(s) => C64::new(safe_pow(p, s / 2.0), 0.0),
        Operator::Lambda(s) => C64::new(safe_pow(kf * kf + xi * xi, s / 2.0), 0.0),
        _ => return None,
    };
    Some(s)
}

fn check_mult<'a>(
    op: Operator,
    t: f64,
    grid: &Grid,
    mult: Option<&'a MultiplierEval>,
) -> Result<&'a MultiplierEval> {
    let m = mult.ok_or(Error::MissingMultipliers(op.name()))?;
    if m.grid != *grid {
        return Err(Error::GridMismatch);
    }
    if (m.t - t).abs() > 1e-12 * t.abs().max(1.0) {
        return Err(Error::TimeMismatch {
            fields: t,
            multipliers: m.t,
        });
    }
    Ok(m)
}

/// Apply a sheared-frame operator coefficientwise.
///
/// Scalar operators take one field and return one; `GradTilde` returns two;
/// `DivTilde`, `CurlTilde` and `R5` take the two components of a vector
/// field. `R1` and `R2` need multiplier values evaluated at `t`.
pub fn apply_operator(
    input: &[&SpectralField],
    op: Operator,
    t: f64,
    mult: Option<&MultiplierEval>,
) -> Result<Vec<SpectralField>> {
    if input.len() != op.arity() {
        return Err(Error::Arity {
            op: op.name(),
            expected: op.arity(),
            got: input.len(),
        });
    }
    let grid = input[0].grid;
    if input.iter().any(|f| f.grid != grid) {
        return Err(Error::GridMismatch);
    }
    let other = FieldLabel::Other;
    let out = match op {
        Operator::GradTilde => {
            let f = input[0];
            vec![
                f.map_symbol(|k, _| I * k as f64).with_label(other),
                f.map_symbol(|k, xi| I * (xi - k as f64 * t)).with_label(other),
            ]
        }
        Operator::DivTilde => vec![div_tilde(input[0], input[1], t)?],
        Operator::CurlTilde => vec![curl_tilde(input[0], input[1], t)?],
        Operator::R5 => {
            let d = div_tilde(input[0], input[1], t)?;
            vec![d.map_symbol(|k, xi| {
                let p = p_symbol(t, k, xi);
                C64::new(if p == 0.0 { 0.0 } else { p.powf(-0.5) }, 0.0)
            })]
        }
        Operator::R1 | Operator::R2 => {
            let m = check_mult(op, t, &grid, mult)?;
            let mut f = input[0].clone();
            let with_phi = op == Operator::R1;
            Zip::indexed(&mut f.coeffs).for_each(|(ix, iy), c| {
                let mut w = 1.0 / (m.m1[[ix, iy]] * m.m2[[ix, iy]]);
                if with_phi {
                    w *= m.phi[[ix, iy]].powf(-0.25);
                }
                *c *= w;
            });
            vec![f]
        }
        _ => {
            let f = input[0];
            vec![f.map_symbol(|k, xi| scalar_symbol(op, t, k, xi).expect("scalar operator"))]
        }
    };
    Ok(out)
}

/// `diṽ V = ∂x1 V¹ + (∂y1 - t∂x1) V²`.
pub fn div_tilde(v1: &SpectralField, v2: &SpectralField, t: f64) -> Result<SpectralField> {
    if v1.grid != v2.grid {
        return Err(Error::GridMismatch);
    }
    let grid = v1.grid;
    let mut out = SpectralField::zeros(grid, FieldLabel::D);
    Zip::indexed(&mut out.coeffs)
        .and(&v1.coeffs)
        .and(&v2.coeffs)
        .for_each(|(ix, iy), o, &a, &b| {
            let k = grid.k_at(ix) as f64;
            let eta = grid.xi_at(iy) - k * t;
            *o = I * (k * a + eta * b);
        });
    Ok(out)
}

/// `curl̃ V = -(∂y1 - t∂x1) V¹ + ∂x1 V²`.
pub fn curl_tilde(v1: &SpectralField, v2: &SpectralField, t: f64) -> Result<SpectralField> {
    if v1.grid != v2.grid {
        return Err(Error::GridMismatch);
    }
    let grid = v1.grid;
    let mut out = SpectralField::zeros(grid, FieldLabel::Omega);
    Zip::indexed(&mut out.coeffs)
        .and(&v1.coeffs)
        .and(&v2.coeffs)
        .for_each(|(ix, iy), o, &a, &b| {
            let k = grid.k_at(ix) as f64;
            let eta = grid.xi_at(iy) - k * t;
            *o = I * (k * b - eta * a);
        });
    Ok(out)
}

/// Cached FFT plans for one grid.
pub struct Transformer {
    grid: Grid,
    fx: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transformer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transformer").field("grid", &self.grid).finish()
    }
}

impl Transformer {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let (nx, my) = grid.shape();
        Transformer {
            grid,
            fx: planner.plan_fft_forward(nx),
            ix: planner.plan_fft_inverse(nx),
            fy: planner.plan_fft_forward(my),
            iy: planner.plan_fft_inverse(my),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn fft2(&self, data: &mut Array2<C64>, forward: bool) {
        let (nx, my) = self.grid.shape();
        let (fy, fx) = if forward {
            (&self.fy, &self.fx)
        } else {
            (&self.iy, &self.ix)
        };
        {
            let flat = data.as_slice_mut().expect("standard layout");
            fy.process(flat);
        }
        let mut t = Array2::<C64>::zeros((my, nx));
        t.assign(&data.t());
        fx.process(t.as_slice_mut().expect("standard layout"));
        data.assign(&t.t());
    }

    /// Complex physical values of a spectral field.
    pub fn to_physical_complex(&self, f: &SpectralField) -> Array2<C64> {
        debug_assert_eq!(f.grid, self.grid);
        let mut data = f.coeffs.clone();
        self.fft2(&mut data, false);
        let s = self.grid.dxi();
        data.mapv_inplace(|c| c * s);
        data
    }

    /// Real physical values (imaginary part discarded).
    pub fn to_physical(&self, f: &SpectralField) -> Array2<f64> {
        debug_assert_eq!(f.grid, self.grid);
        self.inverse_real(&f.coeffs)
    }

    /// Physical values of a coefficient array, imaginary part discarded.
    pub fn inverse_real(&self, coeffs: &Array2<C64>) -> Array2<f64> {
        let mut data = coeffs.clone();
        self.fft2(&mut data, false);
        let s = self.grid.dxi();
        data.mapv(|c| c.re * s)
    }

    /// Coefficient array of real physical values.
    pub fn forward_real(&self, values: &Array2<f64>) -> Array2<C64> {
        let mut data = values.mapv(|v| C64::new(v, 0.0));
        self.fft2(&mut data, true);
        let (nx, my) = self.grid.shape();
        let s = 1.0 / (nx as f64 * my as f64 * self.grid.dxi());
        data.mapv_inplace(|c| c * s);
        data
    }

    pub fn from_physical_complex(&self, values: &Array2<C64>, label: FieldLabel) -> SpectralField {
        let mut data = values.clone();
        self.fft2(&mut data, true);
        let (nx, my) = self.grid.shape();
        let s = 1.0 / (nx as f64 * my as f64 * self.grid.dxi());
        data.mapv_inplace(|c| c * s);
        SpectralField {
            grid: self.grid,
            label,
            coeffs: data,
        }
    }

    pub fn from_physical(&self, values: &Array2<f64>, label: FieldLabel) -> SpectralField {
        self.from_physical_complex(&values.mapv(|v| C64::new(v, 0.0)), label)
    }

    /// Coefficients of the pointwise product, masked before and after when
    /// `dealias` is set.
    pub fn product(&self, f: &SpectralField, g: &SpectralField, dealias: bool) -> Result<SpectralField> {
        if f.grid != self.grid || g.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let (a, b) = if dealias {
            (f.masked(), g.masked())
        } else {
            (f.clone(), g.clone())
        };
        let pa = self.to_physical_complex(&a);
        let pb = self.to_physical_complex(&b);
        let prod = &pa * &pb;
        let mut out = self.from_physical_complex(&prod, FieldLabel::Other);
        if dealias {
            out.apply_mask();
        }
        Ok(out)
    }
}

/// Dealiased product of two fields on the same grid.
pub fn dealiased_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    Transformer::new(f.grid).product(f, g, true)
}

/// Physical `∫∫ |q|² dx1 dy1` from the coefficients, `(2π)² Σ |q̂|² dξ`.
pub fn parseval_l2_squared(f: &SpectralField) -> f64 {
    (2.0 * PI).powi(2) * f.norm().powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_legal_grid() {
        let g = Grid::new(1, 4, 2.0 * PI).unwrap();
        let ks: Vec<i64> = (0..g.nx()).map(|i| g.k_at(i)).collect();
        assert_eq!(ks, vec![0, 1, -1]);
        let mut xis: Vec<f64> = (0..g.my()).map(|i| g.xi_at(i)).collect();
        xis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(xis, vec![-2.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn grid_spacing() {
        let g = Grid::new(8, 64, 4.0 * PI).unwrap();
        assert_eq!(g.dxi(), 0.5);
    }

    #[test]
    fn dealias_band() {
        let g = Grid::new(3, 16, 2.0 * PI).unwrap();
        assert_eq!(g.k_retained(), 2);
        assert!(g.retained_km(2, 0));
        assert!(!g.retained_km(3, 0));
        // |ξ| ≤ (2/3)·8 = 5.33
        assert!(g.retained_km(0, 5));
        assert!(!g.retained_km(0, 6));
        assert!(!g.retained_km(0, -8));
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::new(2, 7, 1.0).is_err());
        assert!(Grid::new(2, 8, 0.0).is_err());
        assert!(Grid::new(2, 8, -1.0).is_err());
        assert!(Grid::new(0, 8, 1.0).is_err());
        assert!(Grid::new(2, 2, 1.0).is_err());
    }

    #[test]
    fn frame_symbol_examples() {
        assert_eq!(p_symbol(0.0, 1, 0.0), 1.0);
        assert_eq!(dtp_symbol(0.0, 1, 0.0), 0.0);
        assert_eq!(p_symbol(2.0, 1, 2.0), 1.0);
        assert_eq!(dtp_symbol(2.0, 1, 2.0), 0.0);
        assert_eq!(p_symbol(7.3, 0, 1.5), 2.25);
        assert_eq!(dtp_symbol(7.3, 0, 1.5), 0.0);
    }

    #[test]
    fn frame_symbol_bounds() {
        let g = Grid::new(6, 32, 8.0).unwrap();
        for &t in &[0.0, 0.3, 2.0, 11.0] {
            let fs = frame_symbol(t, &g);
            for mode in g.modes() {
                let p = fs.p[[mode.ix, mode.iy]];
                let dtp = fs.dtp[[mode.ix, mode.iy]];
                assert!(p >= 0.0);
                if mode.k != 0 {
                    assert!(p >= 1.0);
                    assert!(dtp.abs() <= 2.0 * (mode.k.abs() as f64) * p.sqrt() * (1.0 + 1e-14));
                    assert!(dtp.abs() <= p * (1.0 + 1e-14));
                } else {
                    assert_eq!(dtp, 0.0);
                }
            }
        }
    }

    #[test]
    fn p_integral_matches_quadrature() {
        for &(k, xi) in &[(1i64, 0.0), (2, 3.5), (-3, 1.0), (0, 2.0)] {
            let (t0, t1) = (0.4, 3.1);
            let n = 20000;
            let h = (t1 - t0) / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                let a = t0 + i as f64 * h;
                // Simpson on each panel
                s += h / 6.0 * (p_symbol(a, k, xi) + 4.0 * p_symbol(a + h / 2.0, k, xi) + p_symbol(a + h, k, xi));
            }
            let exact = p_integral(t0, t1, k, xi);
            assert!((s - exact).abs() <= 1e-10 * exact.abs().max(1.0), "{k} {xi}: {s} vs {exact}");
        }
    }

    #[test]
    fn laplace_and_r3_examples() {
        let g = Grid::new(2, 8, 2.0 * PI).unwrap();
        let mut f = SpectralField::zeros(g, FieldLabel::N);
        f.set(1, 0, C64::new(1.0, 0.0)).unwrap();
        let lap = apply_operator(&[&f], Operator::LaplaceTilde, 0.0, None).unwrap();
        assert_eq!(lap[0].get(1, 0), C64::new(-1.0, 0.0));

        let mut f = SpectralField::zeros(g, FieldLabel::N);
        f.set(1, 2, C64::new(1.0, 0.0)).unwrap();
        let r3 = apply_operator(&[&f], Operator::R3, 2.0, None).unwrap();
        assert_eq!(r3[0].get(1, 2), C64::new(0.0, 0.0));
    }

    #[test]
    fn zero_mode_conventions() {
        let g = Grid::new(2, 8, 2.0 * PI).unwrap();
        let f = SpectralField::from_fn(g, FieldLabel::N, |_, _| C64::new(1.0, 1.0));
        for op in [Operator::InvLaplaceTilde, Operator::R3, Operator::R4] {
            let out = apply_operator(&[&f], op, 0.7, None).unwrap();
            assert_eq!(out[0].get(0, 0), C64::new(0.0, 0.0), "{op:?}");
        }
    }

    #[test]
    fn curl_symbol_matches_definition() {
        let g = Grid::new(3, 8, 5.0).unwrap();
        let t = 1.3;
        let v1 = SpectralField::from_fn(g, FieldLabel::V1, |k, xi| C64::new(k as f64 + 0.5, xi));
        let v2 = SpectralField::from_fn(g, FieldLabel::V2, |k, xi| C64::new(xi, -(k as f64)));
        let w = apply_operator(&[&v1, &v2], Operator::CurlTilde, t, None).unwrap();
        for mode in g.modes() {
            let eta = mode.xi - mode.k as f64 * t;
            let expect = -(I * eta) * v1.coeffs[[mode.ix, mode.iy]]
                + I * mode.k as f64 * v2.coeffs[[mode.ix, mode.iy]];
            assert!((w[0].coeffs[[mode.ix, mode.iy]] - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn r1_requires_multipliers() {
        let g = Grid::new(2, 8, 2.0 * PI).unwrap();
        let f = SpectralField::zeros(g, FieldLabel::N);
        assert_eq!(
            apply_operator(&[&f], Operator::R1, 0.0, None),
            Err(Error::MissingMultipliers("R1"))
        );
        assert!(matches!(
            apply_operator(&[&f], Operator::DivTilde, 0.0, None),
            Err(Error::Arity { .. })
        ));
    }

    #[test]
    fn product_of_single_modes() {
        let g = Grid::new(4, 8, 2.0 * PI).unwrap();
        let dxi = g.dxi();
        // e^{i x1} has q̂(1, 0) = 1/dξ
        let mut f = SpectralField::zeros(g, FieldLabel::Other);
        f.set(1, 0, C64::new(1.0 / dxi, 0.0)).unwrap();
        let prod = dealiased_product(&f, &f).unwrap();
        for mode in g.modes() {
            let c = prod.coeffs[[mode.ix, mode.iy]];
            if mode.k == 2 && mode.m == 0 {
                assert!((c - C64::new(1.0 / dxi, 0.0)).norm() < 1e-13);
            } else {
                assert!(c.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn constant_is_product_identity() {
        let g = Grid::new(5, 16, 7.0).unwrap();
        let mut one = SpectralField::zeros(g, FieldLabel::Other);
        one.set(0, 0, C64::new(1.0 / g.dxi(), 0.0)).unwrap();
        let mut h = SpectralField::from_fn(g, FieldLabel::N, |k, xi| {
            C64::new((-(k * k) as f64 - xi * xi).exp(), 0.1 * k as f64)
        });
        h.symmetrize();
        let prod = dealiased_product(&one, &h).unwrap();
        let expect = h.masked();
        for (a, b) in prod.coeffs.iter().zip(expect.coeffs.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn physical_constant_roundtrip() {
        let g = Grid::new(3, 8, 3.0).unwrap();
        let tr = Transformer::new(g);
        let vals = Array2::from_elem(g.shape(), 0.1);
        let f = tr.from_physical(&vals, FieldLabel::N);
        assert!((f.get(0, 0).re * g.dxi() - 0.1).abs() < 1e-15);
        let back = tr.to_physical(&f);
        for v in back.iter() {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }
}
