//! Property tests of the structural invariants of grids, fields, multipliers
//! and the nonlinear right-hand side.

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stablab::linear::PhysParams;
use stablab::multipliers::{m1, m2, phi, MultiplierParams};
use stablab::nonlinear::{SimState, Stepper, StepperConfig};
use stablab::spectral::{dealiased_product, frame_symbol, FieldLabel, Grid, SpectralField};

fn random_field(grid: Grid, label: FieldLabel, seed: u64, scale: f64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::from_fn(grid, label, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
    });
    f.clear_nyquist();
    f.apply_mask();
    f.symmetrize();
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_symbol_bounds(kmax in 1usize..6, half_my in 2usize..12, ly in 1.0f64..80.0, t in 0.0f64..50.0) {
        let grid = Grid::new(kmax, 2 * half_my, ly).unwrap();
        let fs = frame_symbol(t, &grid);
        for ((ix, iy), &p) in fs.p.indexed_iter() {
            let k = grid.k_at(ix);
            let dtp = fs.dtp[[ix, iy]];
            prop_assert!(p >= 0.0);
            if k != 0 {
                prop_assert!(p >= 1.0);
                prop_assert!(dtp.abs() <= p * (1.0 + 1e-14));
            }
            prop_assert!(dtp.abs() <= 2.0 * k.abs() as f64 * p.sqrt() * (1.0 + 1e-14));
        }
    }

    #[test]
    fn dealias_mask_is_two_thirds_rule(kmax in 1usize..20, half_my in 2usize..40, ly in 1.0f64..80.0) {
        let grid = Grid::new(kmax, 2 * half_my, ly).unwrap();
        let mask = grid.dealias_mask();
        let kcut = (2 * kmax / 3) as i64;
        let xi_cut = 2.0 / 3.0 * grid.dxi() * half_my as f64;
        for ((ix, iy), &keep) in mask.indexed_iter() {
            let expect = grid.k_at(ix).abs() <= kcut && grid.xi_at(iy).abs() <= xi_cut * (1.0 + 1e-12);
            prop_assert_eq!(keep, expect);
        }
    }

    #[test]
    fn product_keeps_reality_and_mask(seed in 0u64..10_000) {
        let grid = Grid::new(6, 24, 10.0).unwrap();
        let f = random_field(grid, FieldLabel::Other, seed, 1.0);
        let g = random_field(grid, FieldLabel::Other, seed + 1, 1.0);
        let fg = dealiased_product(&f, &g).unwrap();
        let gf = dealiased_product(&g, &f).unwrap();
        prop_assert!(fg.reality_defect() < 1e-13);
        prop_assert!(fg.sub(&gf).unwrap().max_abs() < 1e-13);
        let mask = grid.dealias_mask();
        for ((ix, iy), v) in fg.coeffs.indexed_iter() {
            if !mask[[ix, iy]] {
                prop_assert_eq!(*v, C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn multiplier_ranges(k in -6i64..=6, xi in -300.0f64..300.0, t in 0.0f64..400.0, log_nu in -4.0f64..0.0) {
        let p = MultiplierParams::with_nu(10f64.powf(log_nu));
        let (f, a, b) = (phi(t, k, xi, &p), m1(t, k, xi, &p), m2(t, k, xi, &p));
        prop_assert!(a >= 1.0 && a <= (2.0 * std::f64::consts::PI).exp() * (1.0 + 1e-12));
        prop_assert!(b >= 1.0 && b <= (p.a * std::f64::consts::PI).exp() * (1.0 + 1e-12));
        prop_assert!(f >= 1.0 && f <= p.phi_bound() * (1.0 + 1e-12));
        if k == 0 {
            prop_assert_eq!((f, a, b), (1.0, 1.0, 1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rhs_preserves_reality_mask_and_mass(seed in 0u64..10_000, t in 0.0f64..10.0, scale in 1e-4f64..1e-2) {
        let grid = Grid::new(4, 16, 12.0).unwrap();
        let params = PhysParams::new(1e-2, 5e-3, 1.4).unwrap();
        let state = SimState {
            t,
            n: random_field(grid, FieldLabel::N, seed, scale),
            v1: random_field(grid, FieldLabel::V1, seed + 1, scale),
            v2: random_field(grid, FieldLabel::V2, seed + 2, scale),
            params,
        };
        let stepper = Stepper::new(grid, params, StepperConfig::default()).unwrap();
        let (dn, dv1, dv2) = stepper.rhs(&state).unwrap();
        let size = dn.max_abs().max(dv1.max_abs()).max(dv2.max_abs());
        for f in [&dn, &dv1, &dv2] {
            prop_assert!(f.reality_defect() <= 1e-12 * size.max(1e-300));
        }
        // the zero mode of the density only changes through a divergence
        prop_assert!(dn.get(0, 0).norm() <= 1e-14 * size.max(1e-300));
        let mask = grid.dealias_mask();
        for ((ix, iy), v) in dn.coeffs.indexed_iter() {
            if !mask[[ix, iy]] {
                prop_assert_eq!(*v, C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn stepper_config_rejects_bad_steps(dt_init in 1e-6f64..1.0, factor in 1.0f64..10.0) {
        let cfg = StepperConfig { dt_init, dt_min: dt_init * factor, ..Default::default() };
        prop_assert!(cfg.validate().is_err());
        let ok = StepperConfig { dt_init, dt_min: dt_init / (2.0 * factor), dt_max: 1.0, ..Default::default() };
        prop_assert!(ok.validate().is_ok());
    }
}
