use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpnls::error::Error;
use qpnls::inequalities::*;
use qpnls::opmatrix::{Basis, OpMatrix};
use qpnls::spectral::{bracket, Grid, SpectralField, Truncation};

fn t11() -> Truncation {
    Truncation::new(1, 4, 4)
}

fn zero_shift() -> Displacement {
    let t = Truncation::new(1, 2, 2);
    Displacement {
        phi: SpectralField::zeros(t),
        x: SpectralField::zeros(t),
    }
}

#[test]
fn identity_operators_have_ratios_at_most_one() {
    let c = NormConstants::default();
    let t = Truncation::new(1, 3, 5);
    let id = OpMatrix::identity(t, Basis::Sine);
    let h: Vec<C64> = (0..id.dim()).map(|i| C64::new(1.0 / (1 + i) as f64, 0.0)).collect();
    for (i, &s) in c.sobolev_indices.iter().enumerate() {
        let prod = operator_product_terms(&id, &id, c.s0, s).unwrap();
        let k = &c.constants[&Inequality::OperatorProduct];
        assert!(prod.ratio(k[i], k[0]) <= 1.0);
        let act = operator_action_terms(&id, &h, c.s0, s);
        let k = &c.constants[&Inequality::OperatorAction];
        assert!(act.ratio(k[i], k[i]) <= 1.0);
    }
    let one = SpectralField::constant(t11(), C64::new(1.0, 0.0));
    let q = TameOperator { tau: 0, mu: 0 };
    let zero = SpectralField::zeros(Truncation::new(1, 2, 2));
    let u = random_field(&mut ChaCha8Rng::seed_from_u64(1), t11());
    for (i, &s) in c.sobolev_indices.iter().enumerate() {
        let tp = tame_product_terms(&one, &u, c.s0, s).unwrap();
        let k = &c.constants[&Inequality::TameProduct];
        assert!(tp.ratio(k[i], k[0]) <= 1.0);
        let ch = composition_chain_terms(q, q, &zero, &u, c.s0, s).unwrap();
        assert!((ch.lhs - ch.main).abs() <= 1e-12 * ch.main);
    }
}

#[test]
fn constant_shift_is_a_translation() {
    let u = random_field(&mut ChaCha8Rng::seed_from_u64(3), t11());
    let (a, b) = (0.37, -0.81);
    let t = Truncation::new(1, 2, 2);
    let p = Displacement {
        phi: SpectralField::constant(t, C64::new(a, 0.0)),
        x: SpectralField::constant(t, C64::new(b, 0.0)),
    };
    let fine = Truncation::new(1, 8, 8);
    let got = compose(&u, &p, fine);
    for ell in t11().ells() {
        for k in -4..=4i64 {
            let want = u.get(&ell, k) * C64::from_polar(1.0, ell[0] as f64 * a + k as f64 * b);
            assert!((got.get(&ell, k) - want).norm() < 1e-13);
        }
    }
}

#[test]
fn zero_displacement_leaves_fields_unchanged() {
    let u = random_field(&mut ChaCha8Rng::seed_from_u64(4), t11());
    let d = change_of_variables_difference_terms(&u, &zero_shift(), 3).unwrap();
    // roundoff on the unused fine modes carries weights up to 16^3
    assert!(d.lhs < 1e-10 * u.sobolev_norm(3.0).unwrap(), "{}", d.lhs);
    assert_eq!(d.main, 0.0);
}

#[test]
fn jacobian_and_sup_norms_of_a_sine_shift() {
    let t = Truncation::new(1, 2, 2);
    let a = 0.3;
    // p_x = a sin x, p_phi = 0
    let x = SpectralField::mode(t, &[0], 1, C64::new(0.0, -a / 2.0)).add(&SpectralField::mode(t, &[0], -1, C64::new(0.0, a / 2.0)));
    let p = Displacement {
        phi: SpectralField::zeros(t),
        x,
    };
    // 16 x points include the extrema of sin and cos
    let g = Grid::new(1, 8, 16);
    assert!((p.sup_norm(&g) - a).abs() < 1e-14);
    assert!((p.jacobian_norm(&g, 0) - a).abs() < 1e-14);
    // |p| + |p_x| + |p_phi| for |alpha| <= 1
    assert!((p.w_norm(&g, 1) - 2.0 * a).abs() < 1e-14);
}

#[test]
fn single_mode_product_norm_is_exact() {
    let t = t11();
    let u = SpectralField::mode(t, &[2], 3, C64::new(1.0, 0.0));
    let v = SpectralField::mode(t, &[1], -1, C64::new(1.0, 0.0));
    let s = 2.5;
    let tp = tame_product_terms(&u, &v, 1.5, s).unwrap();
    assert!((tp.lhs - bracket(&[3], 2).powf(s)).abs() < 1e-12);
    assert!((tp.main - bracket(&[2], 3).powf(1.5) * bracket(&[1], -1).powf(s)).abs() < 1e-12);
}

#[test]
fn tame_operator_matches_multiplier_definition() {
    let t = Truncation::new(1, 2, 2);
    let h = SpectralField::mode(t, &[1], 2, C64::new(1.0, 0.0));
    let u = SpectralField::constant(t, C64::new(0.5, 0.0));
    let q = TameOperator { tau: 2, mu: 1 };
    let out = q.apply(&u, &h);
    // L^2 h + (L u)(L^2 h) = 4 h + 0.5 * 4 h
    assert!((out.get(&[1], 2) - C64::new(6.0, 0.0)).norm() < 1e-14);
}

#[test]
fn reports_are_deterministic() {
    let c = NormConstants::default();
    let a = verify_norms(11, 20, &c).unwrap();
    let b = verify_norms(11, 20, &c).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 4 * 4 + 3 * 3);
}

#[test]
fn default_constants_reproduce_the_calibration() {
    let fresh = calibrate(CALIBRATION_SEED, CALIBRATION_CASES, CALIBRATION_MARGIN).unwrap();
    let stored = NormConstants::default();
    for q in Inequality::ALL {
        for (a, b) in stored.constants[&q].iter().zip(&fresh.constants[&q]) {
            assert!(*a >= *b && *a <= b * 1.01, "{}: stored {a}, calibrated {b}", q.name());
        }
    }
}

#[test]
fn random_suite_has_no_violations() {
    let r = verify_norms(2024, 150, &NormConstants::default()).unwrap();
    assert!(r.passed, "{:?}", r.rows.iter().filter(|x| x.violations > 0).collect::<Vec<_>>());
    assert!(r.rows.iter().all(|x| x.worst_ratio > 0.05));
}

#[test]
fn missing_constants_name_the_field() {
    let mut c = NormConstants::default();
    c.constants.remove(&Inequality::TameProduct);
    match verify_norms(0, 1, &c) {
        Err(Error::Config { path, .. }) => assert_eq!(path, "norms.constants.tame_product"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn csv_has_one_row_per_index() {
    let r = verify_norms(5, 3, &NormConstants::default()).unwrap();
    let mut buf = Vec::new();
    write_norm_csv(&r, &mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert_eq!(s.lines().count(), r.rows.len() + 1);
    assert!(s.starts_with("inequality,s,constant"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn composition_is_linear_in_the_field(seed in 0u64..10_000, c in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_field(&mut rng, t11());
        let v = random_field(&mut rng, t11());
        let t = Truncation::new(1, 2, 2);
        let p = Displacement {
            phi: random_field(&mut rng, t).re_fn().scale_re(0.02),
            x: random_field(&mut rng, t).re_fn().scale_re(0.02),
        };
        let fine = Truncation::new(1, 16, 16);
        let lhs = compose(&u.add(&v.scale_re(c)), &p, fine);
        let rhs = compose(&u, &p, fine).add(&compose(&v, &p, fine).scale_re(c));
        prop_assert!(lhs.sub(&rhs).sobolev_norm(0.0).unwrap() < 1e-12 * (1.0 + lhs.sobolev_norm(0.0).unwrap()));
    }

    #[test]
    fn product_norm_never_exceeds_the_convolution_bound(seed in 0u64..10_000) {
        // ||uv||_0 <= sum|u_k| ||v||_0: a crude inequality independent of the calibration
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_field(&mut rng, t11());
        let v = random_field(&mut rng, t11());
        let l1: f64 = u.coeffs().iter().map(|c| c.norm()).sum();
        let uv = u.mul_full(&v).sobolev_norm(0.0).unwrap();
        prop_assert!(uv <= l1 * v.sobolev_norm(0.0).unwrap() * (1.0 + 1e-12));
    }
}
