use num_complex::Complex64 as C64;
use qpnls::model::{
    coeff_from_terms, reference_nonlinearity, semilinear_forcing, validate_hypothesis, Clause, CoeffTerm, Monomial,
    MonomialSpec, NlsModel, Nonlinearity, TrigKind, Z0P, Z1P, Z2P,
};
use qpnls::opmatrix::{classify_reversibility, ReversibilityTag};
use qpnls::spectral::{DoubledField, Grid, Parity, SpectralField, Truncation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sin_x(d: usize, amp: f64) -> SpectralField {
    let mut f = SpectralField::zeros(Truncation::new(d, 0, 1));
    f.set(&vec![0; d], 1, C64::new(0.0, -0.5 * amp));
    f.set(&vec![0; d], -1, C64::new(0.0, 0.5 * amp));
    f
}

fn cos_x(d: usize, amp: f64) -> SpectralField {
    let mut f = SpectralField::zeros(Truncation::new(d, 0, 1));
    f.set(&vec![0; d], 1, C64::new(0.5 * amp, 0.0));
    f.set(&vec![0; d], -1, C64::new(0.5 * amp, 0.0));
    f
}

fn one(d: usize) -> SpectralField {
    SpectralField::constant(Truncation::new(d, 0, 0), C64::new(1.0, 0.0))
}

fn pw(i: usize, e: u32) -> [u32; 6] {
    let mut p = [0; 6];
    p[i] = e;
    p
}

fn random_x_field(t: Truncation, amp: f64, seed: u64) -> DoubledField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = t.n_ell() * t.nx;
    let c: Vec<f64> = (0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
    let u = DoubledField::from_real_sine(t, &c);
    // symmetrize in phi so u(-phi) = conj u(phi)
    u.project(Parity::X)
}

#[test]
fn hypothesis_reference_passes() {
    let r = validate_hypothesis(&reference_nonlinearity(1));
    assert!(r.passed(), "{r:?}");
    assert!(!r.z2_sign_varies);
}

#[test]
fn hypothesis_cos_x_times_uxx_respects_parity_but_is_degenerate() {
    // z2 enters with odd degree, so an even coefficient is what the parity rule asks for.
    let f = Nonlinearity::new(1, vec![Monomial { coeff: cos_x(1, 1.0), powers: pw(Z2P, 1) }]).unwrap();
    let r = validate_hypothesis(&f);
    assert!(r.clause(Clause::Parity).passed);
    assert!(!r.clause(Clause::Nondegeneracy).passed);
    assert!(r.z2_sign_varies);
}

#[test]
fn hypothesis_sin_x_times_uxx_fails_parity() {
    let f = Nonlinearity::new(
        1,
        vec![
            Monomial { coeff: sin_x(1, 1.0), powers: [0; 6] },
            Monomial { coeff: sin_x(1, 1.0), powers: pw(Z2P, 1) },
        ],
    )
    .unwrap();
    let r = validate_hypothesis(&f);
    let c = r.clause(Clause::Parity);
    assert!(!c.passed);
    assert_eq!(c.offending, vec![pw(Z2P, 1)]);
    assert!(c.numeric_defect > 1e-3);
}

#[test]
fn hypothesis_quadratic_without_z2_fails_nondegeneracy_only() {
    let f = Nonlinearity::new(
        1,
        vec![
            Monomial { coeff: sin_x(1, 1.0), powers: [0; 6] },
            Monomial { coeff: sin_x(1, 1.0), powers: pw(Z0P, 2) },
        ],
    )
    .unwrap();
    let r = validate_hypothesis(&f);
    assert!(r.clause(Clause::Parity).passed);
    assert!(r.clause(Clause::TimeReversal).passed);
    assert!(!r.clause(Clause::Nondegeneracy).passed);
}

#[test]
fn hypothesis_semilinear_passes() {
    assert!(validate_hypothesis(&semilinear_forcing(2)).passed());
}

#[test]
fn hypothesis_time_reversal_violation_detected() {
    // sin(phi) sin(x) breaks c(-phi, x) = conj c(phi, x).
    let mut c = SpectralField::zeros(Truncation::new(1, 1, 1));
    for (l, k, v) in [(1, 1, -0.25), (1, -1, 0.25), (-1, 1, 0.25), (-1, -1, -0.25)] {
        c.set(&[l], k, C64::new(v, 0.0));
    }
    let f = Nonlinearity::new(
        1,
        vec![
            Monomial { coeff: c, powers: [0; 6] },
            Monomial { coeff: one(1), powers: pw(Z2P, 1) },
        ],
    )
    .unwrap();
    let r = validate_hypothesis(&f);
    assert!(r.clause(Clause::Parity).passed);
    assert!(!r.clause(Clause::TimeReversal).passed);
}

#[test]
fn config_terms_build_expected_coefficients() {
    let c = coeff_from_terms(
        1,
        &[CoeffTerm::Trig { amp: 2.0, phi: Some(vec![1]), phi_kind: TrigKind::Cos, x: 1, x_kind: TrigKind::Sin }],
    )
    .unwrap();
    let phi = [0.7];
    let x = 1.3;
    assert!((c.eval(&phi, x).re - 2.0 * (0.7f64).cos() * (1.3f64).sin()).abs() < 1e-14);
    let spec: Vec<MonomialSpec> = serde_json::from_str(
        r#"[{"coefficient":[{"amp":1.0,"x":1,"x_kind":"sin"}]},
            {"coefficient":[{"amp":1.0}],"powers":{"z2p":1}},
            {"coefficient":[{"ell":[0],"k":0,"re":0.5,"im":0.0}],"powers":{"z0p":2,"z0m":1}}]"#,
    )
    .unwrap();
    let f = qpnls::model::nonlinearity_from_specs(1, &spec).unwrap();
    assert_eq!(f.terms.len(), 3);
    assert!(validate_hypothesis(&f).passed());
}

#[test]
fn eval_f_zero() {
    let m = NlsModel::new(reference_nonlinearity(1), vec![2f64.sqrt()], 0.0);
    let t = Truncation::new(1, 3, 4);
    let f = m.eval_f(&DoubledField::zeros(t), 1.0);
    assert!(f.plus.is_zero() && f.minus.is_zero());
}

#[test]
fn eval_f_linear_single_mode() {
    let wb = 2f64.sqrt();
    let m = NlsModel::new(reference_nonlinearity(1), vec![wb], 0.0);
    let t = Truncation::new(1, 3, 4);
    let lambda = 1.1;
    let mut sine = vec![0.0; t.n_ell() * t.nx];
    let (l, j) = (2i64, 3usize);
    sine[t.ell_index(&[l]).unwrap() * t.nx + j - 1] = 1.0;
    let u = DoubledField::from_real_sine(t, &sine);
    let f = m.eval_f(&u, lambda);
    let v = f.to_sine_vec();
    let uv = u.to_sine_vec();
    let e = t.ell_index(&[l]).unwrap();
    for slot in 0..2 {
        let sgn = if slot == 0 { 1.0 } else { -1.0 };
        let idx = e * 2 * t.nx + slot * t.nx + j - 1;
        let expect = C64::new(0.0, lambda * wb * l as f64 - sgn * (j * j) as f64) * uv[idx];
        assert!((v[idx] - expect).norm() < 1e-13);
    }
}

#[test]
fn eval_f_matches_collocation_oracle() {
    let m = NlsModel::new(reference_nonlinearity(1), vec![2f64.sqrt()], 0.3);
    let t = Truncation::new(1, 3, 4);
    let u = random_x_field(t, 0.1, 7);
    let lambda = 0.95;
    let f = m.eval_f(&u, lambda);
    // grid large enough to alias nothing into the kept modes
    let g = Grid::new(1, 4 * t.nphi + 8, 4 * t.nx + 8);
    let args = Nonlinearity::arguments(&u);
    let vals: Vec<Vec<C64>> = args.iter().map(|a| g.synth(a)).collect();
    let mut f1v = vec![C64::new(0.0, 0.0); g.len()];
    for p in 0..g.n_phi_points() {
        let phi = g.phi_point(p);
        for mx in 0..g.m_x {
            let i = p * g.m_x + mx;
            let z = [vals[0][i], vals[1][i], vals[2][i], vals[3][i], vals[4][i], vals[5][i]];
            f1v[i] = m.f1.eval_point(&phi, g.x_point(mx), &z);
        }
    }
    let f1 = g.analyze(&f1v, t);
    let omega = m.omega(lambda);
    let oracle = u
        .plus
        .omega_dphi(&omega)
        .add(&u.plus.dxx().scale(C64::new(0.0, 1.0)))
        .axpy(C64::new(0.0, 0.3), &f1);
    assert!(f.plus.sub(&oracle).max_abs_coeff() < 1e-12);
}

#[test]
fn eval_f_maps_x_to_z_and_stays_in_u() {
    let m = NlsModel::new(reference_nonlinearity(1), vec![2f64.sqrt()], 0.2);
    let t = Truncation::new(1, 3, 5);
    for seed in 0..5 {
        let u = random_x_field(t, 0.2, seed);
        let f = m.eval_f(&u, 1.0);
        assert!(f.parity_defect(Parity::Z, 0.0) < 1e-13);
        assert!(f.u_defect(0.0) < 1e-13);
    }
}

#[test]
fn linearize_zero_epsilon_is_diagonal() {
    let wb = 2f64.sqrt();
    let m = NlsModel::new(reference_nonlinearity(1), vec![wb], 0.0);
    let t = Truncation::new(1, 2, 3);
    let u = random_x_field(t, 0.1, 1);
    assert!(m.linearize(&u).is_zero());
    let op = m.linear_operator(&u, 1.2).to_dense();
    for e in 0..t.n_ell() {
        let ell = t.ell_of(e);
        for slot in 0..2 {
            for j in 1..=t.nx {
                let i = e * 2 * t.nx + slot * t.nx + j - 1;
                let sgn = if slot == 0 { 1.0 } else { -1.0 };
                let expect = C64::new(0.0, 1.2 * wb * ell[0] as f64 - sgn * (j * j) as f64);
                assert!((op[(i, i)] - expect).norm() < 1e-13);
            }
        }
    }
    let off: f64 = (0..op.nrows())
        .flat_map(|r| (0..op.ncols()).map(move |c| (r, c)))
        .filter(|(r, c)| r != c)
        .map(|(r, c)| op[(r, c)].norm())
        .fold(0.0, f64::max);
    assert_eq!(off, 0.0);
}

#[test]
fn linearize_uxx_gives_constant_a2() {
    let f = Nonlinearity::new(1, vec![Monomial { coeff: one(1), powers: pw(Z2P, 1) }]).unwrap();
    let m = NlsModel::new(f, vec![2f64.sqrt()], 0.25);
    let t = Truncation::new(1, 2, 3);
    let lc = m.linearize(&random_x_field(t, 0.3, 2));
    let a2 = lc.a(2);
    assert!((a2.get(&[0], 0) - C64::new(0.25, 0.0)).norm() < 1e-15);
    assert!(a2.sub(&SpectralField::constant(a2.trunc(), C64::new(0.25, 0.0))).max_abs_coeff() < 1e-15);
    for p in 0..3 {
        assert!(lc.b(p).is_zero());
        if p < 2 {
            assert!(lc.a(p).is_zero());
        }
    }
}

#[test]
fn linearize_u_ux_matches_symbolic_derivative() {
    // f = u u_x: d_{z0+} f = u_x, d_{z1+} f = u
    let f = Nonlinearity::new(1, vec![Monomial { coeff: sin_x(1, 1.0), powers: { let mut p = pw(Z0P, 1); p[Z1P] = 1; p } }])
        .unwrap();
    let m = NlsModel::new(f, vec![2f64.sqrt()], 0.5);
    let t = Truncation::new(1, 2, 3);
    let u = random_x_field(t, 0.3, 3);
    let lc = m.linearize(&u);
    let out = t.scaled(2);
    let s = sin_x(1, 1.0);
    let a0 = s.mul(&u.plus.dx(), out).scale_re(0.5);
    let a1 = s.mul(&u.plus, out).scale_re(0.5);
    assert!(lc.a(0).sub(&a0).max_abs_coeff() < 1e-14);
    assert!(lc.a(1).sub(&a1).max_abs_coeff() < 1e-14);
}

#[test]
fn linearized_coefficients_have_expected_parities_and_operator_is_reversible() {
    let m = NlsModel::new(reference_nonlinearity(1), vec![2f64.sqrt()], 0.1);
    let t = Truncation::new(1, 2, 4);
    let u = random_x_field(t, 0.2, 4);
    let lc = m.linearize(&u);
    assert!(lc.u_defect() < 1e-14);
    for p in [0, 2] {
        assert!(lc.a(p).parity_defect(Parity::Y, 0.0) < 1e-14);
        assert!(lc.b(p).parity_defect(Parity::Y, 0.0) < 1e-14);
    }
    assert!(lc.a(1).parity_defect(Parity::X, 0.0) < 1e-14);
    assert!(lc.b(1).parity_defect(Parity::X, 0.0) < 1e-14);
    assert!(lc.a(2).im_fn().max_abs_coeff() < 1e-14);
    let part = lc.operator_part(qpnls::opmatrix::Basis::Sine, 2 * t.nphi);
    assert_eq!(classify_reversibility(&part, 1e-12).tag, ReversibilityTag::Reversible);
}

#[test]
fn directional_derivative_matches_difference_quotient() {
    let m = NlsModel::new(reference_nonlinearity(1), vec![2f64.sqrt()], 0.3);
    let t = Truncation::new(1, 2, 4);
    let u = random_x_field(t, 0.2, 5);
    let h = random_x_field(t, 1.0, 6);
    let c = m.directional_derivative_check(&u, &h, 1.0, 1e-4);
    assert!(c.relative() < 1e-8, "{c:?}");
    assert!(c.extrapolated < 1e-10, "{c:?}");
    let z = m.with_epsilon(0.0).directional_derivative_check(&u, &h, 1.0, 1e-4);
    assert!(z.central < 1e-10, "{z:?}");
}

#[test]
fn directional_derivative_quadratic_slope_two() {
    let f = Nonlinearity::new(
        1,
        vec![
            Monomial { coeff: sin_x(1, 1.0), powers: [0; 6] },
            Monomial { coeff: sin_x(1, 1.0), powers: { let mut p = pw(Z0P, 2); p[Z0P] = 2; p } },
            Monomial { coeff: one(1), powers: { let mut p = pw(Z0P, 2); p[1] = 1; p } },
        ],
    )
    .unwrap();
    let m = NlsModel::new(f, vec![2f64.sqrt()], 1.0);
    let t = Truncation::new(1, 2, 3);
    let u = random_x_field(t, 0.5, 8);
    let h = random_x_field(t, 1.0, 9);
    let d1 = m.directional_derivative_check(&u, &h, 1.0, 1e-2).central;
    let d2 = m.directional_derivative_check(&u, &h, 1.0, 5e-3).central;
    let slope = (d1 / d2).log2();
    assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
}
