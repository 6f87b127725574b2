use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use qpnls::model::{reference_nonlinearity, semilinear_forcing, Monomial, NlsModel, Nonlinearity, Z2P};
use qpnls::opmatrix::{classify_reversibility, coeff_slabs, Basis, CoeffMatrix, ReversibilityTag};
use qpnls::regularizer::{
    compose_diffeo, compose_diffeo_inverse, regularize, step1_diag_second_order, step2_space_diffeo,
    step3_time_reparam, step4_descent, test_modes, GridCoeffs, GridMat, RegularizerConfig, TorusDiffeo, WorkGrid,
};
use qpnls::spectral::{DoubledField, Parity, SpectralField, Truncation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WB: f64 = std::f64::consts::SQRT_2;

fn random_x_field(t: Truncation, amp: f64, seed: u64) -> DoubledField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = t.n_ell() * t.nx;
    let c: Vec<f64> = (0..n)
        .map(|i| {
            let j = (i % t.nx + 1) as f64;
            amp * rng.random_range(-1.0..1.0) / (j * j)
        })
        .collect();
    DoubledField::from_real_sine(t, &c).project(Parity::X)
}

fn wg() -> WorkGrid {
    WorkGrid::new(Truncation::new(1, 12, 12))
}

fn values_of(w: &WorkGrid, f: impl Fn(f64, f64) -> f64) -> Vec<C64> {
    let mut v = Vec::with_capacity(w.len());
    for p in 0..w.n_phi_points() {
        let phi = w.grid.phi_point(p)[0];
        for m in 0..w.m_x() {
            v.push(C64::new(f(phi, w.grid.x_point(m)), 0.0));
        }
    }
    v
}

fn second_order_only(w: &WorkGrid, a2: &[C64], b2: &[C64]) -> GridCoeffs {
    let mut c = GridCoeffs::constant_diagonal(w, 1.0);
    let i = C64::new(0.0, 1.0);
    for p in 0..w.len() {
        c.c[2][0][0][p] = i * (1.0 + a2[p]);
        c.c[2][0][1][p] = i * b2[p];
        c.c[2][1][0][p] = -i * b2[p].conj();
        c.c[2][1][1][p] = -i * (1.0 + a2[p].conj());
    }
    c
}

fn grid_mat_operator(w: &WorkGrid, m: &GridMat, t: Truncation) -> qpnls::opmatrix::OpMatrix {
    let ct = Truncation::new(t.d, 2 * t.nphi, 2 * t.nx);
    let f = |r: usize, c: usize| w.field(&m[r][c]).resize(ct);
    let cm: CoeffMatrix = [[f(0, 0), f(0, 1)], [f(1, 0), f(1, 1)]];
    coeff_slabs(&cm, 0, t, Basis::Sine, 2 * t.nphi)
}

#[test]
fn step1_diagonal_input_keeps_identity() {
    let w = wg();
    let a2 = values_of(&w, |p, x| 0.05 * x.cos() * (1.0 + p.cos()));
    let b2 = vec![C64::new(0.0, 0.0); w.len()];
    let (s, _) = step1_diag_second_order(&w, &second_order_only(&w, &a2, &b2), &[WB]).unwrap();
    for p in 0..w.len() {
        assert!((s.a2_1[p] - a2[p]).norm() < 1e-15);
        assert_eq!(s.t1[0][1][p], C64::new(0.0, 0.0));
        assert!((s.t1[0][0][p] - 1.0).norm() < 1e-15);
    }
}

#[test]
fn step1_constant_offdiagonal() {
    let w = wg();
    let c = 0.3;
    let a2 = vec![C64::new(0.0, 0.0); w.len()];
    let b2 = vec![C64::new(c, 0.0); w.len()];
    let (s, l1) = step1_diag_second_order(&w, &second_order_only(&w, &a2, &b2), &[WB]).unwrap();
    let expect = (1.0 - c * c).sqrt() - 1.0;
    assert!(s.a2_1.iter().all(|v| (v.re - expect).abs() < 1e-15));
    assert!(s.diagonalization_defect < 1e-14);
    // constant T1 commutes with derivatives: no lower-order terms appear
    let e1 = qpnls::regularizer::mat_sup(&l1.c[1]);
    assert!(e1 < 1e-12, "{e1}");
    assert!(qpnls::regularizer::mat_sup(&l1.c[0]) < 1e-12);
}

#[test]
fn step1_random_coefficients_diagonalize() {
    let w = wg();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (c1, c2, c3): (f64, f64, f64) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let a2 = values_of(&w, |p, x| c1 * x.cos() * (1.0 + p.cos()) + c2);
    let b2 = values_of(&w, |p, x| c3 * (2.0 * x).cos() + 0.02 * p.cos());
    let (s, _) = step1_diag_second_order(&w, &second_order_only(&w, &a2, &b2), &[WB]).unwrap();
    assert!(s.diagonalization_defect < 1e-12);
}

#[test]
fn step1_rejects_hyperbolic_point() {
    let w = wg();
    let a2 = vec![C64::new(0.0, 0.0); w.len()];
    let b2 = vec![C64::new(1.5, 0.0); w.len()];
    assert!(step1_diag_second_order(&w, &second_order_only(&w, &a2, &b2), &[WB]).is_err());
}

#[test]
fn step2_trivial_inputs() {
    let w = wg();
    let (d, a, defect) = step2_space_diffeo(&w, &vec![C64::new(0.0, 0.0); w.len()]).unwrap();
    assert!(d.is_identity() && a.iter().all(|v| v.norm() == 0.0) && defect == 0.0);
    let (d, a, _) = step2_space_diffeo(&w, &vec![C64::new(0.07, 0.0); w.len()]).unwrap();
    assert!(d.shift.max_abs_coeff() < 1e-15);
    assert!(a.iter().all(|v| (v.re - 0.07).abs() < 1e-14));
}

#[test]
fn step2_matches_quadrature_oracle() {
    let w = wg();
    let a = |p: f64, x: f64| 0.1 * x.cos() * (1.0 + p.cos());
    let (_, a2_2, defect) = step2_space_diffeo(&w, &values_of(&w, a)).unwrap();
    assert!(defect < 1e-10);
    // independent fine trapezoid rule for the x-average
    let q = 4001;
    for p in 0..w.n_phi_points() {
        let phi = w.grid.phi_point(p)[0];
        let mean: f64 = (0..q).map(|i| (1.0 + a(phi, 2.0 * PI * i as f64 / q as f64)).powf(-0.5)).sum::<f64>() / q as f64;
        let expect = mean.powi(-2) - 1.0;
        assert!((a2_2[p * w.m_x()].re - expect).abs() < 1e-12);
    }
}

#[test]
fn step2_rejects_nonpositive_coefficient() {
    let w = wg();
    assert!(step2_space_diffeo(&w, &vec![C64::new(-1.5, 0.0); w.len()]).is_err());
}

#[test]
fn step3_trivial_and_single_mode() {
    let w = wg();
    let (d, m, _) = step3_time_reparam(&w, &vec![C64::new(0.0, 0.0); w.len()], 1.0, &[WB], 1e-10).unwrap();
    assert_eq!(m, 1.0);
    assert!(d.is_identity());
    let (d, m, _) = step3_time_reparam(&w, &vec![C64::new(0.04, 0.0); w.len()], 1.0, &[WB], 1e-10).unwrap();
    assert!((m - 1.04).abs() < 1e-15);
    assert!(d.shift.max_abs_coeff() < 1e-16);
    let e = 0.01;
    let lambda = 0.9;
    let (d, m, _) = step3_time_reparam(&w, &values_of(&w, |p, _| e * p.cos()), lambda, &[WB], 1e-10).unwrap();
    assert!((m - 1.0).abs() < 1e-15);
    for phi in [0.0, 0.3, 1.7, 4.0] {
        let expect = e * f64::sin(phi) / (lambda * WB);
        assert!((d.shift.eval(&[phi], 0.0).re - expect).abs() < 1e-15);
    }
}

#[test]
fn step4_descent_examples() {
    let w = wg();
    let s = step4_descent(&w, &vec![C64::new(0.0, 0.0); w.len()], 1.0).unwrap();
    assert!(s.is_zero());
    let c = 0.2;
    let s = step4_descent(&w, &values_of(&w, |_, x| c * x.sin()), 1.0).unwrap();
    for x in [0.0, 1.0, 2.5] {
        let v = s.eval(&[0.3], x);
        assert!((v.re - 0.5 * c * f64::cos(x)).abs() < 1e-15);
        assert!(v.im.abs() < 1e-15);
    }
}

#[test]
fn compose_diffeo_examples() {
    let w = wg();
    let t = Truncation::new(1, 3, 4);
    let mut f = SpectralField::zeros(t);
    f.set(&[1], 3, C64::new(1.0, 0.0));
    let id = TorusDiffeo::space(w, &SpectralField::zeros(w.trunc)).unwrap();
    let e0 = compose_diffeo(&id, &f).sub(&f).max_abs_coeff();
    assert!(e0 < 1e-14, "{e0}");
    let c = 0.3;
    let shift = SpectralField::constant(w.trunc, C64::new(c, 0.0));
    let d = TorusDiffeo::space(w, &shift).unwrap();
    let g = compose_diffeo(&d, &f);
    assert!((g.get(&[1], 3) - C64::from_polar(1.0, 3.0 * c)).norm() < 1e-13);
    // composition spreads the spectrum: the round trip needs a finer grid
    let w = WorkGrid::new(Truncation::new(1, 24, 24));
    let xi = values_of(&w, |p, x| 0.05 * (x.sin() + 0.5 * (2.0 * x).sin()) * (1.0 + 0.5 * p.cos()));
    let d = TorusDiffeo::space(w, &w.field(&xi)).unwrap();
    let h = random_x_field(t, 1.0, 5).plus.resize(w.trunc);
    let back = compose_diffeo_inverse(&d, &compose_diffeo(&d, &h));
    let e = back.sub(&h).max_abs_coeff();
    assert!(e < 1e-9, "{e}");
    assert!(d.round_trip_defect(&w.values(&h)) < 1e-9);
}

#[test]
fn diffeo_rejects_large_shift() {
    let w = wg();
    let xi = values_of(&w, |_, x| 0.6 * x.sin());
    assert!(TorusDiffeo::space(w, &w.field(&xi)).is_err());
}

#[test]
fn time_diffeo_round_trip() {
    let w = WorkGrid::new(Truncation::new(1, 24, 24));
    let alpha = values_of(&w, |p, _| 0.05 * p.sin());
    let d = TorusDiffeo::time(w, &w.field(&alpha), &[WB]).unwrap();
    let h = random_x_field(Truncation::new(1, 3, 4), 1.0, 6).plus;
    assert!(d.round_trip_defect(&w.values(&h)) < 1e-9);
}

#[test]
fn epsilon_zero_is_identity() {
    let t = Truncation::new(1, 4, 4);
    let model = NlsModel::new(reference_nonlinearity(1), vec![WB], 0.0);
    let u = random_x_field(t, 0.1, 1);
    let lc = model.linearize(&u);
    let r = regularize(&lc, 1.0, &model.omega_bar, &RegularizerConfig::default()).unwrap();
    assert_eq!(r.m, 1.0);
    let h = r.to_grid(&random_x_field(t, 1.0, 2));
    let v = r.apply_v1(&h);
    for (a, b) in h.iter().zip(&v) {
        let e = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(e < 1e-12, "{e}");
    }
    let l = model.linear_operator(&u, 1.0).part;
    let l4 = r.l4_part(Basis::Sine);
    let e = l.sub(&l4).unwrap().max_abs();
    assert!(e < 1e-12, "{e}");
}

#[test]
fn quasilinear_case_skips_step_one() {
    let t = Truncation::new(1, 4, 4);
    let model = NlsModel::new(semilinear_forcing(1), vec![WB], 1e-2);
    let u = random_x_field(t, 0.1, 1);
    let r = regularize(&model.linearize(&u), 1.0, &model.omega_bar, &RegularizerConfig::default()).unwrap();
    assert_eq!(r.diagnostics[0].diffeo_sup_norms["t1_minus_identity"], 0.0);
}

fn desk(eps: f64, seed: u64) -> (Truncation, qpnls::regularizer::RegularizedOperator) {
    let t = Truncation::new(1, 8, 8);
    let model = NlsModel::new(reference_nonlinearity(1), vec![WB], eps);
    let u = random_x_field(t, 0.05, seed);
    let r = regularize(&model.linearize(&u), 1.0, &model.omega_bar, &RegularizerConfig::default()).unwrap();
    (t, r)
}

#[test]
fn desk_regularization_is_exact() {
    let (t, r) = desk(1e-2, 11);
    assert!(r.step2.x_modes_norm < 1e-10);
    assert!(r.step4.a1_residual < 1e-10);
    assert!(r.semi_conjugation_residual(&test_modes(t, 20)) < 1e-8);
    let part = r.l4_part(Basis::Sine);
    let cls = classify_reversibility(&part, 1e-10);
    assert_eq!(cls.tag, ReversibilityTag::Reversible, "{cls:?}");
    // structure of the remainder: first order off-diagonal only
    assert!(qpnls::regularizer::sup(&r.l4.c[1][0][0]) == 0.0);
    assert!(r.q1().max_abs_coeff() > 0.0);
}

#[test]
fn transformations_preserve_reversibility() {
    let (t, r) = desk(1e-2, 12);
    for m in [&r.step1.t1, &r.step1.t1_inv, &r.step4.t4, &r.step4.t4_inv] {
        let op = grid_mat_operator(&r.grid, m, t);
        assert_eq!(classify_reversibility(&op, 1e-10).tag, ReversibilityTag::ReversibilityPreserving);
    }
}

#[test]
fn m_deviation_scales_with_epsilon() {
    let (_, r1) = desk(1e-2, 13);
    let (_, r2) = desk(1e-3, 13);
    let c1 = (r1.m - 1.0).abs() / 1e-2;
    let c2 = (r2.m - 1.0).abs() / 1e-3;
    assert!(c1 > 0.0 && c1 < 2.0 && (c1 / c2 - 1.0).abs() < 0.1, "{c1} {c2}");
}

#[test]
fn x_dependent_second_order_term_is_removed() {
    // b2 = 0 but a2 depends on x: only step 2 acts on the principal symbol
    let t = Truncation::new(1, 6, 6);
    let mut c = SpectralField::zeros(Truncation::new(1, 1, 1));
    c.set(&[0], 0, C64::new(1.0, 0.0));
    c.set(&[0], 1, C64::new(0.2, 0.0));
    c.set(&[0], -1, C64::new(0.2, 0.0));
    c.set(&[1], 1, C64::new(0.1, 0.0));
    c.set(&[-1], -1, C64::new(0.1, 0.0));
    c.set(&[1], -1, C64::new(0.1, 0.0));
    c.set(&[-1], 1, C64::new(0.1, 0.0));
    let mut p = [0; 6];
    p[Z2P] = 1;
    let f = Nonlinearity::new(1, vec![Monomial { coeff: c, powers: p }]).unwrap();
    let model = NlsModel::new(f, vec![WB], 0.05);
    let u = random_x_field(t, 0.05, 2);
    let r = regularize(&model.linearize(&u), 1.1, &model.omega_bar, &RegularizerConfig::default()).unwrap();
    assert!(r.step2.diffeo.w1_inf > 1e-3);
    assert!(r.step2.x_modes_norm < 1e-10);
    assert!(r.semi_conjugation_residual(&test_modes(t, 20)) < 1e-8);
}

