use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use qpnls::kam::{
    conjugation_residual, eigenvalue_variation, homological_defect, kam_step, melnikov_check, reduce, reduce_state,
    second_melnikov_mask, seeded_remainder, solve_homological, unperturbed, EigenvalueTable, KamConfig, KamState,
};
use qpnls::model::{reference_nonlinearity, NlsModel};
use qpnls::opmatrix::{classify_reversibility, Basis, OpMatrix, ReversibilityTag};
use qpnls::regularizer::{regularize, RegularizerConfig};
use qpnls::spectral::{dot, norm_inf, DoubledField, ParamGrid, Parity, Truncation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WB: f64 = std::f64::consts::SQRT_2;

fn zero_state(t: Truncation, lambda: f64) -> KamState {
    let z = OpMatrix::zeros(t, Basis::Sine);
    KamState::from_parts(lambda, vec![lambda * WB], 1.0, z.clone(), z).unwrap()
}

fn seeded_state(t: Truncation, amp: f64, seed: u64) -> KamState {
    let (e1, e0) = seeded_remainder(t, 2 * t.nphi, amp, seed);
    KamState::from_parts(1.0, vec![WB], 1.0, e1, e0).unwrap()
}

/// Smooth X-parity field with e^{-2|ell|} / j^2 decay.
fn smooth_field(t: Truncation, amp: f64, seed: u64) -> DoubledField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ells = t.ells();
    let mut c = Vec::with_capacity(ells.len() * t.nx);
    for ell in &ells {
        for j in 1..=t.nx {
            let w = amp * (-2.0 * norm_inf(ell) as f64).exp() / (j * j) as f64;
            c.push(w * rng.random_range(-1.0..1.0));
        }
    }
    DoubledField::from_real_sine(t, &c).project(Parity::X)
}

fn desk_reduction(eps: f64, lambda: f64, cfg: &KamConfig) -> qpnls::kam::KamReduction {
    let t = Truncation::new(1, 8, 8);
    let model = NlsModel::new(reference_nonlinearity(1), vec![WB], eps);
    let u = smooth_field(t, 0.1, 21);
    let reg = regularize(&model.linearize(&u), lambda, &model.omega_bar, &RegularizerConfig::default()).unwrap();
    reduce(&reg, &model.omega_bar, cfg).unwrap()
}

#[test]
fn mask_unperturbed_and_engineered_resonance() {
    let nx = 4;
    let mu = unperturbed(nx, 1.0);
    let ok = melnikov_check(&mu, 1.0, nx, 1.0, &[WB], 0.05, 2.0, 3, false);
    assert!(ok.passed, "{ok:?}");
    // 2 sqrt2 lambda = 2^2 - 1^2
    let lam = 3.0 / (2.0 * WB);
    let bad = melnikov_check(&mu, 1.0, nx, lam, &[WB], 0.05, 2.0, 3, false);
    assert!(!bad.passed);
    let w = bad.witness.unwrap();
    assert!(w.divisor < 1e-12, "{w:?}");
    assert_eq!(norm_inf(&w.ell), 2);
    assert_eq!((w.j.min(w.j_p), w.j.max(w.j_p)), (1, 2));
    assert_eq!(w.sigma, w.sigma_p);
}

#[test]
fn mask_pruning_is_exact() {
    let nx = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let m = 1.0 + rng.random_range(-0.02..0.02);
        let mut mu = unperturbed(nx, m);
        for j in 0..nx {
            let r = C64::new(0.0, rng.random_range(-0.01..0.01));
            mu[j] += r;
            mu[nx + j] -= r;
        }
        let lam = rng.random_range(0.5..1.5);
        let a = melnikov_check(&mu, m, nx, lam, &[WB], 0.05, 2.0, 8, true);
        let b = melnikov_check(&mu, m, nx, lam, &[WB], 0.05, 2.0, 8, false);
        assert_eq!(a.passed, b.passed);
        assert!(a.pruned > 0);
        // margins are taken over the tested triples only
        assert!(a.margin >= b.margin);
    }
}

#[test]
fn mask_over_grid() {
    let grid = ParamGrid::uniform(0.5, 1.5, 21, &[WB], 0.05, 2.0, 8).unwrap();
    let mut table = EigenvalueTable::new(4);
    for &l in &grid.samples {
        table.push_sample(l, 1.0, vec![vec![C64::new(0.0, 0.0); 8]]);
    }
    let mask = second_melnikov_mask(&table, &grid, &[WB], 0.05, 2.0, 2);
    assert!(mask.surviving() > 0 && mask.surviving() <= 21);
    for (s, &l) in grid.samples.iter().enumerate() {
        let c = melnikov_check(&unperturbed(4, 1.0), 1.0, 4, l, &[WB], 0.05, 2.0, 2, false);
        assert_eq!(mask.mask[s], c.passed);
    }
}

#[test]
fn homological_diagonal_remainder_gives_zero() {
    let t = Truncation::new(1, 3, 4);
    let z = OpMatrix::zeros(t, Basis::Sine);
    let mut e0 = z.clone();
    let s = e0.slab_mut(&[0]).unwrap();
    for i in 0..8 {
        s[(i, i)] = C64::new(0.0, if i < 4 { 0.01 * i as f64 } else { -0.01 * (i - 4) as f64 });
    }
    let st = KamState::from_parts(1.0, vec![WB], 1.0, z, e0).unwrap();
    let psi = solve_homological(&st, 4, 1e-13).unwrap();
    assert_eq!(psi.max_abs(), 0.0);
}

#[test]
fn homological_single_entry() {
    let t = Truncation::new(1, 3, 4);
    let z = OpMatrix::zeros(t, Basis::Sine);
    let c = C64::new(0.0, 0.02);
    let mut e0 = z.clone();
    // reversible pair: conj A_{s}^{s'}(-h) = A_{-s}^{-s'}(h)
    e0.slab_mut(&[1]).unwrap()[(0, 1)] = c;
    e0.slab_mut(&[-1]).unwrap()[(4, 5)] = c.conj();
    let mut st = KamState::from_parts(0.9, vec![0.9 * WB], 1.01, z, e0).unwrap();
    st.r = vec![C64::new(0.0, 0.003); 8];
    for j in 0..4 {
        st.r[4 + j] = -st.r[j];
    }
    st.r[1] = C64::new(0.0, -0.002);
    st.r[5] = C64::new(0.0, 0.002);
    let psi = solve_homological(&st, 3, 1e-13).unwrap();
    let d = C64::new(0.0, 0.9 * WB) - C64::new(0.0, 1.01 * (1.0 - 4.0)) + st.r[0] - st.r[1];
    let expect = -c / d;
    assert!((psi.slab(&[1]).unwrap()[(0, 1)] - expect).norm() < 1e-16);
    assert_eq!(psi.max_abs(), expect.norm().max(psi.slab(&[-1]).unwrap()[(4, 5)].norm()));
}

/// Dense oracle: solve M X - X M = [R] - Pi_N R on the finite section by LU on
/// the Kronecker form restricted to the admissible entries.
fn dense_oracle(st: &KamState, n: usize) -> DMatrix<C64> {
    let t = st.trunc();
    let r = st.remainder();
    let b = r.block_dim();
    let ells = t.ells();
    let dim = ells.len() * b;
    let mu = st.mu();
    let rd = r.to_dense();
    let diag: Vec<C64> = (0..dim)
        .map(|i| C64::new(0.0, dot(&st.omega, &ells[i / b])) + mu[i % b])
        .collect();
    let allowed = |i: usize, k: usize| {
        let h: Vec<i64> = ells[i / b].iter().zip(&ells[k / b]).map(|(a, c)| a - c).collect();
        norm_inf(&h) as usize <= n && i != k
    };
    let idx: Vec<(usize, usize)> = (0..dim)
        .flat_map(|i| (0..dim).map(move |k| (i, k)))
        .filter(|&(i, k)| allowed(i, k))
        .collect();
    let m = idx.len();
    // Kronecker rows: (M X - X M)_{ik} = sum_a M_ia X_ak - sum_a X_ia M_ak
    let mut kmat = DMatrix::<C64>::zeros(m, m);
    let pos: std::collections::HashMap<(usize, usize), usize> = idx.iter().enumerate().map(|(p, &q)| (q, p)).collect();
    for (p, &(i, k)) in idx.iter().enumerate() {
        for a in 0..dim {
            if a == i {
                if let Some(&q) = pos.get(&(a, k)) {
                    kmat[(p, q)] += diag[i];
                }
            }
            if a == k {
                if let Some(&q) = pos.get(&(i, a)) {
                    kmat[(p, q)] -= diag[k];
                }
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(m, idx.iter().map(|&(i, k)| -rd[(i, k)]));
    let x = kmat.lu().solve(&rhs).unwrap();
    let mut out = DMatrix::zeros(dim, dim);
    for (p, &(i, k)) in idx.iter().enumerate() {
        out[(i, k)] = x[p];
    }
    out
}

#[test]
fn homological_matches_dense_oracle() {
    let t = Truncation::new(1, 2, 3);
    for seed in 0..5 {
        let mut st = seeded_state(t, 0.05, seed);
        st.r = vec![C64::new(0.0, 0.01), C64::new(0.0, -0.02), C64::new(0.0, 0.005)];
        st.r.extend(st.r.clone().iter().map(|c| -c));
        let n = 2;
        let psi = solve_homological(&st, n, 1e-13).unwrap();
        let res = homological_defect(&st.remainder(), &st.mu(), &st.omega, n, &psi).unwrap();
        assert!(res.decay_norm(1.5) < 1e-12);
        let oracle = dense_oracle(&st, n);
        let diff = (&oracle - psi.to_dense()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
        assert_eq!(classify_reversibility(&psi, 1e-14).tag, ReversibilityTag::ReversibilityPreserving);
    }
}

#[test]
fn step_with_zero_remainder_is_identity() {
    let st = zero_state(Truncation::new(1, 3, 4), 1.0);
    let (next, rep) = kam_step(&st, &KamConfig::default()).unwrap();
    assert_eq!(next.r, st.r);
    assert_eq!(next.delta(1.5), 0.0);
    assert_eq!(rep.psi_s0, 0.0);
}

#[test]
fn step_with_diagonal_average_absorbs_it() {
    let t = Truncation::new(1, 3, 4);
    let z = OpMatrix::zeros(t, Basis::Sine);
    let mut e0 = z.clone();
    let vals = [0.01, -0.003, 0.02, 0.0];
    for (j, v) in vals.iter().enumerate() {
        e0.slab_mut(&[0]).unwrap()[(j, j)] = C64::new(0.0, *v);
        e0.slab_mut(&[0]).unwrap()[(4 + j, 4 + j)] = C64::new(0.0, -*v);
    }
    let st = KamState::from_parts(1.0, vec![WB], 1.0, z, e0).unwrap();
    let (next, rep) = kam_step(&st, &KamConfig::default()).unwrap();
    assert_eq!(rep.psi_s0, 0.0);
    assert_eq!(next.remainder().max_abs(), 0.0);
    for (j, v) in vals.iter().enumerate() {
        assert_eq!(next.r[j], C64::new(0.0, *v));
        assert_eq!(next.r[4 + j], C64::new(0.0, -*v));
    }
}

#[test]
fn step_conjugates_and_preserves_structure() {
    let t = Truncation::new(1, 8, 4);
    for seed in 0..3 {
        let st = seeded_state(t, 1e-2, 100 + seed);
        assert_eq!(classify_reversibility(&st.remainder(), 1e-14).tag, ReversibilityTag::Reversible);
        let (next, rep) = kam_step(&st, &KamConfig::default()).unwrap();
        let phi = next.phis.last().unwrap();
        let res = conjugation_residual(&st, &next, phi).unwrap();
        assert!(res < 1e-9, "{res} {rep:?}");
        assert_eq!(next.e1_diagonal_defect(), 0.0);
        assert_eq!(classify_reversibility(&next.remainder(), 1e-14).tag, ReversibilityTag::Reversible);
        assert_eq!(classify_reversibility(phi, 1e-14).tag, ReversibilityTag::ReversibilityPreserving);
        assert!(next.delta(1.5) < st.delta(1.5));
        assert!(phi.is_toeplitz());
        assert!(rep.homological_residual < 1e-12);
    }
}

#[test]
fn epsilon_zero_needs_no_iteration() {
    let red = desk_reduction(0.0, 1.0, &KamConfig::default());
    assert!(red.steps.is_empty() && red.converged && red.admissible, "{:?} {:?}", red.trace(), red.excluded);
    let mu = red.mu();
    assert_eq!(mu, unperturbed(8, 1.0));
    assert_eq!(red.phi_minus_identity, 0.0);
}

#[test]
fn desk_reduction_decays_superlinearly() {
    // lambda = 1 is resonant here: 5 sqrt2 is close to 7 m
    let red = desk_reduction(1e-2, 0.96, &KamConfig::default());
    assert!(red.admissible && red.converged, "{:?}", red.excluded);
    let trace = red.trace();
    let d: Vec<f64> = trace.iter().map(|r| r.delta_s0).filter(|&x| x > 1e-14).collect();
    assert!(d.len() >= 3);
    let x: Vec<f64> = d[..d.len() - 1].iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = d[1..].iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>();
    assert!(slope >= 1.3, "slope {slope} {d:?}");
    let mu = red.mu();
    assert!(mu.iter().all(|c| c.re.abs() < 1e-13));
    for j in 0..8 {
        assert_eq!(mu[j], -mu[8 + j]);
    }
    let max_r = red.state.r.iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!(max_r > 0.0 && max_r < 1e-2 * 10.0);
}

#[test]
fn seeded_reduction_is_imaginary_and_antisymmetric() {
    let t = Truncation::new(1, 6, 4);
    let red = reduce_state(seeded_state(t, 2e-2, 7), &[WB], &KamConfig::default()).unwrap();
    let mut table = EigenvalueTable::new(4);
    table.push_sample(1.0, 1.0, red.r_history.clone());
    assert!(table.max_real_part() < 1e-13);
    assert_eq!(table.antisymmetry_defect(), 0.0);
}

#[test]
fn eigenvalue_variation_examples() {
    let cfg = KamConfig::default();
    let t = Truncation::new(1, 8, 8);
    let model = NlsModel::new(reference_nonlinearity(1), vec![WB], 1e-2);
    let u = smooth_field(t, 0.1, 21);
    let table_of = |u: &DoubledField, model: &NlsModel| {
        let reg = regularize(&model.linearize(u), 1.0, &model.omega_bar, &RegularizerConfig::default()).unwrap();
        let red = reduce(&reg, &model.omega_bar, &cfg).unwrap();
        let mut tb = EigenvalueTable::new(8);
        tb.push_sample(1.0, reg.m, red.r_history);
        tb
    };
    let base = table_of(&u, &model);
    let same = eigenvalue_variation(&base, &base, 0.0, 1e-2).unwrap();
    assert_eq!(same.max_diff, 0.0);
    let mut ratios = Vec::new();
    for k in 0..4 {
        let v = u.add(&smooth_field(t, 1e-4, 40 + k));
        let dist = v.sub(&u).sobolev_norm(1.5).unwrap();
        let var = eigenvalue_variation(&base, &table_of(&v, &model), dist, 1e-2).unwrap();
        ratios.push(var.ratio);
    }
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi < 10.0 && hi / lo.max(1e-300) < 100.0, "{ratios:?}");
    let flat = model.with_epsilon(0.0);
    let z = eigenvalue_variation(&table_of(&u, &flat), &table_of(&u.scale_re(2.0), &flat), 1.0, 0.0).unwrap();
    assert_eq!(z.max_diff, 0.0);
    assert!(eigenvalue_variation(&base, &EigenvalueTable::new(3), 1.0, 1.0).is_err());
}

