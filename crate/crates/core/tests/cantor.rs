use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpnls::cantor::*;
use qpnls::error::Error;
use qpnls::model::{reference_nonlinearity, NlsModel};
use qpnls::spectral::{bracket, dot, DoubledField, ParamGrid, Parity, SpectralField, Truncation};

fn omega_bar() -> Vec<f64> {
    vec![2f64.sqrt()]
}

fn golden() -> Vec<f64> {
    vec![(5f64.sqrt() - 1.0) / 2.0]
}

/// Closed-form sub-level set of |lambda a - delta| < theta on [lo, hi].
fn linear_set(a: f64, delta: f64, theta: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let (x, y) = ((delta - theta) / a, (delta + theta) / a);
    let (x, y) = (x.min(y).max(lo), x.max(y).min(hi));
    (y > x).then_some((x, y))
}

/// Eigenvalues m = 1 + c1 (lambda - 1), r_{sigma,j} = -i sigma c2 sin(lambda) / j, resolved on `k` knots.
fn smooth_source(nx: usize, c1: f64, c2: f64, k: usize) -> FnSource<impl Fn(f64) -> (f64, Vec<C64>) + Sync> {
    let knots = (0..k).map(|i| 0.5 + i as f64 / (k - 1) as f64).collect();
    FnSource {
        nx,
        knots,
        f: move |l: f64| {
            let r = (0..2 * nx)
                .map(|loc| {
                    let s = if loc < nx { 1.0 } else { -1.0 };
                    C64::new(0.0, -s * c2 * l.sin() / (loc % nx + 1) as f64)
                })
                .collect();
            (1.0 + c1 * (l - 1.0), r)
        },
    }
}

#[test]
fn epsilon_zero_intervals_match_closed_form() {
    let src = Unperturbed::new(8);
    let ob = omega_bar();
    let (gamma, tau) = (0.05, 3.5);
    let mut nonempty = 0;
    for t in triples(1, 8, 8) {
        let set = resonance_intervals(&src, &t, &ob, gamma, tau, false);
        let theta = 2.0 * gamma * t.delta().abs() / bracket(&t.ell, 0).powf(tau);
        let expect = if t.is_diagonal() {
            None
        } else {
            linear_set(dot(&ob, &t.ell), t.delta(), theta, 0.5, 1.5)
        };
        match expect {
            None => assert!(set.intervals.is_empty(), "{t:?}: {:?}", set.intervals),
            Some((a, b)) => {
                nonempty += 1;
                assert_eq!(set.intervals.len(), 1);
                assert!((set.intervals[0].0 - a).abs() < 1e-10 && (set.intervals[0].1 - b).abs() < 1e-10, "{t:?}");
            }
        }
    }
    assert!(nonempty > 10);
}

#[test]
fn diagonal_triple_is_empty() {
    let t = Triple {
        ell: vec![1],
        sigma: 1,
        j: 1,
        sigma_p: 1,
        j_p: 1,
    };
    let set = resonance_intervals(&Unperturbed::new(4), &t, &omega_bar(), 0.1, 2.0, false);
    assert!(set.intervals.is_empty());
}

#[test]
fn pruned_triple_is_empty() {
    // |1 + 16| = 17 > 8 sqrt(2) |ell|
    let t = Triple {
        ell: vec![-1],
        sigma: 1,
        j: 1,
        sigma_p: -1,
        j_p: 4,
    };
    let set = resonance_intervals(&Unperturbed::new(4), &t, &omega_bar(), 0.1, 2.0, true);
    assert!(set.pruned && set.intervals.is_empty());
}

#[test]
fn endpoints_are_certified_on_perturbed_source() {
    let src = smooth_source(6, 0.005, 0.005, 401);
    let ob = omega_bar();
    let mut checked = 0;
    for t in triples(1, 6, 6) {
        let set = resonance_intervals(&src, &t, &ob, 0.05, 3.0, true);
        assert!(!set.unreliable, "{t:?}");
        if !set.intervals.is_empty() {
            checked += 1;
            assert!(endpoint_defect(&src, &set, &ob) <= ROOT_TOL, "{t:?}");
        }
    }
    assert!(checked > 5);
}

#[test]
fn slope_bound_holds_at_epsilon_zero() {
    let src = Unperturbed::new(8);
    for t in triples(1, 8, 8) {
        let set = resonance_intervals(&src, &t, &omega_bar(), 0.05, 3.0, true);
        if !set.pruned && !t.is_diagonal() {
            assert!(set.min_slope_ratio >= 1.0 / 9.0, "{t:?}");
            assert!(!set.unreliable);
        }
    }
}

#[test]
fn flat_source_is_flagged_unreliable() {
    // psi has slope 1e-3 while delta = 2
    let src = FnSource {
        nx: 1,
        knots: vec![0.5, 1.0, 1.5],
        f: |l: f64| (1.0, vec![C64::new(0.0, 1e-3 * l - 1.0), C64::new(0.0, 1.0 - 1e-3 * l)]),
    };
    let t = Triple {
        ell: vec![0],
        sigma: 1,
        j: 1,
        sigma_p: -1,
        j_p: 1,
    };
    let set = resonance_intervals(&src, &t, &[1.0], 0.05, 2.0, false);
    assert!(set.unreliable);
}

#[test]
fn sweep_union_matches_analytic_union_at_epsilon_zero() {
    let src = Unperturbed::new(6);
    let ob = omega_bar();
    let cfg = MeasureConfig {
        tau: 3.0,
        lmax: 6,
        n: None,
        prune: true,
    };
    let gamma = 0.08;
    let table = cantor_measure_sweep(&src, &ob, &[gamma], &cfg).unwrap();
    let mut all = Vec::new();
    for t in triples(1, 6, 6) {
        let theta = 2.0 * gamma * t.delta().abs() / bracket(&t.ell, 0).powf(cfg.tau);
        all.extend(linear_set(dot(&ob, &t.ell), t.delta(), theta, 0.5, 1.5));
    }
    // independent union: sweep a fine grid of midpoints
    let n = 200_000;
    let covered = (0..n)
        .filter(|i| {
            let l = 0.5 + (*i as f64 + 0.5) / n as f64;
            all.iter().any(|&(a, b)| l > a && l < b)
        })
        .count() as f64
        / n as f64;
    assert!((table.rows[0].excluded_measure - covered).abs() < 1e-4);
}

#[test]
fn measure_scales_linearly_in_gamma() {
    let src = Unperturbed::new(8);
    let cfg = MeasureConfig::default();
    let t = cantor_measure_sweep(&src, &golden(), &[0.1, 0.05, 0.025], &cfg).unwrap();
    assert!((t.fit_exponent - 1.0).abs() <= 0.2, "exponent {}", t.fit_exponent);
    for w in t.rows.windows(2) {
        assert!(w[1].excluded_measure <= w[0].excluded_measure);
    }
}

#[test]
fn measure_scales_linearly_for_small_gamma_at_sqrt2() {
    let src = Unperturbed::new(8);
    let t = cantor_measure_sweep(&src, &omega_bar(), &[0.01, 0.005, 0.0025], &MeasureConfig::default()).unwrap();
    assert!((t.fit_exponent - 1.0).abs() <= 0.2, "exponent {}", t.fit_exponent);
}

#[test]
fn steep_mass_drift_is_flagged_unreliable() {
    // d m / d lambda = 0.02 breaks the slope bound once |delta| is close to 8 |omega_bar.ell|
    let src = smooth_source(8, 0.02, 0.0, 201);
    let row = measure_row(&src, &omega_bar(), 0.05, &MeasureConfig::default());
    assert!(row.unreliable > 0);
}

#[test]
fn per_triple_length_is_bounded_by_gamma_weight() {
    let src = smooth_source(8, 0.005, 0.005, 401);
    let cfg = MeasureConfig::default();
    for gamma in [0.1, 0.05, 0.025] {
        let row = measure_row(&src, &omega_bar(), gamma, &cfg);
        assert!(row.length_constant <= 36.0, "C = {}", row.length_constant);
        assert_eq!(row.unreliable, 0);
    }
}

#[test]
fn raising_tau_by_two_scales_interior_sets_by_bracket_squared() {
    let src = Unperturbed::new(8);
    let ob = omega_bar();
    let mut seen = 0;
    for t in triples(1, 8, 8) {
        let a = resonance_intervals(&src, &t, &ob, 0.05, 2.0, true);
        let b = resonance_intervals(&src, &t, &ob, 0.05, 4.0, true);
        let interior = |s: &ResonanceSet| s.intervals.iter().all(|&(x, y)| x > 0.5 && y < 1.5);
        if a.length() > 0.0 && interior(&a) && interior(&b) {
            seen += 1;
            let ratio = b.length() / a.length();
            let expect = bracket(&t.ell, 0).powi(-2);
            assert!((ratio - expect).abs() < 1e-9 * expect.max(1.0), "{t:?}");
        }
    }
    assert!(seen > 5);
}

#[test]
fn per_ell_sums_shrink_with_tau() {
    let src = Unperturbed::new(8);
    let lo = MeasureConfig { tau: 2.0, ..MeasureConfig::default() };
    let hi = MeasureConfig { tau: 4.0, ..MeasureConfig::default() };
    let a = measure_row(&src, &omega_bar(), 0.02, &lo);
    let b = measure_row(&src, &omega_bar(), 0.02, &hi);
    for (e, (x, y)) in a.per_ell.iter().zip(&b.per_ell).enumerate() {
        let w = ((e + 1) as f64).powi(-2);
        if *x > 0.0 {
            assert!(*y <= x * w * (1.0 + 1e-9), "|ell| = {}: {y} vs {x}", e + 1);
        }
    }
}

#[test]
fn monte_carlo_agrees_with_exact_union() {
    let src = smooth_source(6, 0.02, 0.01, 201);
    let cfg = MeasureConfig {
        lmax: 6,
        ..MeasureConfig::default()
    };
    let exact = measure_row(&src, &omega_bar(), 0.05, &cfg).excluded_measure;
    let n = 40_000;
    let mc = monte_carlo_measure(&src, &omega_bar(), 0.05, &cfg, n, 11);
    let sd = (exact * (1.0 - exact) / n as f64).sqrt();
    assert!((mc - exact).abs() < 5.0 * sd + 1e-9, "mc {mc} exact {exact}");
}

#[test]
fn masks_are_nested_in_gamma() {
    let src = smooth_source(6, 0.02, 0.01, 201);
    let ob = omega_bar();
    let lambdas: Vec<f64> = (0..500).map(|i| 0.5 + (i as f64 + 0.5) / 500.0).collect();
    let big = cantor_chain(&src, &ob, 0.08, 3.0, &[6], &lambdas);
    let small = cantor_chain(&src, &ob, 0.04, 3.0, &[6], &lambdas);
    for (b, s) in big[1].iter().zip(&small[1]) {
        assert!(!b || *s);
    }
    assert!(big[1].iter().filter(|&&m| m).count() < small[1].iter().filter(|&&m| m).count());
}

#[test]
fn cantor_chain_is_monotone() {
    let src = smooth_source(6, 0.02, 0.01, 201);
    let lambdas: Vec<f64> = (0..400).map(|i| 0.5 + (i as f64 + 0.5) / 400.0).collect();
    let chain = cantor_chain(&src, &omega_bar(), 0.03, 3.0, &[1, 2, 4, 6], &lambdas);
    assert_eq!(chain.len(), 5);
    for w in chain.windows(2) {
        for (next, prev) in w[1].iter().zip(&w[0]) {
            assert!(!next || *prev);
        }
    }
}

#[test]
fn gamma_schedule_decreases_to_gamma() {
    assert_eq!(gamma_n(0.1, 0), 0.2);
    for n in 0..20 {
        assert!(gamma_n(0.1, n + 1) < gamma_n(0.1, n));
        assert!(gamma_n(0.1, n) > 0.1);
    }
}

#[test]
fn sweep_rejects_bad_gamma_list() {
    let src = Unperturbed::new(2);
    assert!(matches!(
        cantor_measure_sweep(&src, &omega_bar(), &[], &MeasureConfig::default()),
        Err(Error::InvalidInput(_))
    ));
    assert!(cantor_measure_sweep(&src, &omega_bar(), &[0.1, -1.0], &MeasureConfig::default()).is_err());
}

#[test]
fn csv_outputs_have_expected_columns() {
    let src = Unperturbed::new(4);
    let cfg = MeasureConfig {
        lmax: 4,
        ..MeasureConfig::default()
    };
    let t = cantor_measure_sweep(&src, &omega_bar(), &[0.1, 0.05], &cfg).unwrap();
    let mut buf = Vec::new();
    write_measure_csv(&t, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("gamma,excluded_measure,triple_count,fit_exponent"));
    assert_eq!(text.lines().count(), 3);
    let sets = resonance_sets(&src, &omega_bar(), 0.1, &cfg);
    let mut buf = Vec::new();
    write_intervals_csv(&sets, &mut buf).unwrap();
    let n: usize = sets.iter().map(|s| s.intervals.len()).sum();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), n + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pruning_is_sound(c1 in -0.01f64..0.01, c2 in -0.005f64..0.005, gamma in 0.01f64..0.1) {
        let src = smooth_source(6, c1, c2, 101);
        let ob = omega_bar();
        for t in triples(1, 6, 6) {
            if t.delta().abs() > 8.0 * dot(&ob, &t.ell).abs() {
                let set = resonance_intervals(&src, &t, &ob, gamma, 3.0, false);
                prop_assert!(set.intervals.is_empty(), "{:?}", t);
                // exhaustive coarse-grid spot check
                for i in 0..=100 {
                    let l = 0.5 + i as f64 / 100.0;
                    prop_assert!(psi(&src, &t, &ob, l).norm() >= set.threshold);
                }
            }
        }
    }

    #[test]
    fn interval_points_satisfy_the_sublevel_condition(c1 in -0.01f64..0.01, c2 in -0.005f64..0.005, gamma in 0.01f64..0.1) {
        let src = smooth_source(4, c1, c2, 101);
        let ob = omega_bar();
        for t in triples(1, 4, 4) {
            let set = resonance_intervals(&src, &t, &ob, gamma, 3.0, true);
            for &(a, b) in &set.intervals {
                prop_assert!(a < b && a >= 0.5 && b <= 1.5);
                let mid = 0.5 * (a + b);
                prop_assert!(psi(&src, &t, &ob, mid).im.abs() < set.threshold + ROOT_TOL);
            }
            // points outside every interval are not resonant
            for i in 0..=50 {
                let l = 0.5 + i as f64 / 50.0;
                if set.intervals.iter().all(|&(a, b)| l < a - 1e-9 || l > b + 1e-9) {
                    prop_assert!(psi(&src, &t, &ob, l).im.abs() >= set.threshold - ROOT_TOL);
                }
            }
        }
    }

    #[test]
    fn merge_is_a_sorted_disjoint_cover(v in proptest::collection::vec((0.0f64..1.0, 0.0f64..0.2), 0..30)) {
        let iv: Vec<(f64, f64)> = v.iter().map(|&(a, w)| (a, a + w)).collect();
        let m = merge(iv.clone());
        for w in m.windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
        for &(a, b) in &iv {
            prop_assert!(m.iter().any(|&(x, y)| x <= a && b <= y));
        }
    }
}

fn random_x(t: Truncation, amp: f64, seed: u64) -> DoubledField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plus = SpectralField::zeros(t);
    for ell in t.ells() {
        let w = amp * (-(ell[0].abs() as f64)).exp();
        for j in 1..=t.nx as i64 {
            let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * (w / (j * j) as f64);
            plus.add_at(&ell, j, c);
            plus.add_at(&ell, -j, -c);
        }
    }
    DoubledField::from_plus(plus).project(Parity::X)
}

fn reducibility_setup(eps: f64) -> (NlsModel, ParamGrid, Truncation) {
    let ob = omega_bar();
    let model = NlsModel::new(reference_nonlinearity(1), ob.clone(), eps);
    let grid = ParamGrid::new(vec![0.62, 0.83, 1.07, 1.29, 1.46], &ob, 0.1, 2.0, 6).unwrap();
    (model, grid, Truncation::new(1, 6, 6))
}

#[test]
fn reducibility_with_identical_fields_has_no_drift() {
    let (model, grid, t) = reducibility_setup(1e-2);
    let u: Vec<DoubledField> = (0..grid.len()).map(|s| random_x(t, 0.05, s as u64)).collect();
    let cfg = ReducibilityConfig::default();
    let rep = approximate_reducibility(&model, &grid, &u, &u, &cfg).unwrap();
    assert!(rep.included, "{:?}", rep.violations);
    assert!(rep.samples.iter().any(|s| s.in_u));
    assert_eq!(rep.closeness_constant, 0.0);
    // r^(N)(u) differs from r_inf(u) only by the later KAM corrections
    assert!(rep.max_drift < 1e-3, "{}", rep.max_drift);
}

#[test]
fn reducibility_at_epsilon_zero_gives_identical_masks() {
    let (model, grid, t) = reducibility_setup(0.0);
    let u: Vec<DoubledField> = (0..grid.len()).map(|s| random_x(t, 0.05, s as u64)).collect();
    let v: Vec<DoubledField> = (0..grid.len()).map(|s| random_x(t, 0.05, 100 + s as u64)).collect();
    let rep = approximate_reducibility(&model, &grid, &u, &v, &ReducibilityConfig::default()).unwrap();
    assert_eq!(rep.max_drift, 0.0);
    assert!(rep.included);
    let rev = approximate_reducibility(&model, &grid, &v, &u, &ReducibilityConfig::default()).unwrap();
    for (a, b) in rep.samples.iter().zip(&rev.samples) {
        assert_eq!(a.in_u, b.in_u);
    }
}

#[test]
fn reducibility_inclusion_holds_for_small_perturbations() {
    let (model, grid, t) = reducibility_setup(1e-2);
    let cfg = ReducibilityConfig::default();
    let u: Vec<DoubledField> = (0..grid.len()).map(|s| random_x(t, 0.05, s as u64)).collect();
    let mut constants = Vec::new();
    for k in 0..4u64 {
        let v: Vec<DoubledField> = u
            .iter()
            .enumerate()
            .map(|(s, f)| f.add(&random_x(t, 1e-7, 1000 * k + s as u64)))
            .collect();
        let rep = approximate_reducibility(&model, &grid, &u, &v, &cfg).unwrap();
        assert!(rep.included, "violations {:?}", rep.violations);
        assert!(rep.closeness_constant < 1.0, "{}", rep.closeness_constant);
        constants.push(rep.drift_constant);
    }
    let (lo, hi) = constants.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    assert!(hi.is_finite() && hi <= 10.0 * lo.max(1e-300), "{constants:?}");
}

#[test]
fn reducibility_rejects_bad_rho() {
    let (model, grid, t) = reducibility_setup(1e-2);
    let u: Vec<DoubledField> = (0..grid.len()).map(|s| random_x(t, 0.05, s as u64)).collect();
    let cfg = ReducibilityConfig {
        rho: 0.5,
        ..ReducibilityConfig::default()
    };
    assert!(matches!(approximate_reducibility(&model, &grid, &u, &u, &cfg), Err(Error::InvalidInput(_))));
}
