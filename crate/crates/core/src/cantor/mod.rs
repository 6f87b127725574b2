//! Resonance sets in the parameter lambda and the measure of excluded parameters.

mod reducibility;

pub use reducibility::{approximate_reducibility, ReducibilityConfig, ReducibilityReport, SampleInclusion};

use std::io::Write;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kam::{sigma_of_slot, EigenvalueTable};
use crate::spectral::param::{LAMBDA_MAX, LAMBDA_MIN};
use crate::spectral::{bracket, dot, Truncation};

const BISECTION_STEPS: usize = 200;
/// Certified endpoints satisfy | |psi(lambda*)| - threshold | <= this.
pub const ROOT_TOL: f64 = 1e-10;

/// m(lambda) and r_{sigma,j}(lambda) at arbitrary lambda in the source range.
pub trait EigenSource: Sync {
    fn nx(&self) -> usize;
    fn range(&self) -> (f64, f64);
    /// Points between which the source is resolved; bracketing works segment-wise.
    fn knots(&self) -> Vec<f64>;
    fn eval(&self, lambda: f64) -> (f64, Vec<C64>);
}

impl EigenSource for EigenvalueTable {
    fn nx(&self) -> usize {
        self.nx
    }

    fn range(&self) -> (f64, f64) {
        (self.lambdas[0], self.lambdas[self.len() - 1])
    }

    fn knots(&self) -> Vec<f64> {
        self.lambdas.clone()
    }

    fn eval(&self, lambda: f64) -> (f64, Vec<C64>) {
        self.interpolate(lambda).expect("non-empty table")
    }
}

/// m = 1, r = 0: the eigenvalues at epsilon = 0.
#[derive(Clone, Copy, Debug)]
pub struct Unperturbed {
    pub nx: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Unperturbed {
    pub fn new(nx: usize) -> Self {
        Unperturbed {
            nx,
            lo: LAMBDA_MIN,
            hi: LAMBDA_MAX,
        }
    }
}

impl EigenSource for Unperturbed {
    fn nx(&self) -> usize {
        self.nx
    }

    fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn knots(&self) -> Vec<f64> {
        vec![self.lo, self.hi]
    }

    fn eval(&self, _lambda: f64) -> (f64, Vec<C64>) {
        (1.0, vec![C64::new(0.0, 0.0); 2 * self.nx])
    }
}

/// Source given by a closure, resolved on uniform knots.
pub struct FnSource<F> {
    pub nx: usize,
    pub knots: Vec<f64>,
    pub f: F,
}

impl<F: Fn(f64) -> (f64, Vec<C64>) + Sync> EigenSource for FnSource<F> {
    fn nx(&self) -> usize {
        self.nx
    }

    fn range(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    fn knots(&self) -> Vec<f64> {
        self.knots.clone()
    }

    fn eval(&self, lambda: f64) -> (f64, Vec<C64>) {
        (self.f)(lambda)
    }
}

/// (ell, (sigma, j), (sigma', j')).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub ell: Vec<i64>,
    pub sigma: i8,
    pub j: usize,
    pub sigma_p: i8,
    pub j_p: usize,
}

impl Triple {
    /// sigma j^2 - sigma' j'^2.
    pub fn delta(&self) -> f64 {
        self.sigma as f64 * (self.j * self.j) as f64 - self.sigma_p as f64 * (self.j_p * self.j_p) as f64
    }

    pub fn is_diagonal(&self) -> bool {
        self.sigma == self.sigma_p && self.j == self.j_p
    }

    fn local(&self, nx: usize) -> (usize, usize) {
        let slot = |s: i8| if s > 0 { 0 } else { 1 };
        (slot(self.sigma) * nx + self.j - 1, slot(self.sigma_p) * nx + self.j_p - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    IntervalSweep,
    RootBracketing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSet {
    pub triple: Triple,
    pub threshold: f64,
    pub intervals: Vec<(f64, f64)>,
    pub method: Method,
    /// Skipped by |sigma j^2 - sigma' j'^2| > 8 |omega_bar.ell|.
    pub pruned: bool,
    /// Some segment violated the slope bound |sigma j^2 - sigma' j'^2| / 9.
    pub unreliable: bool,
    /// Smallest difference quotient of psi over the segments, divided by |delta|.
    pub min_slope_ratio: f64,
    /// max |Re psi| over the knots.
    pub real_part: f64,
}

impl ResonanceSet {
    pub fn length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }
}

/// gamma_n = gamma (1 + 2^-n).
pub fn gamma_n(gamma: f64, n: usize) -> f64 {
    gamma * (1.0 + 0.5f64.powi(n as i32))
}

/// psi(lambda) = i lambda omega_bar.ell + mu_h - mu_h'.
pub fn psi(source: &dyn EigenSource, t: &Triple, omega_bar: &[f64], lambda: f64) -> C64 {
    let nx = source.nx();
    let (h, hp) = t.local(nx);
    let (m, r) = source.eval(lambda);
    let mu = |loc: usize| {
        let j = (loc % nx + 1) as f64;
        C64::new(0.0, -sigma_of_slot(loc / nx) * m * j * j) + r[loc]
    };
    C64::new(0.0, lambda * dot(omega_bar, &t.ell)) + mu(h) - mu(hp)
}

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..BISECTION_STEPS {
        let c = 0.5 * (a + b);
        if c <= a || c >= b {
            break;
        }
        if (f(c) > 0.0) == (fa > 0.0) {
            a = c;
        } else {
            b = c;
        }
    }
    0.5 * (a + b)
}

/// Sub-level set {lambda : |psi(lambda)| < 2 gamma_n |delta| <ell>^-tau} over the
/// source range. On each segment between knots Im psi is taken monotone; the
/// crossings of Im psi = +-threshold are located by bisection.
pub fn resonance_intervals(
    source: &dyn EigenSource,
    triple: &Triple,
    omega_bar: &[f64],
    gamma_n: f64,
    tau: f64,
    prune: bool,
) -> ResonanceSet {
    let delta = triple.delta();
    let threshold = 2.0 * gamma_n * delta.abs() / bracket(&triple.ell, 0).powf(tau);
    let mut out = ResonanceSet {
        triple: triple.clone(),
        threshold,
        intervals: Vec::new(),
        method: Method::RootBracketing,
        pruned: false,
        unreliable: false,
        min_slope_ratio: f64::INFINITY,
        real_part: 0.0,
    };
    if triple.is_diagonal() {
        return out;
    }
    if prune && delta.abs() > 8.0 * dot(omega_bar, &triple.ell).abs() {
        out.pruned = true;
        return out;
    }
    let phi = |l: f64| psi(source, triple, omega_bar, l).im;
    let knots = source.knots();
    let vals: Vec<C64> = knots.iter().map(|&l| psi(source, triple, omega_bar, l)).collect();
    out.real_part = vals.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let mut raw: Vec<(f64, f64)> = Vec::new();
    for k in 0..knots.len().saturating_sub(1) {
        let (a, b) = (knots[k], knots[k + 1]);
        let (fa, fb) = (vals[k].im, vals[k + 1].im);
        let slope = (fb - fa).abs() / (b - a);
        out.min_slope_ratio = out.min_slope_ratio.min(slope / delta.abs());
        if slope < delta.abs() / 9.0 {
            out.unreliable = true;
        }
        if fa == fb {
            if fa.abs() < threshold {
                raw.push((a, b));
            }
            continue;
        }
        let s = if fb > fa { 1.0 } else { -1.0 };
        let g = |l: f64| s * phi(l);
        let (ga, gb) = (s * fa, s * fb);
        if ga >= threshold || gb <= -threshold {
            continue;
        }
        let lo = if ga > -threshold {
            a
        } else {
            bisect(&|l| g(l) + threshold, a, b)
        };
        let hi = if gb < threshold {
            b
        } else {
            bisect(&|l| g(l) - threshold, a, b)
        };
        if hi > lo {
            raw.push((lo, hi));
        }
    }
    out.intervals = merge(raw);
    out
}

/// Sorted union of intervals.
pub fn merge(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// | |psi| - threshold | at every interior endpoint.
pub fn endpoint_defect(source: &dyn EigenSource, set: &ResonanceSet, omega_bar: &[f64]) -> f64 {
    let (lo, hi) = source.range();
    let mut worst: f64 = 0.0;
    for &(a, b) in &set.intervals {
        for e in [a, b] {
            if e > lo && e < hi {
                let p = psi(source, &set.triple, omega_bar, e).im.abs();
                worst = worst.max((p - set.threshold).abs());
            }
        }
    }
    worst
}

/// Every triple with 0 < |ell| <= lmax and j, j' <= nx, (sigma, j) != (sigma', j').
pub fn triples(d: usize, lmax: usize, nx: usize) -> Vec<Triple> {
    let mut out = Vec::new();
    for ell in Truncation::new(d, lmax, 0).ells() {
        if ell.iter().all(|&l| l == 0) {
            continue;
        }
        for s in [1i8, -1] {
            for j in 1..=nx {
                for sp in [1i8, -1] {
                    for jp in 1..=nx {
                        let t = Triple {
                            ell: ell.clone(),
                            sigma: s,
                            j,
                            sigma_p: sp,
                            j_p: jp,
                        };
                        if !t.is_diagonal() {
                            out.push(t);
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub tau: f64,
    /// Largest |ell| considered.
    pub lmax: usize,
    /// Index n of gamma_n; None uses gamma itself.
    pub n: Option<usize>,
    pub prune: bool,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            tau: 3.5,
            lmax: 8,
            n: None,
            prune: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureRow {
    pub gamma: f64,
    pub excluded_measure: f64,
    /// Triples with a non-empty resonance set.
    pub triple_count: usize,
    /// max over triples of length / (gamma <ell>^-tau).
    pub length_constant: f64,
    pub unreliable: usize,
    /// Sum of lengths per |ell|, index |ell| - 1.
    pub per_ell: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureTable {
    pub tau: f64,
    pub range: (f64, f64),
    pub rows: Vec<MeasureRow>,
    /// Least-squares slope of ln(measure) against ln(gamma).
    pub fit_exponent: f64,
    /// Largest length constant over all rows.
    pub length_constant: f64,
}

/// Resonance sets of every triple for one gamma.
pub fn resonance_sets(source: &dyn EigenSource, omega_bar: &[f64], gamma: f64, cfg: &MeasureConfig) -> Vec<ResonanceSet> {
    let g = cfg.n.map(|n| gamma_n(gamma, n)).unwrap_or(gamma);
    triples(omega_bar.len(), cfg.lmax, source.nx())
        .par_iter()
        .map(|t| resonance_intervals(source, t, omega_bar, g, cfg.tau, cfg.prune))
        .collect()
}

pub fn measure_row(source: &dyn EigenSource, omega_bar: &[f64], gamma: f64, cfg: &MeasureConfig) -> MeasureRow {
    let sets = resonance_sets(source, omega_bar, gamma, cfg);
    let all: Vec<(f64, f64)> = sets.iter().flat_map(|s| s.intervals.iter().cloned()).collect();
    let excluded_measure = merge(all).iter().map(|(a, b)| b - a).sum();
    let mut per_ell = vec![0.0; cfg.lmax];
    let mut length_constant: f64 = 0.0;
    for s in &sets {
        let l = s.length();
        if l > 0.0 {
            let e = crate::spectral::norm_inf(&s.triple.ell) as usize;
            per_ell[e - 1] += l;
            length_constant = length_constant.max(l / (gamma / bracket(&s.triple.ell, 0).powf(cfg.tau)));
        }
    }
    MeasureRow {
        gamma,
        excluded_measure,
        triple_count: sets.iter().filter(|s| !s.intervals.is_empty()).count(),
        length_constant,
        unreliable: sets.iter().filter(|s| s.unreliable).count(),
        per_ell,
    }
}

/// Least-squares slope of ln y against ln x over the positive pairs.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Excluded measure for each gamma and the fitted exponent.
pub fn cantor_measure_sweep(
    source: &dyn EigenSource,
    omega_bar: &[f64],
    gammas: &[f64],
    cfg: &MeasureConfig,
) -> Result<MeasureTable> {
    if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidInput("gamma list must be non-empty and positive".into()));
    }
    let rows: Vec<MeasureRow> = gammas.iter().map(|&g| measure_row(source, omega_bar, g, cfg)).collect();
    let x: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.excluded_measure).collect();
    Ok(MeasureTable {
        tau: cfg.tau,
        range: source.range(),
        fit_exponent: log_log_slope(&x, &y),
        length_constant: rows.iter().map(|r| r.length_constant).fold(0.0, f64::max),
        rows,
    })
}

/// Fraction of uniform samples of the range lying in some resonance set,
/// scaled to the range length; pruning is not applied.
pub fn monte_carlo_measure(
    source: &dyn EigenSource,
    omega_bar: &[f64],
    gamma: f64,
    cfg: &MeasureConfig,
    samples: usize,
    seed: u64,
) -> f64 {
    let g = cfg.n.map(|n| gamma_n(gamma, n)).unwrap_or(gamma);
    let ts = triples(omega_bar.len(), cfg.lmax, source.nx());
    let (lo, hi) = source.range();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas: Vec<f64> = (0..samples).map(|_| rng.random_range(lo..hi)).collect();
    let hits = lambdas
        .par_iter()
        .filter(|&&l| {
            ts.iter().any(|t| {
                let th = 2.0 * g * t.delta().abs() / bracket(&t.ell, 0).powf(cfg.tau);
                psi(source, t, omega_bar, l).norm() < th
            })
        })
        .count();
    (hi - lo) * hits as f64 / samples as f64
}

/// Measure table as CSV: gamma, excluded_measure, triple_count, fit_exponent.
pub fn write_measure_csv<W: Write>(t: &MeasureTable, w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        gamma: f64,
        excluded_measure: f64,
        triple_count: usize,
        fit_exponent: f64,
    }
    let mut wr = csv::Writer::from_writer(w);
    for r in &t.rows {
        wr.serialize(Row {
            gamma: r.gamma,
            excluded_measure: r.excluded_measure,
            triple_count: r.triple_count,
            fit_exponent: t.fit_exponent,
        })?;
    }
    wr.flush()?;
    Ok(())
}

/// Per-triple interval dump as CSV.
pub fn write_intervals_csv<W: Write>(sets: &[ResonanceSet], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["ell", "sigma", "j", "sigma_p", "j_p", "lo", "hi"])?;
    for s in sets {
        let t = &s.triple;
        let ell = t.ell.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ");
        for (a, b) in &s.intervals {
            wr.write_record([
                ell.clone(),
                t.sigma.to_string(),
                t.j.to_string(),
                t.sigma_p.to_string(),
                t.j_p.to_string(),
                a.to_string(),
                b.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Sample masks of the nested sets G_0 = range, G_{n+1} = G_n minus the
/// resonance sets at gamma_n over 0 < |ell| <= levels[n].
pub fn cantor_chain(
    source: &dyn EigenSource,
    omega_bar: &[f64],
    gamma: f64,
    tau: f64,
    levels: &[usize],
    lambdas: &[f64],
) -> Vec<Vec<bool>> {
    let mut chain = vec![vec![true; lambdas.len()]];
    for (n, &lmax) in levels.iter().enumerate() {
        let g = gamma_n(gamma, n);
        let cut: Vec<(f64, f64)> = triples(omega_bar.len(), lmax, source.nx())
            .par_iter()
            .flat_map_iter(|t| resonance_intervals(source, t, omega_bar, g, tau, true).intervals)
            .collect();
        let cut = merge(cut);
        let prev = chain.last().expect("non-empty chain");
        let next = lambdas
            .iter()
            .zip(prev)
            .map(|(&l, &keep)| keep && !cut.iter().any(|&(a, b)| l > a && l < b))
            .collect();
        chain.push(next);
    }
    chain
}
