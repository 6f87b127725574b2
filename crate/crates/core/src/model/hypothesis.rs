use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nonlinearity::{Nonlinearity, Powers, Z0M, Z0P, Z2M, Z2P};
use crate::spectral::{Grid, SpectralField, Truncation};

const SYMBOLIC_TOL: f64 = 1e-12;
const NUMERIC_TOL: f64 = 1e-9;
const SAMPLES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    /// f(phi, -x, -z0, z1, -z2) = -f(phi, x, z0, z1, z2).
    Parity,
    /// f(-phi, x, z) = conj f(phi, x, conj z).
    TimeReversal,
    /// f(phi, x, 0) != 0 and d_{z2} f(phi, x, 0) real and nonzero.
    Nondegeneracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseReport {
    pub clause: Clause,
    pub passed: bool,
    /// Powers of the monomial groups that break the clause.
    pub offending: Vec<Powers>,
    pub symbolic_defect: f64,
    pub numeric_defect: f64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub clauses: Vec<ClauseReport>,
    /// d_{z2} f(., ., 0) changes sign on the collocation grid.
    pub z2_sign_varies: bool,
    /// min and max of d_{z2} f(., ., 0) on the grid.
    pub z2_range: (f64, f64),
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, c: Clause) -> &ClauseReport {
        self.clauses.iter().find(|r| r.clause == c).expect("all clauses reported")
    }

    pub fn failures(&self) -> Vec<Clause> {
        self.clauses.iter().filter(|c| !c.passed).map(|c| c.clause).collect()
    }
}

/// Symbolic checks on the monomial coefficients plus pointwise checks at random
/// arguments over a collocation grid.
pub fn validate_hypothesis(f: &Nonlinearity) -> HypothesisReport {
    let groups = group_by_powers(f);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let pts = sample_points(f, &mut rng);

    let mut parity = ClauseReport::new(Clause::Parity);
    for (p, c) in &groups {
        let s = if (p[Z0P] + p[Z0M] + p[Z2P] + p[Z2M]) % 2 == 0 { 1.0 } else { -1.0 };
        let mut defect: f64 = 0.0;
        c.for_each(|ell, k, v| {
            defect = defect.max((c.get(ell, -k) + v * s).norm());
        });
        parity.record(*p, defect);
    }
    parity.numeric_defect = pts
        .iter()
        .map(|(phi, x, z)| {
            let mz = [-z[0], -z[1], z[2], z[3], -z[4], -z[5]];
            (f.eval_point(phi, -x, &mz) + f.eval_point(phi, *x, z)).norm()
        })
        .fold(0.0, f64::max);
    parity.finish("coefficient must be odd in x when z0, z2 enter with even total degree, even otherwise");

    let mut rev = ClauseReport::new(Clause::TimeReversal);
    for (p, c) in &groups {
        let mut defect: f64 = 0.0;
        c.for_each(|ell, k, v| {
            defect = defect.max((v - c.get(ell, -k).conj()).norm());
        });
        rev.record(*p, defect);
    }
    rev.numeric_defect = pts
        .iter()
        .map(|(phi, x, z)| {
            let mphi: Vec<f64> = phi.iter().map(|v| -v).collect();
            let zc = [z[1], z[0], z[3], z[2], z[5], z[4]];
            (f.eval_point(&mphi, *x, z) - f.eval_point(phi, *x, &zc).conj()).norm()
        })
        .fold(0.0, f64::max);
    rev.finish("coefficient must satisfy c(-phi, x) = conj c(phi, x)");

    let mut nondeg = ClauseReport::new(Clause::Nondegeneracy);
    let zero: Powers = [0; 6];
    let mut e2: Powers = [0; 6];
    e2[Z2P] = 1;
    let t0 = Truncation::new(f.d, 0, 0);
    let f0 = groups.get(&zero).cloned().unwrap_or_else(|| SpectralField::zeros(t0));
    let g = groups.get(&e2).cloned().unwrap_or_else(|| SpectralField::zeros(t0));
    let grid = oversampled(g.trunc().max(&f0.trunc()));
    let f0v = grid.synth(&f0.resize(g.trunc().max(&f0.trunc())));
    let gv = grid.synth(&g);
    let f0_max = f0v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let g_im = gv.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let g_min = gv.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    let g_max = gv.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
    let g_abs_min = gv.iter().map(|v| v.re.abs()).fold(f64::INFINITY, f64::min);
    let sign_varies = g_min < 0.0 && g_max > 0.0;
    let mut msgs = Vec::new();
    if f0_max <= SYMBOLIC_TOL {
        nondeg.offending.push(zero);
        msgs.push("f(phi, x, 0) vanishes identically".to_string());
    }
    if g_im > SYMBOLIC_TOL {
        nondeg.offending.push(e2);
        msgs.push(format!("d_z2 f at 0 has imaginary part up to {g_im:.3e}"));
    }
    if g_abs_min <= SYMBOLIC_TOL || sign_varies {
        nondeg.offending.push(e2);
        msgs.push(format!("d_z2 f at 0 ranges over [{g_min:.3e}, {g_max:.3e}]"));
    }
    nondeg.offending.dedup();
    nondeg.symbolic_defect = g_im;
    nondeg.numeric_defect = g_abs_min;
    nondeg.passed = msgs.is_empty();
    nondeg.message = msgs.join("; ");

    HypothesisReport {
        clauses: vec![parity, rev, nondeg],
        z2_sign_varies: sign_varies,
        z2_range: (g_min, g_max),
    }
}

impl ClauseReport {
    fn new(clause: Clause) -> Self {
        ClauseReport {
            clause,
            passed: true,
            offending: Vec::new(),
            symbolic_defect: 0.0,
            numeric_defect: 0.0,
            message: String::new(),
        }
    }

    fn record(&mut self, p: Powers, defect: f64) {
        self.symbolic_defect = self.symbolic_defect.max(defect);
        if defect > SYMBOLIC_TOL {
            self.offending.push(p);
        }
    }

    fn finish(&mut self, rule: &str) {
        self.passed = self.offending.is_empty() && self.numeric_defect <= NUMERIC_TOL;
        if !self.passed {
            self.message = format!(
                "{rule}; symbolic defect {:.3e}, pointwise defect {:.3e}, offending powers {:?}",
                self.symbolic_defect, self.numeric_defect, self.offending
            );
        }
    }
}

fn group_by_powers(f: &Nonlinearity) -> BTreeMap<Powers, SpectralField> {
    let mut groups: BTreeMap<Powers, SpectralField> = BTreeMap::new();
    for t in &f.terms {
        groups
            .entry(t.powers)
            .and_modify(|c| *c = c.add(&t.coeff))
            .or_insert_with(|| t.coeff.clone());
    }
    groups
}

fn oversampled(t: Truncation) -> Grid {
    Grid::new(t.d, 4 * t.nphi + 3, 4 * t.nx + 3)
}

/// Random (phi, x, z) with z = (z0, conj z0, z1, conj z1, z2, conj z2) scaled
/// so every monomial stays O(1).
fn sample_points(f: &Nonlinearity, rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, f64, [C64; 6])> {
    (0..SAMPLES)
        .map(|_| {
            let phi: Vec<f64> = (0..f.d).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let x = rng.random_range(0.0..2.0 * PI);
            let mut z = [C64::new(0.0, 0.0); 6];
            for i in 0..3 {
                let v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                z[2 * i] = v;
                z[2 * i + 1] = v.conj();
            }
            (phi, x, z)
        })
        .collect()
}
