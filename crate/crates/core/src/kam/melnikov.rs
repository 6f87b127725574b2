use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::eigen::{sigma_of_slot, EigenvalueTable};
use crate::spectral::{bracket, dot, ParamGrid, Truncation};

/// Triple where the divisor condition fails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelnikovWitness {
    pub ell: Vec<i64>,
    pub sigma: i8,
    pub j: usize,
    pub sigma_p: i8,
    pub j_p: usize,
    pub divisor: f64,
    pub bound: f64,
}

/// Outcome of the divisor sweep at one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleCheck {
    pub passed: bool,
    /// min |divisor| / bound over the tested triples with a nonzero bound.
    pub margin: f64,
    pub witness: Option<MelnikovWitness>,
    /// |lambda omega_bar.ell| >= gamma <ell>^-tau failed on the (sigma, j) = (sigma', j') stratum.
    pub first_order_violated: bool,
    pub tested: usize,
    pub pruned: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelnikovMask {
    pub mask: Vec<bool>,
    pub margin: f64,
    pub gamma: f64,
    pub tau: f64,
    pub n: usize,
    pub checks: Vec<SampleCheck>,
}

impl MelnikovMask {
    pub fn surviving(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Second Melnikov conditions at one sample:
/// |lambda omega_bar.ell + (mu_h - mu_h')/i| >= gamma |sigma j^2 - sigma' j'^2| / <ell>^tau
/// for |ell| <= n, plus the first-order bound on the stratum where the right
/// side vanishes. Triples are skipped only when the triangle inequality already
/// proves the bound; `prune = false` tests every triple.
#[allow(clippy::too_many_arguments)]
pub fn melnikov_check(
    mu: &[C64],
    m: f64,
    nx: usize,
    lambda: f64,
    omega_bar: &[f64],
    gamma: f64,
    tau: f64,
    n: usize,
    prune: bool,
) -> SampleCheck {
    let d = omega_bar.len();
    let b = 2 * nx;
    let r: Vec<C64> = mu
        .iter()
        .enumerate()
        .map(|(loc, v)| {
            let j = (loc % nx + 1) as f64;
            v - C64::new(0.0, -sigma_of_slot(loc / nx) * m * j * j)
        })
        .collect();
    let rmax = r.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut out = SampleCheck {
        passed: true,
        margin: f64::INFINITY,
        witness: None,
        first_order_violated: false,
        tested: 0,
        pruned: 0,
    };
    let big: Vec<f64> = (0..b)
        .map(|loc| {
            let j = (loc % nx + 1) as f64;
            sigma_of_slot(loc / nx) * j * j
        })
        .collect();
    for ell in Truncation::new(d, n, 0).ells() {
        let w = lambda * dot(omega_bar, &ell);
        let br = bracket(&ell, 0).powf(tau);
        let zero = ell.iter().all(|&x| x == 0);
        for h in 0..b {
            for hp in 0..b {
                let delta = big[h] - big[hp];
                if h == hp {
                    if zero {
                        continue;
                    }
                    // divisor is exactly lambda omega_bar.ell here
                    let bound = gamma / br;
                    out.tested += 1;
                    if w.abs() < bound {
                        out.first_order_violated = true;
                        fail(&mut out, &ell, h, hp, nx, w.abs(), bound);
                    } else {
                        out.margin = out.margin.min(w.abs() / bound);
                    }
                    continue;
                }
                let bound = gamma * delta.abs() / br;
                if prune && m * delta.abs() - w.abs() - 2.0 * rmax >= bound * (1.0 + 1e-12) {
                    out.pruned += 1;
                    continue;
                }
                out.tested += 1;
                let div = (C64::new(0.0, w) + mu[h] - mu[hp]).norm();
                if bound > 0.0 {
                    if div < bound {
                        fail(&mut out, &ell, h, hp, nx, div, bound);
                    } else {
                        out.margin = out.margin.min(div / bound);
                    }
                }
            }
        }
    }
    out
}

fn fail(out: &mut SampleCheck, ell: &[i64], h: usize, hp: usize, nx: usize, div: f64, bound: f64) {
    let ratio = div / bound;
    out.passed = false;
    if ratio < out.margin || out.witness.is_none() {
        out.margin = out.margin.min(ratio);
        out.witness = Some(MelnikovWitness {
            ell: ell.to_vec(),
            sigma: sigma_of_slot(h / nx) as i8,
            j: h % nx + 1,
            sigma_p: sigma_of_slot(hp / nx) as i8,
            j_p: hp % nx + 1,
            divisor: div,
            bound,
        });
    }
}

/// Mask over the grid samples, evaluated with the latest eigenvalues of the
/// table. Samples already excluded by the grid mask stay excluded.
pub fn second_melnikov_mask(
    table: &EigenvalueTable,
    grid: &ParamGrid,
    omega_bar: &[f64],
    gamma: f64,
    tau: f64,
    n: usize,
) -> MelnikovMask {
    let checks: Vec<SampleCheck> = (0..table.len())
        .map(|s| {
            melnikov_check(
                &table.mu(s),
                table.m[s],
                table.nx,
                table.lambdas[s],
                omega_bar,
                gamma,
                tau,
                n,
                true,
            )
        })
        .collect();
    let mask: Vec<bool> = checks
        .iter()
        .zip(&grid.mask)
        .map(|(c, &g)| g && c.passed)
        .collect();
    let margin = checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    MelnikovMask {
        mask,
        margin,
        gamma,
        tau,
        n,
        checks,
    }
}
