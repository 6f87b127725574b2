use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// mu_{sigma,j}(lambda) = -i sigma m j^2 + r_{sigma,j} on a set of samples.
///
/// Local positions follow the operator layout: slot * nx + (j - 1), slot 0 for
/// sigma = +1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueTable {
    pub nx: usize,
    pub lambdas: Vec<f64>,
    pub m: Vec<f64>,
    /// r[sample][iteration][local position].
    pub r: Vec<Vec<Vec<C64>>>,
}

pub fn sigma_of_slot(slot: usize) -> f64 {
    if slot == 0 {
        1.0
    } else {
        -1.0
    }
}

/// -i sigma m j^2 over the local positions.
pub fn unperturbed(nx: usize, m: f64) -> Vec<C64> {
    (0..2 * nx)
        .map(|loc| {
            let (slot, j) = (loc / nx, (loc % nx + 1) as f64);
            C64::new(0.0, -sigma_of_slot(slot) * m * j * j)
        })
        .collect()
}

impl EigenvalueTable {
    pub fn new(nx: usize) -> Self {
        EigenvalueTable {
            nx,
            lambdas: Vec::new(),
            m: Vec::new(),
            r: Vec::new(),
        }
    }

    pub fn push_sample(&mut self, lambda: f64, m: f64, history: Vec<Vec<C64>>) {
        self.lambdas.push(lambda);
        self.m.push(m);
        self.r.push(history);
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn iterations(&self, sample: usize) -> usize {
        self.r[sample].len()
    }

    /// r at iteration nu, clamped to the last one recorded.
    pub fn r_at(&self, sample: usize, nu: usize) -> &[C64] {
        let h = &self.r[sample];
        &h[nu.min(h.len() - 1)]
    }

    pub fn mu_at(&self, sample: usize, nu: usize) -> Vec<C64> {
        unperturbed(self.nx, self.m[sample])
            .iter()
            .zip(self.r_at(sample, nu))
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Last recorded eigenvalues of a sample.
    pub fn mu(&self, sample: usize) -> Vec<C64> {
        self.mu_at(sample, usize::MAX)
    }

    pub fn max_real_part(&self) -> f64 {
        (0..self.len())
            .flat_map(|s| self.r[s].iter().flatten().map(|c| c.re.abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    /// max |mu_{sigma,j} + mu_{-sigma,j}| over every sample and iteration.
    pub fn antisymmetry_defect(&self) -> f64 {
        let n = self.nx;
        let mut worst: f64 = 0.0;
        for (s, hist) in self.r.iter().enumerate() {
            for nu in 0..hist.len() {
                let mu = self.mu_at(s, nu);
                for j in 0..n {
                    worst = worst.max((mu[j] + mu[n + j]).norm());
                }
            }
        }
        worst
    }

    pub fn max_r(&self) -> f64 {
        self.r.iter().flatten().flatten().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Piecewise-linear extension of m and the last r between samples,
    /// constant outside the sampled range.
    pub fn interpolate(&self, lambda: f64) -> Option<(f64, Vec<C64>)> {
        if self.is_empty() {
            return None;
        }
        let last = |s: usize| self.r_at(s, usize::MAX).to_vec();
        let n = self.len();
        if n == 1 || lambda <= self.lambdas[0] {
            return Some((self.m[0], last(0)));
        }
        if lambda >= self.lambdas[n - 1] {
            return Some((self.m[n - 1], last(n - 1)));
        }
        let k = self.lambdas.partition_point(|&l| l <= lambda) - 1;
        let t = (lambda - self.lambdas[k]) / (self.lambdas[k + 1] - self.lambdas[k]);
        let m = self.m[k] * (1.0 - t) + self.m[k + 1] * t;
        let r = last(k)
            .iter()
            .zip(last(k + 1))
            .map(|(a, b)| a * (1.0 - t) + b * t)
            .collect();
        Some((m, r))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueVariation {
    /// max over samples and (sigma, j) of |r(u) - r(v)|.
    pub max_diff: f64,
    /// max_diff / (eps ||u - v||), 0 when the denominator vanishes.
    pub ratio: f64,
}

/// Compares the last corrections of two tables built on the same samples.
pub fn eigenvalue_variation(
    u: &EigenvalueTable,
    v: &EigenvalueTable,
    distance: f64,
    epsilon: f64,
) -> Result<EigenvalueVariation> {
    if u.nx != v.nx || u.lambdas != v.lambdas {
        return Err(Error::ShapeMismatch(format!(
            "eigenvalue tables with (nx, samples) = ({}, {}) and ({}, {})",
            u.nx,
            u.len(),
            v.nx,
            v.len()
        )));
    }
    let mut max_diff: f64 = 0.0;
    for s in 0..u.len() {
        for (a, b) in u.r_at(s, usize::MAX).iter().zip(v.r_at(s, usize::MAX)) {
            max_diff = max_diff.max((a - b).norm());
        }
    }
    let den = epsilon * distance;
    Ok(EigenvalueVariation {
        max_diff,
        ratio: if den > 0.0 { max_diff / den } else { 0.0 },
    })
}
