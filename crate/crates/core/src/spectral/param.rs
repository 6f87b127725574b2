use serde::{Deserialize, Serialize};

use super::trunc::{dot, norm_inf, Truncation};
use crate::error::{Error, Result};

pub const LAMBDA_MIN: f64 = 0.5;
pub const LAMBDA_MAX: f64 = 1.5;

/// Finite set of lambda samples in [1/2, 3/2] with an admissibility mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub samples: Vec<f64>,
    pub gamma0: f64,
    pub tau: f64,
    pub mask: Vec<bool>,
}

impl ParamGrid {
    /// Builds the grid after checking the samples and the diophantine bound of
    /// `omega_bar` up to |ell| <= nphi.
    pub fn new(
        samples: Vec<f64>,
        omega_bar: &[f64],
        gamma0: f64,
        tau: f64,
        nphi: usize,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("parameter grid needs at least one sample".into()));
        }
        if !(gamma0 > 0.0) {
            return Err(Error::InvalidInput(format!("gamma0 = {gamma0} must be positive")));
        }
        if !(tau > omega_bar.len() as f64) {
            return Err(Error::InvalidInput(format!(
                "tau = {tau} must exceed d = {}",
                omega_bar.len()
            )));
        }
        for w in samples.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidInput("samples must be strictly increasing".into()));
            }
        }
        if let Some(l) = samples.iter().find(|&&l| !(LAMBDA_MIN..=LAMBDA_MAX).contains(&l)) {
            return Err(Error::InvalidInput(format!("sample {l} outside [1/2, 3/2]")));
        }
        if let Some((ell, v)) = diophantine_violation(omega_bar, gamma0, nphi) {
            return Err(Error::InvalidInput(format!(
                "omega_bar fails |omega.ell| >= gamma0 |ell|^-d at ell = {ell:?} (|omega.ell| = {v:.3e})"
            )));
        }
        let n = samples.len();
        Ok(ParamGrid {
            samples,
            gamma0,
            tau,
            mask: vec![true; n],
        })
    }

    /// `n` equispaced samples spanning [lo, hi].
    pub fn uniform(
        lo: f64,
        hi: f64,
        n: usize,
        omega_bar: &[f64],
        gamma0: f64,
        tau: f64,
        nphi: usize,
    ) -> Result<Self> {
        let samples = if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        };
        Self::new(samples, omega_bar, gamma0, tau, nphi)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn surviving(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// First ell with 0 < |ell| <= n violating |omega.ell| >= gamma0 |ell|^{-d}.
pub fn diophantine_violation(omega: &[f64], gamma0: f64, n: usize) -> Option<(Vec<i64>, f64)> {
    let d = omega.len();
    let t = Truncation::new(d.max(1), n, 0);
    for ell in t.ells() {
        let l = norm_inf(&ell);
        if l == 0 {
            continue;
        }
        let v = dot(omega, &ell).abs();
        if v < gamma0 * (l as f64).powi(-(d as i32)) {
            return Some((ell, v));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        let w = [2f64.sqrt()];
        assert!(ParamGrid::new(vec![], &w, 0.1, 2.0, 4).is_err());
        assert!(ParamGrid::new(vec![0.4], &w, 0.1, 2.0, 4).is_err());
        assert!(ParamGrid::new(vec![1.0, 0.9], &w, 0.1, 2.0, 4).is_err());
        assert!(ParamGrid::new(vec![1.0], &w, 0.1, 0.5, 4).is_err());
        assert!(ParamGrid::new(vec![1.0], &[1.0, 1.0], 0.1, 3.0, 4).is_err());
        let g = ParamGrid::uniform(0.5, 1.5, 11, &w, 0.1, 2.0, 8).unwrap();
        assert_eq!(g.surviving(), 11);
    }
}
