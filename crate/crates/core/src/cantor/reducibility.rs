use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kam::{melnikov_check, reduce, KamConfig, KamReduction};
use crate::model::NlsModel;
use crate::regularizer::{regularize, RegularizerConfig};
use crate::spectral::{DoubledField, ParamGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReducibilityConfig {
    pub regularizer: RegularizerConfig,
    pub kam: KamConfig,
    /// Truncation scale N of the approximate set.
    pub n: usize,
    /// Must satisfy 0 < rho < gamma / 2.
    pub rho: f64,
    /// Exponent kappa of the N^-kappa term in the drift bound.
    pub kappa: f64,
    /// s0 + eta, the norm index of |u - v|.
    pub distance_index: Option<f64>,
}

impl Default for ReducibilityConfig {
    fn default() -> Self {
        ReducibilityConfig {
            regularizer: RegularizerConfig::default(),
            kam: KamConfig::default(),
            n: 4,
            rho: 0.01,
            kappa: 1.0,
            distance_index: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleInclusion {
    pub lambda: f64,
    /// lambda in the full set at 2 gamma for u.
    pub in_u: bool,
    /// lambda in the truncated set at gamma - rho for v.
    pub in_v: bool,
    /// KAM iteration whose eigenvalues represent r^(N)(v).
    pub nu_n: usize,
    /// max_h |r_h(u) - r_h^(N)(v)|.
    pub drift: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducibilityReport {
    pub n: usize,
    pub rho: f64,
    pub samples: Vec<SampleInclusion>,
    /// Every sample in the u-set lies in the v-set.
    pub included: bool,
    /// Samples in the u-set but outside the v-set.
    pub violations: Vec<f64>,
    pub max_drift: f64,
    /// max drift / (epsilon |u - v| + epsilon N^-kappa).
    pub drift_constant: f64,
    /// max |u - v| / (epsilon rho N^-tau); the closeness hypothesis asks for a bounded value.
    pub closeness_constant: f64,
}

fn reduce_at(model: &NlsModel, w: &DoubledField, lambda: f64, cfg: &ReducibilityConfig) -> Result<KamReduction> {
    let reg = regularize(&model.linearize(w), lambda, &model.omega_bar, &cfg.regularizer)?;
    reduce(&reg, &model.omega_bar, &cfg.kam)
}

/// Checks, sample by sample, that the full Melnikov set at 2 gamma for u lies
/// in the set at gamma - rho for v built from eigenvalues truncated at scale N,
/// and measures the eigenvalue drift against epsilon |u - v| + epsilon N^-kappa.
pub fn approximate_reducibility(
    model: &NlsModel,
    grid: &ParamGrid,
    u: &[DoubledField],
    v: &[DoubledField],
    cfg: &ReducibilityConfig,
) -> Result<ReducibilityReport> {
    if u.len() != grid.len() || v.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} and {} fields for {} samples",
            u.len(),
            v.len(),
            grid.len()
        )));
    }
    let gamma = cfg.kam.gamma;
    if !(cfg.rho > 0.0 && cfg.rho < gamma / 2.0) {
        return Err(Error::InvalidInput(format!("rho = {} outside (0, gamma/2)", cfg.rho)));
    }
    if cfg.n == 0 {
        return Err(Error::InvalidInput("N must be positive".into()));
    }
    let t = u.first().map(|f| f.trunc()).ok_or_else(|| Error::InvalidInput("empty grid".into()))?;
    let ob = &model.omega_bar;
    let index = cfg.distance_index.unwrap_or(cfg.kam.s0(t.d) + 1.0);
    let samples: Vec<SampleInclusion> = (0..grid.len())
        .into_par_iter()
        .map(|s| -> Result<SampleInclusion> {
            let lambda = grid.samples[s];
            let ru = reduce_at(model, &u[s], lambda, cfg)?;
            let rv = reduce_at(model, &v[s], lambda, cfg)?;
            let cap = ru.state.cap();
            let mu_u = ru.mu();
            let in_u = grid.mask[s]
                && ru.admissible
                && melnikov_check(&mu_u, ru.state.m, t.nx, lambda, ob, 2.0 * gamma, cfg.kam.tau, t.nphi, false).passed;
            let nu_n = (0..=cfg.kam.nu_max)
                .find(|&nu| cfg.kam.scale(nu, cap) >= cfg.n.min(cap))
                .unwrap_or(cfg.kam.nu_max);
            let r_v: &[C64] = &rv.r_history[(nu_n + 1).min(rv.r_history.len() - 1)];
            let mu_v: Vec<C64> = crate::kam::unperturbed(t.nx, rv.state.m)
                .iter()
                .zip(r_v)
                .map(|(a, b)| a + b)
                .collect();
            let in_v = grid.mask[s]
                && melnikov_check(&mu_v, rv.state.m, t.nx, lambda, ob, gamma - cfg.rho, cfg.kam.tau, cfg.n - 1, false).passed;
            let drift = ru.state.r.iter().zip(r_v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let distance = u[s].sub(&v[s]).sobolev_norm(index)?;
            Ok(SampleInclusion {
                lambda,
                in_u,
                in_v,
                nu_n,
                drift,
                distance,
            })
        })
        .collect::<Result<_>>()?;
    let violations: Vec<f64> = samples.iter().filter(|s| s.in_u && !s.in_v).map(|s| s.lambda).collect();
    let eps = model.epsilon;
    let tail = eps * (cfg.n as f64).powf(-cfg.kappa);
    let drift_constant = samples
        .iter()
        .map(|s| {
            let den = eps * s.distance + tail;
            if den > 0.0 {
                s.drift / den
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let scale = eps * cfg.rho * (cfg.n as f64).powf(-cfg.kam.tau);
    let max_distance = samples.iter().map(|s| s.distance).fold(0.0, f64::max);
    let closeness_constant = if max_distance == 0.0 { 0.0 } else { max_distance / scale };
    Ok(ReducibilityReport {
        n: cfg.n,
        closeness_constant,
        rho: cfg.rho,
        included: violations.is_empty(),
        max_drift: samples.iter().map(|s| s.drift).fold(0.0, f64::max),
        drift_constant,
        violations,
        samples,
    })
}
