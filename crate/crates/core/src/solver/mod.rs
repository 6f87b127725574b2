//! Nash-Moser iteration for the forced NLS at finite truncation.

mod inverse;

pub use inverse::{
    first_melnikov_check, first_melnikov_mask, invert_diagonal, invert_diagonal_at, invert_l, DiagonalSolve,
    InversePipeline, Inversion, InversionConfig,
};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_hypothesis, NlsModel};
use crate::spectral::doubled::DoubledJson;
use crate::spectral::{DoubledField, ParamGrid, Parity, Truncation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NashMoserConfig {
    pub epsilon: f64,
    pub gamma: f64,
    /// Upper bound for gamma.
    pub gamma0: f64,
    pub tau: f64,
    /// Loss of regularity of the inverse; defaults to zeta = 4 tau + eta + 8.
    pub mu_loss: Option<f64>,
    /// Order of the equation.
    pub nu_loss: f64,
    /// N_n = round(n0^{(3/2)^n}), capped at the truncation.
    pub n0: usize,
    pub n_max: usize,
    /// Defaults to (d + 2)/2.
    pub s0: Option<f64>,
    /// Stop once |F(u_n)|_{s0} falls below this.
    pub target: f64,
    /// Stop once |F(u_n)|_{s0} is below floor_factor times the truncation defect.
    pub floor_factor: f64,
    /// Largest epsilon / gamma accepted.
    pub smallness_max: f64,
    pub inversion: InversionConfig,
}

impl Default for NashMoserConfig {
    fn default() -> Self {
        NashMoserConfig {
            epsilon: 1e-3,
            gamma: 0.05,
            gamma0: 0.1,
            tau: 2.0,
            mu_loss: None,
            nu_loss: 2.0,
            n0: 2,
            n_max: 10,
            s0: None,
            target: 1e-12,
            floor_factor: 10.0,
            smallness_max: 1.0,
            inversion: InversionConfig::default(),
        }
    }
}

impl NashMoserConfig {
    pub fn s0(&self, d: usize) -> f64 {
        self.s0.unwrap_or((d as f64 + 2.0) / 2.0)
    }

    /// eta1 = d + 2 s0 + 10.
    pub fn eta1(&self, d: usize) -> f64 {
        d as f64 + 2.0 * self.s0(d) + 10.0
    }

    /// eta = eta1 + beta + 2 with beta = 7 tau + 5.
    pub fn eta(&self, d: usize) -> f64 {
        self.eta1(d) + 7.0 * self.tau + 5.0 + 2.0
    }

    /// zeta = 4 tau + eta + 8.
    pub fn zeta(&self, d: usize) -> f64 {
        4.0 * self.tau + self.eta(d) + 8.0
    }

    pub fn mu(&self, d: usize) -> f64 {
        self.mu_loss.unwrap_or_else(|| self.zeta(d))
    }

    pub fn kappa1(&self, d: usize) -> f64 {
        6.0 * self.mu(d) + 12.0 * self.nu_loss
    }

    pub fn kappa2(&self, d: usize) -> f64 {
        11.0 * self.mu(d) + 25.0 * self.nu_loss
    }

    pub fn kappa3(&self, d: usize) -> f64 {
        9.0 * self.nu_loss + 2.0 * self.mu(d)
    }

    /// N_n capped at `cap`.
    pub fn scale(&self, n: usize, cap: usize) -> usize {
        let v = (self.n0.max(1) as f64).powf(1.5f64.powi(n as i32)).round();
        if v.is_finite() && v < cap as f64 {
            v as usize
        } else {
            cap
        }
    }

    /// Inversion settings with gamma and tau taken from this config.
    pub fn inversion(&self) -> InversionConfig {
        let mut c = self.inversion.clone();
        c.kam.gamma = self.gamma;
        c.kam.tau = self.tau;
        if self.s0.is_some() {
            c.kam.s0 = self.s0;
        }
        c
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= self.gamma0) {
            return Err(Error::config("gamma", format!("need 0 < gamma <= gamma0 = {}", self.gamma0)));
        }
        if !(self.tau > d as f64) {
            return Err(Error::config("tau", format!("tau = {} must exceed d = {d}", self.tau)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("epsilon", "must be nonnegative"));
        }
        if self.n0 < 2 {
            return Err(Error::config("n0", "must be at least 2"));
        }
        Ok(())
    }
}

/// State of the iteration after n steps.
#[derive(Clone, Debug)]
pub struct IterateRecord {
    pub n: usize,
    /// N_n; u_n is supported on modes <= N_n.
    pub n_n: usize,
    /// u_n per sample, None outside the good set.
    pub u: Vec<Option<DoubledField>>,
    /// |F(u_n)|_{s0} per sample.
    pub residual_s0: Vec<Option<f64>>,
    /// ln |F(u_n)|_{s0 + kappa2} per sample.
    pub ln_residual_high: Vec<Option<f64>>,
    pub good: Vec<bool>,
    /// Slowest sample's time for step n.
    pub wall_time: f64,
}

impl IterateRecord {
    pub fn max_residual(&self) -> f64 {
        self.residual_s0.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }

    pub fn surviving(&self) -> usize {
        self.good.iter().filter(|&&g| g).count()
    }
}

/// One Newton step at one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub n: usize,
    pub n_n: usize,
    pub residual_s0: f64,
    /// ln |F(u_n)|_{s0 + kappa2}; the weights overflow f64 at this index.
    pub ln_residual_high: Option<f64>,
    pub forward_residual: f64,
    pub chain_residual: f64,
    pub sweeps: usize,
    pub z_discarded: f64,
    pub truncation_defect: f64,
    pub seconds: f64,
}

/// Full run at one sample.
#[derive(Clone, Debug)]
pub struct SampleRun {
    pub lambda: f64,
    /// Iterates u_0, u_1, ... while the sample stays good.
    pub iterates: Vec<DoubledField>,
    /// Entry 0 describes u_0; entry n the step producing u_n.
    pub log: Vec<StepLog>,
    pub dropped: Option<String>,
    pub converged: bool,
    pub diverged: bool,
    /// Whether every accepted step strictly decreased the residual.
    pub monotone: bool,
}

impl SampleRun {
    pub fn final_u(&self) -> &DoubledField {
        self.iterates.last().expect("u_0 is always present")
    }

    pub fn final_residual(&self) -> f64 {
        self.log.last().map(|l| l.residual_s0).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug)]
pub struct NashMoserRun {
    pub samples: Vec<Option<SampleRun>>,
    pub records: Vec<IterateRecord>,
    /// u_infinity per sample, None outside the final good set.
    pub u_inf: Vec<Option<DoubledField>>,
    pub good: Vec<bool>,
    pub empty: bool,
}

/// |F(u)|_{s0} outside the truncation of u, from F evaluated on the doubled one.
pub fn truncation_defect(model: &NlsModel, u: &DoubledField, lambda: f64, s0: f64) -> Result<f64> {
    let t = u.trunc();
    let big = t.scaled(2);
    let full = model.eval_f(&u.resize(big), lambda);
    full.sub(&full.resize(t).resize(big)).sobolev_norm(s0)
}

fn newton_sample(
    model: &NlsModel,
    t: Truncation,
    lambda: f64,
    cfg: &NashMoserConfig,
    inv: &InversionConfig,
) -> Result<SampleRun> {
    let d = t.d;
    let s0 = cfg.s0(d);
    let sh = s0 + cfg.kappa2(d);
    let cap = t.nphi.max(t.nx);
    let mut u = DoubledField::zeros(t).project(Parity::X);
    let f = model.eval_f(&u, lambda);
    let mut res = f.sobolev_norm(s0)?;
    let mut tail = truncation_defect(model, &u, lambda, s0)?;
    let mut run = SampleRun {
        lambda,
        iterates: vec![u.clone()],
        log: vec![StepLog {
            n: 0,
            n_n: cfg.scale(0, cap),
            residual_s0: res,
            ln_residual_high: f.ln_sobolev_norm(sh),
            forward_residual: 0.0,
            chain_residual: 0.0,
            sweeps: 0,
            z_discarded: 0.0,
            truncation_defect: tail,
            seconds: 0.0,
        }],
        dropped: None,
        converged: false,
        diverged: false,
        monotone: true,
    };
    let mut increases = 0;
    let mut n = 0;
    loop {
        if res <= cfg.target.max(cfg.floor_factor * tail) {
            run.converged = true;
            break;
        }
        if n >= cfg.n_max {
            break;
        }
        let start = Instant::now();
        let nn = cfg.scale(n + 1, cap);
        let g = model.eval_f(&u, lambda).field_truncate(nn);
        let step = match InversePipeline::build(model, &u, lambda, inv).and_then(|p| p.solve(&g)) {
            Ok(s) => s,
            Err(e) => {
                run.dropped = Some(e.to_string());
                break;
            }
        };
        if !(step.forward_residual <= inv.accept_tol) {
            run.dropped = Some(format!(
                "forward residual {:.3e} above {:.1e}",
                step.forward_residual, inv.accept_tol
            ));
            break;
        }
        u = u.sub(&step.h.field_truncate(nn));
        n += 1;
        let f = model.eval_f(&u, lambda);
        let next = f.sobolev_norm(s0)?;
        tail = truncation_defect(model, &u, lambda, s0)?;
        run.log.push(StepLog {
            n,
            n_n: nn,
            residual_s0: next,
            ln_residual_high: f.ln_sobolev_norm(sh),
            forward_residual: step.forward_residual,
            chain_residual: step.chain_residual,
            sweeps: step.sweeps,
            z_discarded: step.z_discarded,
            truncation_defect: tail,
            seconds: start.elapsed().as_secs_f64(),
        });
        run.iterates.push(u.clone());
        if next >= res {
            run.monotone = false;
            increases += 1;
            if increases >= 2 {
                run.diverged = true;
                return Err(Error::Divergence { n, residual: next });
            }
        } else {
            increases = 0;
        }
        res = next;
    }
    Ok(run)
}

/// Runs the iteration at every admissible sample of the grid with epsilon taken
/// from the config. Samples whose inversion fails leave the good set.
pub fn nash_moser(cfg: &NashMoserConfig, model: &NlsModel, grid: &ParamGrid, t: Truncation) -> Result<NashMoserRun> {
    let model = &model.with_epsilon(cfg.epsilon);
    let d = model.d();
    cfg.validate(d)?;
    if t.d != d {
        return Err(Error::ShapeMismatch(format!("truncation d = {} for a model with d = {d}", t.d)));
    }
    let hyp = validate_hypothesis(&model.f1);
    if !hyp.passed() {
        return Err(Error::InvalidInput(format!("nonlinearity fails {:?}", hyp.failures())));
    }
    if model.epsilon / cfg.gamma > cfg.smallness_max {
        return Err(Error::config(
            "epsilon",
            format!(
                "epsilon / gamma = {:.3e} exceeds smallness_max = {}",
                model.epsilon / cfg.gamma,
                cfg.smallness_max
            ),
        ));
    }
    let inv = cfg.inversion();
    let samples: Vec<Option<SampleRun>> = grid
        .samples
        .par_iter()
        .zip(grid.mask.par_iter())
        .map(|(&lambda, &keep)| {
            if keep {
                newton_sample(model, t, lambda, cfg, &inv)
                    .map(Some)
                    .map_err(|e| e.at(format!("Nash-Moser at lambda = {lambda}")))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let cap = t.nphi.max(t.nx);
    let depth = samples.iter().flatten().map(|s| s.log.len()).max().unwrap_or(1);
    let mut records = Vec::with_capacity(depth);
    for n in 0..depth {
        let mut rec = IterateRecord {
            n,
            n_n: cfg.scale(n, cap),
            u: Vec::with_capacity(samples.len()),
            residual_s0: Vec::new(),
            ln_residual_high: Vec::new(),
            good: Vec::new(),
            wall_time: 0.0,
        };
        for s in &samples {
            let entry = s.as_ref().and_then(|r| {
                let good = n < r.iterates.len() || (r.dropped.is_none() && !r.diverged);
                good.then(|| {
                    let k = n.min(r.iterates.len() - 1);
                    (r.iterates[k].clone(), &r.log[k])
                })
            });
            rec.good.push(entry.is_some());
            match entry {
                Some((u, l)) => {
                    rec.u.push(Some(u));
                    rec.residual_s0.push(Some(l.residual_s0));
                    rec.ln_residual_high.push(l.ln_residual_high);
                    if l.n == n {
                        rec.wall_time = rec.wall_time.max(l.seconds);
                    }
                }
                None => {
                    rec.u.push(None);
                    rec.residual_s0.push(None);
                    rec.ln_residual_high.push(None);
                }
            }
        }
        records.push(rec);
    }
    let good: Vec<bool> = samples
        .iter()
        .map(|s| s.as_ref().is_some_and(|r| r.dropped.is_none() && !r.diverged))
        .collect();
    let u_inf: Vec<Option<DoubledField>> = samples
        .iter()
        .zip(&good)
        .map(|(s, &g)| if g { s.as_ref().map(|r| r.final_u().clone()) } else { None })
        .collect();
    let empty = !good.iter().any(|&g| g);
    Ok(NashMoserRun {
        samples,
        records,
        u_inf,
        good,
        empty,
    })
}

/// Per-iteration summary for the run report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub n_n: usize,
    pub residual_s0: f64,
    pub ln_residual_high: Option<f64>,
    pub surviving_samples: usize,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleReport {
    pub lambda: f64,
    pub good: bool,
    pub converged: bool,
    pub dropped: Option<String>,
    pub steps: Vec<StepLog>,
    pub u_inf: Option<DoubledJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub kappa: [f64; 3],
    pub iterations: Vec<ReportRow>,
    pub samples: Vec<SampleReport>,
    pub empty: bool,
}

impl NashMoserRun {
    pub fn report(&self, grid: &ParamGrid, cfg: &NashMoserConfig, d: usize) -> RunReport {
        let iterations = self
            .records
            .iter()
            .map(|r| ReportRow {
                n: r.n,
                n_n: r.n_n,
                residual_s0: r.max_residual(),
                ln_residual_high: r.ln_residual_high.iter().flatten().cloned().reduce(f64::max),
                surviving_samples: r.surviving(),
                wall_time: r.wall_time,
            })
            .collect();
        let samples = grid
            .samples
            .iter()
            .zip(&self.samples)
            .zip(&self.good)
            .map(|((&lambda, s), &good)| SampleReport {
                lambda,
                good,
                converged: s.as_ref().is_some_and(|r| r.converged),
                dropped: s.as_ref().and_then(|r| r.dropped.clone()),
                steps: s.as_ref().map(|r| r.log.clone()).unwrap_or_default(),
                u_inf: if good { s.as_ref().map(|r| r.final_u().to_json()) } else { None },
            })
            .collect();
        RunReport {
            kappa: [cfg.kappa1(d), cfg.kappa2(d), cfg.kappa3(d)],
            iterations,
            samples,
            empty: self.empty,
        }
    }
}
