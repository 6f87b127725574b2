//! KAM reduction of the regularized operator to a constant diagonal one.
//!
//! Operators are Toeplitz in time on the sine basis. The remainder is split as
//! R = E1 D + E0 with D = diag(j) and E1 free of sigma-diagonal blocks.

mod eigen;
mod homological;
mod melnikov;

pub use eigen::{eigenvalue_variation, sigma_of_slot, unperturbed, EigenvalueTable, EigenvalueVariation};
pub use homological::{homological_defect, homological_solution};
pub use melnikov::{melnikov_check, second_melnikov_mask, MelnikovMask, MelnikovWitness, SampleCheck};

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opmatrix::{neumann_invert, Basis, OpMatrix};
use crate::regularizer::RegularizedOperator;
use crate::spectral::{norm_inf, ParamGrid, Truncation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KamConfig {
    pub gamma: f64,
    /// Must exceed d.
    pub tau: f64,
    /// First smoothing scale; N_nu = round(n0^{(3/2)^nu}), capped at the slab range.
    pub n0: usize,
    /// Defaults to (d + 2)/2.
    pub s0: Option<f64>,
    pub nu_max: usize,
    /// Stop once delta_{s0} falls below this.
    pub stop_tol: f64,
    /// Interpolation constant C(s0) in the Neumann precondition.
    pub c_s0: f64,
    /// Exponent C0 in N0^{C0} gamma^{-1} delta_{s0+beta} <= 1.
    pub c0: f64,
    pub neumann_tol: f64,
    pub neumann_max_terms: usize,
    /// Smallest divisor accepted in the homological equation.
    pub divisor_floor: f64,
}

impl Default for KamConfig {
    fn default() -> Self {
        KamConfig {
            gamma: 0.05,
            tau: 2.0,
            n0: 4,
            s0: None,
            nu_max: 12,
            stop_tol: 1e-13,
            c_s0: 2.0,
            c0: 1.0,
            neumann_tol: 1e-15,
            neumann_max_terms: 200,
            divisor_floor: f64::EPSILON * 1e3,
        }
    }
}

impl KamConfig {
    pub fn s0(&self, d: usize) -> f64 {
        self.s0.unwrap_or((d as f64 + 2.0) / 2.0)
    }

    /// beta = 7 tau + 5.
    pub fn beta(&self) -> f64 {
        7.0 * self.tau + 5.0
    }

    /// N_nu = round(n0^{(3/2)^nu}) capped at `cap`.
    pub fn scale(&self, nu: usize, cap: usize) -> usize {
        let e = 1.5f64.powi(nu as i32);
        let v = (self.n0.max(1) as f64).powf(e).round();
        if v.is_finite() && v < cap as f64 {
            v as usize
        } else {
            cap
        }
    }
}

/// One row of the reduction trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub nu: usize,
    pub n_nu: usize,
    pub delta_s0: f64,
    pub delta_s0_beta: f64,
    pub max_r: f64,
    pub surviving: usize,
}

/// omega.d_phi + D + E1 D + E0 at one parameter value.
#[derive(Clone, Debug)]
pub struct KamState {
    pub nu: usize,
    pub lambda: f64,
    pub omega: Vec<f64>,
    pub m: f64,
    /// Corrections r_{sigma,j}, local layout.
    pub r: Vec<C64>,
    pub e1: OpMatrix,
    pub e0: OpMatrix,
    /// Phi_0, ..., Phi_{nu-1} and their inverses.
    pub phis: Vec<OpMatrix>,
    pub phi_invs: Vec<OpMatrix>,
    pub trace: Vec<TraceRow>,
}

/// Diagnostics of one KAM step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub nu: usize,
    pub n: usize,
    pub psi_s0: f64,
    /// |Psi|_{s0} / (N^{2 tau + 1} gamma^{-1} delta_{s0}).
    pub psi_ratio: f64,
    pub homological_residual: f64,
    pub neumann_terms: usize,
    pub neumann_residual: f64,
    /// Slabs dropped by products at the slab range.
    pub truncation_defect: f64,
    /// Largest entry removed by the projection onto reversible remainders.
    pub projection_defect: f64,
}

fn j_weights(nj: usize) -> Vec<f64> {
    (0..2 * nj).map(|loc| (loc % nj + 1) as f64).collect()
}

fn diagonal(t: Truncation, hmax: usize, v: &[C64]) -> OpMatrix {
    let mut m = OpMatrix::zeros_toeplitz(t, Basis::Sine, hmax);
    let s = m.slab_mut(&vec![0; t.d]).unwrap();
    for (i, x) in v.iter().enumerate() {
        s[(i, i)] = *x;
    }
    m
}

impl KamState {
    /// Initial state from the regularized operator; E1 D collects the first-order
    /// part, E0 everything of order zero. The second-order part of L4 is
    /// i m E d_xx exactly, so D0 is built from m directly.
    pub fn from_regularized(reg: &RegularizedOperator) -> Result<Self> {
        let t = reg.trunc;
        let p1 = reg.l4.order_part(&reg.grid, t, Basis::Sine, 1);
        let p0 = reg.l4.order_part(&reg.grid, t, Basis::Sine, 0);
        let inv_j: Vec<f64> = j_weights(t.nx).iter().map(|j| 1.0 / j).collect();
        let e1 = p1.sigma_off_diagonal().right_scale(&inv_j);
        let e0 = p0.add(&p1.sigma_diagonal())?;
        Self::from_parts(reg.lambda, reg.omega.clone(), reg.m, e1, e0)
    }

    pub fn from_parts(lambda: f64, omega: Vec<f64>, m: f64, e1: OpMatrix, e0: OpMatrix) -> Result<Self> {
        if e1.trunc() != e0.trunc() || e1.basis() != Basis::Sine || e0.basis() != Basis::Sine {
            return Err(Error::ShapeMismatch("E1 and E0 must share a sine-basis truncation".into()));
        }
        if !e1.is_toeplitz() || !e0.is_toeplitz() {
            return Err(Error::InvalidInput("KAM remainders must be Toeplitz in time".into()));
        }
        let h = e1.hmax().unwrap().max(e0.hmax().unwrap());
        let (e1, _) = e1.with_hmax(h).sigma_off_diagonal().project_reversible();
        let (e0, _) = e0.with_hmax(h).project_reversible();
        let nx = e0.trunc().nx;
        Ok(KamState {
            nu: 0,
            lambda,
            omega,
            m,
            r: vec![C64::new(0.0, 0.0); 2 * nx],
            e1,
            e0,
            phis: Vec::new(),
            phi_invs: Vec::new(),
            trace: Vec::new(),
        })
    }

    pub fn trunc(&self) -> Truncation {
        self.e0.trunc()
    }

    /// Slab range: the largest |ell - ell'| represented.
    pub fn cap(&self) -> usize {
        self.e0.hmax().unwrap()
    }

    pub fn mu(&self) -> Vec<C64> {
        unperturbed(self.trunc().nx, self.m)
            .iter()
            .zip(&self.r)
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn d_operator(&self) -> OpMatrix {
        diagonal(self.trunc(), self.cap(), &self.mu())
    }

    /// R = E1 D + E0.
    pub fn remainder(&self) -> OpMatrix {
        self.e1
            .right_scale(&j_weights(self.trunc().nx))
            .add(&self.e0)
            .expect("E1 and E0 share a shape")
    }

    /// D + R, the operator without omega.d_phi.
    pub fn operator_part(&self) -> OpMatrix {
        self.d_operator().add(&self.remainder()).expect("same shape")
    }

    pub fn delta(&self, s: f64) -> f64 {
        self.e1.decay_norm(s) + self.e0.decay_norm(s)
    }

    /// Largest sigma-diagonal entry of E1 (zero by construction).
    pub fn e1_diagonal_defect(&self) -> f64 {
        self.e1.sigma_diagonal().max_abs()
    }

    fn record(&mut self, cfg: &KamConfig) {
        let d = self.trunc().d;
        let s0 = cfg.s0(d);
        self.trace.push(TraceRow {
            nu: self.nu,
            n_nu: cfg.scale(self.nu, self.cap()),
            delta_s0: self.delta(s0),
            delta_s0_beta: self.delta(s0 + cfg.beta()),
            max_r: self.r.iter().map(|c| c.norm()).fold(0.0, f64::max),
            surviving: 1,
        });
    }

    /// Phi_inf = Phi_0 Phi_1 ... Phi_{nu-1} on the slab range.
    pub fn phi_infinity(&self) -> Result<OpMatrix> {
        let mut acc = OpMatrix::identity(self.trunc(), Basis::Sine).with_hmax(self.cap());
        for p in &self.phis {
            acc = acc.mul(p)?;
        }
        Ok(acc)
    }

    /// Phi_inf h on the finite section.
    pub fn apply_phi(&self, v: &[C64]) -> Vec<C64> {
        self.phis.iter().rev().fold(v.to_vec(), |acc, p| p.apply(&acc))
    }

    /// Phi_inf^{-1} h on the finite section.
    pub fn apply_phi_inverse(&self, v: &[C64]) -> Vec<C64> {
        self.phi_invs.iter().fold(v.to_vec(), |acc, p| p.apply(&acc))
    }
}

/// Psi for the current state at smoothing scale n.
pub fn solve_homological(state: &KamState, n: usize, floor: f64) -> Result<OpMatrix> {
    homological_solution(&state.remainder(), &state.mu(), &state.omega, n, floor)
}

/// L Phi - Phi L+ with L = omega.d_phi + D + R, in the slab algebra.
pub fn conjugation_residual(before: &KamState, after: &KamState, phi: &OpMatrix) -> Result<f64> {
    let psi = phi.sub(&OpMatrix::identity(phi.trunc(), Basis::Sine).with_hmax(phi.hmax().unwrap()))?;
    let lhs = psi.omega_dphi(&before.omega).add(&before.operator_part().mul(phi)?)?;
    let rhs = phi.mul(&after.operator_part())?;
    Ok(lhs.sub(&rhs)?.max_abs())
}

/// L_{nu+1} = Phi^{-1} L_nu Phi with Phi = 1 + Psi.
pub fn kam_step(state: &KamState, cfg: &KamConfig) -> Result<(KamState, StepReport)> {
    let t = state.trunc();
    let s0 = cfg.s0(t.d);
    let cap = state.cap();
    let n = cfg.scale(state.nu, cap);
    let at = |e: Error| e.at(format!("KAM step {}", state.nu));
    let r = state.remainder();
    let mu = state.mu();
    let psi = homological_solution(&r, &mu, &state.omega, n, cfg.divisor_floor).map_err(at)?;
    let hres = homological_defect(&r, &mu, &state.omega, n, &psi)
        .map_err(at)?
        .decay_norm(s0);
    let (phi_inv, nrep) = neumann_invert(&psi, s0, cfg.c_s0, cfg.neumann_tol, cfg.neumann_max_terms).map_err(at)?;
    let id = OpMatrix::identity(t, Basis::Sine).with_hmax(cap);
    let phi = id.add(&psi)?;
    let a = psi.sj_diagonal();
    let bracket_r = state.e0.diagonal_average();
    let jw = j_weights(t.nx);
    let mut dropped = 0.0;
    let mut mul = |x: &OpMatrix, y: &OpMatrix| -> Result<OpMatrix> {
        let (p, d) = x.mul_with_defect(y)?;
        dropped += d;
        Ok(p)
    };
    let in1 = state.e1.smooth_tail(n).add(&mul(&state.e1, &a)?)?;
    let in0 = state
        .e0
        .smooth_tail(n)
        .add(&mul(&state.e0, &psi)?)?
        .sub(&mul(&psi, &bracket_r)?)?
        .add(&mul(&state.e1.right_scale(&jw), &psi.sub(&a)?)?)?;
    let e1p = mul(&phi_inv, &in1)?;
    let e0p = mul(&phi_inv, &in0)?;
    // sigma-diagonal blocks produced in E1 D are bounded at finite size
    let e0p = e0p.add(&e1p.sigma_diagonal().right_scale(&jw))?;
    let e1p = e1p.sigma_off_diagonal();
    let (e1p, p1) = e1p.project_reversible();
    let (e0p, p0) = e0p.project_reversible();
    let shift = state.e0.diagonal_values();
    let r_new: Vec<C64> = state.r.iter().zip(&shift).map(|(a, b)| a + b).collect();
    let delta = state.delta(s0);
    let psi_s0 = psi.decay_norm(s0);
    let scale = (n as f64).powf(2.0 * cfg.tau + 1.0) / cfg.gamma * delta;
    let report = StepReport {
        nu: state.nu,
        n,
        psi_s0,
        psi_ratio: if scale > 0.0 { psi_s0 / scale } else { 0.0 },
        homological_residual: hres,
        neumann_terms: nrep.terms,
        neumann_residual: nrep.residual,
        truncation_defect: dropped,
        projection_defect: p0.max(p1),
    };
    let mut phis = state.phis.clone();
    phis.push(phi);
    let mut phi_invs = state.phi_invs.clone();
    phi_invs.push(phi_inv);
    let mut next = KamState {
        nu: state.nu + 1,
        lambda: state.lambda,
        omega: state.omega.clone(),
        m: state.m,
        r: r_new,
        e1: e1p,
        e0: e0p,
        phis,
        phi_invs,
        trace: state.trace.clone(),
    };
    next.record(cfg);
    Ok((next, report))
}

/// Result of the reduction at one parameter value.
#[derive(Clone, Debug)]
pub struct KamReduction {
    pub state: KamState,
    pub steps: Vec<StepReport>,
    /// r after each iteration, starting with r^0 = 0.
    pub r_history: Vec<Vec<C64>>,
    /// False once a Melnikov check fails; the iteration stops there.
    pub admissible: bool,
    pub excluded: Option<(usize, SampleCheck)>,
    pub converged: bool,
    /// Bound on |mu_inf - mu_last| from the remaining diagonal.
    pub tail_bound: f64,
    /// |Phi_inf - 1|_{s0}.
    pub phi_minus_identity: f64,
    /// N0^{C0} gamma^{-1} delta^0_{s0+beta}.
    pub smallness: f64,
}

impl KamReduction {
    pub fn mu(&self) -> Vec<C64> {
        self.state.mu()
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.state.trace
    }
}

/// Iterates KAM steps at one sample until delta_{s0} < stop_tol or nu_max.
/// Before each step the second Melnikov conditions at scale N_nu are checked
/// with the current eigenvalues.
pub fn reduce_state(initial: KamState, omega_bar: &[f64], cfg: &KamConfig) -> Result<KamReduction> {
    let t = initial.trunc();
    let s0 = cfg.s0(t.d);
    let mut state = initial;
    if state.trace.is_empty() {
        state.record(cfg);
    }
    let smallness = (cfg.n0 as f64).powf(cfg.c0) / cfg.gamma * state.delta(s0 + cfg.beta());
    let mut steps = Vec::new();
    let mut r_history = vec![state.r.clone()];
    let mut excluded = None;
    let mut converged = state.delta(s0) < cfg.stop_tol;
    while !converged && state.nu < cfg.nu_max {
        let n = cfg.scale(state.nu, state.cap());
        let check = melnikov_check(
            &state.mu(),
            state.m,
            t.nx,
            state.lambda,
            omega_bar,
            cfg.gamma,
            cfg.tau,
            n,
            true,
        );
        if !check.passed {
            excluded = Some((state.nu, check));
            break;
        }
        let (next, rep) = kam_step(&state, cfg)?;
        steps.push(rep);
        state = next;
        r_history.push(state.r.clone());
        converged = state.delta(s0) < cfg.stop_tol;
    }
    let tail_bound = state.e0.diagonal_average().max_abs();
    let id = OpMatrix::identity(t, Basis::Sine).with_hmax(state.cap());
    let phi_minus_identity = state.phi_infinity()?.sub(&id)?.decay_norm(s0);
    Ok(KamReduction {
        admissible: excluded.is_none(),
        state,
        steps,
        r_history,
        excluded,
        converged,
        tail_bound,
        phi_minus_identity,
        smallness,
    })
}

pub fn reduce(reg: &RegularizedOperator, omega_bar: &[f64], cfg: &KamConfig) -> Result<KamReduction> {
    reduce_state(KamState::from_regularized(reg)?, omega_bar, cfg)
}

/// Reductions over a parameter grid, one regularized operator per sample.
#[derive(Clone, Debug)]
pub struct FamilyReduction {
    pub reductions: Vec<Option<KamReduction>>,
    pub table: EigenvalueTable,
    /// Grid mask intersected with every Melnikov check.
    pub grid: ParamGrid,
    /// Per iteration: max deltas over the surviving samples.
    pub trace: Vec<TraceRow>,
    pub empty: bool,
}

pub fn reduce_family(
    regs: &[RegularizedOperator],
    grid: &ParamGrid,
    omega_bar: &[f64],
    cfg: &KamConfig,
) -> Result<FamilyReduction> {
    if regs.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} operators for {} samples",
            regs.len(),
            grid.len()
        )));
    }
    let reductions: Vec<Option<KamReduction>> = regs
        .par_iter()
        .zip(grid.mask.par_iter())
        .map(|(reg, &keep)| if keep { reduce(reg, omega_bar, cfg).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    let nx = regs.first().map(|r| r.trunc.nx).unwrap_or(0);
    let mut table = EigenvalueTable::new(nx);
    let mut out_grid = grid.clone();
    for (s, (red, reg)) in reductions.iter().zip(regs).enumerate() {
        match red {
            Some(k) => {
                table.push_sample(reg.lambda, reg.m, k.r_history.clone());
                out_grid.mask[s] = k.admissible;
            }
            None => {
                table.push_sample(reg.lambda, reg.m, vec![vec![C64::new(0.0, 0.0); 2 * nx]]);
                out_grid.mask[s] = false;
            }
        }
    }
    let depth = reductions.iter().flatten().map(|k| k.trace().len()).max().unwrap_or(0);
    let mut trace = Vec::new();
    for nu in 0..depth {
        let rows: Vec<&TraceRow> = reductions
            .iter()
            .flatten()
            .filter(|k| k.admissible)
            .filter_map(|k| k.trace().get(nu))
            .collect();
        let surviving = reductions
            .iter()
            .flatten()
            .filter(|k| k.excluded.as_ref().is_none_or(|(at, _)| *at > nu))
            .count();
        let mx = |f: fn(&TraceRow) -> f64| rows.iter().map(|r| f(r)).fold(0.0, f64::max);
        trace.push(TraceRow {
            nu,
            n_nu: rows.first().map(|r| r.n_nu).unwrap_or(0),
            delta_s0: mx(|r| r.delta_s0),
            delta_s0_beta: mx(|r| r.delta_s0_beta),
            max_r: mx(|r| r.max_r),
            surviving,
        });
    }
    let empty = out_grid.surviving() == 0;
    Ok(FamilyReduction {
        reductions,
        table,
        grid: out_grid,
        trace,
        empty,
    })
}

/// Trace as CSV: nu, N_nu, delta_s0, delta_s0_beta, max_r, surviving.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Seeded reversible remainder (E1, E0) with entries decaying like
/// amplitude e^{-|h|} / <j - j'>^2; E1 has no sigma-diagonal blocks.
pub fn seeded_remainder(t: Truncation, hmax: usize, amplitude: f64, seed: u64) -> (OpMatrix, OpMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nj = t.nx;
    let b = 2 * nj;
    let gen = |rng: &mut ChaCha8Rng| {
        let mut m = OpMatrix::zeros_toeplitz(t, Basis::Sine, hmax);
        for h in m.slab_indices() {
            let w = amplitude * (-(norm_inf(&h) as f64)).exp();
            let s: DMatrix<C64> = DMatrix::from_fn(b, b, |r, c| {
                let dj = ((r % nj) as f64 - (c % nj) as f64).abs().max(1.0);
                let re: f64 = rng.random_range(-1.0..1.0);
                let im: f64 = rng.random_range(-1.0..1.0);
                C64::new(re, im) * (w / (dj * dj))
            });
            *m.slab_mut(&h).unwrap() = s;
        }
        m.project_reversible().0
    };
    let e1 = gen(&mut rng).sigma_off_diagonal();
    let e0 = gen(&mut rng);
    (e1, e0)
}
