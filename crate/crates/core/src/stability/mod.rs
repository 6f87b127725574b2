//! Linear stability: the reduced diagonal flow and its transport back through
//! the regularizing and KAM changes of variables.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularizer::{GridMat, WorkGrid};
use crate::regularizer::RegularizedOperator;
use crate::solver::InversePipeline;
use crate::spectral::{DoubledField, SpectralField, Truncation};

/// |Re mu| allowed relative to max(1, |mu|).
pub const IMAGINARY_TOL: f64 = 1e-13;
/// Largest accepted round-trip defect of the phase-space transport.
pub const CHAIN_TOL: f64 = 1e-6;

fn check_imaginary(mu: &[C64]) -> Result<()> {
    let worst = mu.iter().map(|m| m.re.abs() / m.norm().max(1.0)).fold(0.0, f64::max);
    if worst > IMAGINARY_TOL {
        return Err(Error::StabilityViolated { real_part: worst });
    }
    Ok(())
}

/// v_h(t) = e^{-mu_h t} v_h(0) for each time, on the local layout slot * nx + j - 1.
pub fn evolve_diagonal(v0: &[C64], mu: &[C64], times: &[f64]) -> Result<Vec<Vec<C64>>> {
    if v0.len() != mu.len() {
        return Err(Error::ShapeMismatch(format!("{} coefficients for {} eigenvalues", v0.len(), mu.len())));
    }
    check_imaginary(mu)?;
    Ok(times
        .iter()
        .map(|&t| v0.iter().zip(mu).map(|(v, m)| v * (-m * t).exp()).collect())
        .collect())
}

/// H^s_x norm of a phase-space state given by sine coefficients (slot * nx + j - 1);
/// the max over the two components.
pub fn phase_norm(v: &[C64], d: usize, s: f64) -> Result<f64> {
    let nx = v.len() / 2;
    DoubledField::from_sine_vec(Truncation::new(d, 0, nx), v).sobolev_norm(s)
}

/// Restriction of a field on the torus times [0, pi] to the phase phi.
fn slice(f: &SpectralField, phi: &[f64]) -> SpectralField {
    let t = f.trunc();
    let mut out = SpectralField::zeros(Truncation::new(t.d, 0, t.nx));
    let zero = vec![0i64; t.d];
    f.for_each(|ell, k, c| {
        let e: f64 = ell.iter().zip(phi).map(|(l, p)| *l as f64 * p).sum();
        out.add_at(&zero, k, c * C64::from_polar(1.0, e));
    });
    out
}

/// Transformations of the regularization and the KAM reduction viewed as
/// phase-dependent operators on functions of x.
#[derive(Clone, Debug)]
pub struct PhaseChain {
    pub d: usize,
    pub nx: usize,
    pub omega: Vec<f64>,
    pub mu: Vec<C64>,
    reg: RegularizedOperator,
    phi_inf: crate::opmatrix::OpMatrix,
    /// One-phase grid resolving the working x truncation.
    line: WorkGrid,
}

impl PhaseChain {
    pub fn new(reg: &RegularizedOperator, phi_inf: crate::opmatrix::OpMatrix, mu: Vec<C64>) -> Result<Self> {
        if !phi_inf.is_toeplitz() {
            return Err(Error::InvalidInput("Phi_inf must be Toeplitz in time".into()));
        }
        let t = reg.trunc;
        Ok(PhaseChain {
            d: t.d,
            nx: t.nx,
            omega: reg.omega.clone(),
            mu,
            line: WorkGrid::new(Truncation::new(t.d, 0, reg.grid.trunc.nx)),
            reg: reg.clone(),
            phi_inf,
        })
    }

    pub fn from_pipeline(p: &InversePipeline) -> Result<Self> {
        Self::new(&p.reg, p.reduction.state.phi_infinity()?, p.mu.clone())
    }

    fn small(&self) -> Truncation {
        Truncation::new(self.d, 0, self.nx)
    }

    fn to_line(&self, v: &[C64]) -> [Vec<C64>; 2] {
        let f = DoubledField::from_sine_vec(self.small(), v);
        [self.line.values(&f.plus), self.line.values(&f.minus)]
    }

    fn line_to_vec(&self, w: &[Vec<C64>; 2]) -> Vec<C64> {
        let t = self.small();
        DoubledField {
            plus: self.line.field(&w[0]).resize(t),
            minus: self.line.field(&w[1]).resize(t),
        }
        .to_sine_vec()
    }

    fn line_values(&self, grid_values: &[C64], phi: &[f64]) -> Vec<C64> {
        self.line.values(&slice(&self.reg.grid.field(grid_values), phi))
    }

    fn mat_at(&self, m: &GridMat, phi: &[f64], w: &[Vec<C64>; 2]) -> [Vec<C64>; 2] {
        let e = |r: usize, c: usize| self.line_values(&m[r][c], phi);
        let (a, b, c, d) = (e(0, 0), e(0, 1), e(1, 0), e(1, 1));
        let n = w[0].len();
        let row = |x: &[C64], y: &[C64]| (0..n).map(|i| x[i] * w[0][i] + y[i] * w[1][i]).collect();
        [row(&a, &b), row(&c, &d)]
    }

    fn space_at(&self, inverse: bool, phi: &[f64], w: &[Vec<C64>; 2]) -> [Vec<C64>; 2] {
        let dif = &self.reg.step2.diffeo;
        if dif.is_identity() {
            return w.clone();
        }
        let f = if inverse { &dif.inverse_shift } else { &dif.shift };
        let xi: Vec<C64> = self.line.values(&slice(f, phi)).iter().map(|c| C64::new(c.re, 0.0)).collect();
        [self.line.compose_x(&w[0], &xi), self.line.compose_x(&w[1], &xi)]
    }

    /// T1 T2 at phi.
    pub fn apply_t12(&self, phi: &[f64], v: &[C64]) -> Vec<C64> {
        let w = self.space_at(false, phi, &self.to_line(v));
        self.line_to_vec(&self.mat_at(&self.reg.step1.t1, phi, &w))
    }

    /// (T1 T2)^{-1} at phi.
    pub fn apply_t12_inverse(&self, phi: &[f64], v: &[C64]) -> Vec<C64> {
        let w = self.mat_at(&self.reg.step1.t1_inv, phi, &self.to_line(v));
        self.line_to_vec(&self.space_at(true, phi, &w))
    }

    pub fn apply_t4(&self, phi: &[f64], v: &[C64]) -> Vec<C64> {
        self.line_to_vec(&self.mat_at(&self.reg.step4.t4, phi, &self.to_line(v)))
    }

    pub fn apply_t4_inverse(&self, phi: &[f64], v: &[C64]) -> Vec<C64> {
        self.line_to_vec(&self.mat_at(&self.reg.step4.t4_inv, phi, &self.to_line(v)))
    }

    pub fn phi_matrix(&self, phi: &[f64]) -> Result<DMatrix<C64>> {
        self.phi_inf.phase_slice(phi)
    }

    fn solve_phi(&self, phi: &[f64], v: &[C64]) -> Result<Vec<C64>> {
        let m = self.phi_matrix(phi)?;
        let x = m
            .lu()
            .solve(&DVector::from_column_slice(v))
            .ok_or_else(|| Error::InvalidInput("Phi_inf(phi) is singular".into()))?;
        Ok(x.iter().cloned().collect())
    }

    /// Time shift alpha(phi) of the reparametrization.
    pub fn alpha(&self, phi: &[f64]) -> f64 {
        let d = &self.reg.step3.diffeo;
        if d.is_identity() {
            0.0
        } else {
            d.shift.eval(phi, 0.0).re
        }
    }

    fn phase(&self, t: f64) -> Vec<f64> {
        self.omega.iter().map(|w| w * t).collect()
    }

    /// Reduced time tau = t + alpha(omega t).
    pub fn reduced_time(&self, t: f64) -> f64 {
        t + self.alpha(&self.phase(t))
    }

    /// v(tau) from h(t), with tau = t + alpha(omega t).
    pub fn transport_in(&self, h: &[C64], t: f64) -> Result<(Vec<C64>, f64)> {
        let tau = self.reduced_time(t);
        let w = self.apply_t12_inverse(&self.phase(t), h);
        let p = self.phase(tau);
        let w = self.apply_t4_inverse(&p, &w);
        Ok((self.solve_phi(&p, &w)?, tau))
    }

    /// h(t) = T1 T2(omega t) T4 Phi_inf(omega tau) v(tau).
    pub fn transport_out(&self, v: &[C64], t: f64) -> Result<Vec<C64>> {
        let tau = self.reduced_time(t);
        let p = self.phase(tau);
        let w = self.phi_matrix(&p)? * DVector::from_column_slice(v);
        let w: Vec<C64> = w.iter().cloned().collect();
        Ok(self.apply_t12(&self.phase(t), &self.apply_t4(&p, &w)))
    }

    /// h(t) from the state h_s at time s.
    pub fn propagate(&self, h_s: &[C64], s: f64, t: f64) -> Result<Vec<C64>> {
        let (v, tau_s) = self.transport_in(h_s, s)?;
        let tau = self.reduced_time(t);
        let v = evolve_diagonal(&v, &self.mu, &[tau - tau_s])?.remove(0);
        self.transport_out(&v, t)
    }

    /// h(t) for the initial state h0.
    pub fn solution(&self, h0: &[C64], t: f64) -> Result<Vec<C64>> {
        self.propagate(h0, 0.0, t)
    }

    /// Relative defect of transport_out(transport_in(h0), 0) against h0.
    pub fn round_trip_defect(&self, h0: &[C64]) -> Result<f64> {
        let (v0, _) = self.transport_in(h0, 0.0)?;
        let back = self.transport_out(&v0, 0.0)?;
        let n = h0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let e = back.iter().zip(h0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        Ok(if n > 0.0 { e / n } else { e })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub s: f64,
    pub times: Vec<f64>,
    /// |h(t)|_{H^s_x}.
    pub norms: Vec<f64>,
    pub norm0: f64,
    /// |h(0)|_{H^{s+1}_x}.
    pub norm0_next: f64,
    /// |v(t)|_{H^s_x} of the reduced flow.
    pub reduced_norms: Vec<f64>,
    /// sup_t |h(t)| / |h(0)|.
    pub k: f64,
    /// sup_t | |h(t)| - |h(0)| | / |h(0)|_{s+1}.
    pub amplitude: f64,
    pub round_trip: f64,
}

/// Norm trace of the linearized flow from h0, obtained by transporting h0 to
/// the reduced coordinates, evolving there and transporting back.
pub fn conjugated_flow_norms(chain: &PhaseChain, h0: &[C64], times: &[f64], s: f64) -> Result<FlowTrace> {
    if h0.len() != 2 * chain.nx {
        return Err(Error::ShapeMismatch(format!("{} coefficients for nx = {}", h0.len(), chain.nx)));
    }
    check_imaginary(&chain.mu)?;
    let round_trip = chain.round_trip_defect(h0)?;
    if !(round_trip <= CHAIN_TOL) {
        return Err(Error::InvalidInput(format!(
            "transformation chain inconsistent: round-trip defect {round_trip:.3e}"
        )));
    }
    let (v0, tau0) = chain.transport_in(h0, 0.0)?;
    let d = chain.d;
    let rows: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| -> Result<(f64, f64)> {
            let tau = chain.reduced_time(t);
            let v = evolve_diagonal(&v0, &chain.mu, &[tau - tau0])?.remove(0);
            let h = chain.transport_out(&v, t)?;
            Ok((phase_norm(&h, d, s)?, phase_norm(&v, d, s)?))
        })
        .collect::<Result<_>>()?;
    let norm0 = phase_norm(h0, d, s)?;
    let norm0_next = phase_norm(h0, d, s + 1.0)?;
    let norms: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let k = norms.iter().fold(0.0f64, |a, &n| a.max(n / norm0));
    let amplitude = norms.iter().fold(0.0f64, |a, &n| a.max((n - norm0).abs() / norm0_next));
    Ok(FlowTrace {
        s,
        times: times.to_vec(),
        reduced_norms: rows.iter().map(|r| r.1).collect(),
        norms,
        norm0,
        norm0_next,
        k,
        amplitude,
        round_trip,
    })
}

/// Exponent b with amplitude ~ epsilon^b from two runs.
pub fn oscillation_exponent(eps: [f64; 2], amplitude: [f64; 2]) -> f64 {
    (amplitude[0] / amplitude[1]).ln() / (eps[0] / eps[1]).ln()
}

/// Smallest K with amplitude_i <= K epsilon_i^b for both runs.
pub fn bound_constant(eps: [f64; 2], amplitude: [f64; 2], b: f64) -> f64 {
    (amplitude[0] / eps[0].powf(b)).max(amplitude[1] / eps[1].powf(b))
}

/// (t, |h(t)|_{H^s_x}) as CSV.
pub fn write_trace_csv<W: Write>(trace: &FlowTrace, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "norm"])?;
    for (t, n) in trace.times.iter().zip(&trace.norms) {
        wr.write_record([t.to_string(), n.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}
