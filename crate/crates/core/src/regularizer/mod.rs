//! Conjugation of the linearized operator to constant second-order coefficients.

mod diffeo;
mod grid;
mod steps;

pub use diffeo::{compose_diffeo, compose_diffeo_inverse, Direction, TorusDiffeo};
pub use grid::{
    mat_apply, mat_diag, mat_identity, mat_mul, mat_sup, sup, vec_sup, GridMat, GridVec, WorkGrid,
};
pub use steps::{
    step1_diag_second_order, step2, step2_space_diffeo, step3, step3_time_reparam, step4, step4_descent,
    GridCoeffs, Step1, Step2, Step3, Step4,
};

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::LinearizedCoefficients;
use crate::opmatrix::{Basis, OpMatrix};
use crate::spectral::{DoubledField, SpectralField, Truncation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerConfig {
    /// Working grid resolves `oversample` times the solution truncation.
    pub oversample: usize,
    /// Smallest |lambda omega_bar . ell| accepted when inverting omega.d_phi.
    pub divisor_floor: f64,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        RegularizerConfig {
            oversample: 4,
            divisor_floor: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub defect_norms: BTreeMap<String, f64>,
    pub diffeo_sup_norms: BTreeMap<String, f64>,
    pub m: Option<f64>,
}

/// L = V1 L4 V2^{-1} with
/// L4 = omega.d_phi + i m E d_xx + C1 d_x + C0, C1 off-diagonal in sigma.
#[derive(Clone, Debug)]
pub struct RegularizedOperator {
    pub grid: WorkGrid,
    pub trunc: Truncation,
    pub lambda: f64,
    pub omega: Vec<f64>,
    pub m: f64,
    pub step1: Step1,
    pub step2: Step2,
    pub step3: Step3,
    pub step4: Step4,
    /// Coefficients of L and of L4 on the working grid.
    pub l: GridCoeffs,
    pub l4: GridCoeffs,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Runs the four conjugation steps for one parameter value.
pub fn regularize(
    lc: &LinearizedCoefficients,
    lambda: f64,
    omega_bar: &[f64],
    cfg: &RegularizerConfig,
) -> Result<RegularizedOperator> {
    let trunc = lc.trunc;
    let wg = WorkGrid::oversampled(trunc, cfg.oversample.max(2));
    let omega: Vec<f64> = omega_bar.iter().map(|w| w * lambda).collect();
    let l = GridCoeffs::from_linearized(&wg, lc);

    let (s1, l1) = step1_diag_second_order(&wg, &l, &omega).map_err(|e| e.at("regularize step 1"))?;
    let (s2, l2) = step2(&wg, &l1, &s1.a2_1, &omega).map_err(|e| e.at("regularize step 2"))?;
    let (s3, l3) =
        step3(&wg, &l2, &s2.a2_2, lambda, omega_bar, cfg.divisor_floor).map_err(|e| e.at("regularize step 3"))?;
    let m = s3.m;
    let (s4, l4) = step4(&wg, &l3, m, &omega).map_err(|e| e.at("regularize step 4"))?;

    let mut diagnostics = Vec::new();
    let mut d = StepDiagnostics {
        step: 1,
        ..Default::default()
    };
    d.defect_norms.insert("diagonalization".into(), s1.diagonalization_defect);
    d.defect_norms.insert("a2_imaginary".into(), s1.a2_imag);
    d.defect_norms.insert("lower_row_u".into(), lc.u_defect());
    d.diffeo_sup_norms.insert("t1_minus_identity".into(), {
        let id = mat_identity(wg.len());
        s1.t1
            .iter()
            .flatten()
            .zip(id.iter().flatten())
            .map(|(a, b)| sup(&grid::sub(a, b)))
            .fold(0.0, f64::max)
    });
    diagnostics.push(d);
    let mut d = StepDiagnostics {
        step: 2,
        ..Default::default()
    };
    d.defect_norms.insert("straightening".into(), s2.straightening_defect);
    d.defect_norms.insert("x_modes".into(), s2.x_modes_norm);
    d.diffeo_sup_norms.insert("xi".into(), sup(s2.diffeo.shift_values()));
    d.diffeo_sup_norms.insert("xi_w1_inf".into(), s2.diffeo.w1_inf);
    d.diffeo_sup_norms
        .insert("round_trip".into(), s2.diffeo.round_trip_defect(s2.diffeo.shift_values()));
    diagnostics.push(d);
    let mut d = StepDiagnostics {
        step: 3,
        m: Some(m),
        ..Default::default()
    };
    d.defect_norms.insert("reparametrization".into(), s3.reparam_defect);
    d.defect_norms.insert("min_divisor".into(), s3.min_divisor);
    d.diffeo_sup_norms.insert("alpha".into(), sup(s3.diffeo.shift_values()));
    d.diffeo_sup_norms.insert("omega_alpha_w1_inf".into(), s3.diffeo.w1_inf);
    d.diffeo_sup_norms
        .insert("rho_minus_one".into(), s3.rho.iter().map(|r| (r - 1.0).norm()).fold(0.0, f64::max));
    diagnostics.push(d);
    let mut d = StepDiagnostics {
        step: 4,
        m: Some(m),
        ..Default::default()
    };
    d.defect_norms.insert("a1_diagonal".into(), s4.a1_residual);
    d.defect_norms.insert("a1_x_average".into(), s4.a1_mean);
    d.diffeo_sup_norms.insert("s".into(), sup(&wg.values(&s4.s)));
    diagnostics.push(d);

    Ok(RegularizedOperator {
        grid: wg,
        trunc,
        lambda,
        omega,
        m,
        step1: s1,
        step2: s2,
        step3: s3,
        step4: s4,
        l,
        l4,
        diagnostics,
    })
}

impl RegularizedOperator {
    /// Finite section of  i m E d_xx + C1 d_x + C0  on the solution truncation.
    pub fn l4_part(&self, basis: Basis) -> OpMatrix {
        self.l4.operator_part(&self.grid, self.trunc, basis)
    }

    pub fn q1(&self) -> SpectralField {
        self.grid.field(&grid::scale(&self.l4.c[1][0][1], C64::new(0.0, -1.0)))
    }

    pub fn q2(&self) -> SpectralField {
        self.grid.field(&grid::scale(&self.l4.c[0][0][0], C64::new(0.0, -1.0)))
    }

    pub fn q3(&self) -> SpectralField {
        self.grid.field(&grid::scale(&self.l4.c[0][0][1], C64::new(0.0, -1.0)))
    }

    pub fn to_grid(&self, h: &DoubledField) -> GridVec {
        [self.grid.values(&h.plus), self.grid.values(&h.minus)]
    }

    pub fn from_grid(&self, v: &GridVec, out: Truncation) -> DoubledField {
        DoubledField {
            plus: self.grid.field(&v[0]).resize(out),
            minus: self.grid.field(&v[1]).resize(out),
        }
    }

    fn each(&self, v: &GridVec, f: impl Fn(&[C64]) -> Vec<C64>) -> GridVec {
        [f(&v[0]), f(&v[1])]
    }

    fn rho_scale(&self, v: &GridVec, inverse: bool) -> GridVec {
        let r: Vec<C64> = if inverse {
            self.step3.rho.iter().map(|x| 1.0 / x).collect()
        } else {
            self.step3.rho.clone()
        };
        self.each(v, |x| grid::mul(&r, x))
    }

    fn forward(&self, h: &GridVec, with_rho: bool) -> GridVec {
        let mut v = mat_apply(&self.step4.t4, h);
        if with_rho {
            v = self.rho_scale(&v, false);
        }
        let v = self.each(&v, |x| self.step3.diffeo.apply(x));
        let v = self.each(&v, |x| self.step2.diffeo.apply(x));
        mat_apply(&self.step1.t1, &v)
    }

    fn backward(&self, g: &GridVec, with_rho: bool) -> GridVec {
        let v = mat_apply(&self.step1.t1_inv, g);
        let v = self.each(&v, |x| self.step2.diffeo.apply_inverse(x));
        let mut v = self.each(&v, |x| self.step3.diffeo.apply_inverse(x));
        if with_rho {
            v = self.rho_scale(&v, true);
        }
        mat_apply(&self.step4.t4_inv, &v)
    }

    /// V1 = T1 T2 T3 rho T4.
    pub fn apply_v1(&self, h: &GridVec) -> GridVec {
        self.forward(h, true)
    }

    /// V2 = T1 T2 T3 T4.
    pub fn apply_v2(&self, h: &GridVec) -> GridVec {
        self.forward(h, false)
    }

    pub fn apply_v1_inverse(&self, g: &GridVec) -> GridVec {
        self.backward(g, true)
    }

    pub fn apply_v2_inverse(&self, g: &GridVec) -> GridVec {
        self.backward(g, false)
    }

    pub fn apply_l(&self, h: &GridVec) -> GridVec {
        self.l.apply(&self.grid, &self.omega, h)
    }

    pub fn apply_l4(&self, h: &GridVec) -> GridVec {
        self.l4.apply(&self.grid, &self.omega, h)
    }

    /// sup over the test fields of |L V2 h - V1 L4 h| on the working grid.
    pub fn semi_conjugation_residual(&self, tests: &[DoubledField]) -> f64 {
        tests
            .iter()
            .map(|h| {
                let hv = self.to_grid(h);
                let lhs = self.apply_l(&self.apply_v2(&hv));
                let rhs = self.apply_v1(&self.apply_l4(&hv));
                vec_sup(&[grid::sub(&lhs[0], &rhs[0]), grid::sub(&lhs[1], &rhs[1])])
            })
            .fold(0.0, f64::max)
    }
}

/// Unit sine modes e^{i ell.phi} sin(jx) in both components, lowest first.
pub fn test_modes(t: Truncation, count: usize) -> Vec<DoubledField> {
    let mut idx: Vec<(i64, Vec<i64>, usize)> = Vec::new();
    for ell in t.ells() {
        for j in 1..=t.nx {
            let w = crate::spectral::norm_inf(&ell).max(j as i64);
            idx.push((w, ell.clone(), j));
        }
    }
    idx.sort();
    idx.into_iter()
        .take(count)
        .map(|(_, ell, j)| {
            let mut plus = SpectralField::zeros(t);
            plus.set(&ell, j as i64, C64::new(0.0, -0.5));
            plus.set(&ell, -(j as i64), C64::new(0.0, 0.5));
            DoubledField::from_plus(plus)
        })
        .collect()
}
