//! Vector NLS field, its linearization and the structural hypotheses on f.

mod hypothesis;
mod nonlinearity;
mod presets;

pub use presets::{reference_nonlinearity, semilinear_forcing};
pub use hypothesis::{validate_hypothesis, Clause, ClauseReport, HypothesisReport};
pub use nonlinearity::{
    coeff_from_terms, nonlinearity_from_specs, product, CoeffTerm, Monomial, MonomialSpec, Nonlinearity, Powers,
    PowersSpec, TrigKind, Z0M, Z0P, Z1M, Z1P, Z2M, Z2P,
};

use num_complex::Complex64 as C64;

use crate::opmatrix::{differential_matrix, Basis, CoeffMatrix, LinearOperator, OpMatrix};
use crate::spectral::{DoubledField, SpectralField, Truncation};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// f1, its conjugate f2 and the fixed parameters of the equation.
#[derive(Clone, Debug)]
pub struct NlsModel {
    pub f1: Nonlinearity,
    pub f2: Nonlinearity,
    pub omega_bar: Vec<f64>,
    pub epsilon: f64,
}

impl NlsModel {
    pub fn new(f1: Nonlinearity, omega_bar: Vec<f64>, epsilon: f64) -> Self {
        assert_eq!(f1.d, omega_bar.len());
        let f2 = f1.conjugate();
        NlsModel {
            f1,
            f2,
            omega_bar,
            epsilon,
        }
    }

    pub fn d(&self) -> usize {
        self.omega_bar.len()
    }

    pub fn omega(&self, lambda: f64) -> Vec<f64> {
        self.omega_bar.iter().map(|w| w * lambda).collect()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        NlsModel {
            epsilon,
            ..self.clone()
        }
    }

    /// F(u) on the modes of u's truncation.
    pub fn eval_f(&self, u: &DoubledField, lambda: f64) -> DoubledField {
        let t = u.trunc();
        let omega = self.omega(lambda);
        let mut plus = u.plus.omega_dphi(&omega).add(&u.plus.dxx().scale(I));
        let mut minus = u.minus.omega_dphi(&omega).sub(&u.minus.dxx().scale(I));
        if self.epsilon != 0.0 {
            let args = Nonlinearity::arguments(u);
            let e = C64::new(0.0, self.epsilon);
            plus = plus.axpy(e, &self.f1.eval_args(&args, t));
            minus = minus.axpy(-e, &self.f2.eval_args(&args, t));
        }
        DoubledField { plus, minus }
    }

    /// Coefficients of eps d_u f at u, exact on the doubled truncation.
    pub fn linearize(&self, u: &DoubledField) -> LinearizedCoefficients {
        let t = u.trunc();
        let out = t.scaled(2);
        let args = Nonlinearity::arguments(u);
        let eps = self.epsilon;
        let coeff = |f: &Nonlinearity, i: usize| -> SpectralField {
            if eps == 0.0 {
                return SpectralField::zeros(out);
            }
            f.derivative(i).eval_args(&args, out).scale_re(eps)
        };
        let mut upper = Vec::with_capacity(3);
        let mut lower = Vec::with_capacity(3);
        for p in 0..3 {
            upper.push([coeff(&self.f1, 2 * p), coeff(&self.f1, 2 * p + 1)]);
            lower.push([coeff(&self.f2, 2 * p), coeff(&self.f2, 2 * p + 1)]);
        }
        LinearizedCoefficients {
            trunc: t,
            upper: [upper[0].clone(), upper[1].clone(), upper[2].clone()],
            lower: [lower[0].clone(), lower[1].clone(), lower[2].clone()],
        }
    }

    /// Linearized operator at u on u's truncation.
    pub fn linear_operator(&self, u: &DoubledField, lambda: f64) -> LinearOperator {
        let lc = self.linearize(u);
        LinearOperator {
            omega: self.omega(lambda),
            part: lc.operator_part(Basis::Sine, 2 * u.trunc().nphi),
        }
    }

    /// Compares d F(u)[h] from the assembled operator against central and
    /// Richardson-extrapolated difference quotients of F.
    pub fn directional_derivative_check(
        &self,
        u: &DoubledField,
        h: &DoubledField,
        lambda: f64,
        delta: f64,
    ) -> DerivativeCheck {
        let t = u.trunc();
        let op = self.linear_operator(u, lambda);
        let lin = op.apply(&h.to_sine_vec());
        let quotient = |dl: f64| -> Vec<C64> {
            let fp = self.eval_f(&u.add(&h.scale_re(dl)), lambda);
            let fm = self.eval_f(&u.sub(&h.scale_re(dl)), lambda);
            fp.sub(&fm).scale_re(0.5 / dl).resize(t).to_sine_vec()
        };
        let q1 = quotient(delta);
        let q2 = quotient(delta / 2.0);
        let rich: Vec<C64> = q1.iter().zip(&q2).map(|(a, b)| (b * 4.0 - a) / 3.0).collect();
        let sup = |v: &[C64]| -> f64 {
            v.iter()
                .zip(&lin)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        DerivativeCheck {
            delta,
            reference: lin.iter().map(|v| v.norm()).fold(0.0, f64::max),
            central: sup(&q1),
            half_step: sup(&q2),
            extrapolated: sup(&rich),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeCheck {
    pub delta: f64,
    /// max |d F(u)[h]| over the coefficients.
    pub reference: f64,
    pub central: f64,
    pub half_step: f64,
    pub extrapolated: f64,
}

impl DerivativeCheck {
    pub fn relative(&self) -> f64 {
        self.central / self.reference.max(f64::MIN_POSITIVE)
    }
}

/// Coefficients of eps d_u F: `upper[p] = (a_p, b_p)` are the derivatives of
/// eps f1 in (z_p+, z_p-), `lower[p]` the same for eps f2. On U,
/// `lower[p] = (conj b_p, conj a_p)`.
#[derive(Clone, Debug)]
pub struct LinearizedCoefficients {
    pub trunc: Truncation,
    pub upper: [[SpectralField; 2]; 3],
    pub lower: [[SpectralField; 2]; 3],
}

impl LinearizedCoefficients {
    pub fn a(&self, p: usize) -> &SpectralField {
        &self.upper[p][0]
    }

    pub fn b(&self, p: usize) -> &SpectralField {
        &self.upper[p][1]
    }

    /// [[a, b], [-c, -d]] for order p, the matrix A_p with L = ... + i A_p d_x^p.
    pub fn matrix(&self, p: usize) -> CoeffMatrix {
        [
            [self.upper[p][0].clone(), self.upper[p][1].clone()],
            [self.lower[p][0].scale_re(-1.0), self.lower[p][1].scale_re(-1.0)],
        ]
    }

    /// Toeplitz matrix of A_p d_x^p alone.
    pub fn assembled(&self, p: usize, basis: Basis, hmax: usize) -> OpMatrix {
        let zero = self.zero_matrix();
        let mut cs = vec![zero.clone(), zero.clone(), zero];
        cs[p] = self.matrix(p);
        differential_matrix(&cs, self.trunc, basis, hmax)
    }

    /// i(E + A2) d_xx + i A1 d_x + i A0 with E = diag(1, -1).
    pub fn operator_part(&self, basis: Basis, hmax: usize) -> OpMatrix {
        let mut cs: Vec<CoeffMatrix> = (0..3).map(|p| self.matrix(p)).collect();
        let ct = cs[2][0][0].trunc();
        let one = SpectralField::constant(ct, C64::new(1.0, 0.0));
        cs[2][0][0] = cs[2][0][0].add(&one);
        cs[2][1][1] = cs[2][1][1].sub(&one);
        for c in cs.iter_mut() {
            for row in c.iter_mut() {
                for f in row.iter_mut() {
                    *f = f.scale(I);
                }
            }
        }
        differential_matrix(&cs, self.trunc, basis, hmax)
    }

    /// Largest deviation from `lower[p] = (conj b_p, conj a_p)`.
    pub fn u_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for p in 0..3 {
            m = m.max(self.lower[p][0].sub(&self.upper[p][1].conj_fn()).max_abs_coeff());
            m = m.max(self.lower[p][1].sub(&self.upper[p][0].conj_fn()).max_abs_coeff());
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.upper.iter().chain(&self.lower).flatten().all(|f| f.is_zero())
    }

    fn zero_matrix(&self) -> CoeffMatrix {
        let z = SpectralField::zeros(self.upper[0][0].trunc());
        [[z.clone(), z.clone()], [z.clone(), z]]
    }
}
