use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::field::{FieldJson, Parity, SpectralField};
use super::trunc::{Sigma, Truncation};
use crate::error::{Error, Result};

/// Pair (u+, u-) of scalar fields; on the subspace U one has u- = conj u+.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubledField {
    pub plus: SpectralField,
    pub minus: SpectralField,
}

impl DoubledField {
    pub fn zeros(t: Truncation) -> Self {
        DoubledField {
            plus: SpectralField::zeros(t),
            minus: SpectralField::zeros(t),
        }
    }

    /// Element of U generated by its first component.
    pub fn from_plus(u: SpectralField) -> Self {
        let minus = u.conj_fn();
        DoubledField { plus: u, minus }
    }

    pub fn trunc(&self) -> Truncation {
        self.plus.trunc()
    }

    pub fn component(&self, s: Sigma) -> &SpectralField {
        match s {
            Sigma::Plus => &self.plus,
            Sigma::Minus => &self.minus,
        }
    }

    pub fn map(&self, f: impl Fn(&SpectralField) -> SpectralField) -> Self {
        DoubledField {
            plus: f(&self.plus),
            minus: f(&self.minus),
        }
    }

    pub fn zip(&self, o: &Self, f: impl Fn(&SpectralField, &SpectralField) -> SpectralField) -> Self {
        DoubledField {
            plus: f(&self.plus, &o.plus),
            minus: f(&self.minus, &o.minus),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a.add(b))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a.sub(b))
    }

    pub fn scale_re(&self, a: f64) -> Self {
        self.map(|f| f.scale_re(a))
    }

    pub fn resize(&self, t: Truncation) -> Self {
        self.map(|f| f.resize(t))
    }

    pub fn field_truncate(&self, n: usize) -> Self {
        self.map(|f| f.field_truncate(n))
    }

    /// Max of the component norms.
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        Ok(self.plus.sobolev_norm(s)?.max(self.minus.sobolev_norm(s)?))
    }

    pub(crate) fn norm(&self, s: f64) -> f64 {
        self.plus
            .sobolev_norm_unchecked(s)
            .max(self.minus.sobolev_norm_unchecked(s))
    }

    /// ln of the Sobolev norm (max of the components), None when zero.
    pub fn ln_sobolev_norm(&self, s: f64) -> Option<f64> {
        match (self.plus.ln_sobolev_norm(s), self.minus.ln_sobolev_norm(s)) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    /// Distance from U at index s.
    pub fn u_defect(&self, s: f64) -> f64 {
        self.minus
            .sub(&self.plus.conj_fn())
            .sobolev_norm_unchecked(s)
    }

    /// Projection onto (target parity) intersected with U.
    pub fn project(&self, target: Parity) -> Self {
        let sym = self.plus.add(&self.minus.conj_fn()).scale_re(0.5);
        DoubledField::from_plus(sym.project_parity(target))
    }

    pub fn parity_defect(&self, target: Parity, s: f64) -> f64 {
        self.sub(&self.project(target)).norm(s)
    }

    /// Sine coefficients, layout `ell_idx * 2nx + slot * nx + (j - 1)`.
    pub fn to_sine_vec(&self) -> Vec<C64> {
        let t = self.trunc();
        let nx = t.nx;
        let sp = self.plus.to_sine();
        let sm = self.minus.to_sine();
        let mut v = Vec::with_capacity(2 * sp.len());
        for e in 0..t.n_ell() {
            v.extend_from_slice(&sp[e * nx..(e + 1) * nx]);
            v.extend_from_slice(&sm[e * nx..(e + 1) * nx]);
        }
        v
    }

    pub fn from_sine_vec(t: Truncation, v: &[C64]) -> Self {
        let nx = t.nx;
        assert_eq!(v.len(), 2 * nx * t.n_ell());
        let mut sp = Vec::with_capacity(nx * t.n_ell());
        let mut sm = Vec::with_capacity(nx * t.n_ell());
        for e in 0..t.n_ell() {
            sp.extend_from_slice(&v[e * 2 * nx..e * 2 * nx + nx]);
            sm.extend_from_slice(&v[e * 2 * nx + nx..(e + 1) * 2 * nx]);
        }
        DoubledField {
            plus: SpectralField::from_sine(t, &sp),
            minus: SpectralField::from_sine(t, &sm),
        }
    }

    /// Element of X intersected with U from real sine coefficients of u+.
    pub fn from_real_sine(t: Truncation, coeffs: &[f64]) -> Self {
        let data: Vec<C64> = coeffs.iter().map(|&c| C64::new(c, 0.0)).collect();
        let plus = SpectralField::from_sine(t, &data).with_parity(Parity::X);
        let mut minus = plus.conj_fn();
        minus.set_parity(Parity::X);
        DoubledField { plus, minus }
    }

    pub fn to_json(&self) -> DoubledJson {
        DoubledJson {
            plus: self.plus.to_json(),
            minus: self.minus.to_json(),
        }
    }

    pub fn from_json(j: &DoubledJson) -> Result<Self> {
        let plus = SpectralField::from_json(&j.plus)?;
        let minus = SpectralField::from_json(&j.minus)?;
        if plus.trunc() != minus.trunc() {
            return Err(Error::ShapeMismatch("doubled components differ in truncation".into()));
        }
        Ok(DoubledField { plus, minus })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoubledJson {
    pub plus: FieldJson,
    pub minus: FieldJson,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_vec_roundtrip() {
        let t = Truncation::new(1, 2, 3);
        let coeffs: Vec<f64> = (0..t.n_ell() * 3).map(|i| (i as f64).cos()).collect();
        let u = DoubledField::from_real_sine(t, &coeffs);
        assert_eq!(u.parity_defect(Parity::X, 0.0), 0.0);
        assert_eq!(u.u_defect(0.0), 0.0);
        let v = u.to_sine_vec();
        let back = DoubledField::from_sine_vec(t, &v);
        assert!(back.sub(&u).norm(0.0) < 1e-15);
    }
}
