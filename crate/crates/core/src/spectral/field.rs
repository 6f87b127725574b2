use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::trunc::{bracket, dot, norm_inf, Truncation};
use crate::error::{Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Parity/reality class of a scalar field on T^d x T.
///
/// * `X`: odd in x and u(-phi, x) = conj u(phi, x).
/// * `Y`: even in x and u(-phi, x) = conj u(phi, x).
/// * `Z`: odd in x and u(-phi, x) = -conj u(phi, x).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    X,
    Y,
    Z,
    None,
}

/// Truncated Fourier series sum_{ell,k} c_{ell,k} e^{i(ell.phi + k x)}.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    trunc: Truncation,
    parity: Parity,
    coeffs: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(trunc: Truncation) -> Self {
        SpectralField {
            trunc,
            parity: Parity::None,
            coeffs: vec![C64::new(0.0, 0.0); trunc.len()],
        }
    }

    pub fn from_coeffs(trunc: Truncation, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != trunc.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coefficients, got {}",
                trunc.len(),
                coeffs.len()
            )));
        }
        Ok(SpectralField {
            trunc,
            parity: Parity::None,
            coeffs,
        })
    }

    pub fn constant(trunc: Truncation, c: C64) -> Self {
        let mut f = Self::zeros(trunc);
        f.set(&vec![0; trunc.d], 0, c);
        f
    }

    /// Single exponential mode c e^{i(ell.phi + k x)}.
    pub fn mode(trunc: Truncation, ell: &[i64], k: i64, c: C64) -> Self {
        let mut f = Self::zeros(trunc);
        f.set(ell, k, c);
        f
    }

    pub fn trunc(&self) -> Truncation {
        self.trunc
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn with_parity(mut self, p: Parity) -> Self {
        self.parity = p;
        self
    }

    pub fn set_parity(&mut self, p: Parity) {
        self.parity = p;
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn get(&self, ell: &[i64], k: i64) -> C64 {
        match self.trunc.index(ell, k) {
            Some(i) => self.coeffs[i],
            None => C64::new(0.0, 0.0),
        }
    }

    /// Sets a coefficient; silently ignores modes outside the truncation.
    pub fn set(&mut self, ell: &[i64], k: i64, c: C64) {
        if let Some(i) = self.trunc.index(ell, k) {
            self.coeffs[i] = c;
        }
    }

    pub fn add_at(&mut self, ell: &[i64], k: i64, c: C64) {
        if let Some(i) = self.trunc.index(ell, k) {
            self.coeffs[i] += c;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Visits every stored coefficient with its (ell, k).
    pub fn for_each(&self, mut f: impl FnMut(&[i64], i64, C64)) {
        let nk = self.trunc.n_k();
        let nx = self.trunc.nx as i64;
        for e in 0..self.trunc.n_ell() {
            let ell = self.trunc.ell_of(e);
            for kk in 0..nk {
                f(&ell, kk as i64 - nx, self.coeffs[e * nk + kk]);
            }
        }
    }

    /// Returns ( sum |c|^2 <i>^{2s} )^{1/2}.
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::NegativeIndex(s));
        }
        Ok(self.sobolev_norm_unchecked(s))
    }

    pub(crate) fn sobolev_norm_unchecked(&self, s: f64) -> f64 {
        let nk = self.trunc.n_k();
        let nx = self.trunc.nx as i64;
        let mut acc = 0.0;
        for e in 0..self.trunc.n_ell() {
            let le = norm_inf(&self.trunc.ell_of(e));
            for kk in 0..nk {
                let c = self.coeffs[e * nk + kk];
                let n2 = c.norm_sqr();
                if n2 == 0.0 {
                    continue;
                }
                let w = le.max((kk as i64 - nx).abs()).max(1) as f64;
                acc += n2 * w.powf(2.0 * s);
            }
        }
        acc.sqrt()
    }

    /// ln of the Sobolev norm, finite for indices whose weights overflow f64;
    /// None for the zero field.
    pub fn ln_sobolev_norm(&self, s: f64) -> Option<f64> {
        let nk = self.trunc.n_k();
        let nx = self.trunc.nx as i64;
        let mut terms = Vec::new();
        for e in 0..self.trunc.n_ell() {
            let le = norm_inf(&self.trunc.ell_of(e));
            for kk in 0..nk {
                let n2 = self.coeffs[e * nk + kk].norm_sqr();
                if n2 > 0.0 {
                    let w = le.max((kk as i64 - nx).abs()).max(1) as f64;
                    terms.push(n2.ln() + 2.0 * s * w.ln());
                }
            }
        }
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if terms.is_empty() {
            return None;
        }
        Some(0.5 * (top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Restricts or zero-pads to a different truncation.
    pub fn resize(&self, trunc: Truncation) -> SpectralField {
        assert_eq!(trunc.d, self.trunc.d);
        if trunc == self.trunc {
            return self.clone();
        }
        let mut out = SpectralField::zeros(trunc).with_parity(self.parity);
        let nk = self.trunc.n_k();
        let nx = self.trunc.nx as i64;
        for e in 0..self.trunc.n_ell() {
            let ell = self.trunc.ell_of(e);
            let Some(oe) = trunc.ell_index(&ell) else {
                continue;
            };
            for kk in 0..nk {
                let k = kk as i64 - nx;
                if k.unsigned_abs() as usize <= trunc.nx {
                    out.coeffs[oe * trunc.n_k() + (k + trunc.nx as i64) as usize] =
                        self.coeffs[e * nk + kk];
                }
            }
        }
        out
    }

    /// Projector zeroing modes with max(|ell|, |k|) > n.
    pub fn field_truncate(&self, n: usize) -> SpectralField {
        let mut out = self.clone();
        let nk = self.trunc.n_k();
        let nx = self.trunc.nx as i64;
        for e in 0..self.trunc.n_ell() {
            let le = norm_inf(&self.trunc.ell_of(e));
            for kk in 0..nk {
                let k = (kk as i64 - nx).abs();
                if le.max(k) as usize > n {
                    out.coeffs[e * nk + kk] = C64::new(0.0, 0.0);
                }
            }
        }
        out
    }

    pub fn scale(&self, a: C64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= a);
        if a.im != 0.0 {
            out.parity = Parity::None;
        }
        out
    }

    pub fn scale_re(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= a);
        out
    }

    /// self + a * other; the result lives on the larger truncation.
    pub fn axpy(&self, a: C64, other: &SpectralField) -> SpectralField {
        let t = self.trunc.max(&other.trunc);
        let mut out = self.resize(t);
        let o = other.resize(t);
        for (x, y) in out.coeffs.iter_mut().zip(&o.coeffs) {
            *x += a * y;
        }
        if self.parity != other.parity {
            out.parity = Parity::None;
        }
        out
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// Pointwise complex conjugate: coefficient (ell,k) becomes conj c_{-ell,-k}.
    pub fn conj_fn(&self) -> SpectralField {
        let n = self.coeffs.len();
        let coeffs = (0..n).map(|i| self.coeffs[n - 1 - i].conj()).collect();
        SpectralField {
            trunc: self.trunc,
            parity: self.parity,
            coeffs,
        }
    }

    /// Real part of the function: (f + conj f)/2.
    pub fn re_fn(&self) -> SpectralField {
        let c = self.conj_fn();
        let mut out = self.clone();
        for (x, y) in out.coeffs.iter_mut().zip(&c.coeffs) {
            *x = (*x + y) * 0.5;
        }
        out
    }

    /// Imaginary part of the function: (f - conj f)/(2i).
    pub fn im_fn(&self) -> SpectralField {
        let c = self.conj_fn();
        let mut out = self.clone();
        for (x, y) in out.coeffs.iter_mut().zip(&c.coeffs) {
            *x = (*x - y) * C64::new(0.0, -0.5);
        }
        out
    }

    /// Exact convolution product re-truncated to `out`.
    pub fn mul(&self, other: &SpectralField, out: Truncation) -> SpectralField {
        assert_eq!(self.trunc.d, other.trunc.d);
        let d = self.trunc.d;
        let mut res = SpectralField::zeros(out);
        let a_nz: Vec<(Vec<i64>, i64, C64)> = nonzeros(self);
        let b_nz: Vec<(Vec<i64>, i64, C64)> = nonzeros(other);
        let mut ell = vec![0i64; d];
        for (la, ka, ca) in &a_nz {
            for (lb, kb, cb) in &b_nz {
                let k = ka + kb;
                if k.unsigned_abs() as usize > out.nx {
                    continue;
                }
                let mut inside = true;
                for c in 0..d {
                    ell[c] = la[c] + lb[c];
                    if ell[c].unsigned_abs() as usize > out.nphi {
                        inside = false;
                        break;
                    }
                }
                if !inside {
                    continue;
                }
                let idx = out.index(&ell, k).unwrap();
                res.coeffs[idx] += ca * cb;
            }
        }
        res.parity = product_parity(self.parity, other.parity);
        res
    }

    /// Exact product without loss: the output truncation is the sum.
    pub fn mul_full(&self, other: &SpectralField) -> SpectralField {
        let t = self.trunc.sum(&other.trunc);
        self.mul(other, t)
    }

    fn map_modes(&self, f: impl Fn(&[i64], i64) -> C64) -> SpectralField {
        let mut out = self.clone();
        let nk = self.trunc.n_k();
        let nx = self.trunc.nx as i64;
        for e in 0..self.trunc.n_ell() {
            let ell = self.trunc.ell_of(e);
            for kk in 0..nk {
                let i = e * nk + kk;
                if out.coeffs[i] != C64::new(0.0, 0.0) {
                    out.coeffs[i] *= f(&ell, kk as i64 - nx);
                }
            }
        }
        out
    }

    pub fn dx(&self) -> SpectralField {
        let mut out = self.map_modes(|_, k| I * k as f64);
        out.parity = Parity::None;
        out
    }

    pub fn dxx(&self) -> SpectralField {
        self.map_modes(|_, k| C64::new(-(k * k) as f64, 0.0))
    }

    pub fn dx_pow(&self, n: usize) -> SpectralField {
        match n {
            0 => self.clone(),
            1 => self.dx(),
            2 => self.dxx(),
            _ => self
                .map_modes(|_, k| (I * k as f64).powu(n as u32))
                .with_parity(Parity::None),
        }
    }

    /// omega . d_phi applied mode-wise.
    pub fn omega_dphi(&self, omega: &[f64]) -> SpectralField {
        self.map_modes(|ell, _| I * dot(omega, ell))
            .with_parity(Parity::None)
    }

    /// Derivative in the phase component `c`.
    pub fn dphi(&self, c: usize) -> SpectralField {
        self.map_modes(|ell, _| I * ell[c] as f64)
            .with_parity(Parity::None)
    }

    /// Primitive in x: divides mode k by ik and drops k = 0.
    pub fn dx_inverse(&self) -> SpectralField {
        let mut out = self.clone();
        let nk = self.trunc.n_k();
        let nx = self.trunc.nx as i64;
        for e in 0..self.trunc.n_ell() {
            for kk in 0..nk {
                let k = kk as i64 - nx;
                let i = e * nk + kk;
                if k == 0 {
                    out.coeffs[i] = C64::new(0.0, 0.0);
                } else {
                    out.coeffs[i] /= I * k as f64;
                }
            }
        }
        out.parity = Parity::None;
        out
    }

    /// Inverse of (lambda omega_bar) . d_phi on zero-average fields.
    ///
    /// Returns the field and the smallest divisor |lambda omega_bar . ell| met
    /// over ell != 0 in the truncation.
    pub fn omega_dphi_inverse(
        &self,
        lambda: f64,
        omega_bar: &[f64],
        divisor_floor: f64,
    ) -> Result<(SpectralField, f64)> {
        let mut out = self.clone();
        let nk = self.trunc.n_k();
        let mut min_div = f64::INFINITY;
        for e in 0..self.trunc.n_ell() {
            let ell = self.trunc.ell_of(e);
            let zero = ell.iter().all(|&l| l == 0);
            if zero {
                for kk in 0..nk {
                    out.coeffs[e * nk + kk] = C64::new(0.0, 0.0);
                }
                continue;
            }
            let div = lambda * dot(omega_bar, &ell);
            min_div = min_div.min(div.abs());
            let has_content = (0..nk).any(|kk| self.coeffs[e * nk + kk] != C64::new(0.0, 0.0));
            if div.abs() < divisor_floor {
                if has_content {
                    return Err(Error::SmallDivisor {
                        ell,
                        divisor: div.abs(),
                        floor: divisor_floor,
                    });
                }
                continue;
            }
            for kk in 0..nk {
                out.coeffs[e * nk + kk] /= I * div;
            }
        }
        out.parity = Parity::None;
        Ok((out, min_div))
    }

    /// x-average (k = 0 part) as a field on the same truncation.
    pub fn x_average(&self) -> SpectralField {
        self.map_modes(|_, k| if k == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// phi-average (ell = 0 part).
    pub fn phi_average(&self) -> SpectralField {
        self.map_modes(|ell, _| {
            if ell.iter().all(|&l| l == 0) {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Norm of the modes with k != 0.
    pub fn x_dependent_norm(&self, s: f64) -> f64 {
        self.sub(&self.x_average()).sobolev_norm_unchecked(s)
    }

    /// Orthogonal projection onto X, Y or Z; `None` is the identity.
    pub fn project_parity(&self, target: Parity) -> SpectralField {
        let mut out = self.clone();
        let nk = self.trunc.n_k();
        for e in 0..self.trunc.n_ell() {
            let base = e * nk;
            for kk in 0..nk {
                let a = self.coeffs[base + kk];
                let b = self.coeffs[base + nk - 1 - kk];
                out.coeffs[base + kk] = match target {
                    Parity::X => C64::new(0.0, ((a - b) * 0.5).im),
                    Parity::Y => C64::new(((a + b) * 0.5).re, 0.0),
                    Parity::Z => C64::new(((a - b) * 0.5).re, 0.0),
                    Parity::None => a,
                };
            }
        }
        out.parity = target;
        out
    }

    /// Sobolev norm of f - P f at index s.
    pub fn parity_defect(&self, target: Parity, s: f64) -> f64 {
        self.sub(&self.project_parity(target))
            .sobolev_norm_unchecked(s)
    }

    /// Coefficients of the odd part in the basis e^{i ell.phi} sin(jx), j = 1..=nx.
    /// Layout: ell index major, j minor.
    pub fn to_sine(&self) -> Vec<C64> {
        let nx = self.trunc.nx;
        let nk = self.trunc.n_k();
        let mut out = Vec::with_capacity(self.trunc.n_ell() * nx);
        for e in 0..self.trunc.n_ell() {
            let base = e * nk;
            for j in 1..=nx {
                let p = self.coeffs[base + nx + j];
                let m = self.coeffs[base + nx - j];
                out.push(I * (p - m));
            }
        }
        out
    }

    pub fn from_sine(trunc: Truncation, data: &[C64]) -> SpectralField {
        let nx = trunc.nx;
        let nk = trunc.n_k();
        assert_eq!(data.len(), trunc.n_ell() * nx);
        let mut f = SpectralField::zeros(trunc);
        for e in 0..trunc.n_ell() {
            let base = e * nk;
            for j in 1..=nx {
                let c = data[e * nx + j - 1];
                // c sin(jx) = (-i c / 2) e^{ijx} + (i c / 2) e^{-ijx}
                f.coeffs[base + nx + j] = C64::new(c.im * 0.5, -c.re * 0.5);
                f.coeffs[base + nx - j] = C64::new(-c.im * 0.5, c.re * 0.5);
            }
        }
        f
    }

    /// Coefficients of the even part in the basis e^{i ell.phi} cos(jx), j = 0..=nx.
    pub fn to_cosine(&self) -> Vec<C64> {
        let nx = self.trunc.nx;
        let nk = self.trunc.n_k();
        let mut out = Vec::with_capacity(self.trunc.n_ell() * (nx + 1));
        for e in 0..self.trunc.n_ell() {
            let base = e * nk;
            out.push(self.coeffs[base + nx]);
            for j in 1..=nx {
                out.push(self.coeffs[base + nx + j] + self.coeffs[base + nx - j]);
            }
        }
        out
    }

    pub fn from_cosine(trunc: Truncation, data: &[C64]) -> SpectralField {
        let nx = trunc.nx;
        let nk = trunc.n_k();
        assert_eq!(data.len(), trunc.n_ell() * (nx + 1));
        let mut f = SpectralField::zeros(trunc);
        for e in 0..trunc.n_ell() {
            let base = e * nk;
            f.coeffs[base + nx] = data[e * (nx + 1)];
            for j in 1..=nx {
                let c = data[e * (nx + 1) + j] * 0.5;
                f.coeffs[base + nx + j] = c;
                f.coeffs[base + nx - j] = c;
            }
        }
        f
    }

    /// Point evaluation by direct summation.
    pub fn eval(&self, phi: &[f64], x: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        self.for_each(|ell, k, c| {
            if c != C64::new(0.0, 0.0) {
                acc += c * C64::from_polar(1.0, dot(phi, ell) + k as f64 * x);
            }
        });
        acc
    }

    pub fn to_json(&self) -> FieldJson {
        let mut coeffs = Vec::new();
        self.for_each(|ell, k, c| {
            if c != C64::new(0.0, 0.0) {
                let mut row: Vec<f64> = ell.iter().map(|&l| l as f64).collect();
                row.push(k as f64);
                row.push(c.re);
                row.push(c.im);
                coeffs.push(row);
            }
        });
        FieldJson {
            d: self.trunc.d,
            nphi: self.trunc.nphi,
            nx: self.trunc.nx,
            parity: self.parity,
            coeffs,
        }
    }

    pub fn from_json(j: &FieldJson) -> Result<SpectralField> {
        let trunc = Truncation::new(j.d, j.nphi, j.nx);
        let mut f = SpectralField::zeros(trunc).with_parity(j.parity);
        for row in &j.coeffs {
            if row.len() != j.d + 3 {
                return Err(Error::InvalidInput(format!(
                    "coefficient row of length {} (expected {})",
                    row.len(),
                    j.d + 3
                )));
            }
            let ell: Vec<i64> = row[..j.d].iter().map(|v| v.round() as i64).collect();
            let k = row[j.d].round() as i64;
            let c = C64::new(row[j.d + 1], row[j.d + 2]);
            match trunc.index(&ell, k) {
                Some(i) => f.coeffs[i] = c,
                None => {
                    return Err(Error::InvalidInput(format!(
                        "mode ({ell:?}, {k}) outside truncation"
                    )))
                }
            }
        }
        Ok(f)
    }
}

fn nonzeros(f: &SpectralField) -> Vec<(Vec<i64>, i64, C64)> {
    let mut v = Vec::new();
    f.for_each(|ell, k, c| {
        if c != C64::new(0.0, 0.0) {
            v.push((ell.to_vec(), k, c));
        }
    });
    v
}

fn product_parity(a: Parity, b: Parity) -> Parity {
    use Parity::*;
    match (a, b) {
        (Y, Y) | (X, X) => Y,
        (X, Y) | (Y, X) => X,
        (Y, Z) | (Z, Y) => Z,
        _ => None,
    }
}

/// Serialized field: `{d, Nphi, Nx, parity, coeffs: [[ell..., k, re, im], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldJson {
    pub d: usize,
    #[serde(rename = "Nphi")]
    pub nphi: usize,
    #[serde(rename = "Nx")]
    pub nx: usize,
    pub parity: Parity,
    pub coeffs: Vec<Vec<f64>>,
}

/// Sobolev weight <(ell,k)> for an explicit mode.
pub fn mode_weight(ell: &[i64], k: i64) -> f64 {
    bracket(ell, k)
}
