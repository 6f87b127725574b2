use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{DoubledField, SpectralField, Truncation};

/// Exponents of (z0+, z0-, z1+, z1-, z2+, z2-).
pub type Powers = [u32; 6];

pub const Z0P: usize = 0;
pub const Z0M: usize = 1;
pub const Z1P: usize = 2;
pub const Z1M: usize = 3;
pub const Z2P: usize = 4;
pub const Z2M: usize = 5;

/// c(phi, x) * prod_i z_i^{p_i}.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coeff: SpectralField,
    pub powers: Powers,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }

    /// Power swap z+ <-> z- together with conj of the coefficient: the matching
    /// monomial of the second component.
    pub fn conjugate(&self) -> Monomial {
        let p = self.powers;
        Monomial {
            coeff: self.coeff.conj_fn(),
            powers: [p[1], p[0], p[3], p[2], p[5], p[4]],
        }
    }

    /// d/dz_i, or None when the power is zero.
    pub fn derivative(&self, i: usize) -> Option<Monomial> {
        if self.powers[i] == 0 {
            return None;
        }
        let mut powers = self.powers;
        powers[i] -= 1;
        Some(Monomial {
            coeff: self.coeff.scale_re(self.powers[i] as f64),
            powers,
        })
    }

    pub fn eval_point(&self, phi: &[f64], x: f64, z: &[C64; 6]) -> C64 {
        let mut v = self.coeff.eval(phi, x);
        for (zi, &p) in z.iter().zip(&self.powers) {
            v *= zi.powu(p);
        }
        v
    }
}

/// f1 as a polynomial in the six arguments with trigonometric coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Nonlinearity {
    pub d: usize,
    pub terms: Vec<Monomial>,
}

impl Nonlinearity {
    pub fn new(d: usize, terms: Vec<Monomial>) -> Result<Self> {
        for t in &terms {
            if t.coeff.trunc().d != d {
                return Err(Error::InvalidInput(format!(
                    "monomial coefficient has d = {}, model has d = {d}",
                    t.coeff.trunc().d
                )));
            }
        }
        Ok(Nonlinearity { d, terms })
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.iter().map(|t| t.degree()).max().unwrap_or(0)
    }

    /// The second component f2, generated by conjugation.
    pub fn conjugate(&self) -> Nonlinearity {
        Nonlinearity {
            d: self.d,
            terms: self.terms.iter().map(|t| t.conjugate()).collect(),
        }
    }

    pub fn derivative(&self, i: usize) -> Nonlinearity {
        Nonlinearity {
            d: self.d,
            terms: self.terms.iter().filter_map(|t| t.derivative(i)).collect(),
        }
    }

    pub fn eval_point(&self, phi: &[f64], x: f64, z: &[C64; 6]) -> C64 {
        self.terms.iter().map(|t| t.eval_point(phi, x, z)).sum()
    }

    /// The six arguments (u+, u-, u+_x, u-_x, u+_xx, u-_xx).
    pub fn arguments(u: &DoubledField) -> [SpectralField; 6] {
        [
            u.plus.clone(),
            u.minus.clone(),
            u.plus.dx(),
            u.minus.dx(),
            u.plus.dxx(),
            u.minus.dxx(),
        ]
    }

    /// Exact composition f(phi, x, z(u)) restricted to the modes of `out`.
    pub fn eval(&self, u: &DoubledField, out: Truncation) -> SpectralField {
        let args = Self::arguments(u);
        self.eval_args(&args, out)
    }

    pub fn eval_args(&self, args: &[SpectralField; 6], out: Truncation) -> SpectralField {
        let mut acc = SpectralField::zeros(out);
        for t in &self.terms {
            let mut factors: Vec<&SpectralField> = vec![&t.coeff];
            for (i, &p) in t.powers.iter().enumerate() {
                for _ in 0..p {
                    factors.push(&args[i]);
                }
            }
            acc = acc.add(&product(&factors, out)).resize(out);
        }
        acc
    }
}

/// Product of fields, exact on the modes of `out`: every intermediate keeps the
/// bandwidth the remaining factors can still shift into `out`.
pub fn product(factors: &[&SpectralField], out: Truncation) -> SpectralField {
    let n = factors.len();
    let mut rest = vec![Truncation::new(out.d, 0, 0); n + 1];
    for i in (0..n).rev() {
        rest[i] = rest[i + 1].sum(&factors[i].trunc());
    }
    let mut acc = factors[0].clone();
    for i in 1..n {
        let want = out.sum(&rest[i + 1]);
        let full = acc.trunc().sum(&factors[i].trunc());
        let t = Truncation::new(out.d, want.nphi.min(full.nphi), want.nx.min(full.nx));
        acc = acc.mul(factors[i], t);
    }
    acc.resize(out)
}

/// One term of a coefficient specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffTerm {
    /// amp * P(ell.phi) * Q(k x) with P, Q in {one, cos, sin}.
    Trig {
        amp: f64,
        #[serde(default)]
        phi: Option<Vec<i64>>,
        #[serde(default = "one")]
        phi_kind: TrigKind,
        #[serde(default)]
        x: i64,
        #[serde(default = "one")]
        x_kind: TrigKind,
    },
    /// Raw exponential coefficient of e^{i(ell.phi + k x)}.
    Exp { ell: Vec<i64>, k: i64, re: f64, im: f64 },
}

fn one() -> TrigKind {
    TrigKind::One
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrigKind {
    One,
    Cos,
    Sin,
}

impl TrigKind {
    /// Exponential coefficients (frequency sign, value) of P(n t).
    fn parts(self) -> Vec<(i64, C64)> {
        match self {
            TrigKind::One => vec![(0, C64::new(1.0, 0.0))],
            TrigKind::Cos => vec![(1, C64::new(0.5, 0.0)), (-1, C64::new(0.5, 0.0))],
            TrigKind::Sin => vec![(1, C64::new(0.0, -0.5)), (-1, C64::new(0.0, 0.5))],
        }
    }
}

/// Builds a coefficient field from its specification.
pub fn coeff_from_terms(d: usize, terms: &[CoeffTerm]) -> Result<SpectralField> {
    let mut nphi = 0usize;
    let mut nx = 0usize;
    for t in terms {
        match t {
            CoeffTerm::Trig { phi, x, .. } => {
                if let Some(p) = phi {
                    if p.len() != d {
                        return Err(Error::InvalidInput(format!(
                            "phi frequency {p:?} has length {} (d = {d})",
                            p.len()
                        )));
                    }
                    nphi = nphi.max(p.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0));
                }
                nx = nx.max(x.unsigned_abs() as usize);
            }
            CoeffTerm::Exp { ell, k, .. } => {
                if ell.len() != d {
                    return Err(Error::InvalidInput(format!(
                        "ell {ell:?} has length {} (d = {d})",
                        ell.len()
                    )));
                }
                nphi = nphi.max(ell.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0));
                nx = nx.max(k.unsigned_abs() as usize);
            }
        }
    }
    let t = Truncation::new(d, nphi, nx);
    let mut f = SpectralField::zeros(t);
    for term in terms {
        match term {
            CoeffTerm::Trig {
                amp,
                phi,
                phi_kind,
                x,
                x_kind,
            } => {
                let ell0 = phi.clone().unwrap_or_else(|| vec![0; d]);
                let pk = if ell0.iter().all(|&l| l == 0) && *phi_kind != TrigKind::One {
                    return Err(Error::InvalidInput("phi_kind needs a nonzero phi frequency".into()));
                } else {
                    *phi_kind
                };
                if *x == 0 && *x_kind != TrigKind::One {
                    return Err(Error::InvalidInput("x_kind needs a nonzero x frequency".into()));
                }
                for (sp, cp) in pk.parts() {
                    for (sx, cx) in x_kind.parts() {
                        let ell: Vec<i64> = ell0.iter().map(|l| l * sp).collect();
                        f.add_at(&ell, x * sx, cp * cx * *amp);
                    }
                }
            }
            CoeffTerm::Exp { ell, k, re, im } => f.add_at(ell, *k, C64::new(*re, *im)),
        }
    }
    Ok(f)
}

/// Monomial as written in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonomialSpec {
    pub coefficient: Vec<CoeffTerm>,
    #[serde(default)]
    pub powers: PowersSpec,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowersSpec {
    #[serde(default)]
    pub z0p: u32,
    #[serde(default)]
    pub z0m: u32,
    #[serde(default)]
    pub z1p: u32,
    #[serde(default)]
    pub z1m: u32,
    #[serde(default)]
    pub z2p: u32,
    #[serde(default)]
    pub z2m: u32,
}

impl PowersSpec {
    pub fn to_array(self) -> Powers {
        [self.z0p, self.z0m, self.z1p, self.z1m, self.z2p, self.z2m]
    }
}

pub fn nonlinearity_from_specs(d: usize, specs: &[MonomialSpec]) -> Result<Nonlinearity> {
    let terms = specs
        .iter()
        .map(|s| {
            Ok(Monomial {
                coeff: coeff_from_terms(d, &s.coefficient)?,
                powers: s.powers.to_array(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Nonlinearity::new(d, terms)
}
