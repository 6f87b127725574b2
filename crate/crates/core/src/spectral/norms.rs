use super::field::SpectralField;
use crate::error::{Error, Result};

/// Weighted Lipschitz norm sup_lambda |f|_s + gamma sup_{l1 != l2} |f(l1) - f(l2)|_s / |l1 - l2|.
pub fn lipschitz_norm(samples: &[f64], family: &[SpectralField], s: f64, gamma: f64) -> Result<f64> {
    let (sup, lip) = sup_lip(samples, family, s)?;
    Ok(sup + gamma * lip)
}

/// (sup, lip) parts over all sample pairs.
pub fn sup_lip(samples: &[f64], family: &[SpectralField], s: f64) -> Result<(f64, f64)> {
    if family.is_empty() || samples.len() != family.len() {
        return Err(Error::InvalidInput(format!(
            "family of {} members on {} samples",
            family.len(),
            samples.len()
        )));
    }
    let t = family[0].trunc();
    if family.iter().any(|f| f.trunc() != t) {
        return Err(Error::ShapeMismatch("family members differ in truncation".into()));
    }
    let mut sup: f64 = 0.0;
    for f in family {
        sup = sup.max(f.sobolev_norm(s)?);
    }
    let mut lip: f64 = 0.0;
    for a in 0..family.len() {
        for b in a + 1..family.len() {
            let dl = (samples[a] - samples[b]).abs();
            if dl == 0.0 {
                continue;
            }
            lip = lip.max(family[a].sub(&family[b]).sobolev_norm_unchecked(s) / dl);
        }
    }
    Ok((sup, lip))
}

/// Same seminorm pair for scalar families (eigenvalues, constants).
pub fn scalar_sup_lip(samples: &[f64], values: &[f64]) -> (f64, f64) {
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut lip: f64 = 0.0;
    for a in 0..values.len() {
        for b in a + 1..values.len() {
            let dl = (samples[a] - samples[b]).abs();
            if dl > 0.0 {
                lip = lip.max((values[a] - values[b]).abs() / dl);
            }
        }
    }
    (sup, lip)
}
