use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::OpMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NeumannReport {
    pub terms: usize,
    /// Bound on the discarded tail from the geometric series.
    pub tail_bound: f64,
    /// |(1 + Psi) S - 1|_{s0}.
    pub residual: f64,
}

/// (1 + Psi)^{-1} by the truncated series sum_n (-Psi)^n.
///
/// `c_s0` is the interpolation constant C(s0); the series is only attempted when
/// C(s0) |Psi|_{s0} <= 1/2.
pub fn neumann_invert(
    psi: &OpMatrix,
    s0: f64,
    c_s0: f64,
    tol: f64,
    max_terms: usize,
) -> Result<(OpMatrix, NeumannReport)> {
    let q = c_s0 * psi.decay_norm(s0);
    if q > 0.5 {
        return Err(Error::NotDiagonallyDominant { value: q });
    }
    let id = identity_like(psi);
    let minus = psi.scale(C64::new(-1.0, 0.0));
    let mut sum = id.clone();
    let mut term = id.clone();
    let mut terms = 0;
    let mut tail = if q == 0.0 { 0.0 } else { q / (c_s0 * (1.0 - q)) };
    while tail > tol {
        if terms >= max_terms {
            return Err(Error::NotConverged {
                what: "Neumann series".into(),
                iterations: terms,
                last: tail,
            });
        }
        term = term.mul(&minus)?;
        sum = sum.add(&term)?;
        terms += 1;
        // the geometric bound and the actual term size both control the tail
        let geo = q.powi(terms as i32 + 1) / (c_s0 * (1.0 - q));
        let actual = term.decay_norm(s0) * q / (1.0 - q);
        tail = geo.min(actual.max(f64::MIN_POSITIVE));
        if term.max_abs() == 0.0 {
            tail = 0.0;
        }
    }
    let residual = id.add(psi)?.mul(&sum)?.sub(&id)?.decay_norm(s0);
    Ok((
        sum,
        NeumannReport {
            terms,
            tail_bound: tail,
            residual,
        },
    ))
}

fn identity_like(a: &OpMatrix) -> OpMatrix {
    let id = OpMatrix::identity(a.trunc(), a.basis());
    match a.hmax() {
        Some(h) => id.with_hmax(h),
        None => id.as_dense(),
    }
}
