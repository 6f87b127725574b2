use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::opmatrix::OpMatrix;
use crate::spectral::{dot, norm_inf};

/// Solution of  omega.d_phi Psi + [D, Psi] + Pi_N R = [R]  with D = diag(mu):
/// Psi_k^k' = -R_k^k' / (i omega.ell + mu_k - mu_k') for k != k' and |ell| <= n,
/// zero elsewhere.
pub fn homological_solution(r: &OpMatrix, mu: &[C64], omega: &[f64], n: usize, floor: f64) -> Result<OpMatrix> {
    let Some(hmax) = r.hmax() else {
        return Err(Error::InvalidInput("homological equation needs a Toeplitz remainder".into()));
    };
    let b = r.block_dim();
    let nj = r.nj();
    let mut psi = OpMatrix::zeros_toeplitz(r.trunc(), r.basis(), hmax);
    for h in r.slab_indices() {
        if norm_inf(&h) as usize > n {
            continue;
        }
        let w = C64::new(0.0, dot(omega, &h));
        let zero = h.iter().all(|&x| x == 0);
        let s = r.slab(&h).unwrap().clone();
        let out = psi.slab_mut(&h).unwrap();
        for row in 0..b {
            for col in 0..b {
                let v = s[(row, col)];
                if (zero && row == col) || v == C64::new(0.0, 0.0) {
                    continue;
                }
                let d = w + mu[row] - mu[col];
                if !(d.norm() >= floor) {
                    let sg = |loc: usize| if loc < nj { 1 } else { -1 };
                    return Err(Error::DivisorUnderflow {
                        ell: h.clone(),
                        sigma: sg(row),
                        j: row % nj + 1,
                        sigma_p: sg(col),
                        j_p: col % nj + 1,
                        divisor: d.norm(),
                    });
                }
                out[(row, col)] = -v / d;
            }
        }
    }
    Ok(psi)
}

/// omega.d_phi Psi + [D, Psi] + Pi_N R - [R], the defect of a candidate solution.
pub fn homological_defect(r: &OpMatrix, mu: &[C64], omega: &[f64], n: usize, psi: &OpMatrix) -> Result<OpMatrix> {
    psi.omega_dphi(omega)
        .add(&psi.left_mul_diag(mu))?
        .sub(&psi.right_mul_diag(mu))?
        .add(&r.smooth_truncate(n))?
        .sub(&r.diagonal_average())
}
