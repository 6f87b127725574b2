use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{h_trunc, Basis, OpMatrix};
use crate::spectral::{SpectralField, Truncation};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Exponential coefficients (k, c) of d_x^p applied to basis function j.
fn basis_exp(basis: Basis, j: usize, p: usize) -> Vec<(i64, C64)> {
    let j = j as i64;
    let raw: Vec<(i64, C64)> = match basis {
        Basis::Sine => vec![(j, C64::new(0.0, -0.5)), (-j, C64::new(0.0, 0.5))],
        Basis::Cosine if j == 0 => vec![(0, C64::new(1.0, 0.0))],
        Basis::Cosine => vec![(j, C64::new(0.5, 0.0)), (-j, C64::new(0.5, 0.0))],
    };
    raw.into_iter()
        .map(|(k, c)| (k, c * (I * k as f64).powu(p as u32)))
        .filter(|(_, c)| *c != ZERO)
        .collect()
}

fn project_out(basis: Basis, j: usize, w: impl Fn(i64) -> C64) -> C64 {
    let j = j as i64;
    match basis {
        Basis::Sine => I * (w(j) - w(-j)),
        Basis::Cosine if j == 0 => w(0),
        Basis::Cosine => w(j) + w(-j),
    }
}

/// Slabs of `u -> a * d_x^p u` between `basis` coefficient vectors of length nj,
/// one (nj x nj) matrix per time difference |h| <= hmax.
pub fn scalar_slabs(a: &SpectralField, p: usize, basis: Basis, nx: usize, hmax: usize) -> Vec<DMatrix<C64>> {
    let nj = basis.nj(nx);
    let j0 = basis.jmin();
    let ht = h_trunc(a.trunc().d, hmax);
    let inputs: Vec<Vec<(i64, C64)>> = (0..nj).map(|c| basis_exp(basis, c + j0, p)).collect();
    ht.ells()
        .iter()
        .map(|h| {
            let mut m = DMatrix::zeros(nj, nj);
            if a.trunc().ell_index(h).is_none() {
                return m;
            }
            for (c, inp) in inputs.iter().enumerate() {
                for r in 0..nj {
                    let w = |k: i64| {
                        inp.iter()
                            .map(|&(kp, cp)| a.get(h, k - kp) * cp)
                            .fold(ZERO, |x, y| x + y)
                    };
                    m[(r, c)] = project_out(basis, r + j0, w);
                }
            }
            m
        })
        .collect()
}

/// 2x2 matrix of scalar fields multiplying a doubled field.
pub type CoeffMatrix = [[SpectralField; 2]; 2];

/// Toeplitz operator of `h -> C d_x^p h` on the doubled index set of `trunc`.
pub fn coeff_slabs(c: &CoeffMatrix, p: usize, trunc: Truncation, basis: Basis, hmax: usize) -> OpMatrix {
    let mut out = OpMatrix::zeros_toeplitz(trunc, basis, hmax);
    let nj = basis.nj(trunc.nx);
    for (bs, row) in c.iter().enumerate() {
        for (bc, f) in row.iter().enumerate() {
            if f.is_zero() {
                continue;
            }
            let slabs = scalar_slabs(f, p, basis, trunc.nx, hmax);
            for (dst, src) in out.slabs_mut().unwrap().iter_mut().zip(slabs) {
                dst.view_mut((bs * nj, bc * nj), (nj, nj)).copy_from(&src);
            }
        }
    }
    out
}

/// Sum_p C_p d_x^p with `coeffs[p]` the order-p coefficient matrix.
pub fn differential_matrix(coeffs: &[CoeffMatrix], trunc: Truncation, basis: Basis, hmax: usize) -> OpMatrix {
    let mut out = OpMatrix::zeros_toeplitz(trunc, basis, hmax);
    for (p, c) in coeffs.iter().enumerate() {
        out = out.add(&coeff_slabs(c, p, trunc, basis, hmax)).unwrap();
    }
    out
}

/// Multiplication by `a` on the first component and by conj(a) on the second.
pub fn multiplication_matrix(a: &SpectralField, basis: Basis, trunc: Truncation) -> OpMatrix {
    let z = SpectralField::zeros(a.trunc());
    let c = [[a.clone(), z.clone()], [z, a.conj_fn()]];
    coeff_slabs(&c, 0, trunc, basis, 2 * trunc.nphi)
}
