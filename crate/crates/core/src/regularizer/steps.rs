use num_complex::Complex64 as C64;

use super::diffeo::TorusDiffeo;
use super::grid::{
    add, mat_add, mat_apply, mat_diag, mat_map, mat_mul, mat_scale, mat_zero, mul, scale, sub, sup, GridMat,
    GridVec, WorkGrid,
};
use crate::error::{Error, Result};
use crate::model::LinearizedCoefficients;
use crate::opmatrix::{differential_matrix, Basis, CoeffMatrix, OpMatrix};
use crate::spectral::{SpectralField, Truncation};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Grid values of C_p in  L = omega.d_phi + sum_p C_p d_x^p.
#[derive(Clone, Debug)]
pub struct GridCoeffs {
    pub c: [GridMat; 3],
}

impl GridCoeffs {
    /// C_2 = i(E + A_2), C_1 = i A_1, C_0 = i A_0.
    pub fn from_linearized(wg: &WorkGrid, lc: &LinearizedCoefficients) -> Self {
        let mk = |p: usize| -> GridMat {
            let m = lc.matrix(p);
            let mut g = mat_zero(wg.len());
            for r in 0..2 {
                for c in 0..2 {
                    g[r][c] = scale(&wg.values(&m[r][c]), I);
                }
            }
            g
        };
        let mut c2 = mk(2);
        c2[0][0].iter_mut().for_each(|v| *v += I);
        c2[1][1].iter_mut().for_each(|v| *v -= I);
        GridCoeffs { c: [mk(0), mk(1), c2] }
    }

    /// omega.d_phi + i m E d_xx.
    pub fn constant_diagonal(wg: &WorkGrid, m: f64) -> Self {
        let n = wg.len();
        GridCoeffs {
            c: [
                mat_zero(n),
                mat_zero(n),
                mat_diag(vec![I * m; n], vec![-I * m; n]),
            ],
        }
    }

    /// L h at function level; derivatives are spectral on the working grid.
    pub fn apply(&self, wg: &WorkGrid, omega: &[f64], h: &GridVec) -> GridVec {
        let mut out = [wg.omega_dphi(&h[0], omega), wg.omega_dphi(&h[1], omega)];
        for p in 0..3 {
            let dh = [wg.dx_pow(&h[0], p), wg.dx_pow(&h[1], p)];
            let t = mat_apply(&self.c[p], &dh);
            out = [add(&out[0], &t[0]), add(&out[1], &t[1])];
        }
        out
    }

    /// T^{-1} L T for a multiplication operator T.
    pub fn conjugate_multiplication(&self, wg: &WorkGrid, omega: &[f64], t: &GridMat, t_inv: &GridMat) -> Self {
        let tx = mat_map(t, |v| wg.dx(v));
        let txx = mat_map(t, |v| wg.dxx(v));
        let tphi = mat_map(t, |v| wg.omega_dphi(v, omega));
        let [c0, c1, c2] = &self.c;
        let n2 = mat_mul(c2, t);
        let n1 = mat_add(&mat_map(&mat_mul(c2, &tx), |v| scale(v, C64::new(2.0, 0.0))), &mat_mul(c1, t));
        let n0 = mat_add(
            &mat_add(&tphi, &mat_mul(c2, &txx)),
            &mat_add(&mat_mul(c1, &tx), &mat_mul(c0, t)),
        );
        GridCoeffs {
            c: [mat_mul(t_inv, &n0), mat_mul(t_inv, &n1), mat_mul(t_inv, &n2)],
        }
    }

    /// T2^{-1} L T2 for (T2 h)(phi, x) = h(phi, x + xi).
    pub fn conjugate_space(&self, wg: &WorkGrid, omega: &[f64], d: &TorusDiffeo) -> Self {
        let xi = d.shift_values();
        let xx = wg.dx(xi);
        let xxx = wg.dxx(xi);
        let xphi = wg.omega_dphi(xi, omega);
        let one_x: Vec<C64> = xx.iter().map(|v| ONE + v).collect();
        let [c0, c1, c2] = &self.c;
        let n2 = mat_scale(&mul(&one_x, &one_x), c2);
        let mut n1 = mat_add(&mat_scale(&xxx, c2), &mat_scale(&one_x, c1));
        n1[0][0] = add(&n1[0][0], &xphi);
        n1[1][1] = add(&n1[1][1], &xphi);
        let back = |m: &GridMat| mat_map(m, |v| d.apply_inverse(v));
        GridCoeffs {
            c: [back(c0), back(&n1), back(&n2)],
        }
    }

    /// L T3 = T3 rho L3 for (T3 h)(phi, x) = h(phi + omega alpha(phi), x); returns
    /// (L3, rho).
    pub fn conjugate_time(&self, wg: &WorkGrid, omega: &[f64], d: &TorusDiffeo) -> (Self, Vec<C64>) {
        let aphi = wg.omega_dphi(d.shift_values(), omega);
        let rho = d.apply_inverse(&aphi.iter().map(|v| ONE + v).collect::<Vec<_>>());
        let inv_rho: Vec<C64> = rho.iter().map(|r| ONE / r).collect();
        let tr = |m: &GridMat| mat_scale(&inv_rho, &mat_map(m, |v| d.apply_inverse(v)));
        (
            GridCoeffs {
                c: [tr(&self.c[0]), tr(&self.c[1]), tr(&self.c[2])],
            },
            rho,
        )
    }

    /// Coefficient fields on `out`.
    pub fn to_fields(&self, wg: &WorkGrid, out: Truncation) -> [CoeffMatrix; 3] {
        let f = |m: &GridMat| -> CoeffMatrix {
            let g = |r: usize, c: usize| wg.field(&m[r][c]).resize(out);
            [[g(0, 0), g(0, 1)], [g(1, 0), g(1, 1)]]
        };
        [f(&self.c[0]), f(&self.c[1]), f(&self.c[2])]
    }

    /// Finite-section Toeplitz matrix of sum_p C_p d_x^p on `trunc`.
    pub fn operator_part(&self, wg: &WorkGrid, trunc: Truncation, basis: Basis) -> OpMatrix {
        let ct = Truncation::new(trunc.d, 2 * trunc.nphi, 2 * trunc.nx);
        let fields = self.to_fields(wg, ct);
        differential_matrix(&fields, trunc, basis, 2 * trunc.nphi)
    }

    /// Finite-section matrix of C_p d_x^p alone.
    pub fn order_part(&self, wg: &WorkGrid, trunc: Truncation, basis: Basis, p: usize) -> OpMatrix {
        let n = wg.len();
        let mut c = [mat_zero(n), mat_zero(n), mat_zero(n)];
        c[p] = self.c[p].clone();
        GridCoeffs { c }.operator_part(wg, trunc, basis)
    }
}

#[derive(Clone, Debug)]
pub struct Step1 {
    pub t1: GridMat,
    pub t1_inv: GridMat,
    /// a2^(1) = lambda1 - 1.
    pub a2_1: Vec<C64>,
    /// sup |Im a2| discarded before taking the square root.
    pub a2_imag: f64,
    /// Distance of T1^{-1} C_2 T1 from i(1 + a2^(1))E.
    pub diagonalization_defect: f64,
}

/// Diagonalizes the second-order coefficient pointwise.
pub fn step1_diag_second_order(wg: &WorkGrid, l: &GridCoeffs, omega: &[f64]) -> Result<(Step1, GridCoeffs)> {
    let c2 = &l.c[2];
    let n = wg.len();
    let mut a2_imag: f64 = 0.0;
    let mut lam = vec![ONE; n];
    let mut t1 = mat_zero(n);
    let mut t1_inv = mat_zero(n);
    for p in 0..n {
        let a = c2[0][0][p] / I;
        a2_imag = a2_imag.max(a.im.abs());
        let a = a.re;
        let b = c2[0][1][p] / I;
        let disc = a * a - b.norm_sqr();
        if !(disc > 0.0) || a <= 0.0 {
            return Err(Error::DegenerateCoefficient(format!(
                "(1 + a2)^2 - |b2|^2 = {disc:.3e} at grid point {p}"
            )));
        }
        let l1 = disc.sqrt();
        lam[p] = C64::new(l1, 0.0);
        let beta = b / (a + l1);
        let det = 1.0 - beta.norm_sqr();
        t1_inv[0][0][p] = ONE;
        t1_inv[0][1][p] = beta;
        t1_inv[1][0][p] = beta.conj();
        t1_inv[1][1][p] = ONE;
        t1[0][0][p] = ONE / det;
        t1[0][1][p] = -beta / det;
        t1[1][0][p] = -beta.conj() / det;
        t1[1][1][p] = ONE / det;
    }
    let identity = c2[0][1].iter().all(|b| *b == C64::new(0.0, 0.0));
    let mut l1 = if identity {
        l.clone()
    } else {
        l.conjugate_multiplication(wg, omega, &t1, &t1_inv)
    };
    let target = mat_diag(scale(&lam, I), scale(&lam, -I));
    let diagonalization_defect = (0..2)
        .flat_map(|r| (0..2).map(move |c| (r, c)))
        .map(|(r, c)| sup(&sub(&l1.c[2][r][c], &target[r][c])))
        .fold(0.0, f64::max);
    l1.c[2] = target;
    let a2_1 = lam.iter().map(|v| v - ONE).collect();
    Ok((
        Step1 {
            t1,
            t1_inv,
            a2_1,
            a2_imag,
            diagonalization_defect,
        },
        l1,
    ))
}

#[derive(Clone, Debug)]
pub struct Step2 {
    pub diffeo: TorusDiffeo,
    /// a2^(2)(phi) on the grid.
    pub a2_2: Vec<C64>,
    /// sup |(1 + a2^(1))(1 + xi_x)^2 - (1 + a2^(2))| on the grid.
    pub straightening_defect: f64,
    /// l2 norm of the x-modes k != 0 of the conjugated second-order coefficient.
    pub x_modes_norm: f64,
}

/// xi and a2^(2) from a2^(1).
pub fn step2_space_diffeo(wg: &WorkGrid, a2_1: &[C64]) -> Result<(TorusDiffeo, Vec<C64>, f64)> {
    let one_a: Vec<f64> = a2_1.iter().map(|v| 1.0 + v.re).collect();
    if let Some(p) = one_a.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateCoefficient(format!(
            "1 + a2^(1) = {:.3e} at grid point {p}",
            one_a[p]
        )));
    }
    let g: Vec<C64> = one_a.iter().map(|v| C64::new(v.powf(-0.5), 0.0)).collect();
    let mean = wg.x_mean(&g);
    let a2_2: Vec<C64> = mean.iter().map(|m| C64::new(m.re.powi(-2) - 1.0, 0.0)).collect();
    let rho0: Vec<C64> = g.iter().zip(&mean).map(|(a, m)| C64::new(a.re / m.re - 1.0, 0.0)).collect();
    let xi = wg.field(&wg.dx_inverse(&rho0)).re_fn();
    let diffeo = TorusDiffeo::space(*wg, &xi)?;
    let xx = wg.dx(diffeo.shift_values());
    let defect = (0..wg.len())
        .map(|p| (one_a[p] * (ONE + xx[p]).powu(2) - (ONE + a2_2[p])).norm())
        .fold(0.0, f64::max);
    Ok((diffeo, a2_2, defect))
}

pub fn step2(wg: &WorkGrid, l1: &GridCoeffs, a2_1: &[C64], omega: &[f64]) -> Result<(Step2, GridCoeffs)> {
    let (diffeo, a2_2, straightening_defect) = step2_space_diffeo(wg, a2_1)?;
    let mut l2 = l1.conjugate_space(wg, omega, &diffeo);
    let a = wg.field(&scale(&l2.c[2][0][0], -I));
    let x_modes_norm = a.x_dependent_norm(0.0);
    let one_a2: Vec<C64> = a2_2.iter().map(|v| ONE + v).collect();
    l2.c[2] = mat_diag(scale(&one_a2, I), scale(&one_a2, -I));
    Ok((
        Step2 {
            diffeo,
            a2_2,
            straightening_defect,
            x_modes_norm,
        },
        l2,
    ))
}

#[derive(Clone, Debug)]
pub struct Step3 {
    pub diffeo: TorusDiffeo,
    pub m: f64,
    /// rho = T3^{-1}(1 + omega.d_phi alpha) on the grid.
    pub rho: Vec<C64>,
    /// sup |C_2^(3) - i m E|.
    pub reparam_defect: f64,
    pub min_divisor: f64,
}

/// m and alpha from a2^(2)(phi).
pub fn step3_time_reparam(
    wg: &WorkGrid,
    a2_2: &[C64],
    lambda: f64,
    omega_bar: &[f64],
    divisor_floor: f64,
) -> Result<(TorusDiffeo, f64, f64)> {
    let m = 1.0 + wg.mean(a2_2).re;
    let centered: Vec<C64> = a2_2.iter().map(|v| C64::new(v.re + 1.0 - m, 0.0)).collect();
    let f = wg.field(&centered).x_average();
    let (alpha, min_div) = f.omega_dphi_inverse(lambda, omega_bar, divisor_floor)?;
    let alpha = alpha.scale_re(1.0 / m).re_fn();
    let omega: Vec<f64> = omega_bar.iter().map(|w| w * lambda).collect();
    let diffeo = TorusDiffeo::time(*wg, &alpha, &omega)?;
    Ok((diffeo, m, min_div))
}

pub fn step3(
    wg: &WorkGrid,
    l2: &GridCoeffs,
    a2_2: &[C64],
    lambda: f64,
    omega_bar: &[f64],
    divisor_floor: f64,
) -> Result<(Step3, GridCoeffs)> {
    let (diffeo, m, min_divisor) = step3_time_reparam(wg, a2_2, lambda, omega_bar, divisor_floor)?;
    let omega: Vec<f64> = omega_bar.iter().map(|w| w * lambda).collect();
    let (mut l3, rho) = l2.conjugate_time(wg, &omega, &diffeo);
    let n = wg.len();
    let target = mat_diag(vec![I * m; n], vec![-I * m; n]);
    let reparam_defect = (0..2)
        .flat_map(|r| (0..2).map(move |c| (r, c)))
        .map(|(r, c)| sup(&sub(&l3.c[2][r][c], &target[r][c])))
        .fold(0.0, f64::max);
    l3.c[2] = target;
    Ok((
        Step3 {
            diffeo,
            m,
            rho,
            reparam_defect,
            min_divisor,
        },
        l3,
    ))
}

#[derive(Clone, Debug)]
pub struct Step4 {
    pub s: SpectralField,
    pub t4: GridMat,
    pub t4_inv: GridMat,
    /// sup of the diagonal first-order coefficient after conjugation.
    pub a1_residual: f64,
    /// sup |x-average of a1^(3)|, the part the descent cannot remove.
    pub a1_mean: f64,
}

/// s = -(1/2m) d_x^{-1} a1^(3).
pub fn step4_descent(wg: &WorkGrid, a1_3: &[C64], m: f64) -> Result<SpectralField> {
    if m == 0.0 {
        return Err(Error::DegenerateCoefficient("m = 0".into()));
    }
    Ok(wg.field(&wg.dx_inverse(a1_3)).scale_re(-0.5 / m))
}

pub fn step4(wg: &WorkGrid, l3: &GridCoeffs, m: f64, omega: &[f64]) -> Result<(Step4, GridCoeffs)> {
    let a1_3 = scale(&l3.c[1][0][0], -I);
    let a1_mean = sup(&wg.x_mean(&a1_3));
    let s = step4_descent(wg, &a1_3, m)?;
    let sv = wg.values(&s);
    let e: Vec<C64> = sv.iter().map(|v| v.exp()).collect();
    let ec: Vec<C64> = e.iter().map(|v| v.conj()).collect();
    let t4 = mat_diag(e.clone(), ec.clone());
    let t4_inv = mat_diag(e.iter().map(|v| ONE / v).collect(), ec.iter().map(|v| ONE / v).collect());
    let mut l4 = if s.is_zero() {
        l3.clone()
    } else {
        l3.conjugate_multiplication(wg, omega, &t4, &t4_inv)
    };
    let a1_residual = sup(&l4.c[1][0][0]).max(sup(&l4.c[1][1][1]));
    let n = wg.len();
    l4.c[1][0][0] = vec![C64::new(0.0, 0.0); n];
    l4.c[1][1][1] = vec![C64::new(0.0, 0.0); n];
    l4.c[2] = mat_diag(vec![I * m; n], vec![-I * m; n]);
    Ok((
        Step4 {
            s,
            t4,
            t4_inv,
            a1_residual,
            a1_mean,
        },
        l4,
    ))
}
