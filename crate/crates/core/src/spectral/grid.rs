//! Collocation grids on T^d x T with separable direct transforms.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use super::field::SpectralField;
use super::trunc::Truncation;

/// Uniform grid with `m_phi` points per phase component and `m_x` points in x.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    pub d: usize,
    pub m_phi: usize,
    pub m_x: usize,
}

impl Grid {
    pub fn new(d: usize, m_phi: usize, m_x: usize) -> Self {
        assert!(m_phi >= 1 && m_x >= 1);
        Grid { d, m_phi, m_x }
    }

    /// Smallest odd grid resolving every mode of `t` exactly.
    pub fn exact_for(t: Truncation) -> Self {
        Grid::new(t.d, 2 * t.nphi + 1, 2 * t.nx + 1)
    }

    pub fn n_phi_points(&self) -> usize {
        self.m_phi.pow(self.d as u32)
    }

    pub fn len(&self) -> usize {
        self.n_phi_points() * self.m_x
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phi_point(&self, mut p: usize) -> Vec<f64> {
        let mut phi = vec![0.0; self.d];
        for c in (0..self.d).rev() {
            phi[c] = 2.0 * PI * (p % self.m_phi) as f64 / self.m_phi as f64;
            p /= self.m_phi;
        }
        phi
    }

    pub fn x_point(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.m_x as f64
    }

    /// Grid values of `f`.
    pub fn synth(&self, f: &SpectralField) -> Vec<C64> {
        let t = f.trunc();
        assert_eq!(t.d, self.d);
        let mut shape = t.shape();
        let mut data = f.coeffs().to_vec();
        let wx = synth_matrix(t.nx, self.m_x);
        data = apply_axis(&data, &mut shape, self.d, &wx, self.m_x);
        let wp = synth_matrix(t.nphi, self.m_phi);
        for c in 0..self.d {
            data = apply_axis(&data, &mut shape, c, &wp, self.m_phi);
        }
        data
    }

    /// Partial synthesis in phi only: layout (phi point, k).
    pub fn synth_phi(&self, f: &SpectralField) -> Vec<C64> {
        let t = f.trunc();
        let mut shape = t.shape();
        let mut data = f.coeffs().to_vec();
        let wp = synth_matrix(t.nphi, self.m_phi);
        for c in 0..self.d {
            data = apply_axis(&data, &mut shape, c, &wp, self.m_phi);
        }
        data
    }

    /// Partial synthesis in x only: layout (ell, x point).
    pub fn synth_x(&self, f: &SpectralField) -> Vec<C64> {
        let t = f.trunc();
        let mut shape = t.shape();
        let wx = synth_matrix(t.nx, self.m_x);
        apply_axis(f.coeffs(), &mut shape, self.d, &wx, self.m_x)
    }

    /// Discrete Fourier projection of grid values onto the modes of `t`.
    pub fn analyze(&self, values: &[C64], t: Truncation) -> SpectralField {
        assert_eq!(values.len(), self.len());
        let mut shape = vec![self.m_phi; self.d];
        shape.push(self.m_x);
        let mut data = values.to_vec();
        let wx = analysis_matrix(t.nx, self.m_x);
        data = apply_axis(&data, &mut shape, self.d, &wx, 2 * t.nx + 1);
        let wp = analysis_matrix(t.nphi, self.m_phi);
        for c in 0..self.d {
            data = apply_axis(&data, &mut shape, c, &wp, 2 * t.nphi + 1);
        }
        SpectralField::from_coeffs(t, data).expect("analysis shape")
    }

    /// Values of `f(phi, x + shift(phi, x))` at the grid points.
    pub fn eval_x_shifted(&self, f: &SpectralField, shift: &[C64]) -> Vec<C64> {
        assert_eq!(shift.len(), self.len());
        let t = f.trunc();
        let nk = t.n_k();
        let nx = t.nx as i64;
        let part = self.synth_phi(f);
        let mut out = vec![C64::new(0.0, 0.0); self.len()];
        for p in 0..self.n_phi_points() {
            let row = &part[p * nk..(p + 1) * nk];
            for m in 0..self.m_x {
                let y = self.x_point(m) + shift[p * self.m_x + m].re;
                out[p * self.m_x + m] = eval_trig(row, nx, y);
            }
        }
        out
    }

    /// Values of `f(phi + shift(phi), x)` at the grid points, `shift` holding one
    /// d-vector per phase point.
    pub fn eval_phi_shifted(&self, f: &SpectralField, shift: &[Vec<f64>]) -> Vec<C64> {
        assert_eq!(shift.len(), self.n_phi_points());
        let t = f.trunc();
        let part = self.synth_x(f);
        let ells = t.ells();
        let mut out = vec![C64::new(0.0, 0.0); self.len()];
        for p in 0..self.n_phi_points() {
            let phi: Vec<f64> = self
                .phi_point(p)
                .iter()
                .zip(&shift[p])
                .map(|(a, b)| a + b)
                .collect();
            let phases: Vec<C64> = ells
                .iter()
                .map(|ell| C64::from_polar(1.0, super::trunc::dot(&phi, ell)))
                .collect();
            for m in 0..self.m_x {
                let mut acc = C64::new(0.0, 0.0);
                for (e, ph) in phases.iter().enumerate() {
                    acc += part[e * self.m_x + m] * ph;
                }
                out[p * self.m_x + m] = acc;
            }
        }
        out
    }
}

/// Sum_{k=-n..n} c_k e^{iky} for coefficients stored from k = -n.
pub fn eval_trig(c: &[C64], n: i64, y: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    let w = C64::from_polar(1.0, y);
    let mut e = C64::from_polar(1.0, -(n as f64) * y);
    for ck in c {
        acc += ck * e;
        e *= w;
    }
    acc
}

fn synth_matrix(n: usize, m: usize) -> Vec<C64> {
    // (m x (2n+1)), entry e^{i k x_p}
    let nk = 2 * n + 1;
    let mut w = Vec::with_capacity(m * nk);
    for p in 0..m {
        let x = 2.0 * PI * p as f64 / m as f64;
        for kk in 0..nk {
            let k = kk as f64 - n as f64;
            w.push(C64::from_polar(1.0, k * x));
        }
    }
    w
}

fn analysis_matrix(n: usize, m: usize) -> Vec<C64> {
    // ((2n+1) x m), entry e^{-i k x_p}/m
    let nk = 2 * n + 1;
    let mut w = Vec::with_capacity(m * nk);
    for kk in 0..nk {
        let k = kk as f64 - n as f64;
        for p in 0..m {
            let x = 2.0 * PI * p as f64 / m as f64;
            w.push(C64::from_polar(1.0 / m as f64, -k * x));
        }
    }
    w
}

/// Contracts axis `axis` of a row-major tensor with the (n_out x n_in) matrix `w`.
fn apply_axis(
    data: &[C64],
    shape: &mut [usize],
    axis: usize,
    w: &[C64],
    n_out: usize,
) -> Vec<C64> {
    let n_in = shape[axis];
    assert_eq!(w.len(), n_out * n_in);
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![C64::new(0.0, 0.0); outer * n_out * inner];
    for o in 0..outer {
        let src = &data[o * n_in * inner..(o + 1) * n_in * inner];
        let dst = &mut out[o * n_out * inner..(o + 1) * n_out * inner];
        for r in 0..n_out {
            let wr = &w[r * n_in..(r + 1) * n_in];
            let drow = &mut dst[r * inner..(r + 1) * inner];
            for (q, wq) in wr.iter().enumerate() {
                let srow = &src[q * inner..(q + 1) * inner];
                for (d, s) in drow.iter_mut().zip(srow) {
                    *d += wq * s;
                }
            }
        }
    }
    shape[axis] = n_out;
    out
}
