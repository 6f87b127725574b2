//! Function-level arithmetic on an odd collocation grid.

use num_complex::Complex64 as C64;

use crate::spectral::{Grid, SpectralField, Truncation};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Grid of size (2K+1)^d x (2K'+1) paired with the truncation (K, K') it
/// resolves exactly, so synthesis and analysis are mutually inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorkGrid {
    pub trunc: Truncation,
    pub grid: Grid,
}

impl WorkGrid {
    pub fn new(trunc: Truncation) -> Self {
        WorkGrid {
            trunc,
            grid: Grid::exact_for(trunc),
        }
    }

    /// Working grid for fields on `t`, `oversample` times finer in each direction.
    pub fn oversampled(t: Truncation, oversample: usize) -> Self {
        let f = oversample.max(1);
        WorkGrid::new(Truncation::new(t.d, f * t.nphi.max(1), f * t.nx.max(1)))
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn m_x(&self) -> usize {
        self.grid.m_x
    }

    pub fn n_phi_points(&self) -> usize {
        self.grid.n_phi_points()
    }

    pub fn values(&self, f: &SpectralField) -> Vec<C64> {
        self.grid.synth(&f.resize(self.trunc))
    }

    pub fn field(&self, v: &[C64]) -> SpectralField {
        self.grid.analyze(v, self.trunc)
    }

    pub fn constant(&self, c: C64) -> Vec<C64> {
        vec![c; self.len()]
    }

    pub fn spectral(&self, v: &[C64], op: impl Fn(&SpectralField) -> SpectralField) -> Vec<C64> {
        self.values(&op(&self.field(v)))
    }

    pub fn dx(&self, v: &[C64]) -> Vec<C64> {
        self.spectral(v, |f| f.dx())
    }

    pub fn dxx(&self, v: &[C64]) -> Vec<C64> {
        self.spectral(v, |f| f.dxx())
    }

    pub fn dx_pow(&self, v: &[C64], p: usize) -> Vec<C64> {
        match p {
            0 => v.to_vec(),
            _ => self.spectral(v, |f| f.dx_pow(p)),
        }
    }

    pub fn dx_inverse(&self, v: &[C64]) -> Vec<C64> {
        self.spectral(v, |f| f.dx_inverse())
    }

    pub fn omega_dphi(&self, v: &[C64], omega: &[f64]) -> Vec<C64> {
        self.spectral(v, |f| f.omega_dphi(omega))
    }

    pub fn dphi(&self, v: &[C64], c: usize) -> Vec<C64> {
        self.spectral(v, |f| f.dphi(c))
    }

    /// x-average at each phase point, broadcast over x.
    pub fn x_mean(&self, v: &[C64]) -> Vec<C64> {
        let mx = self.m_x();
        let mut out = vec![ZERO; v.len()];
        for (o, row) in out.chunks_mut(mx).zip(v.chunks(mx)) {
            let m = row.iter().sum::<C64>() / mx as f64;
            o.iter_mut().for_each(|x| *x = m);
        }
        out
    }

    pub fn mean(&self, v: &[C64]) -> C64 {
        v.iter().sum::<C64>() / v.len() as f64
    }

    /// One value per phase point from a field constant in x.
    pub fn phi_values(&self, v: &[C64]) -> Vec<C64> {
        v.chunks(self.m_x()).map(|row| row[0]).collect()
    }

    /// sum over |beta| <= 1 of sup |d^beta f|, derivatives in all d + 1 variables.
    pub fn w1_inf(&self, v: &[C64]) -> f64 {
        let mut n = sup(v) + sup(&self.dx(v));
        for c in 0..self.trunc.d {
            n += sup(&self.dphi(v, c));
        }
        n
    }

    /// Values of f(phi, x + shift) for real shifts given on the grid.
    pub fn compose_x(&self, v: &[C64], shift: &[C64]) -> Vec<C64> {
        self.grid.eval_x_shifted(&self.field(v), shift)
    }

    /// Values of f(phi + shift(phi), x), one shift vector per phase point.
    pub fn compose_phi(&self, v: &[C64], shift: &[Vec<f64>]) -> Vec<C64> {
        self.grid.eval_phi_shifted(&self.field(v), shift)
    }
}

pub fn sup(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

pub fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[C64], c: C64) -> Vec<C64> {
    a.iter().map(|x| x * c).collect()
}

/// 2x2 matrix of grid functions.
pub type GridMat = [[Vec<C64>; 2]; 2];

/// Pair of grid functions (h+, h-).
pub type GridVec = [Vec<C64>; 2];

pub fn mat_zero(n: usize) -> GridMat {
    let z = vec![ZERO; n];
    [[z.clone(), z.clone()], [z.clone(), z]]
}

pub fn mat_diag(a: Vec<C64>, b: Vec<C64>) -> GridMat {
    let z = vec![ZERO; a.len()];
    [[a, z.clone()], [z, b]]
}

pub fn mat_identity(n: usize) -> GridMat {
    mat_diag(vec![C64::new(1.0, 0.0); n], vec![C64::new(1.0, 0.0); n])
}

pub fn mat_mul(a: &GridMat, b: &GridMat) -> GridMat {
    let n = a[0][0].len();
    let mut out = mat_zero(n);
    for i in 0..2 {
        for j in 0..2 {
            for p in 0..n {
                out[i][j][p] = a[i][0][p] * b[0][j][p] + a[i][1][p] * b[1][j][p];
            }
        }
    }
    out
}

pub fn mat_add(a: &GridMat, b: &GridMat) -> GridMat {
    mat_zip(a, b, |x, y| x + y)
}

fn mat_zip(a: &GridMat, b: &GridMat, f: impl Fn(C64, C64) -> C64) -> GridMat {
    let g = |i: usize, j: usize| -> Vec<C64> { a[i][j].iter().zip(&b[i][j]).map(|(&x, &y)| f(x, y)).collect() };
    [[g(0, 0), g(0, 1)], [g(1, 0), g(1, 1)]]
}

/// Entry-wise map of a matrix of grid functions.
pub fn mat_map(a: &GridMat, f: impl Fn(&[C64]) -> Vec<C64>) -> GridMat {
    [[f(&a[0][0]), f(&a[0][1])], [f(&a[1][0]), f(&a[1][1])]]
}

/// Pointwise product of a scalar grid function with a matrix.
pub fn mat_scale(s: &[C64], a: &GridMat) -> GridMat {
    mat_map(a, |v| mul(s, v))
}

pub fn mat_apply(a: &GridMat, h: &GridVec) -> GridVec {
    [
        add(&mul(&a[0][0], &h[0]), &mul(&a[0][1], &h[1])),
        add(&mul(&a[1][0], &h[0]), &mul(&a[1][1], &h[1])),
    ]
}

pub fn mat_sup(a: &GridMat) -> f64 {
    a.iter().flatten().map(|v| sup(v)).fold(0.0, f64::max)
}

pub fn vec_sup(h: &GridVec) -> f64 {
    sup(&h[0]).max(sup(&h[1]))
}
