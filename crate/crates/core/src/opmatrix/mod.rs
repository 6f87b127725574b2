//! Block matrices on doubled sine/cosine coefficient vectors.
//!
//! Index set: (sigma, j, ell) with |ell|_inf <= nphi and j in 1..=nx (sine) or
//! 0..=nx (cosine). Vectors are laid out as `ell_idx * 2nj + slot * nj + jloc`.

mod assemble;
mod neumann;
mod reversibility;

pub use assemble::{coeff_slabs, differential_matrix, multiplication_matrix, scalar_slabs, CoeffMatrix};
pub use neumann::{neumann_invert, NeumannReport};
pub use reversibility::{classify_reversibility, ReversibilityClass, ReversibilityTag};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{dot, norm_inf, Truncation};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Sine,
    Cosine,
}

impl Basis {
    pub fn nj(self, nx: usize) -> usize {
        match self {
            Basis::Sine => nx,
            Basis::Cosine => nx + 1,
        }
    }

    pub fn jmin(self) -> usize {
        match self {
            Basis::Sine => 1,
            Basis::Cosine => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    /// One (2nj x 2nj) block per time difference h, |h|_inf <= hmax.
    Toeplitz { hmax: usize, slabs: Vec<DMatrix<C64>> },
    Dense(DMatrix<C64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpMatrix {
    trunc: Truncation,
    basis: Basis,
    storage: Storage,
}

/// Decay norm value, optionally with its Lipschitz part on a parameter family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub s: f64,
    pub value: f64,
    pub lip_value: Option<f64>,
}

fn h_trunc(d: usize, hmax: usize) -> Truncation {
    Truncation::new(d, hmax, 0)
}

impl OpMatrix {
    pub fn zeros_toeplitz(trunc: Truncation, basis: Basis, hmax: usize) -> Self {
        let n = 2 * basis.nj(trunc.nx);
        let count = h_trunc(trunc.d, hmax).n_ell();
        OpMatrix {
            trunc,
            basis,
            storage: Storage::Toeplitz {
                hmax,
                slabs: vec![DMatrix::zeros(n, n); count],
            },
        }
    }

    /// Toeplitz zero with the default slab range 2 nphi.
    pub fn zeros(trunc: Truncation, basis: Basis) -> Self {
        Self::zeros_toeplitz(trunc, basis, 2 * trunc.nphi)
    }

    pub fn identity(trunc: Truncation, basis: Basis) -> Self {
        let mut m = Self::zeros(trunc, basis);
        let n = m.block_dim();
        *m.slab_mut(&vec![0; trunc.d]).unwrap() = DMatrix::identity(n, n);
        m
    }

    pub fn from_dense(trunc: Truncation, basis: Basis, a: DMatrix<C64>) -> Result<Self> {
        let n = trunc.n_ell() * 2 * basis.nj(trunc.nx);
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "dense operator must be {n}x{n}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(OpMatrix {
            trunc,
            basis,
            storage: Storage::Dense(a),
        })
    }

    pub fn trunc(&self) -> Truncation {
        self.trunc
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn nj(&self) -> usize {
        self.basis.nj(self.trunc.nx)
    }

    /// Size 2 nj of a phase-space block.
    pub fn block_dim(&self) -> usize {
        2 * self.nj()
    }

    /// Length of coefficient vectors this operator acts on.
    pub fn dim(&self) -> usize {
        self.trunc.n_ell() * self.block_dim()
    }

    pub fn is_toeplitz(&self) -> bool {
        matches!(self.storage, Storage::Toeplitz { .. })
    }

    pub fn hmax(&self) -> Option<usize> {
        match &self.storage {
            Storage::Toeplitz { hmax, .. } => Some(*hmax),
            Storage::Dense(_) => None,
        }
    }

    /// Local position of (sigma slot, j) inside a block.
    pub fn local(&self, slot: usize, j: usize) -> usize {
        slot * self.nj() + (j - self.basis.jmin())
    }

    pub fn j_of_local(&self, loc: usize) -> (usize, usize) {
        let nj = self.nj();
        (loc / nj, loc % nj + self.basis.jmin())
    }

    pub fn slab(&self, h: &[i64]) -> Option<&DMatrix<C64>> {
        match &self.storage {
            Storage::Toeplitz { hmax, slabs } => h_trunc(self.trunc.d, *hmax)
                .ell_index(h)
                .map(|i| &slabs[i]),
            Storage::Dense(_) => None,
        }
    }

    pub fn slab_mut(&mut self, h: &[i64]) -> Option<&mut DMatrix<C64>> {
        let d = self.trunc.d;
        match &mut self.storage {
            Storage::Toeplitz { hmax, slabs } => {
                h_trunc(d, *hmax).ell_index(h).map(move |i| &mut slabs[i])
            }
            Storage::Dense(_) => None,
        }
    }

    /// Slab differences h in storage order (Toeplitz only).
    pub fn slab_indices(&self) -> Vec<Vec<i64>> {
        match &self.storage {
            Storage::Toeplitz { hmax, .. } => h_trunc(self.trunc.d, *hmax).ells(),
            Storage::Dense(_) => Vec::new(),
        }
    }

    pub fn slabs(&self) -> Option<&[DMatrix<C64>]> {
        match &self.storage {
            Storage::Toeplitz { slabs, .. } => Some(slabs),
            Storage::Dense(_) => None,
        }
    }

    pub fn slabs_mut(&mut self) -> Option<&mut [DMatrix<C64>]> {
        match &mut self.storage {
            Storage::Toeplitz { slabs, .. } => Some(slabs),
            Storage::Dense(_) => None,
        }
    }

    pub fn dense(&self) -> Option<&DMatrix<C64>> {
        match &self.storage {
            Storage::Dense(a) => Some(a),
            _ => None,
        }
    }

    /// Finite-section matrix over |ell|, |ell'| <= nphi.
    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.storage {
            Storage::Dense(a) => a.clone(),
            Storage::Toeplitz { .. } => {
                let b = self.block_dim();
                let n = self.dim();
                let mut out = DMatrix::zeros(n, n);
                let ells = self.trunc.ells();
                for (r, lr) in ells.iter().enumerate() {
                    for (c, lc) in ells.iter().enumerate() {
                        let h: Vec<i64> = lr.iter().zip(lc).map(|(a, b)| a - b).collect();
                        if let Some(s) = self.slab(&h) {
                            out.view_mut((r * b, c * b), (b, b)).copy_from(s);
                        }
                    }
                }
                out
            }
        }
    }

    pub fn as_dense(&self) -> OpMatrix {
        OpMatrix {
            trunc: self.trunc,
            basis: self.basis,
            storage: Storage::Dense(self.to_dense()),
        }
    }

    /// Entry between (slot, j, ell) and (slot', j', ell').
    pub fn entry(&self, row: (usize, usize, &[i64]), col: (usize, usize, &[i64])) -> C64 {
        let (rs, rj, rl) = row;
        let (cs, cj, cl) = col;
        let a = self.local(rs, rj);
        let b = self.local(cs, cj);
        match &self.storage {
            Storage::Toeplitz { .. } => {
                let h: Vec<i64> = rl.iter().zip(cl).map(|(x, y)| x - y).collect();
                self.slab(&h).map(|s| s[(a, b)]).unwrap_or(ZERO)
            }
            Storage::Dense(m) => {
                let (Some(ri), Some(ci)) = (self.trunc.ell_index(rl), self.trunc.ell_index(cl)) else {
                    return ZERO;
                };
                let bd = self.block_dim();
                m[(ri * bd + a, ci * bd + b)]
            }
        }
    }

    /// Finite-section matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim());
        match &self.storage {
            Storage::Dense(a) => {
                let x = nalgebra::DVector::from_column_slice(v);
                (a * x).as_slice().to_vec()
            }
            Storage::Toeplitz { .. } => {
                let b = self.block_dim();
                let ells = self.trunc.ells();
                let mut out = vec![ZERO; v.len()];
                for (r, lr) in ells.iter().enumerate() {
                    let orow = &mut out[r * b..(r + 1) * b];
                    for (c, lc) in ells.iter().enumerate() {
                        let h: Vec<i64> = lr.iter().zip(lc).map(|(a, b)| a - b).collect();
                        let Some(s) = self.slab(&h) else { continue };
                        let vin = &v[c * b..(c + 1) * b];
                        for i in 0..b {
                            let mut acc = ZERO;
                            for k in 0..b {
                                acc += s[(i, k)] * vin[k];
                            }
                            orow[i] += acc;
                        }
                    }
                }
                out
            }
        }
    }

    fn same_shape(&self, o: &OpMatrix) -> Result<()> {
        if self.trunc != o.trunc || self.basis != o.basis {
            return Err(Error::ShapeMismatch(format!(
                "operators on {:?}/{:?} and {:?}/{:?}",
                self.trunc, self.basis, o.trunc, o.basis
            )));
        }
        Ok(())
    }

    /// Re-expresses a Toeplitz operator with a different slab range.
    pub fn with_hmax(&self, new_hmax: usize) -> OpMatrix {
        let Storage::Toeplitz { .. } = &self.storage else {
            return self.clone();
        };
        let mut out = OpMatrix::zeros_toeplitz(self.trunc, self.basis, new_hmax);
        for h in out.slab_indices() {
            if let Some(s) = self.slab(&h) {
                *out.slab_mut(&h).unwrap() = s.clone();
            }
        }
        out
    }

    fn zip_with(&self, o: &OpMatrix, f: impl Fn(&DMatrix<C64>, &DMatrix<C64>) -> DMatrix<C64>) -> Result<OpMatrix> {
        self.same_shape(o)?;
        match (&self.storage, &o.storage) {
            (Storage::Toeplitz { hmax: h1, .. }, Storage::Toeplitz { hmax: h2, .. }) => {
                let h = (*h1).max(*h2);
                let a = self.with_hmax(h);
                let b = o.with_hmax(h);
                let slabs = a
                    .slabs()
                    .unwrap()
                    .iter()
                    .zip(b.slabs().unwrap())
                    .map(|(x, y)| f(x, y))
                    .collect();
                Ok(OpMatrix {
                    trunc: self.trunc,
                    basis: self.basis,
                    storage: Storage::Toeplitz { hmax: h, slabs },
                })
            }
            _ => Ok(OpMatrix {
                trunc: self.trunc,
                basis: self.basis,
                storage: Storage::Dense(f(&self.to_dense(), &o.to_dense())),
            }),
        }
    }

    pub fn add(&self, o: &OpMatrix) -> Result<OpMatrix> {
        self.zip_with(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &OpMatrix) -> Result<OpMatrix> {
        self.zip_with(o, |a, b| a - b)
    }

    pub fn map_blocks(&self, f: impl Fn(&DMatrix<C64>) -> DMatrix<C64>) -> OpMatrix {
        let storage = match &self.storage {
            Storage::Toeplitz { hmax, slabs } => Storage::Toeplitz {
                hmax: *hmax,
                slabs: slabs.iter().map(&f).collect(),
            },
            Storage::Dense(a) => Storage::Dense(f(a)),
        };
        OpMatrix {
            trunc: self.trunc,
            basis: self.basis,
            storage,
        }
    }

    pub fn scale(&self, c: C64) -> OpMatrix {
        self.map_blocks(|m| m * c)
    }

    /// Product truncated to the slab range of the operands (Toeplitz) or the
    /// finite section (dense).
    pub fn mul(&self, o: &OpMatrix) -> Result<OpMatrix> {
        Ok(self.mul_with_defect(o)?.0)
    }

    /// Product and the 0-decay norm of the convolution tail dropped by the
    /// slab truncation (always 0 for dense products).
    pub fn mul_with_defect(&self, o: &OpMatrix) -> Result<(OpMatrix, f64)> {
        self.same_shape(o)?;
        match (&self.storage, &o.storage) {
            (Storage::Toeplitz { hmax: h1, .. }, Storage::Toeplitz { hmax: h2, .. }) => {
                let hmax = (*h1).max(*h2);
                let d = self.trunc.d;
                let out_t = h_trunc(d, hmax);
                let full_t = h_trunc(d, h1 + h2);
                let b = self.block_dim();
                let mut full: Vec<Option<DMatrix<C64>>> = vec![None; full_t.n_ell()];
                let ia = self.slab_indices();
                let ib = o.slab_indices();
                let sa = self.slabs().unwrap();
                let sb = o.slabs().unwrap();
                let nz_b: Vec<usize> = (0..ib.len()).filter(|&i| !is_zero(&sb[i])).collect();
                for (x, ha) in ia.iter().enumerate() {
                    if is_zero(&sa[x]) {
                        continue;
                    }
                    for &y in &nz_b {
                        let h: Vec<i64> = ha.iter().zip(&ib[y]).map(|(p, q)| p + q).collect();
                        let idx = full_t.ell_index(&h).unwrap();
                        let prod = &sa[x] * &sb[y];
                        match &mut full[idx] {
                            Some(acc) => *acc += prod,
                            slot @ None => *slot = Some(prod),
                        }
                    }
                }
                let mut out = OpMatrix::zeros_toeplitz(self.trunc, self.basis, hmax);
                let mut tail = Vec::new();
                for (idx, m) in full.into_iter().enumerate() {
                    let Some(m) = m else { continue };
                    let h = full_t.ell_of(idx);
                    match out_t.ell_index(&h) {
                        Some(oi) => out.slabs_mut().unwrap()[oi] = m,
                        None => tail.push((h, m)),
                    }
                }
                let _ = b;
                let defect = tail_decay(&tail, self, 0.0);
                Ok((out, defect))
            }
            _ => {
                let p = self.to_dense() * o.to_dense();
                Ok((
                    OpMatrix {
                        trunc: self.trunc,
                        basis: self.basis,
                        storage: Storage::Dense(p),
                    },
                    0.0,
                ))
            }
        }
    }

    /// Commutator-type derivative: slab h multiplied by i omega.h.
    pub fn omega_dphi(&self, omega: &[f64]) -> OpMatrix {
        match &self.storage {
            Storage::Toeplitz { .. } => {
                let mut out = self.clone();
                let idx = self.slab_indices();
                for (s, h) in out.slabs_mut().unwrap().iter_mut().zip(idx) {
                    *s *= C64::new(0.0, dot(omega, &h));
                }
                out
            }
            Storage::Dense(a) => {
                let b = self.block_dim();
                let ells = self.trunc.ells();
                let mut m = a.clone();
                for (r, lr) in ells.iter().enumerate() {
                    for (c, lc) in ells.iter().enumerate() {
                        let h: Vec<i64> = lr.iter().zip(lc).map(|(x, y)| x - y).collect();
                        let f = C64::new(0.0, dot(omega, &h));
                        let mut v = m.view_mut((r * b, c * b), (b, b));
                        v *= f;
                    }
                }
                OpMatrix {
                    trunc: self.trunc,
                    basis: self.basis,
                    storage: Storage::Dense(m),
                }
            }
        }
    }

    /// Pi_N: zeroes the entries with |ell - ell'|_inf > n.
    pub fn smooth_truncate(&self, n: usize) -> OpMatrix {
        self.filter_time(|h| norm_inf(h) as usize <= n)
    }

    /// Complement 1 - Pi_N.
    pub fn smooth_tail(&self, n: usize) -> OpMatrix {
        self.filter_time(|h| norm_inf(h) as usize > n)
    }

    fn filter_time(&self, keep: impl Fn(&[i64]) -> bool) -> OpMatrix {
        match &self.storage {
            Storage::Toeplitz { .. } => {
                let mut out = self.clone();
                let idx = self.slab_indices();
                for (s, h) in out.slabs_mut().unwrap().iter_mut().zip(idx) {
                    if !keep(&h) {
                        s.fill(ZERO);
                    }
                }
                out
            }
            Storage::Dense(a) => {
                let b = self.block_dim();
                let ells = self.trunc.ells();
                let mut m = a.clone();
                for (r, lr) in ells.iter().enumerate() {
                    for (c, lc) in ells.iter().enumerate() {
                        let h: Vec<i64> = lr.iter().zip(lc).map(|(x, y)| x - y).collect();
                        if !keep(&h) {
                            m.view_mut((r * b, c * b), (b, b)).fill(ZERO);
                        }
                    }
                }
                OpMatrix {
                    trunc: self.trunc,
                    basis: self.basis,
                    storage: Storage::Dense(m),
                }
            }
        }
    }

    /// Keeps entries whose (row, col) local block positions satisfy `keep`.
    pub fn filter_local(&self, keep: impl Fn(usize, usize, &[i64]) -> bool) -> OpMatrix {
        let b = self.block_dim();
        match &self.storage {
            Storage::Toeplitz { .. } => {
                let mut out = self.clone();
                let idx = self.slab_indices();
                for (s, h) in out.slabs_mut().unwrap().iter_mut().zip(idx) {
                    for r in 0..b {
                        for c in 0..b {
                            if !keep(r, c, &h) {
                                s[(r, c)] = ZERO;
                            }
                        }
                    }
                }
                out
            }
            Storage::Dense(a) => {
                let ells = self.trunc.ells();
                let mut m = a.clone();
                for (ri, lr) in ells.iter().enumerate() {
                    for (ci, lc) in ells.iter().enumerate() {
                        let h: Vec<i64> = lr.iter().zip(lc).map(|(x, y)| x - y).collect();
                        for r in 0..b {
                            for c in 0..b {
                                if !keep(r, c, &h) {
                                    m[(ri * b + r, ci * b + c)] = ZERO;
                                }
                            }
                        }
                    }
                }
                OpMatrix {
                    trunc: self.trunc,
                    basis: self.basis,
                    storage: Storage::Dense(m),
                }
            }
        }
    }

    /// Blocks with sigma = sigma'.
    pub fn sigma_diagonal(&self) -> OpMatrix {
        let nj = self.nj();
        self.filter_local(|r, c, _| r / nj == c / nj)
    }

    pub fn sigma_off_diagonal(&self) -> OpMatrix {
        let nj = self.nj();
        self.filter_local(|r, c, _| r / nj != c / nj)
    }

    /// Entries with (sigma, j) = (sigma', j'), every time difference.
    pub fn sj_diagonal(&self) -> OpMatrix {
        self.filter_local(|r, c, _| r == c)
    }

    /// Diagonal entries at time difference 0: the operator [R].
    pub fn diagonal_average(&self) -> OpMatrix {
        self.filter_local(|r, c, h| r == c && h.iter().all(|&x| x == 0))
    }

    /// Values (sigma, j) -> A_{sigma j}^{sigma j}(0).
    pub fn diagonal_values(&self) -> Vec<C64> {
        let b = self.block_dim();
        match &self.storage {
            Storage::Toeplitz { .. } => {
                let s = self.slab(&vec![0; self.trunc.d]).unwrap();
                (0..b).map(|i| s[(i, i)]).collect()
            }
            Storage::Dense(a) => {
                let e0 = self.trunc.ell_index(&vec![0; self.trunc.d]).unwrap();
                (0..b).map(|i| a[(e0 * b + i, e0 * b + i)]).collect()
            }
        }
    }

    /// A * diag(w) with w indexed by local (sigma, j) position.
    pub fn right_scale(&self, w: &[f64]) -> OpMatrix {
        let b = self.block_dim();
        assert_eq!(w.len(), b);
        let ne = match &self.storage {
            Storage::Toeplitz { .. } => 1,
            Storage::Dense(_) => self.trunc.n_ell(),
        };
        self.map_blocks(|m| {
            let mut m = m.clone();
            for c in 0..m.ncols() {
                let f = w[c % b];
                debug_assert!(ne >= 1);
                m.column_mut(c).scale_mut(f);
            }
            m
        })
    }

    /// diag(w) * A.
    pub fn left_scale(&self, w: &[f64]) -> OpMatrix {
        let b = self.block_dim();
        assert_eq!(w.len(), b);
        self.map_blocks(|m| {
            let mut m = m.clone();
            for r in 0..m.nrows() {
                let f = w[r % b];
                m.row_mut(r).scale_mut(f);
            }
            m
        })
    }

    /// A * diag(w), complex weights indexed by local (sigma, j) position.
    pub fn right_mul_diag(&self, w: &[C64]) -> OpMatrix {
        let b = self.block_dim();
        assert_eq!(w.len(), b);
        self.map_blocks(|m| {
            let mut m = m.clone();
            for c in 0..m.ncols() {
                let f = w[c % b];
                m.column_mut(c).iter_mut().for_each(|x| *x *= f);
            }
            m
        })
    }

    /// diag(w) * A, complex weights.
    pub fn left_mul_diag(&self, w: &[C64]) -> OpMatrix {
        let b = self.block_dim();
        assert_eq!(w.len(), b);
        self.map_blocks(|m| {
            let mut m = m.clone();
            for r in 0..m.nrows() {
                let f = w[r % b];
                m.row_mut(r).iter_mut().for_each(|x| *x *= f);
            }
            m
        })
    }

    /// Phase-space operator A(phi) = sum_ell A(ell) e^{i ell.phi}.
    pub fn phase_slice(&self, phi: &[f64]) -> Result<DMatrix<C64>> {
        let Storage::Toeplitz { slabs, .. } = &self.storage else {
            return Err(Error::InvalidInput("phase slice of a non-Toeplitz operator".into()));
        };
        let b = self.block_dim();
        let mut out = DMatrix::zeros(b, b);
        for (s, h) in slabs.iter().zip(self.slab_indices()) {
            out += s * C64::from_polar(1.0, dot(phi, &h));
        }
        Ok(out)
    }

    /// Decay norm: sup over sigma blocks of (sum_h <h>^{2s} sup_{diff = h} |A|^2)^{1/2}
    /// with the space difference taken as |j - j'|.
    pub fn decay_norm(&self, s: f64) -> f64 {
        let nj = self.nj();
        let mut best: f64 = 0.0;
        for bs in 0..2 {
            for bc in 0..2 {
                best = best.max(self.block_decay(bs, bc, s, nj));
            }
        }
        best
    }

    fn block_decay(&self, bs: usize, bc: usize, s: f64, nj: usize) -> f64 {
        use std::collections::BTreeMap;
        let mut sup: BTreeMap<(Vec<i64>, usize), f64> = BTreeMap::new();
        let mut record = |h: Vec<i64>, dj: usize, v: f64| {
            if v == 0.0 {
                return;
            }
            let e = sup.entry((h, dj)).or_insert(0.0);
            if v > *e {
                *e = v;
            }
        };
        match &self.storage {
            Storage::Toeplitz { slabs, .. } => {
                for (m, h) in slabs.iter().zip(self.slab_indices()) {
                    for r in 0..nj {
                        for c in 0..nj {
                            let v = m[(bs * nj + r, bc * nj + c)].norm_sqr();
                            record(h.clone(), r.abs_diff(c), v);
                        }
                    }
                }
            }
            Storage::Dense(a) => {
                let b = 2 * nj;
                let ells = self.trunc.ells();
                for (ri, lr) in ells.iter().enumerate() {
                    for (ci, lc) in ells.iter().enumerate() {
                        let h: Vec<i64> = lr.iter().zip(lc).map(|(x, y)| x - y).collect();
                        for r in 0..nj {
                            for c in 0..nj {
                                let v = a[(ri * b + bs * nj + r, ci * b + bc * nj + c)].norm_sqr();
                                record(h.clone(), r.abs_diff(c), v);
                            }
                        }
                    }
                }
            }
        }
        sup.into_iter()
            .map(|((h, dj), v)| {
                let w = norm_inf(&h).max(dj as i64).max(1) as f64;
                w.powf(2.0 * s) * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn decay_profile(&self, s: f64) -> DecayProfile {
        DecayProfile {
            s,
            value: self.decay_norm(s),
            lip_value: None,
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.storage {
            Storage::Toeplitz { slabs, .. } => slabs
                .iter()
                .flat_map(|m| m.iter())
                .map(|c| c.norm())
                .fold(0.0, f64::max),
            Storage::Dense(a) => a.iter().map(|c| c.norm()).fold(0.0, f64::max),
        }
    }

    pub fn to_json(&self) -> OpMatrixJson {
        let mut blocks = Vec::new();
        match &self.storage {
            Storage::Toeplitz { slabs, .. } => {
                for (m, h) in slabs.iter().zip(self.slab_indices()) {
                    if is_zero(m) {
                        continue;
                    }
                    push_blocks(&mut blocks, m, self.nj(), h);
                }
            }
            Storage::Dense(a) => {
                let b = self.block_dim();
                let ells = self.trunc.ells();
                for (ri, lr) in ells.iter().enumerate() {
                    for (ci, lc) in ells.iter().enumerate() {
                        let m = a.view((ri * b, ci * b), (b, b)).into_owned();
                        if is_zero(&m) {
                            continue;
                        }
                        let mut key = lr.clone();
                        key.extend(lc);
                        push_blocks(&mut blocks, &m, self.nj(), key);
                    }
                }
            }
        }
        OpMatrixJson {
            toeplitz: self.is_toeplitz(),
            d: self.trunc.d,
            nphi: self.trunc.nphi,
            nx: self.trunc.nx,
            basis: self.basis,
            blocks,
        }
    }
}

fn push_blocks(out: &mut Vec<BlockJson>, m: &DMatrix<C64>, nj: usize, key: Vec<i64>) {
    for bs in 0..2 {
        for bc in 0..2 {
            let v = m.view((bs * nj, bc * nj), (nj, nj));
            if v.iter().all(|c| *c == ZERO) {
                continue;
            }
            let mut re = Vec::with_capacity(nj * nj);
            let mut im = Vec::with_capacity(nj * nj);
            for r in 0..nj {
                for c in 0..nj {
                    re.push(v[(r, c)].re);
                    im.push(v[(r, c)].im);
                }
            }
            out.push(BlockJson {
                sigma: if bs == 0 { 1 } else { -1 },
                sigma_p: if bc == 0 { 1 } else { -1 },
                ell: key.clone(),
                re,
                im,
            });
        }
    }
}

fn is_zero(m: &DMatrix<C64>) -> bool {
    m.iter().all(|c| *c == ZERO)
}

fn tail_decay(tail: &[(Vec<i64>, DMatrix<C64>)], like: &OpMatrix, s: f64) -> f64 {
    if tail.is_empty() {
        return 0.0;
    }
    let hmax = tail.iter().map(|(h, _)| norm_inf(h) as usize).max().unwrap();
    let mut op = OpMatrix::zeros_toeplitz(like.trunc, like.basis, hmax);
    for (h, m) in tail {
        *op.slab_mut(h).unwrap() = m.clone();
    }
    op.decay_norm(s)
}

/// Block-sparse serialization: `ell` is the time difference (Toeplitz) or the
/// concatenated (ell, ell') pair (dense); blocks are row-major nj x nj.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpMatrixJson {
    pub toeplitz: bool,
    pub d: usize,
    #[serde(rename = "Nphi")]
    pub nphi: usize,
    #[serde(rename = "Nx")]
    pub nx: usize,
    pub basis: Basis,
    pub blocks: Vec<BlockJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockJson {
    pub sigma: i8,
    pub sigma_p: i8,
    pub ell: Vec<i64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// omega.d_phi + part, acting on the finite section.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    pub omega: Vec<f64>,
    pub part: OpMatrix,
}

impl LinearOperator {
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = self.part.apply(v);
        let b = self.part.block_dim();
        for (e, ell) in self.part.trunc().ells().iter().enumerate() {
            let f = C64::new(0.0, dot(&self.omega, ell));
            for i in 0..b {
                out[e * b + i] += f * v[e * b + i];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = self.part.to_dense();
        let b = self.part.block_dim();
        for (e, ell) in self.part.trunc().ells().iter().enumerate() {
            let f = C64::new(0.0, dot(&self.omega, ell));
            for i in 0..b {
                m[(e * b + i, e * b + i)] += f;
            }
        }
        m
    }
}
