use serde::{Deserialize, Serialize};

/// Rectangular Fourier truncation on T^d x T: |ell|_inf <= nphi, |k| <= nx.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Truncation {
    pub d: usize,
    pub nphi: usize,
    pub nx: usize,
}

impl Truncation {
    pub fn new(d: usize, nphi: usize, nx: usize) -> Self {
        assert!(d >= 1, "time dimension d must be at least 1");
        Truncation { d, nphi, nx }
    }

    /// Number of time multi-indices.
    pub fn n_ell(&self) -> usize {
        (2 * self.nphi + 1).pow(self.d as u32)
    }

    /// Number of space modes k in -nx..=nx.
    pub fn n_k(&self) -> usize {
        2 * self.nx + 1
    }

    pub fn len(&self) -> usize {
        self.n_ell() * self.n_k()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time multi-index at flat position `idx` (first component most significant).
    pub fn ell_of(&self, mut idx: usize) -> Vec<i64> {
        let w = 2 * self.nphi + 1;
        let mut ell = vec![0i64; self.d];
        for c in (0..self.d).rev() {
            ell[c] = (idx % w) as i64 - self.nphi as i64;
            idx /= w;
        }
        ell
    }

    pub fn ell_index(&self, ell: &[i64]) -> Option<usize> {
        debug_assert_eq!(ell.len(), self.d);
        let n = self.nphi as i64;
        let w = 2 * n + 1;
        let mut idx = 0i64;
        for &l in ell {
            if l.abs() > n {
                return None;
            }
            idx = idx * w + (l + n);
        }
        Some(idx as usize)
    }

    /// Flat coefficient position of (ell, k).
    pub fn index(&self, ell: &[i64], k: i64) -> Option<usize> {
        if k.unsigned_abs() as usize > self.nx {
            return None;
        }
        self.ell_index(ell)
            .map(|e| e * self.n_k() + (k + self.nx as i64) as usize)
    }

    /// All time multi-indices in storage order.
    pub fn ells(&self) -> Vec<Vec<i64>> {
        (0..self.n_ell()).map(|i| self.ell_of(i)).collect()
    }

    /// Componentwise maximum of two truncations with the same d.
    pub fn max(&self, other: &Truncation) -> Truncation {
        assert_eq!(self.d, other.d);
        Truncation::new(self.d, self.nphi.max(other.nphi), self.nx.max(other.nx))
    }

    /// Truncation holding every product of fields at `self` and `other`.
    pub fn sum(&self, other: &Truncation) -> Truncation {
        assert_eq!(self.d, other.d);
        Truncation::new(self.d, self.nphi + other.nphi, self.nx + other.nx)
    }

    pub fn scaled(&self, factor: usize) -> Truncation {
        Truncation::new(self.d, self.nphi * factor, self.nx * factor)
    }

    pub fn contains(&self, other: &Truncation) -> bool {
        self.d == other.d && self.nphi >= other.nphi && self.nx >= other.nx
    }

    /// Shape of the coefficient tensor: [2nphi+1; d] followed by [2nx+1].
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![2 * self.nphi + 1; self.d];
        s.push(2 * self.nx + 1);
        s
    }
}

pub fn norm_inf(ell: &[i64]) -> i64 {
    ell.iter().map(|l| l.abs()).max().unwrap_or(0)
}

/// The weight <i> = max(|ell|_inf, |k|, 1).
pub fn bracket(ell: &[i64], k: i64) -> f64 {
    norm_inf(ell).max(k.abs()).max(1) as f64
}

pub fn dot(a: &[f64], ell: &[i64]) -> f64 {
    a.iter().zip(ell).map(|(w, &l)| w * l as f64).sum()
}

/// Component tag of a doubled variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sigma {
    Plus,
    Minus,
}

impl Sigma {
    pub fn sign(self) -> f64 {
        match self {
            Sigma::Plus => 1.0,
            Sigma::Minus => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sigma::Plus => 1,
            Sigma::Minus => -1,
        }
    }

    pub fn flip(self) -> Sigma {
        match self {
            Sigma::Plus => Sigma::Minus,
            Sigma::Minus => Sigma::Plus,
        }
    }

    pub fn slot(self) -> usize {
        match self {
            Sigma::Plus => 0,
            Sigma::Minus => 1,
        }
    }

    pub fn from_slot(s: usize) -> Sigma {
        if s == 0 {
            Sigma::Plus
        } else {
            Sigma::Minus
        }
    }

    pub const BOTH: [Sigma; 2] = [Sigma::Plus, Sigma::Minus];
}

/// Mode label (ell, j, sigma) of the sine basis of doubled odd fields.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub ell: Vec<i64>,
    pub j: usize,
    pub sigma: Sigma,
}

impl ModeIndex {
    pub fn bracket(&self) -> f64 {
        bracket(&self.ell, self.j as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ell_roundtrip() {
        let t = Truncation::new(3, 2, 1);
        for i in 0..t.n_ell() {
            let e = t.ell_of(i);
            assert_eq!(t.ell_index(&e), Some(i));
        }
        assert_eq!(t.ell_index(&[3, 0, 0]), None);
        assert_eq!(t.index(&[0, 0, 0], 2), None);
    }

    #[test]
    fn bracket_floor_is_one() {
        assert_eq!(bracket(&[0], 0), 1.0);
        assert_eq!(bracket(&[-3, 1], 2), 3.0);
    }
}
