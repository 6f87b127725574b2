use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{OpMatrix, Storage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReversibilityTag {
    Reversible,
    ReversibilityPreserving,
    Neither,
}

/// First entry breaking the structure: (sigma slot, j, ell) of row and column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub row: (usize, usize, Vec<i64>),
    pub col: (usize, usize, Vec<i64>),
    pub value: (f64, f64),
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReversibilityClass {
    pub tag: ReversibilityTag,
    pub witness: Option<Witness>,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Real,
    Imaginary,
}

/// Entries real (preserving) or imaginary (reversible) in the sine basis, and
/// conj A_sigma^sigma'(-h) = A_{-sigma}^{-sigma'}(h).
pub fn classify_reversibility(a: &OpMatrix, tol: f64) -> ReversibilityClass {
    let scale = a.max_abs().max(1.0);
    let thr = tol * scale;
    match first_violation(a, Kind::Real, thr) {
        None => ReversibilityClass {
            tag: ReversibilityTag::ReversibilityPreserving,
            witness: None,
        },
        Some(w_pres) => match first_violation(a, Kind::Imaginary, thr) {
            None => ReversibilityClass {
                tag: ReversibilityTag::Reversible,
                witness: None,
            },
            Some(w_rev) => ReversibilityClass {
                tag: ReversibilityTag::Neither,
                witness: Some(if w_rev.defect <= w_pres.defect { w_rev } else { w_pres }),
            },
        },
    }
}

fn first_violation(a: &OpMatrix, kind: Kind, thr: f64) -> Option<Witness> {
    let nj = a.nj();
    let b = 2 * nj;
    let part = |c: C64| match kind {
        Kind::Real => c.im.abs(),
        Kind::Imaginary => c.re.abs(),
    };
    let flip = |loc: usize| (loc + nj) % b;
    let jl = |loc: usize| a.j_of_local(loc);
    match &a.storage {
        Storage::Toeplitz { .. } => {
            for h in a.slab_indices() {
                let s = a.slab(&h).unwrap();
                let hneg: Vec<i64> = h.iter().map(|x| -x).collect();
                let t = a.slab(&hneg).unwrap();
                for r in 0..b {
                    for c in 0..b {
                        let v = s[(r, c)];
                        let pair = t[(flip(r), flip(c))].conj();
                        let defect = part(v).max((v - pair).norm());
                        if defect > thr {
                            let (rs, rj) = jl(r);
                            let (cs, cj) = jl(c);
                            return Some(Witness {
                                row: (rs, rj, h.clone()),
                                col: (cs, cj, vec![0; h.len()]),
                                value: (v.re, v.im),
                                defect,
                            });
                        }
                    }
                }
            }
            None
        }
        Storage::Dense(m) => {
            let t = a.trunc();
            let ells = t.ells();
            for (ri, lr) in ells.iter().enumerate() {
                let rneg: Vec<i64> = lr.iter().map(|x| -x).collect();
                let rn = t.ell_index(&rneg).unwrap();
                for (ci, lc) in ells.iter().enumerate() {
                    let cneg: Vec<i64> = lc.iter().map(|x| -x).collect();
                    let cn = t.ell_index(&cneg).unwrap();
                    for r in 0..b {
                        for c in 0..b {
                            let v = m[(ri * b + r, ci * b + c)];
                            let pair = m[(rn * b + flip(r), cn * b + flip(c))].conj();
                            let defect = part(v).max((v - pair).norm());
                            if defect > thr {
                                let (rs, rj) = jl(r);
                                let (cs, cj) = jl(c);
                                return Some(Witness {
                                    row: (rs, rj, lr.clone()),
                                    col: (cs, cj, lc.clone()),
                                    value: (v.re, v.im),
                                    defect,
                                });
                            }
                        }
                    }
                }
            }
            None
        }
    }
}

impl OpMatrix {
    /// Nearest reversible Toeplitz operator: paired entries are computed from a
    /// single formula so the structure holds exactly. Returns the projection and
    /// the max-entry size of what was discarded.
    pub fn project_reversible(&self) -> (OpMatrix, f64) {
        self.project_structure(Kind::Imaginary)
    }

    pub fn project_preserving(&self) -> (OpMatrix, f64) {
        self.project_structure(Kind::Real)
    }

    fn project_structure(&self, kind: Kind) -> (OpMatrix, f64) {
        let Storage::Toeplitz { .. } = &self.storage else {
            panic!("structure projection needs a Toeplitz operator");
        };
        let nj = self.nj();
        let b = 2 * nj;
        let flip = |loc: usize| (loc + nj) % b;
        let mut out = self.clone();
        let idx = self.slab_indices();
        let mut removed: f64 = 0.0;
        for (k, h) in idx.iter().enumerate() {
            let hneg: Vec<i64> = h.iter().map(|x| -x).collect();
            let s = self.slab(h).unwrap();
            let t = self.slab(&hneg).unwrap();
            let mut m = s.clone();
            for r in 0..b {
                for c in 0..b {
                    let v = s[(r, c)];
                    let p = t[(flip(r), flip(c))];
                    // v' = (v + conj p)/2 followed by the real/imaginary restriction
                    let avg = (v + p.conj()) * 0.5;
                    let nv = match kind {
                        Kind::Real => C64::new(avg.re, 0.0),
                        Kind::Imaginary => C64::new(0.0, avg.im),
                    };
                    removed = removed.max((v - nv).norm());
                    m[(r, c)] = nv;
                }
            }
            out.slabs_mut().unwrap()[k] = m;
        }
        (out, removed)
    }
}
