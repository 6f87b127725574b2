use num_complex::Complex64 as C64;

use super::nonlinearity::{Monomial, Nonlinearity, Powers, Z0M, Z0P, Z1M, Z1P, Z2M, Z2P};
use crate::spectral::{SpectralField, Truncation};

fn powers(pairs: &[(usize, u32)]) -> Powers {
    let mut p = [0; 6];
    for &(i, e) in pairs {
        p[i] = e;
    }
    p
}

fn trig(d: usize, terms: &[(f64, i64, i64, bool)]) -> SpectralField {
    // (amp, ell_1, k, sine_in_x): amp * cos(ell_1 phi_1) * {sin, cos}(k x)
    let mut f = SpectralField::zeros(Truncation::new(d, 1, 1));
    for &(amp, l, k, sine) in terms {
        let mut ell = vec![0; d];
        let phi_parts: Vec<(i64, f64)> = if l == 0 { vec![(0, 1.0)] } else { vec![(l, 0.5), (-l, 0.5)] };
        let x_parts: Vec<(i64, C64)> = match (k, sine) {
            (0, _) => vec![(0, C64::new(1.0, 0.0))],
            (_, true) => vec![(k, C64::new(0.0, -0.5)), (-k, C64::new(0.0, 0.5))],
            (_, false) => vec![(k, C64::new(0.5, 0.0)), (-k, C64::new(0.5, 0.0))],
        };
        for &(lp, cp) in &phi_parts {
            ell[0] = lp;
            for &(kx, cx) in &x_parts {
                f.add_at(&ell, kx, cx * cp * amp);
            }
        }
    }
    f
}

/// (1 + cos(phi_1)/2) sin x + (1 + 0.4 cos(phi_1) cos x) u_xx + 0.3 cos x conj(u_xx)
/// + sin x (u_x + conj u_x)/2 + |u|^2 u.
pub fn reference_nonlinearity(d: usize) -> Nonlinearity {
    let terms = vec![
        Monomial {
            coeff: trig(d, &[(1.0, 0, 1, true), (0.5, 1, 1, true)]),
            powers: [0; 6],
        },
        Monomial {
            coeff: trig(d, &[(1.0, 0, 0, false), (0.4, 1, 1, false)]),
            powers: powers(&[(Z2P, 1)]),
        },
        Monomial {
            coeff: trig(d, &[(0.3, 0, 1, false)]),
            powers: powers(&[(Z2M, 1)]),
        },
        Monomial {
            coeff: trig(d, &[(0.5, 0, 1, true)]),
            powers: powers(&[(Z1P, 1)]),
        },
        Monomial {
            coeff: trig(d, &[(0.5, 0, 1, true)]),
            powers: powers(&[(Z1M, 1)]),
        },
        Monomial {
            coeff: trig(d, &[(1.0, 0, 0, false)]),
            powers: powers(&[(Z0P, 2), (Z0M, 1)]),
        },
    ];
    Nonlinearity::new(d, terms).expect("consistent dimension")
}

/// sin x + u_xx.
pub fn semilinear_forcing(d: usize) -> Nonlinearity {
    let terms = vec![
        Monomial {
            coeff: trig(d, &[(1.0, 0, 1, true)]),
            powers: [0; 6],
        },
        Monomial {
            coeff: trig(d, &[(1.0, 0, 0, false)]),
            powers: powers(&[(Z2P, 1)]),
        },
    ];
    Nonlinearity::new(d, terms).expect("consistent dimension")
}
