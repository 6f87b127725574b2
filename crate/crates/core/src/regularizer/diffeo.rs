use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::grid::{sup, WorkGrid};
use crate::error::{Error, Result};
use crate::spectral::SpectralField;

const FIXED_POINT_TOL: f64 = 1e-15;
const FIXED_POINT_MAX: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// (phi, x) -> (phi, x + xi(phi, x)).
    Space,
    /// (phi, x) -> (phi + omega alpha(phi), x).
    Time,
}

/// Change of variables on the torus together with its inverse shift.
#[derive(Clone, Debug)]
pub struct TorusDiffeo {
    pub direction: Direction,
    pub grid: WorkGrid,
    /// xi or alpha on the working truncation.
    pub shift: SpectralField,
    /// xi-hat or alpha-tilde: the inverse map is the same shift form with this field.
    pub inverse_shift: SpectralField,
    pub omega: Vec<f64>,
    /// W^{1,infinity} norm of the displacement (xi, or omega alpha).
    pub w1_inf: f64,
    pub fixed_point_iterations: usize,
    shift_values: Vec<C64>,
    inverse_values: Vec<C64>,
}

impl TorusDiffeo {
    pub fn identity(direction: Direction, grid: WorkGrid, omega: Vec<f64>) -> Self {
        let z = SpectralField::zeros(grid.trunc);
        TorusDiffeo {
            direction,
            grid,
            shift: z.clone(),
            inverse_shift: z,
            omega,
            w1_inf: 0.0,
            fixed_point_iterations: 0,
            shift_values: vec![C64::new(0.0, 0.0); grid.len()],
            inverse_values: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    /// x -> x + xi(phi, x) with xi real.
    pub fn space(grid: WorkGrid, xi: &SpectralField) -> Result<Self> {
        let sv: Vec<C64> = grid.values(xi).iter().map(|c| C64::new(c.re, 0.0)).collect();
        let w1 = grid.w1_inf(&sv);
        check_w1(w1)?;
        let f = grid.field(&sv);
        let mut inv: Vec<C64> = sv.iter().map(|c| -c).collect();
        let mut it = 0;
        loop {
            let next: Vec<C64> = grid
                .grid
                .eval_x_shifted(&f, &inv)
                .iter()
                .map(|c| C64::new(-c.re, 0.0))
                .collect();
            let diff = next.iter().zip(&inv).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            inv = next;
            it += 1;
            if diff <= FIXED_POINT_TOL * (1.0 + sup(&sv)) {
                break;
            }
            if it >= FIXED_POINT_MAX {
                return Err(Error::DiffeoNotContracting { defect: diff });
            }
        }
        Ok(TorusDiffeo {
            direction: Direction::Space,
            grid,
            shift: f,
            inverse_shift: grid.field(&inv),
            omega: Vec::new(),
            w1_inf: w1,
            fixed_point_iterations: it,
            shift_values: sv,
            inverse_values: inv,
        })
    }

    /// phi -> phi + omega alpha(phi) with alpha real and x-independent.
    pub fn time(grid: WorkGrid, alpha: &SpectralField, omega: &[f64]) -> Result<Self> {
        let av: Vec<C64> = grid
            .values(&alpha.x_average())
            .iter()
            .map(|c| C64::new(c.re, 0.0))
            .collect();
        let norm_w: f64 = omega.iter().map(|w| w * w).sum::<f64>().sqrt();
        let mut w1 = sup(&av);
        for c in 0..grid.trunc.d {
            w1 += sup(&grid.dphi(&av, c));
        }
        w1 *= norm_w;
        check_w1(w1)?;
        let f = grid.field(&av);
        let np = grid.n_phi_points();
        let mx = grid.m_x();
        let a_phi: Vec<f64> = av.chunks(mx).map(|r| r[0].re).collect();
        let mut inv: Vec<f64> = a_phi.iter().map(|a| -a).collect();
        let mut it = 0;
        loop {
            let shifts: Vec<Vec<f64>> = inv.iter().map(|a| omega.iter().map(|w| w * a).collect()).collect();
            let vals = grid.grid.eval_phi_shifted(&f, &shifts);
            let next: Vec<f64> = (0..np).map(|p| -vals[p * mx].re).collect();
            let diff = next.iter().zip(&inv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            inv = next;
            it += 1;
            if diff <= FIXED_POINT_TOL * (1.0 + sup(&av)) {
                break;
            }
            if it >= FIXED_POINT_MAX {
                return Err(Error::DiffeoNotContracting { defect: diff });
            }
        }
        let inv_values: Vec<C64> = inv
            .iter()
            .flat_map(|&a| std::iter::repeat_n(C64::new(a, 0.0), mx))
            .collect();
        Ok(TorusDiffeo {
            direction: Direction::Time,
            grid,
            shift: f,
            inverse_shift: grid.field(&inv_values),
            omega: omega.to_vec(),
            w1_inf: w1,
            fixed_point_iterations: it,
            shift_values: av,
            inverse_values: inv_values,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.shift.is_zero()
    }

    /// Grid values of the forward displacement.
    pub fn shift_values(&self) -> &[C64] {
        &self.shift_values
    }

    pub fn inverse_values(&self) -> &[C64] {
        &self.inverse_values
    }

    /// (T g) on the grid, from grid values of g.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        self.compose(v, &self.shift_values)
    }

    /// (T^{-1} g) on the grid.
    pub fn apply_inverse(&self, v: &[C64]) -> Vec<C64> {
        self.compose(v, &self.inverse_values)
    }

    fn compose(&self, v: &[C64], s: &[C64]) -> Vec<C64> {
        if self.is_identity() {
            return v.to_vec();
        }
        match self.direction {
            Direction::Space => self.grid.compose_x(v, s),
            Direction::Time => {
                let shifts: Vec<Vec<f64>> = self
                    .grid
                    .phi_values(s)
                    .iter()
                    .map(|a| self.omega.iter().map(|w| w * a.re).collect())
                    .collect();
                self.grid.compose_phi(v, &shifts)
            }
        }
    }

    /// Max deviation of T T^{-1} g and T^{-1} T g from g on the grid.
    pub fn round_trip_defect(&self, v: &[C64]) -> f64 {
        let a = self.apply(&self.apply_inverse(v));
        let b = self.apply_inverse(&self.apply(v));
        let d = |w: &[C64]| w.iter().zip(v).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        d(&a).max(d(&b))
    }
}

fn check_w1(w1: f64) -> Result<()> {
    if !(w1 <= 0.5) {
        return Err(Error::InvalidDiffeo { norm: w1 });
    }
    Ok(())
}

/// f composed with the diffeomorphism, re-projected to f's truncation.
pub fn compose_diffeo(g: &TorusDiffeo, f: &SpectralField) -> SpectralField {
    let v = g.grid.values(f);
    g.grid.field(&g.apply(&v)).resize(f.trunc())
}

/// f composed with the inverse diffeomorphism.
pub fn compose_diffeo_inverse(g: &TorusDiffeo, f: &SpectralField) -> SpectralField {
    let v = g.grid.values(f);
    g.grid.field(&g.apply_inverse(&v)).resize(f.trunc())
}
