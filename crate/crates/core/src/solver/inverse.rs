use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kam::{reduce, sigma_of_slot, EigenvalueTable, KamConfig, KamReduction, MelnikovMask, MelnikovWitness, SampleCheck};
use crate::model::NlsModel;
use crate::opmatrix::LinearOperator;
use crate::regularizer::{regularize, RegularizedOperator, RegularizerConfig};
use crate::spectral::{bracket, dot, DoubledField, ParamGrid, Parity, Truncation};

/// First Melnikov conditions at one sample:
/// |i lambda omega_bar.ell + mu_{sigma,j}| >= 2 gamma j^2 <ell>^-tau for |ell| <= n.
/// Witnesses carry (sigma', j') = (sigma, j).
#[allow(clippy::too_many_arguments)]
pub fn first_melnikov_check(
    mu: &[C64],
    nx: usize,
    lambda: f64,
    omega_bar: &[f64],
    gamma: f64,
    tau: f64,
    n: usize,
) -> SampleCheck {
    let mut out = SampleCheck {
        passed: true,
        margin: f64::INFINITY,
        witness: None,
        first_order_violated: false,
        tested: 0,
        pruned: 0,
    };
    for ell in Truncation::new(omega_bar.len(), n, 0).ells() {
        let w = C64::new(0.0, lambda * dot(omega_bar, &ell));
        let br = bracket(&ell, 0).powf(tau);
        for (loc, m) in mu.iter().enumerate() {
            let j = loc % nx + 1;
            let bound = 2.0 * gamma * (j * j) as f64 / br;
            let div = (w + m).norm();
            out.tested += 1;
            let ratio = div / bound;
            if div < bound {
                out.passed = false;
                if out.witness.is_none() || ratio < out.margin {
                    let sigma = sigma_of_slot(loc / nx) as i8;
                    out.witness = Some(MelnikovWitness {
                        ell: ell.clone(),
                        sigma,
                        j,
                        sigma_p: sigma,
                        j_p: j,
                        divisor: div,
                        bound,
                    });
                }
            }
            out.margin = out.margin.min(ratio);
        }
    }
    out
}

/// First Melnikov mask over the grid from the latest eigenvalues of the table.
pub fn first_melnikov_mask(
    table: &EigenvalueTable,
    grid: &ParamGrid,
    omega_bar: &[f64],
    gamma: f64,
    tau: f64,
    n: usize,
) -> MelnikovMask {
    let checks: Vec<SampleCheck> = (0..table.len())
        .map(|s| first_melnikov_check(&table.mu(s), table.nx, table.lambdas[s], omega_bar, gamma, tau, n))
        .collect();
    let mask: Vec<bool> = checks.iter().zip(&grid.mask).map(|(c, &g)| g && c.passed).collect();
    let margin = checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    MelnikovMask {
        mask,
        margin,
        gamma,
        tau,
        n,
        checks,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalSolve {
    pub h: DoubledField,
    pub min_divisor: f64,
    /// X-parity defect of h before projection.
    pub parity_defect: f64,
}

/// Solves (omega.d_phi + diag(mu)) h = g mode by mode on the sine basis:
/// h_{sigma,j}(ell) = g_{sigma,j}(ell) / (i omega.ell + mu_{sigma,j}).
pub fn invert_diagonal(mu: &[C64], omega: &[f64], g: &DoubledField, floor: f64) -> Result<DiagonalSolve> {
    let t = g.trunc();
    let b = 2 * t.nx;
    if mu.len() != b {
        return Err(Error::ShapeMismatch(format!("{} eigenvalues for {} sine slots", mu.len(), b)));
    }
    let mut v = g.to_sine_vec();
    let mut min_divisor = f64::INFINITY;
    for (e, ell) in t.ells().iter().enumerate() {
        let w = C64::new(0.0, dot(omega, ell));
        for (loc, m) in mu.iter().enumerate() {
            let div = w + m;
            min_divisor = min_divisor.min(div.norm());
            if div.norm() < floor {
                return Err(Error::SmallDivisor {
                    ell: ell.clone(),
                    divisor: div.norm(),
                    floor,
                });
            }
            v[e * b + loc] /= div;
        }
    }
    let h = DoubledField::from_sine_vec(t, &v);
    let s0 = (t.d as f64 + 2.0) / 2.0;
    let parity_defect = h.parity_defect(Parity::X, s0);
    Ok(DiagonalSolve {
        h: h.project(Parity::X),
        min_divisor,
        parity_defect,
    })
}

/// Same as [`invert_diagonal`] with the eigenvalues of sample `s` of a table.
pub fn invert_diagonal_at(table: &EigenvalueTable, s: usize, omega_bar: &[f64], g: &DoubledField, floor: f64) -> Result<DiagonalSolve> {
    let omega: Vec<f64> = omega_bar.iter().map(|w| w * table.lambdas[s]).collect();
    invert_diagonal(&table.mu(s), &omega, g, floor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub regularizer: RegularizerConfig,
    pub kam: KamConfig,
    /// Maximum number of refinement sweeps h += M (g - L h).
    pub sweeps: usize,
    /// Refinement stops once |g - L h|_{s0} <= refine_tol |g|_{s0}.
    pub refine_tol: f64,
    /// A sample is good iff the relative forward residual ends below this.
    pub accept_tol: f64,
    pub divisor_floor: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            regularizer: RegularizerConfig::default(),
            kam: KamConfig::default(),
            sweeps: 60,
            refine_tol: 1e-13,
            accept_tol: 1e-6,
            divisor_floor: 1e-12,
        }
    }
}

/// Outcome of one right inverse application.
#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    pub h: DoubledField,
    /// |L h - g|_{s0} / |g|_{s0} after refinement.
    pub forward_residual: f64,
    /// Same for the plain chain V2 Phi L_inf^{-1} Phi^{-1} V1^{-1} g.
    pub chain_residual: f64,
    pub sweeps: usize,
    /// Norm of g removed by the projection onto Z.
    pub z_discarded: f64,
}

/// L(u)^{-1} at one parameter value, assembled from the regularization and the
/// KAM reduction and refined against the finite-section L(u).
#[derive(Clone, Debug)]
pub struct InversePipeline {
    pub lambda: f64,
    pub trunc: Truncation,
    pub omega: Vec<f64>,
    pub reg: RegularizedOperator,
    pub reduction: KamReduction,
    pub mu: Vec<C64>,
    pub first: SampleCheck,
    pub operator: LinearOperator,
    pub cfg: InversionConfig,
}

impl InversePipeline {
    pub fn build(model: &NlsModel, u: &DoubledField, lambda: f64, cfg: &InversionConfig) -> Result<Self> {
        let t = u.trunc();
        let lc = model.linearize(u);
        let reg = regularize(&lc, lambda, &model.omega_bar, &cfg.regularizer)?;
        let reduction = reduce(&reg, &model.omega_bar, &cfg.kam)?;
        if let Some((nu, c)) = &reduction.excluded {
            return Err(Error::Excluded {
                lambda,
                reason: format!("second Melnikov conditions fail at KAM step {nu}: {:?}", c.witness),
            });
        }
        let mu = reduction.mu();
        let first = first_melnikov_check(&mu, t.nx, lambda, &model.omega_bar, cfg.kam.gamma, cfg.kam.tau, t.nphi);
        if !first.passed {
            return Err(Error::Excluded {
                lambda,
                reason: format!("first Melnikov conditions fail: {:?}", first.witness),
            });
        }
        Ok(InversePipeline {
            lambda,
            trunc: t,
            omega: model.omega(lambda),
            operator: model.linear_operator(u, lambda),
            reg,
            reduction,
            mu,
            first,
            cfg: cfg.clone(),
        })
    }

    fn s0(&self) -> f64 {
        self.cfg.kam.s0(self.trunc.d)
    }

    /// L h on the finite section.
    pub fn apply_l(&self, h: &DoubledField) -> DoubledField {
        DoubledField::from_sine_vec(self.trunc, &self.operator.apply(&h.to_sine_vec()))
    }

    /// V2 Phi_inf L_inf^{-1} Phi_inf^{-1} V1^{-1} g, projected onto X.
    pub fn apply_chain(&self, g: &DoubledField) -> Result<DoubledField> {
        let t = self.trunc;
        let reg = &self.reg;
        let w = reg.from_grid(&reg.apply_v1_inverse(&reg.to_grid(g)), t);
        let v = self.reduction.state.apply_phi_inverse(&w.to_sine_vec());
        let d = invert_diagonal(&self.mu, &self.omega, &DoubledField::from_sine_vec(t, &v), self.cfg.divisor_floor)?;
        let v = self.reduction.state.apply_phi(&d.h.to_sine_vec());
        let hf = DoubledField::from_sine_vec(t, &v);
        Ok(reg.from_grid(&reg.apply_v2(&reg.to_grid(&hf)), t).project(Parity::X))
    }

    fn residual(&self, g: &DoubledField, h: &DoubledField) -> DoubledField {
        g.sub(&self.apply_l(h))
    }

    /// Right inverse on g after projecting g onto Z.
    pub fn solve(&self, g: &DoubledField) -> Result<Inversion> {
        let s0 = self.s0();
        let gz = g.project(Parity::Z);
        let z_discarded = g.sub(&gz).sobolev_norm(s0)?;
        let gn = gz.sobolev_norm(s0)?;
        if gn == 0.0 {
            return Ok(Inversion {
                h: DoubledField::zeros(self.trunc).project(Parity::X),
                forward_residual: 0.0,
                chain_residual: 0.0,
                sweeps: 0,
                z_discarded,
            });
        }
        let mut h = self.apply_chain(&gz)?;
        let mut r = self.residual(&gz, &h);
        let chain_residual = r.sobolev_norm(s0)? / gn;
        let mut res = chain_residual;
        let mut sweeps = 0;
        while res > self.cfg.refine_tol && sweeps < self.cfg.sweeps {
            let next = h.add(&self.apply_chain(&r)?).project(Parity::X);
            let rn = self.residual(&gz, &next);
            let nres = rn.sobolev_norm(s0)? / gn;
            sweeps += 1;
            if !(nres < res) {
                break;
            }
            h = next;
            r = rn;
            res = nres;
        }
        Ok(Inversion {
            h,
            forward_residual: res,
            chain_residual,
            sweeps,
            z_discarded,
        })
    }
}

/// Right inverse of L(u) at lambda applied to g.
pub fn invert_l(model: &NlsModel, u: &DoubledField, g: &DoubledField, lambda: f64, cfg: &InversionConfig) -> Result<Inversion> {
    InversePipeline::build(model, u, lambda, cfg)?.solve(g)
}
