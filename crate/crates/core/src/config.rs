//! Run configuration for the command-line harness.
//!
//! TOML and JSON files deserialize through the same JSON value tree, so both
//! formats accept exactly the same documents. Diagnostics name the offending
//! field by its dotted path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cantor::MeasureConfig;
use crate::error::{Error, Result};
use crate::inequalities::NormConstants;
use crate::model::{reference_nonlinearity, semilinear_forcing, NlsModel};
use crate::solver::NashMoserConfig;
use crate::spectral::{ParamGrid, Truncation, LAMBDA_MAX, LAMBDA_MIN};

/// Fields without a default.
pub const REQUIRED: [&str; 4] = ["model.omega_bar", "model.epsilon", "truncation.nphi", "truncation.nx"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityChoice {
    /// Fully nonlinear reference model with second-order coupling.
    #[default]
    Reference,
    /// sin x + u_xx.
    Semilinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Diophantine base frequency; its length fixes d.
    pub omega_bar: Vec<f64>,
    /// Single source of epsilon for every subcommand except `stability`.
    pub epsilon: f64,
    #[serde(default)]
    pub nonlinearity: NonlinearityChoice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub nphi: usize,
    pub nx: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub samples: usize,
    /// Explicit samples; overrides the uniform grid.
    pub lambdas: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lambda_min: LAMBDA_MIN,
            lambda_max: LAMBDA_MAX,
            samples: 5,
            lambdas: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceConfig {
    /// Reduce at the Nash-Moser solution instead of u = 0.
    pub at_solution: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenSourceChoice {
    /// Exact epsilon = 0 eigenvalues on [1/2, 3/2].
    #[default]
    Unperturbed,
    /// KAM eigenvalues of the linearization at u = 0 on the parameter grid.
    Reduced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureSection {
    pub gamma_list: Vec<f64>,
    pub tau: f64,
    pub lmax: usize,
    pub n: Option<usize>,
    pub prune: bool,
    pub source: EigenSourceChoice,
    /// Monte Carlo cross-check of the excluded measure; 0 disables it.
    pub monte_carlo_samples: usize,
}

impl Default for MeasureSection {
    fn default() -> Self {
        let m = MeasureConfig::default();
        MeasureSection {
            gamma_list: vec![0.1, 0.05, 0.025],
            tau: m.tau,
            lmax: m.lmax,
            n: m.n,
            prune: m.prune,
            source: EigenSourceChoice::Unperturbed,
            monte_carlo_samples: 0,
        }
    }
}

impl MeasureSection {
    pub fn measure_config(&self) -> MeasureConfig {
        MeasureConfig {
            tau: self.tau,
            lmax: self.lmax,
            n: self.n,
            prune: self.prune,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub lambda: f64,
    /// Two values give the oscillation exponent.
    pub epsilons: Vec<f64>,
    /// Sobolev index of the phase-space norm.
    pub s: f64,
    pub times: usize,
    pub dt: f64,
    /// Build the chain at the Nash-Moser solution instead of u = 0.
    pub use_solution: bool,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection {
            lambda: 1.1,
            epsilons: vec![1e-3, 1e-2],
            s: 1.0,
            times: 100,
            dt: 0.37,
            use_solution: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormsSection {
    pub cases: usize,
    pub constants: NormConstants,
}

impl Default for NormsSection {
    fn default() -> Self {
        NormsSection {
            cases: 1000,
            constants: NormConstants::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub seed: u64,
    /// 0 lets rayon pick.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: NashMoserConfig,
    #[serde(default)]
    pub reduce: ReduceConfig,
    #[serde(default)]
    pub measure: MeasureSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub norms: NormsSection,
}

impl Default for RunConfig {
    /// Desk case: d = 1, golden-mean frequency, Nphi = Nx = 8, epsilon = 1e-3.
    fn default() -> Self {
        RunConfig {
            model: ModelConfig {
                omega_bar: vec![(5f64.sqrt() - 1.0) / 2.0],
                epsilon: 1e-3,
                nonlinearity: NonlinearityChoice::Reference,
            },
            truncation: TruncationConfig { nphi: 8, nx: 8 },
            seed: 0,
            threads: 0,
            grid: GridConfig::default(),
            solver: NashMoserConfig::default(),
            reduce: ReduceConfig::default(),
            measure: MeasureSection::default(),
            stability: StabilitySection::default(),
            norms: NormsSection::default(),
        }
    }
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |cur, key| cur.get(key))
}

fn format_of(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => "json",
        _ => "toml",
    }
}

impl RunConfig {
    /// Parses a TOML or JSON document; `format` is "toml" or "json".
    pub fn parse(text: &str, format: &str) -> Result<Self> {
        let tree: Value = match format {
            "json" => serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?,
            "toml" => toml::from_str(text).map_err(|e| Error::config("<document>", e.message().to_string()))?,
            other => return Err(Error::config("<document>", format!("unknown format {other}"))),
        };
        Self::from_value(tree)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::parse(&text, format_of(path))
    }

    pub fn from_value(tree: Value) -> Result<Self> {
        let missing: Vec<&str> = REQUIRED.iter().copied().filter(|p| lookup(&tree, p).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::config(missing.join(", "), "missing required field"));
        }
        if lookup(&tree, "solver.epsilon").is_some() {
            return Err(Error::config("solver.epsilon", "set model.epsilon instead"));
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(tree).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// TOML snapshot that `parse` accepts back unchanged.
    pub fn to_toml(&self) -> Result<String> {
        let err = |e: &dyn std::fmt::Display| Error::config("<snapshot>", e.to_string());
        let mut table = toml::Table::try_from(self).map_err(|e| err(&e))?;
        if let Some(toml::Value::Table(solver)) = table.get_mut("solver") {
            solver.remove("epsilon");
        }
        toml::to_string(&table).map_err(|e| err(&e))
    }

    pub fn d(&self) -> usize {
        self.model.omega_bar.len()
    }

    pub fn trunc(&self) -> Truncation {
        Truncation::new(self.d(), self.truncation.nphi, self.truncation.nx)
    }

    /// Nash-Moser settings with epsilon taken from the model section.
    pub fn solver_config(&self) -> NashMoserConfig {
        let mut c = self.solver.clone();
        c.epsilon = self.model.epsilon;
        c
    }

    pub fn model_at(&self, epsilon: f64) -> NlsModel {
        let f = match self.model.nonlinearity {
            NonlinearityChoice::Reference => reference_nonlinearity(self.d()),
            NonlinearityChoice::Semilinear => semilinear_forcing(self.d()),
        };
        NlsModel::new(f, self.model.omega_bar.clone(), epsilon)
    }

    pub fn model(&self) -> NlsModel {
        self.model_at(self.model.epsilon)
    }

    pub fn param_grid(&self) -> Result<ParamGrid> {
        let g = &self.grid;
        let s = &self.solver;
        match &g.lambdas {
            Some(l) => ParamGrid::new(l.clone(), &self.model.omega_bar, s.gamma0, s.tau, self.truncation.nphi),
            None => ParamGrid::uniform(
                g.lambda_min,
                g.lambda_max,
                g.samples,
                &self.model.omega_bar,
                s.gamma0,
                s.tau,
                self.truncation.nphi,
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.omega_bar.is_empty() || m.omega_bar.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("model.omega_bar", "needs at least one finite component"));
        }
        if !(m.epsilon >= 0.0 && m.epsilon.is_finite()) {
            return Err(Error::config("model.epsilon", "must be finite and nonnegative"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must fit a TOML integer (at most 2^63 - 1)"));
        }
        if self.truncation.nphi == 0 {
            return Err(Error::config("truncation.nphi", "must be positive"));
        }
        if self.truncation.nx == 0 {
            return Err(Error::config("truncation.nx", "must be positive"));
        }
        let g = &self.grid;
        if g.lambdas.is_none() && !(g.lambda_min < g.lambda_max && g.samples >= 1) {
            return Err(Error::config("grid", "need lambda_min < lambda_max and samples >= 1"));
        }
        if let Some(l) = &g.lambdas {
            if l.is_empty() || l.iter().any(|x| !(LAMBDA_MIN..=LAMBDA_MAX).contains(x)) {
                return Err(Error::config("grid.lambdas", format!("samples must lie in [{LAMBDA_MIN}, {LAMBDA_MAX}]")));
            }
        }
        self.solver_config().validate(self.d()).map_err(|e| match e {
            Error::Config { path, message } => Error::config(format!("solver.{path}"), message),
            e => e,
        })?;
        let ms = &self.measure;
        if ms.gamma_list.is_empty() || ms.gamma_list.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::config("measure.gamma_list", "needs positive values"));
        }
        if !(ms.tau > self.d() as f64) {
            return Err(Error::config("measure.tau", "must exceed d"));
        }
        let st = &self.stability;
        if st.epsilons.is_empty() || st.epsilons.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::config("stability.epsilons", "needs nonnegative values"));
        }
        if !(LAMBDA_MIN..=LAMBDA_MAX).contains(&st.lambda) {
            return Err(Error::config("stability.lambda", format!("must lie in [{LAMBDA_MIN}, {LAMBDA_MAX}]")));
        }
        if st.times == 0 || !(st.dt > 0.0) || st.s < 0.0 {
            return Err(Error::config("stability", "need times >= 1, dt > 0 and s >= 0"));
        }
        if self.norms.cases == 0 {
            return Err(Error::config("norms.cases", "must be positive"));
        }
        Ok(())
    }
}
