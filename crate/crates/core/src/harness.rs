//! Orchestration of the command-line subcommands and their run directories.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::cantor::{cantor_measure_sweep, monte_carlo_measure, resonance_sets, write_intervals_csv, write_measure_csv, EigenSource, Unperturbed};
use crate::config::{EigenSourceChoice, RunConfig};
use crate::error::{Error, Result};
use crate::inequalities::{verify_norms, write_norm_csv};
use crate::kam::{reduce_family, write_trace_csv as write_kam_csv, EigenvalueTable};
use crate::regularizer::regularize;
use crate::solver::{nash_moser, InversePipeline, NashMoserRun};
use crate::spectral::{DoubledField, ParamGrid};
use crate::stability::{bound_constant, conjugated_flow_norms, oscillation_exponent, write_trace_csv, PhaseChain};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Solve,
    Reduce,
    Measure,
    Stability,
    VerifyNorms,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Solve => "solve",
            Subcommand::Reduce => "reduce",
            Subcommand::Measure => "measure",
            Subcommand::Stability => "stability",
            Subcommand::VerifyNorms => "verify-norms",
        }
    }
}

/// Command-line values that replace config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub gamma_list: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub truncation: Option<(usize, usize)>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(g) = &self.gamma_list {
            cfg.measure.gamma_list = g.clone();
        }
        if let Some(e) = self.epsilon {
            cfg.model.epsilon = e;
        }
        if let Some((nphi, nx)) = self.truncation {
            cfg.truncation.nphi = nphi;
            cfg.truncation.nx = nx;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    EmptyCantorSet,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub subcommand: Subcommand,
    pub status: Status,
    pub run_dir: PathBuf,
    pub files: Vec<String>,
    pub summary: String,
}

/// 0 ok, 2 empty Cantor set, 3 divergence, 4 config error, 1 anything else.
pub fn exit_code(r: &Result<RunOutcome>) -> i32 {
    match r {
        Ok(o) if o.status == Status::Ok => 0,
        Ok(_) => 2,
        Err(e) => match e.root() {
            Error::EmptyCantorSet => 2,
            Error::Divergence { .. } => 3,
            Error::Config { .. } => 4,
            _ => 1,
        },
    }
}

struct RunDir {
    path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path)?;
        Ok(RunDir {
            path: path.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.path.join(name))?))
    }

    fn json(&mut self, name: &str, v: &impl Serialize) -> Result<()> {
        let w = self.file(name)?;
        serde_json::to_writer_pretty(w, v)?;
        Ok(())
    }

    fn text(&mut self, name: &str, s: &str) -> Result<()> {
        self.files.push(name.to_string());
        fs::write(self.path.join(name), s)?;
        Ok(())
    }
}

fn install_threads(n: usize) {
    if n > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs one subcommand and writes its run directory.
///
/// The directory holds `config.toml` (resolved config), `manifest.json`
/// (versions and file list), `timings.json` and the subcommand's reports.
/// Everything except `timings.json` is a deterministic function of the config.
pub fn run(cmd: Subcommand, cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    install_threads(cfg.threads);
    let mut dir = RunDir::create(out_dir)?;
    dir.text("config.toml", &cfg.to_toml()?)?;
    let start = Instant::now();
    let (status, summary) = match cmd {
        Subcommand::Solve => solve(cfg, &mut dir),
        Subcommand::Reduce => reduce_cmd(cfg, &mut dir),
        Subcommand::Measure => measure(cfg, &mut dir),
        Subcommand::Stability => stability(cfg, &mut dir),
        Subcommand::VerifyNorms => norms(cfg, &mut dir),
    }
    .map_err(|e| e.at(cmd.name()))?;
    dir.json("timings.json", &json!({ "seconds": start.elapsed().as_secs_f64() }))?;
    let mut files = dir.files.clone();
    files.push("manifest.json".into());
    let manifest = json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "format_version": FORMAT_VERSION,
        "subcommand": cmd.name(),
        "seed": cfg.seed,
        "threads": cfg.threads,
        "status": status,
        "summary": summary,
        "files": files,
    });
    dir.json("manifest.json", &manifest)?;
    Ok(RunOutcome {
        subcommand: cmd,
        status,
        run_dir: dir.path,
        files: dir.files,
        summary,
    })
}

fn solve_run(cfg: &RunConfig, grid: &ParamGrid) -> Result<NashMoserRun> {
    nash_moser(&cfg.solver_config(), &cfg.model(), grid, cfg.trunc())
}

fn solve(cfg: &RunConfig, dir: &mut RunDir) -> Result<(Status, String)> {
    let grid = cfg.param_grid()?;
    let run = solve_run(cfg, &grid)?;
    let mut report = run.report(&grid, &cfg.solver_config(), cfg.d());
    let timings: Vec<f64> = report.iterations.iter().map(|r| r.wall_time).collect();
    for r in report.iterations.iter_mut() {
        r.wall_time = 0.0;
    }
    let mut step_seconds = Vec::new();
    for s in report.samples.iter_mut() {
        step_seconds.push(s.steps.iter().map(|l| l.seconds).collect::<Vec<_>>());
        for l in s.steps.iter_mut() {
            l.seconds = 0.0;
        }
    }
    let mut w = csv::Writer::from_writer(dir.file("residual_trace.csv")?);
    w.write_record(["n", "N_n", "residual_s0", "ln_residual_high", "surviving_samples"])?;
    for r in &report.iterations {
        w.write_record([
            r.n.to_string(),
            r.n_n.to_string(),
            format!("{:e}", r.residual_s0),
            r.ln_residual_high.map(|x| x.to_string()).unwrap_or_default(),
            r.surviving_samples.to_string(),
        ])?;
    }
    w.flush()?;
    let u_inf: Vec<_> = grid
        .samples
        .iter()
        .zip(&run.u_inf)
        .filter_map(|(l, u)| u.as_ref().map(|u| json!({ "lambda": l, "u": u.to_json() })))
        .collect();
    dir.json("u_inf.json", &u_inf)?;
    dir.json("report.json", &report)?;
    dir.json("solve_timings.json", &json!({ "iterations": timings, "steps": step_seconds }))?;
    let good = run.good.iter().filter(|g| **g).count();
    let last = report.iterations.last().map(|r| r.residual_s0).unwrap_or(f64::NAN);
    let summary = format!("{good}/{} samples solved, final residual {last:.3e}", grid.len());
    Ok((if run.empty { Status::EmptyCantorSet } else { Status::Ok }, summary))
}

fn fields_at(cfg: &RunConfig, grid: &ParamGrid, at_solution: bool) -> Result<(ParamGrid, Vec<DoubledField>)> {
    let zero = DoubledField::zeros(cfg.trunc());
    if !at_solution {
        return Ok((grid.clone(), vec![zero; grid.len()]));
    }
    let run = solve_run(cfg, grid)?;
    if run.empty {
        return Err(Error::EmptyCantorSet);
    }
    let mut g = grid.clone();
    let mut us = Vec::with_capacity(grid.len());
    for (s, u) in run.u_inf.iter().enumerate() {
        g.mask[s] = g.mask[s] && u.is_some();
        us.push(u.clone().unwrap_or_else(|| zero.clone()));
    }
    Ok((g, us))
}

fn reduced_table(cfg: &RunConfig, grid: &ParamGrid, us: &[DoubledField]) -> Result<(crate::kam::FamilyReduction, EigenvalueTable)> {
    let model = cfg.model();
    let inv = cfg.solver_config().inversion();
    let regs = grid
        .samples
        .iter()
        .zip(us)
        .map(|(&l, u)| regularize(&model.linearize(u), l, &model.omega_bar, &inv.regularizer))
        .collect::<Result<Vec<_>>>()?;
    let fam = reduce_family(&regs, grid, &model.omega_bar, &inv.kam)?;
    let mut table = EigenvalueTable::new(cfg.truncation.nx);
    for (s, red) in fam.reductions.iter().enumerate() {
        if let (Some(k), true) = (red, fam.grid.mask[s]) {
            table.push_sample(grid.samples[s], regs[s].m, k.r_history.clone());
        }
    }
    Ok((fam, table))
}

fn reduce_cmd(cfg: &RunConfig, dir: &mut RunDir) -> Result<(Status, String)> {
    let (grid, us) = fields_at(cfg, &cfg.param_grid()?, cfg.reduce.at_solution)?;
    let (fam, table) = reduced_table(cfg, &grid, &us)?;
    write_kam_csv(&fam.trace, dir.file("kam_trace.csv")?)?;
    dir.json("eigenvalues.json", &table)?;
    let samples: Vec<_> = fam
        .reductions
        .iter()
        .zip(&grid.samples)
        .zip(&fam.grid.mask)
        .map(|((r, l), keep)| {
            json!({
                "lambda": l,
                "admissible": keep,
                "converged": r.as_ref().map(|k| k.converged),
                "excluded_at": r.as_ref().and_then(|k| k.excluded.as_ref().map(|(nu, _)| *nu)),
                "phi_minus_identity": r.as_ref().map(|k| k.phi_minus_identity),
                "tail_bound": r.as_ref().map(|k| k.tail_bound),
            })
        })
        .collect();
    dir.json(
        "report.json",
        &json!({ "samples": samples, "surviving": fam.grid.surviving(), "empty": fam.empty,
                 "max_real_part": table.max_real_part(), "antisymmetry_defect": table.antisymmetry_defect() }),
    )?;
    if let Some(k) = fam.reductions.iter().zip(&fam.grid.mask).find_map(|(r, m)| r.as_ref().filter(|_| *m)) {
        dir.json("phi_infinity.json", &k.state.phi_infinity()?.to_json())?;
    }
    let summary = format!("{}/{} samples reducible", fam.grid.surviving(), grid.len());
    Ok((if fam.empty { Status::EmptyCantorSet } else { Status::Ok }, summary))
}

fn measure(cfg: &RunConfig, dir: &mut RunDir) -> Result<(Status, String)> {
    let ob = &cfg.model.omega_bar;
    let mc = cfg.measure.measure_config();
    let gammas = &cfg.measure.gamma_list;
    let unperturbed = Unperturbed::new(cfg.truncation.nx);
    let table;
    let source: &dyn EigenSource = match cfg.measure.source {
        EigenSourceChoice::Unperturbed => &unperturbed,
        EigenSourceChoice::Reduced => {
            let grid = cfg.param_grid()?;
            let (_, us) = fields_at(cfg, &grid, false)?;
            table = reduced_table(cfg, &grid, &us)?.1;
            if table.len() < 2 {
                return Ok((Status::EmptyCantorSet, "fewer than two reducible samples".into()));
            }
            &table
        }
    };
    let t = cantor_measure_sweep(source, ob, gammas, &mc)?;
    write_measure_csv(&t, dir.file("measure.csv")?)?;
    let smallest = gammas.iter().cloned().fold(f64::INFINITY, f64::min);
    write_intervals_csv(&resonance_sets(source, ob, smallest, &mc), dir.file("intervals.csv")?)?;
    let mc_rows: Vec<_> = if cfg.measure.monte_carlo_samples > 0 {
        gammas
            .iter()
            .map(|&g| json!({ "gamma": g, "estimate": monte_carlo_measure(source, ob, g, &mc, cfg.measure.monte_carlo_samples, cfg.seed) }))
            .collect()
    } else {
        Vec::new()
    };
    dir.json("measure.json", &json!({ "table": t, "monte_carlo": mc_rows }))?;
    let summary = format!("fit exponent {:.4}, length constant {:.3}", t.fit_exponent, t.length_constant);
    Ok((Status::Ok, summary))
}

/// Seeded smooth initial state: real coefficients with j^-3 decay, equal in
/// both components.
pub fn initial_state(nx: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half: Vec<f64> = (1..=nx).map(|j| rng.random_range(-1.0..1.0) * (j as f64).powi(-3)).collect();
    half.iter().chain(&half).map(|&x| C64::new(x, 0.0)).collect()
}

/// Chain at one epsilon: reduction of the linearization at the Nash-Moser
/// solution (or u = 0) at the configured lambda.
pub fn stability_chain(cfg: &RunConfig, epsilon: f64) -> Result<PhaseChain> {
    let st = &cfg.stability;
    let mut c = cfg.clone();
    c.model.epsilon = epsilon;
    let u = if st.use_solution {
        let grid = ParamGrid::new(vec![st.lambda], &c.model.omega_bar, c.solver.gamma0, c.solver.tau, c.truncation.nphi)?;
        let run = solve_run(&c, &grid)?;
        run.u_inf[0].clone().ok_or(Error::EmptyCantorSet)?
    } else {
        DoubledField::zeros(c.trunc())
    };
    let p = InversePipeline::build(&c.model(), &u, st.lambda, &c.solver_config().inversion())?;
    PhaseChain::from_pipeline(&p)
}

fn stability(cfg: &RunConfig, dir: &mut RunDir) -> Result<(Status, String)> {
    let st = &cfg.stability;
    let times: Vec<f64> = (0..st.times).map(|i| i as f64 * st.dt).collect();
    let h0 = initial_state(cfg.truncation.nx, cfg.seed);
    let mut rows = Vec::new();
    let mut amps = Vec::new();
    for (i, &eps) in st.epsilons.iter().enumerate() {
        let chain = stability_chain(cfg, eps).map_err(|e| e.at(format!("epsilon = {eps}")))?;
        let tr = conjugated_flow_norms(&chain, &h0, &times, st.s)?;
        write_trace_csv(&tr, dir.file(&format!("norm_trace_{i}.csv"))?)?;
        rows.push(json!({ "epsilon": eps, "k": tr.k, "amplitude": tr.amplitude, "round_trip": tr.round_trip,
                          "norm0": tr.norm0, "mu": chain.mu }));
        amps.push(tr.amplitude);
    }
    let (b, c) = if st.epsilons.len() == 2 && amps.iter().all(|a| *a > 0.0) {
        let e = [st.epsilons[0], st.epsilons[1]];
        let a = [amps[0], amps[1]];
        let b = oscillation_exponent(e, a);
        (Some(b), Some(bound_constant(e, a, b)))
    } else {
        (None, None)
    };
    dir.json("report.json", &json!({ "runs": rows, "exponent": b, "bound_constant": c, "lambda": st.lambda, "s": st.s }))?;
    let summary = match b {
        Some(b) => format!("oscillation exponent {b:.4}"),
        None => format!("{} norm traces", rows.len()),
    };
    Ok((Status::Ok, summary))
}

fn norms(cfg: &RunConfig, dir: &mut RunDir) -> Result<(Status, String)> {
    let r = verify_norms(cfg.seed, cfg.norms.cases, &cfg.norms.constants)?;
    write_norm_csv(&r, dir.file("norms.csv")?)?;
    dir.json("norms.json", &r)?;
    let worst = r.rows.iter().map(|x| x.worst_ratio).fold(0.0, f64::max);
    Ok((Status::Ok, format!("{} violations over {} cases, worst ratio {worst:.3}", r.violations, r.cases)))
}
