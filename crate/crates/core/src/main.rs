use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use qpnls::config::RunConfig;
use qpnls::error::{Error, Result};
use qpnls::harness::{exit_code, run, Overrides, RunOutcome, Subcommand};

#[derive(Parser)]
#[command(name = "qpnls", version, about = "Quasi-periodic NLS solver, reducibility and measure experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Subcommand)]
enum Cmd {
    /// Nash-Moser iteration over the parameter grid
    Solve(Common),
    /// KAM reducibility of the linearized operator
    Reduce(Common),
    /// Cantor-set measure for a list of gamma values
    Measure(Common),
    /// Norm traces of the linearized flow
    Stability(Common),
    /// Randomized check of the tame norm inequalities
    VerifyNorms(Common),
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory (default runs/<subcommand>)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated gamma values
    #[arg(long, value_delimiter = ',')]
    gamma_list: Option<Vec<f64>>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Truncation as NPHI,NX
    #[arg(long, value_parser = parse_truncation)]
    truncation: Option<(usize, usize)>,
}

fn parse_truncation(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected NPHI,NX")?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn execute(cmd: Subcommand, c: Common) -> Result<RunOutcome> {
    let cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ov = Overrides {
        seed: c.seed,
        threads: c.threads,
        gamma_list: c.gamma_list,
        epsilon: c.epsilon,
        truncation: c.truncation,
    };
    let cfg = ov.apply(cfg)?;
    let out = c.out_dir.unwrap_or_else(|| PathBuf::from("runs").join(cmd.name()));
    run(cmd, &cfg, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.cmd {
        Cmd::Solve(c) => (Subcommand::Solve, c),
        Cmd::Reduce(c) => (Subcommand::Reduce, c),
        Cmd::Measure(c) => (Subcommand::Measure, c),
        Cmd::Stability(c) => (Subcommand::Stability, c),
        Cmd::VerifyNorms(c) => (Subcommand::VerifyNorms, c),
    };
    let r = execute(cmd, common);
    match &r {
        Ok(o) => println!("{}: {:?}, {} ({})", o.subcommand.name(), o.status, o.summary, o.run_dir.display()),
        Err(e @ Error::Config { .. }) => eprintln!("config error: {e}"),
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&r) as u8)
}
