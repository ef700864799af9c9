//! Command-line front end. Every number printed here comes from a library
//! call; this module only parses, dispatches and formats.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::channel::{sample_network, NetworkConfig};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiments::{
    metadata_path, render_csv, run_sweep, write_metadata, write_results, RunMetadata,
};
use crate::oracle::{certify_batch, lemma_reflection_battery, lemma_split_battery, GridSpec};
use crate::solver::solve_network;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_CERTIFICATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "noma-ee",
    version,
    about = "Energy-efficient NOMA resource allocation with backscatter tags"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base seed; replaces `network.rng_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (CSV for `sweep`, JSON for `solve`).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Instance count for `certify` and `lemma-check`.
    #[arg(long, global = true)]
    pub instances: Option<usize>,
    /// Grid points per axis for `certify`.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Override a config entry, e.g. `--set network.qos_rate_min=0.3`.
    /// Repeatable; later overrides win.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve one network realization and print its energy efficiency.
    Solve,
    /// Run the configured Monte Carlo sweep and write CSV results.
    Sweep,
    /// Compare the solver against the grid oracle on random single cells.
    Certify,
    /// Run the finite-difference concavity batteries.
    LemmaCheck,
}

/// Process exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. }
        | Error::Usage(_)
        | Error::LengthMismatch { .. }
        | Error::DegenerateChannel(_) => EXIT_CONFIG,
        Error::Infeasible { .. } | Error::NetworkInfeasible { .. } => EXIT_INFEASIBLE,
        Error::Io { .. } => EXIT_IO,
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
/// Normal output goes to stdout, diagnostics to stderr.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok((text, code)) => {
            print!("{text}");
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    for o in &cli.overrides {
        eprintln!("override: {o}");
    }
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("network.rng_seed={seed}"));
    }
    match &cli.config {
        Some(path) => RunConfig::load(path, &overrides),
        None => RunConfig::from_overrides(&overrides),
    }
}

/// Runs the command and returns its stdout text and exit code.
pub fn dispatch(cli: &Cli) -> Result<(String, i32)> {
    let config = load(cli)?;
    match cli.command {
        Command::Solve => solve(cli, &config),
        Command::Sweep => sweep(cli, &config),
        Command::Certify => certify(cli, &config),
        Command::LemmaCheck => lemma_check(cli, &config),
    }
}

fn solve(cli: &Cli, config: &RunConfig) -> Result<(String, i32)> {
    let net: &NetworkConfig = &config.network;
    let channels = sample_network(net);
    let sol = solve_network(&channels, net, &config.solver)?;
    let mut out = String::new();
    let _ = writeln!(out, "total EE: {:.6} bits/s/Hz/W", sol.total_ee);
    let _ = writeln!(
        out,
        "converged: {}  sweeps: {}  iterations: {}",
        sol.converged, sol.sweeps, sol.iterations
    );
    for (i, (a, b)) in sol.allocations.iter().zip(&sol.breakdowns).enumerate() {
        let _ = writeln!(
            out,
            "cell {i}: alpha_n={:.4} alpha_f={:.4} beta={:.4} R_n={:.4} R_f={:.4} EE={:.6}",
            a.alpha_n, a.alpha_f, a.beta, b.rate_n, b.rate_f, b.ee
        );
    }
    let ees: Vec<String> = sol
        .ee_by_iteration
        .iter()
        .map(|e| format!("{e:.6}"))
        .collect();
    let _ = writeln!(out, "EE by iteration: {}", ees.join(" "));
    if let Some(path) = &cli.out {
        let text = serde_json::to_string_pretty(&sol)
            .map_err(|e| Error::Usage(format!("cannot serialize solution: {e}")))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    }
    Ok((out, EXIT_OK))
}

fn sweep(cli: &Cli, config: &RunConfig) -> Result<(String, i32)> {
    let spec = config
        .sweep_spec()?
        .ok_or_else(|| Error::config("sweep", "the config has no [sweep] table"))?;
    let rows = run_sweep(&spec, &config.solver)?;
    match &cli.out {
        Some(path) => {
            write_results(&rows, path)?;
            let mut overrides = cli.overrides.clone();
            if let Some(seed) = cli.seed {
                overrides.push(format!("network.rng_seed={seed}"));
            }
            write_metadata(
                &RunMetadata::new(&spec, &config.solver, &overrides),
                &metadata_path(path),
            )?;
            Ok((
                format!("wrote {} rows to {}\n", rows.len(), path.display()),
                EXIT_OK,
            ))
        }
        None => Ok((render_csv(&rows), EXIT_OK)),
    }
}

fn certify(cli: &Cli, config: &RunConfig) -> Result<(String, i32)> {
    let instances = cli.instances.unwrap_or(config.certify.instances);
    let grid = GridSpec::square(cli.grid.unwrap_or(config.certify.grid));
    let tol = config.certify.tolerance;
    let batch = certify_batch(
        &config.network,
        &config.solver,
        &grid,
        instances,
        config.network.rng_seed,
        tol,
    )?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}/{} within {tol:e}",
        batch.passed(),
        batch.instances.len()
    );
    if let Some(m) = batch.worst_margin() {
        let _ = writeln!(out, "worst margin: {m:.3e}");
    }
    let _ = writeln!(out, "infeasible draws skipped: {}", batch.skipped);
    for c in batch.instances.iter().filter(|c| !c.certification.pass) {
        let _ = writeln!(
            out,
            "FAIL seed={} delta={} R_min={}: solver {:.6} vs grid {:.6} (margin {:.3e})",
            c.seed, c.delta, c.rate_min, c.solution_ee, c.oracle.ee, c.certification.margin
        );
    }
    let code = if batch.all_pass() {
        EXIT_OK
    } else {
        EXIT_CERTIFICATION
    };
    Ok((out, code))
}

fn lemma_check(cli: &Cli, config: &RunConfig) -> Result<(String, i32)> {
    let n = cli.instances.unwrap_or(100);
    let seed = config.network.rng_seed;
    let reflection = lemma_reflection_battery(&config.network, n, 20, seed);
    let split = lemma_split_battery(&config.network, n, seed);
    let mut out = String::new();
    for (name, r) in [
        ("reflection concavity", &reflection),
        ("split joint concavity", &split),
    ] {
        let _ = writeln!(
            out,
            "{name}: {} violations in {} checks (worst excess {:.3e})",
            r.violations, r.checks, r.worst_excess
        );
        for e in &r.examples {
            let _ = writeln!(out, "  {e}");
        }
    }
    let code = if reflection.passed() && split.passed() {
        EXIT_OK
    } else {
        EXIT_CERTIFICATION
    };
    Ok((out, code))
}
