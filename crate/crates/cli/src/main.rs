//! `routh`: batch driver for the built-in systems.
//!
//! Exit codes: 0 success, 1 failed `check`, 2 configuration, 3 integration,
//! 4 precondition.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use routh::calculus::{ChartState, Vector};
use routh::Error;
use serde_json::Value;

use commands::Scenario;

#[derive(Parser)]
#[command(name = "routh", version, about = "Routh reduction of Lagrangian systems with symmetry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Built-in system (see list-systems).
    #[arg(long, global = true)]
    system: Option<String>,
    /// Flat key = value run file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    t0: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    t1: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Momentum value, comma separated.
    #[arg(long, global = true, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Quasi-random sampling seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trajectory format. Reports are always JSON.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the full equations; writes a trajectory.
    Simulate,
    /// Full versus reduced run; writes a JSON report.
    Reduce,
    /// Reduced run lifted back to Q; writes a trajectory.
    Reconstruct,
    /// Reconstructed versus full trajectory; writes a JSON report.
    Compare,
    /// Invariant battery; writes a JSON report, exit 1 on any failure.
    Check,
    /// Built-in systems and their parameters.
    ListSystems,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    pub source: Option<Error>,
}

impl Failure {
    pub fn config(message: String) -> Self {
        Failure { code: 2, message, source: None }
    }

    pub fn precondition(message: String) -> Self {
        Failure { code: 4, message, source: None }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => 2,
            Error::NotInvariant { .. }
            | Error::NotGRegular { .. }
            | Error::ConstraintViolation { .. }
            | Error::GaugeAnchor { .. } => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string(), source: Some(e) }
    }
}

fn scenario(cli: &Cli) -> Result<Scenario, Failure> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
            config::parse(&text).map_err(Failure::config)?
        }
        None => config::RunFile::default(),
    };
    let system = cli
        .system
        .clone()
        .or(file.system.clone())
        .ok_or_else(|| Failure::config("no system given (--system or `system =` in the run file)".into()))?;
    let bundle = routh::systems::by_name(&system, &file.params)?;
    let (mut q, mut v) = commands::default_state(&system);
    config::apply_initial(&file.initial, &bundle.sys.chart.coord_names, &mut q, &mut v).map_err(Failure::config)?;
    let t0 = cli.t0.or(file.t0).unwrap_or(0.0);
    let t1 = cli.t1.or(file.t1).unwrap_or(5.0);
    let dt = cli.dt.or(file.dt).unwrap_or(1e-3);
    if !(dt > 0.0 && t1 > t0) {
        return Err(Failure::config(format!("need dt > 0 and t1 > t0 (got dt {dt}, [{t0}, {t1}])")));
    }
    let mu = match &cli.mu {
        Some(s) => Some(config::parse_list(s).map_err(|e| Failure::config(format!("--mu: {e}")))?),
        None => file.mu.clone(),
    };
    Ok(Scenario {
        bundle,
        s0: ChartState::from_slices(&q, &v),
        t0,
        t1,
        dt,
        mu: mu.map(Vector::from_vec),
        seed: cli.seed.or(file.seed).unwrap_or(0),
    })
}

/// Best-effort system name for reports written before the bundle exists.
fn system_name(cli: &Cli) -> String {
    let from_file = || {
        let text = std::fs::read_to_string(cli.config.as_ref()?).ok()?;
        config::parse(&text).ok()?.system
    };
    cli.system.clone().or_else(from_file).unwrap_or_default()
}

fn emit(cli: &Cli, text: String) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(cli: &Cli, v: &Value) -> Result<(), Failure> {
    emit(cli, serde_json::to_string_pretty(v).expect("serialisable") + "\n")
}

fn emit_trajectory(cli: &Cli, tr: &routh::calculus::Trajectory) -> Result<(), Failure> {
    let t = output::table(tr);
    match cli.format {
        Format::Csv => emit(cli, output::to_csv(&t)),
        Format::Json => emit_json(cli, &output::to_json(&t)),
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Simulate => emit_trajectory(cli, &commands::simulate(&scenario(cli)?)?)?,
        Command::Reconstruct => emit_trajectory(cli, &commands::reconstruct_run(&scenario(cli)?)?)?,
        Command::Reduce => emit_json(cli, &commands::reduce_report(&scenario(cli)?)?)?,
        Command::Compare => emit_json(cli, &commands::compare_report(&scenario(cli)?)?)?,
        Command::ListSystems => emit_json(cli, &commands::list_systems()?)?,
        Command::Check => {
            let (report, pass) = commands::check_report(&system_name(cli), scenario(cli))?;
            emit_json(cli, &report)?;
            return Ok(if pass { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("routh: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
