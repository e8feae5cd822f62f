//! `setpoint`: run scenarios, tune fairness, audit mechanisms, serve live
//! sessions and export figure data.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use setpoint_api::{ApiConfig, AppState};
use setpoint_core::fairness::{FairnessProblem, SolverStatus};
use setpoint_core::session::{replay_file, WallClock};
use setpoint_core::sim::{
    audit_mechanism, audit_scenario, baseline_compare, baseline_csv, corrupted_beta, header_csv,
    occupants_csv, price_grid, price_sweep, price_sweep_csv, rounds_csv, run_scenario, AuditDepth,
    BaselineReport, Policy, PriceSweep, ScenarioSpec, SessionResult, SimError, OCCUPANTS_HEADER,
    ROUNDS_HEADER,
};
use setpoint_core::{AgvMechanism, MechanismParams, ValuationTable};
use thiserror::Error;

use output::Outputs;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("audit failed: {0}")]
    Audit(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Runtime(_) => 1,
            CliError::Audit(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

/// Loading and validation failures are the user's input; anything else is
/// a runtime failure.
fn sim_err(path: &Path, e: SimError) -> CliError {
    let message = e.to_string();
    let message = if message.contains(&path.display().to_string()) {
        message
    } else {
        format!("{}: {message}", path.display())
    };
    match e {
        SimError::InvalidScenario { .. } | SimError::Format(_) | SimError::Io(_) => {
            CliError::Config(message)
        }
        _ => CliError::Runtime(message),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    Generalized,
    StandardAgv,
    Fixed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ParamsArg {
    /// Fairness-optimized parameters.
    Fair,
    /// Equal cost shares, standard AGV.
    Standard,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExportKind {
    Rounds,
    Occupants,
    PriceSweep,
    Baseline,
}

#[derive(Debug, Parser)]
#[command(
    name = "setpoint",
    version,
    about = "Shared-space AC set-point mechanism toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Input file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the input's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write only outputs of this format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// More log output on stderr; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file.
    Simulate {
        /// Replace the scenario's policy.
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Set-point for `--policy fixed`; defaults to the scenario baseline.
        #[arg(long)]
        setpoint: Option<i32>,
    },
    /// Solve the fairness problem in a priors file.
    Fairness,
    /// Audit IC and budget balance of a scenario or a priors file.
    Audit {
        /// Parameters for priors-file audits.
        #[arg(long, value_enum, default_value = "fair")]
        params: ParamsArg,
        /// Negative control: break one redistribution column.
        #[arg(long)]
        corrupt_beta: bool,
        /// Samples for sampled IC and budget checks.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
    /// Serve the HTTP API until interrupted.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        /// Persist sessions here; in memory otherwise.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Close and reopen rounds at each deadline.
        #[arg(long)]
        auto_advance: bool,
    },
    /// Turn result files into figure-ready CSVs.
    Export {
        /// Required when the input is empty.
        #[arg(long, value_enum)]
        kind: Option<ExportKind>,
    },
    /// Expected net benefit across electricity prices for a priors file.
    Sweep {
        #[arg(long, default_value_t = 0.1)]
        lo: f64,
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Compare a scenario against its fixed set-point baseline.
    Compare {
        /// Number of groups; seeds run consecutively from the base seed.
        #[arg(long, default_value_t = 6)]
        groups: u64,
    },
    /// Rebuild a session from its event log.
    Replay,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn require_config(cli: &Cli) -> Result<&Path, CliError> {
    cli.config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate { policy, setpoint } => simulate(cli, *policy, *setpoint),
        Command::Fairness => fairness(cli),
        Command::Audit {
            params,
            corrupt_beta,
            samples,
        } => audit(cli, *params, *corrupt_beta, *samples),
        Command::Serve {
            host,
            port,
            data_dir,
            auto_advance,
        } => serve(cli, host.clone(), *port, data_dir.clone(), *auto_advance),
        Command::Export { kind } => export(cli, *kind),
        Command::Sweep { lo, hi, count } => sweep(cli, *lo, *hi, *count),
        Command::Compare { groups } => compare(cli, *groups),
        Command::Replay => replay(cli),
    }
}

fn load_scenario(cli: &Cli, out: &mut Outputs) -> Result<ScenarioSpec, CliError> {
    let path = require_config(cli)?;
    let mut spec = ScenarioSpec::load(path).map_err(|e| sim_err(path, e))?;
    if let Some(seed) = cli.seed {
        spec = spec.with_seed(seed);
    }
    out.seed(spec.seed, cli.seed.is_some());
    out.scenario_hash(spec.config_hash());
    Ok(spec)
}

fn load_problem(path: &Path) -> Result<FairnessProblem, CliError> {
    FairnessProblem::load(path).map_err(|e| CliError::Config(e.to_string()))
}

fn simulate(cli: &Cli, policy: Option<PolicyArg>, setpoint: Option<i32>) -> Result<(), CliError> {
    let path = require_config(cli)?;
    let mut out = Outputs::new("simulate", &cli.out, cli.format, Some(path))?;
    let mut spec = load_scenario(cli, &mut out)?;
    if let Some(p) = policy {
        spec = spec.with_policy(match p {
            PolicyArg::Generalized => Policy::Generalized,
            PolicyArg::StandardAgv => Policy::StandardAgv,
            PolicyArg::Fixed => Policy::FixedSetpoint {
                setpoint_c: setpoint.unwrap_or(spec.baseline_setpoint_c),
            },
        });
        spec.validate().map_err(|e| sim_err(path, e))?;
    }
    let result = run_scenario(&spec).map_err(|e| sim_err(path, e))?;
    let csv_err = |e: SimError| CliError::Runtime(e.to_string());
    out.json("result.json", &result, false)?;
    out.csv("rounds.csv", &rounds_csv(&result).map_err(csv_err)?)?;
    out.csv("occupants.csv", &occupants_csv(&result).map_err(csv_err)?)?;
    out.finish()?;
    let a = &result.aggregates;
    println!(
        "{}: {} rounds, policy {}, energy cost {:.4}, mean comfort {:.4}",
        result.name,
        result.rounds.len(),
        result.policy.label(),
        a.total_energy_cost,
        a.mean_comfort
    );
    Ok(())
}

fn fairness(cli: &Cli) -> Result<(), CliError> {
    let path = require_config(cli)?;
    let mut out = Outputs::new("fairness", &cli.out, cli.format, Some(path))?;
    let problem = load_problem(path)?;
    let seed = cli.seed.unwrap_or(0);
    out.seed(seed, cli.seed.is_some());
    let solution = problem
        .solve(&ValuationTable::default(), seed)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let infeasible = solution.solver_status == SolverStatus::Infeasible;
    if infeasible {
        out.status("infeasible");
    }
    out.json("fairness.json", &solution, true)?;
    out.finish()?;
    println!(
        "{}: status {:?}, alpha {:?}, sum of variances {:.6}, equality residual {:.3e}",
        if problem.name.is_empty() {
            "problem"
        } else {
            &problem.name
        },
        solution.solver_status,
        solution.params.alpha,
        solution.sum_variance,
        solution.equality_residual
    );
    if infeasible {
        return Err(CliError::Infeasible(format!(
            "expected net benefits cannot be equalized; minimal-residual point written (residual {:.3e})",
            solution.equality_residual
        )));
    }
    Ok(())
}

fn audit(cli: &Cli, params: ParamsArg, corrupt: bool, samples: usize) -> Result<(), CliError> {
    let path = require_config(cli)?;
    let mut out = Outputs::new("audit", &cli.out, cli.format, Some(path))?;
    let is_problem =
        path.extension().is_some_and(|e| e == "json") && FairnessProblem::load(path).is_ok();
    let passed = if is_problem {
        let problem = load_problem(path)?;
        let seed = cli.seed.unwrap_or(0);
        out.seed(seed, cli.seed.is_some());
        let table = ValuationTable::default();
        let chosen = match params {
            ParamsArg::Standard => MechanismParams::standard(problem.occupants.len()),
            ParamsArg::Fair => {
                problem
                    .solve(&table, seed)
                    .map_err(|e| CliError::Runtime(e.to_string()))?
                    .params
            }
        };
        let chosen = if corrupt {
            corrupted_beta(&chosen)
        } else {
            chosen
        };
        let priors = problem
            .priors
            .for_occupants(&problem.occupants, problem.t0_c)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let costs = problem
            .costs
            .cost_vector(problem.t0_c)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mode = problem.expectation_mode(seed);
        let mech = AgvMechanism::new_unchecked(&priors, &costs, &table, chosen, mode)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let depth = AuditDepth::auto(priors.len(), samples, seed);
        let report = audit_mechanism(&mech, &priors, &table, depth, samples, seed)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        println!(
            "IC: {} deviations, max gain {:.3e}, {} violations; budget: {} profiles, max imbalance {:.3e}, {} violations",
            report.ic.deviations_checked,
            report.ic.max_gain,
            report.ic.violations,
            report.budget.checked,
            report.budget.max_imbalance,
            report.budget.violations
        );
        let passed = report.passed();
        if !passed {
            out.status("audit_failed");
        }
        out.json("audit.json", &report, true)?;
        passed
    } else {
        if corrupt {
            return Err(CliError::Config(
                "--corrupt-beta applies to priors files only".into(),
            ));
        }
        let spec = load_scenario(cli, &mut out)?;
        let report = audit_scenario(&spec, samples).map_err(|e| sim_err(path, e))?;
        let ic_violations: usize = report.ic.iter().map(|p| p.report.violations).sum();
        println!(
            "{}: IC at {} temperatures, {} violations; budget: {} rounds, {} violations; efficiency: {} rounds, {} violations",
            report.scenario,
            report.ic.len(),
            ic_violations,
            report.budget.checked,
            report.budget.violations,
            report.efficiency.checked,
            report.efficiency.violations
        );
        let passed = report.passed();
        if !passed {
            out.status("audit_failed");
        }
        out.json("audit.json", &report, true)?;
        passed
    };
    out.finish()?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Audit(format!(
            "see {}",
            cli.out.join("audit.json").display()
        )))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ServeConfig {
    host: Option<String>,
    port: Option<u16>,
    data_dir: Option<PathBuf>,
    auto_advance: Option<bool>,
}

fn serve(
    cli: &Cli,
    host: Option<String>,
    port: Option<u16>,
    data_dir: Option<PathBuf>,
    auto_advance: bool,
) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<ServeConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => ServeConfig::default(),
    };
    let host = host.or(file.host).unwrap_or_else(|| "127.0.0.1".into());
    let port = port.or(file.port).unwrap_or(8080);
    let config = ApiConfig {
        data_dir: data_dir.or(file.data_dir),
        auto_advance: auto_advance || file.auto_advance.unwrap_or(false),
    };
    let out = Outputs::new("serve", &cli.out, cli.format, cli.config.as_deref())?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        let state = AppState::new(config, Arc::new(WallClock))
            .map_err(|e| CliError::Config(format!("loading sessions: {e}")))?;
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .map_err(|e| CliError::Config(format!("cannot listen on {host}:{port}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        out.finish()?;
        println!("listening on http://{addr}");
        use std::io::Write;
        let _ = std::io::stdout().flush();
        setpoint_api::serve(listener, state, shutdown_signal())
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("stopped");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
}

fn export(cli: &Cli, kind: Option<ExportKind>) -> Result<(), CliError> {
    let path = require_config(cli)?;
    let mut out = Outputs::new("export", &cli.out, Some(Format::Csv), Some(path))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let parse_err =
        |e: serde_json::Error| CliError::Config(format!("{}: parse error: {e}", path.display()));
    let csv_err = |e: SimError| CliError::Runtime(e.to_string());
    if text.trim().is_empty() {
        let kind = kind.ok_or_else(|| {
            CliError::Config(format!(
                "{}: input is empty; pass --kind to choose the header",
                path.display()
            ))
        })?;
        let (name, body) = match kind {
            ExportKind::Rounds => ("rounds.csv", header_csv(&ROUNDS_HEADER).map_err(csv_err)?),
            ExportKind::Occupants => (
                "occupants.csv",
                header_csv(&OCCUPANTS_HEADER).map_err(csv_err)?,
            ),
            ExportKind::PriceSweep => ("price_sweep.csv", price_sweep_csv(None).map_err(csv_err)?),
            ExportKind::Baseline => ("baseline.csv", baseline_csv(None).map_err(csv_err)?),
        };
        out.csv(name, &body)?;
        return out.finish();
    }
    let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    let has = |key: &str| value.get(key).is_some();
    if has("rounds") {
        let result: SessionResult = serde_json::from_value(value).map_err(parse_err)?;
        out.seed(result.seed, false);
        if !matches!(kind, Some(ExportKind::Occupants)) {
            out.csv("rounds.csv", &rounds_csv(&result).map_err(csv_err)?)?;
        }
        if !matches!(kind, Some(ExportKind::Rounds)) {
            out.csv("occupants.csv", &occupants_csv(&result).map_err(csv_err)?)?;
        }
    } else if has("points") {
        let sweep: PriceSweep = serde_json::from_value(value).map_err(parse_err)?;
        out.csv(
            "price_sweep.csv",
            &price_sweep_csv(Some(&sweep)).map_err(csv_err)?,
        )?;
    } else if has("groups") {
        let report: BaselineReport = serde_json::from_value(value).map_err(parse_err)?;
        out.csv(
            "baseline.csv",
            &baseline_csv(Some(&report)).map_err(csv_err)?,
        )?;
    } else {
        return Err(CliError::Config(format!(
            "{}: parse error: not a simulation result, price sweep or baseline report",
            path.display()
        )));
    }
    out.finish()
}

fn sweep(cli: &Cli, lo: f64, hi: f64, count: usize) -> Result<(), CliError> {
    let path = require_config(cli)?;
    let mut out = Outputs::new("sweep", &cli.out, cli.format, Some(path))?;
    let problem = load_problem(path)?;
    let seed = cli.seed.unwrap_or(0);
    out.seed(seed, cli.seed.is_some());
    if !(lo > 0.0 && hi > lo && count >= 2) {
        return Err(CliError::Config(format!(
            "price grid needs 0 < lo < hi and count >= 2, got {lo}..{hi} x {count}"
        )));
    }
    let result =
        price_sweep(&problem, &price_grid(lo, hi, count), seed).map_err(|e| sim_err(path, e))?;
    out.json("price_sweep.json", &result, false)?;
    out.csv(
        "price_sweep.csv",
        &price_sweep_csv(Some(&result)).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    out.finish()?;
    let infeasible = result
        .points
        .iter()
        .filter(|p| p.common_benefit.is_none())
        .count();
    println!(
        "{} prices from {lo} to {hi}: non-increasing {}, {infeasible} infeasible",
        result.points.len(),
        result.is_non_increasing(1e-12)
    );
    Ok(())
}

fn compare(cli: &Cli, groups: u64) -> Result<(), CliError> {
    let path = require_config(cli)?;
    let mut out = Outputs::new("compare", &cli.out, cli.format, Some(path))?;
    let spec = load_scenario(cli, &mut out)?;
    if groups == 0 {
        return Err(CliError::Config("--groups must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..groups).map(|k| spec.seed + k).collect();
    let report = baseline_compare(&spec, &seeds).map_err(|e| sim_err(path, e))?;
    out.json("baseline.json", &report, false)?;
    out.csv(
        "baseline.csv",
        &baseline_csv(Some(&report)).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    out.finish()?;
    println!(
        "{}: mean saving {:.2}% vs fixed {} C over seeds {}..={}",
        report.scenario,
        report.mean_saving_pct,
        report.fixed_setpoint_c,
        seeds[0],
        seeds[seeds.len() - 1]
    );
    Ok(())
}

fn replay(cli: &Cli) -> Result<(), CliError> {
    let path = require_config(cli)?;
    let mut out = Outputs::new("replay", &cli.out, cli.format, Some(path))?;
    let session = replay_file(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .ok_or_else(|| CliError::Config(format!("{}: log is empty", path.display())))?;
    let state: serde_json::Value =
        serde_json::from_str(&session.serialize_state()).expect("state is JSON");
    out.json("state.json", &state, true)?;
    out.finish()?;
    println!(
        "{}: {} events, {} rounds, phase {:?}, next T0 {} C",
        session.id(),
        session.last_seq(),
        session.rounds().len(),
        session.phase(),
        session.t0_c()
    );
    Ok(())
}
