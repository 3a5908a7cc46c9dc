use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use pqr_repair::event_log::{parse_log, write_log_string, ColumnMapping, LogError};
use pqr_repair::lp::{apply_solution, generate_constraints, solve_propagation, LpError};
use pqr_repair::pqr_model::{ModelError, ModelSpec, PqrSystem};
use pqr_repair::replay::replay_log;
use pqr_repair::restore::{oracle_o1, oracle_o2, RestoreError};
use pqr_repair::sim_eval::{
    compare_load, evaluate, load_series, parse_segment, partialize, simulate_detailed, spectrum_export, Scenario,
    SimError,
};
use pqr_repair::time::{Millis, MINUTE};
use pqr_repair::{MultiEntityLog, RepairMode};

#[derive(Parser)]
#[command(name = "pqr-repair", version, about = "Repair incomplete event logs of systems with shared resources and FIFO queues")]
struct Cli {
    /// Column mapping for input logs, e.g. `pid=case,activity=act,time=ts`.
    #[arg(long, global = true, value_name = "ROLE=COLUMN,...")]
    columns: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model against the proclet and system conditions.
    Validate { model: PathBuf },
    /// Generate a complete log from a scenario.
    Simulate {
        model: PathBuf,
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Keep only sensor events (plus each case's first and last event).
    Partialize {
        log: PathBuf,
        #[arg(long, value_delimiter = ',')]
        sensors: Vec<String>,
        #[arg(short, long)]
        output: PathBuf,
        /// Do not keep unsensed first and last events.
        #[arg(long)]
        no_boundaries: bool,
    },
    /// Restore unobserved events and bound their timestamps.
    Repair {
        model: PathBuf,
        partial: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "interval", value_parser = parse_mode)]
        mode: RepairMode,
        /// Also write the constraint system in lp_solve format.
        #[arg(long, value_name = "FILE")]
        dump_lp: Option<PathBuf>,
    },
    /// Replay a complete log on the model.
    Check { model: PathBuf, log: PathBuf },
    /// Compare a repaired log with the true complete log.
    Eval {
        repaired: PathBuf,
        truth: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also compare load on these segments.
        #[arg(long, value_delimiter = ',', value_name = "FROM:TO")]
        segments: Vec<String>,
        #[arg(long, default_value_t = MINUTE)]
        window: Millis,
    },
    /// Export segment occurrences for performance spectrum plots.
    Spectrum {
        log: PathBuf,
        #[arg(long, value_delimiter = ',', value_name = "FROM:TO", required = true)]
        segments: Vec<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Items per minute on one segment per time window.
    Load {
        log: PathBuf,
        #[arg(long, value_name = "FROM:TO")]
        segment: String,
        #[arg(long, default_value_t = MINUTE)]
        window: Millis,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<RepairMode, String> {
    s.parse()
}

/// Why a command failed: bad input (exit 2) or a domain result (exit 1).
enum Failure {
    Usage(String),
    Domain(Value),
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn domain(kind: &str, message: impl std::fmt::Display, details: Value) -> Failure {
    Failure::Domain(json!({ "error": kind, "message": message.to_string(), "details": details }))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<PqrSystem, Failure> {
    let spec: ModelSpec = serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let sys = PqrSystem::build(&spec).map_err(model_failure)?;
    let diagnostics = sys.validate();
    if !diagnostics.is_empty() {
        return Err(model_failure(ModelError::Invalid(diagnostics)));
    }
    Ok(sys)
}

fn model_failure(e: ModelError) -> Failure {
    let details = match &e {
        ModelError::Invalid(d) => json!(d),
        _ => Value::Null,
    };
    domain("invalid_model", e, details)
}

fn load_log(path: &Path, mapping: &ColumnMapping) -> Result<MultiEntityLog, Failure> {
    let file = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    parse_log(file, mapping).map_err(|e| log_failure(path, e))
}

/// Malformed files are input errors; a well-formed but unusable log is a
/// domain failure.
fn log_failure(path: &Path, e: LogError) -> Failure {
    match e {
        LogError::Csv { .. } | LogError::MissingColumn(_) | LogError::Timestamp { .. } | LogError::MissingActivity { .. } => {
            usage(format!("{}: {e}", path.display()))
        }
        other => domain("invalid_log", other, Value::Null),
    }
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::Scenario(_) => domain("invalid_scenario", e, Value::Null),
        other => domain("evaluation", other, Value::Null),
    }
}

fn restore_failure(e: RestoreError) -> Failure {
    domain("restore", e, Value::Null)
}

fn segments(specs: &[String]) -> Result<Vec<(String, String)>, Failure> {
    specs.iter().map(|s| parse_segment(s).map_err(usage)).collect()
}

fn run(cli: Cli) -> Outcome {
    let mapping = match &cli.columns {
        Some(spec) => ColumnMapping::parse(spec).map_err(usage)?,
        None => ColumnMapping::default(),
    };
    match cli.command {
        Command::Validate { model } => {
            let sys = load_model(&model)?;
            println!(
                "{}: valid ({} transitions, {} resources, {} queues)",
                model.display(),
                sys.transition_count(),
                sys.resources.len(),
                sys.queues.len()
            );
        }
        Command::Simulate {
            model,
            scenario,
            output,
            seed,
        } => {
            let sys = load_model(&model)?;
            let sc = Scenario::from_json(&read(&scenario)?).map_err(|e| usage(format!("{}: {e}", scenario.display())))?;
            let out = simulate_detailed(&sys, &sc, seed).map_err(sim_failure)?;
            write(&output, &write_log_string(&out.log))?;
            println!(
                "simulated {} cases, {} events ({} tie shifts) -> {}",
                out.log.ids(pqr_repair::EntityType::Pid).len(),
                out.log.len(),
                out.tie_shifts,
                output.display()
            );
        }
        Command::Partialize {
            log,
            sensors,
            output,
            no_boundaries,
        } => {
            let full = load_log(&log, &mapping)?;
            let sensors: BTreeSet<String> = sensors.into_iter().filter(|s| !s.is_empty()).collect();
            let partial = partialize(&full, &sensors, !no_boundaries).map_err(sim_failure)?;
            write(&output, &write_log_string(&partial))?;
            println!("kept {} of {} events -> {}", partial.len(), full.len(), output.display());
        }
        Command::Repair {
            model,
            partial,
            output,
            mode,
            dump_lp,
        } => {
            let sys = load_model(&model)?;
            let log = load_log(&partial, &mapping)?;
            let traces = oracle_o1(&log, &sys).map_err(restore_failure)?;
            let run = oracle_o2(&traces, &sys).map_err(restore_failure)?;
            let cs = generate_constraints(&run, &sys).map_err(|e| match e {
                LpError::Restore(r) => restore_failure(r),
                other => domain("constraints", other, Value::Null),
            })?;
            if let Some(path) = dump_lp {
                write(&path, &cs.to_lp_format())?;
            }
            let sol = solve_propagation(&cs);
            if !sol.feasible {
                return Err(domain(
                    "infeasible",
                    "the observed timestamps violate the model minima",
                    json!({ "culprits": sol.culprits, "events": sol.culprit_events() }),
                ));
            }
            let repaired = apply_solution(&run, &sol, mode).map_err(|e| domain("constraints", e, Value::Null))?;
            write(&output, &write_log_string(&repaired))?;
            println!(
                "repaired {} events ({} restored), total interval width {} ms -> {}",
                repaired.len(),
                repaired.len() - log.len(),
                sol.objective,
                output.display()
            );
        }
        Command::Check { model, log } => {
            let sys = load_model(&model)?;
            let log = load_log(&log, &mapping)?;
            let replay = replay_log(&sys, &log).map_err(|e| domain("invalid_log", e, Value::Null))?;
            if !replay.accepted {
                return Err(domain("rejected", "replay rejected the log", json!(replay.diagnostics())));
            }
            println!("accepted: {} events replay on the model", log.len());
        }
        Command::Eval {
            repaired,
            truth,
            output,
            segments: specs,
            window,
        } => {
            let rep = load_log(&repaired, &mapping)?;
            let truth = load_log(&truth, &mapping)?;
            let mut metrics = evaluate(&rep, &truth).map_err(sim_failure)?;
            for (from, to) in segments(&specs)? {
                metrics.load.push(compare_load(&rep, &truth, &from, &to, window).map_err(sim_failure)?);
            }
            let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n";
            write(&output, &text)?;
            println!(
                "{} restored events: mae {:.4}, rmse {:.4}, max {:.4}, containment {:.4} -> {}",
                metrics.count,
                metrics.mae,
                metrics.rmse,
                metrics.max_error,
                metrics.containment,
                output.display()
            );
            for l in &metrics.load {
                println!("load {}:{}: mae {:.2}% of max load {}", l.truth.from, l.truth.to, l.mae_pct, l.max_load);
            }
        }
        Command::Spectrum {
            log,
            segments: specs,
            output,
        } => {
            let log = load_log(&log, &mapping)?;
            let csv = spectrum_export(&log, &segments(&specs)?).map_err(sim_failure)?;
            write(&output, &csv)?;
            println!("{} segment occurrences -> {}", csv.lines().count() - 1, output.display());
        }
        Command::Load {
            log,
            segment,
            window,
            output,
        } => {
            let log = load_log(&log, &mapping)?;
            let (from, to) = parse_segment(&segment).map_err(usage)?;
            let series = load_series(&log, &from, &to, window).map_err(sim_failure)?;
            write(&output, &series.to_csv())?;
            println!("{} windows, peak at window {:?} -> {}", series.values.len(), series.peak(), output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("{}", json!({ "error": "usage", "message": message }));
            ExitCode::from(2)
        }
        Err(Failure::Domain(value)) => {
            eprintln!("{value}");
            ExitCode::from(1)
        }
    }
}
