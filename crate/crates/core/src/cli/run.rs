//! `sbundle` subcommands and exit codes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use super::config::LoadedConfig;
use super::trace::{emit_trace, write_atomic};
use super::CliError;
use crate::problems::catalog;
use crate::solver::{solve, SolveReport, SolveStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_MAX_ITER: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sbundle", version, about = "Simplified bundle method solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the problem described by a run config and write trace + summary.
    Solve { config: PathBuf },
    /// List the built-in problem instances.
    ListProblems,
    /// Check a run config without solving.
    Validate { config: PathBuf },
}

/// Parse `args` (program name first) and execute. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_ERROR;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match cli.command {
        Command::Solve { config } => solve_command(&config, out),
        Command::ListProblems => list_problems(out),
        Command::Validate { config } => validate(&config, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn list_problems(out: &mut dyn Write) -> Result<i32, CliError> {
    for name in catalog::INSTANCE_NAMES {
        let inst = catalog::build(name).expect("registered instance builds");
        let _ = writeln!(
            out,
            "{name:<34} n={:<3} m={:<3} {}",
            inst.spec.n(),
            inst.spec.m(),
            inst.description
        );
    }
    Ok(EXIT_OK)
}

fn validate(path: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let loaded = LoadedConfig::load(path)?;
    let inst = loaded.instance()?;
    let _ = writeln!(
        out,
        "ok: {} (n={}, m={})",
        inst.spec.name(),
        inst.spec.n(),
        inst.spec.m()
    );
    Ok(EXIT_OK)
}

fn solve_command(path: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let loaded = LoadedConfig::load(path)?;
    let inst = loaded.instance()?;
    let name = inst.spec.name().to_string();
    let format = loaded.config.output.format;
    let trace_path = loaded.trace_path(&name);
    let summary_path = loaded.summary_path(&name);

    let report = match solve(&inst.spec, &inst.x0, &loaded.config.solver) {
        Ok(report) => report,
        Err(failure) => {
            // Keep whatever was recorded before the failure.
            if !failure.trace.is_empty() {
                emit_trace(&failure.trace, &trace_path, format)?;
            }
            return Err(failure.into());
        }
    };
    emit_trace(&report.trace, &trace_path, format)?;
    let summary = summary_json(&name, &report, &trace_path);
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_atomic(&summary_path, text.as_bytes())?;

    let _ = writeln!(
        out,
        "{name}: {} after {} iterations, objective {:.10e}, ||d|| {:.3e}",
        report.status.as_str(),
        report.iterations,
        report.final_objective,
        report.final_step_norm
    );
    if let Some(v) = report.restoration_violation {
        if report.status == SolveStatus::RestorationConvergedInfeasible {
            let _ = writeln!(out, "minimal linearized l1 violation {v:.10e}");
        }
    }
    let _ = writeln!(out, "trace: {}", trace_path.display());
    let _ = writeln!(out, "summary: {}", summary_path.display());
    Ok(match report.status {
        SolveStatus::ConvergedKkt | SolveStatus::RestorationConvergedInfeasible => EXIT_OK,
        SolveStatus::MaxIter => EXIT_MAX_ITER,
    })
}

fn summary_json(name: &str, r: &SolveReport, trace_path: &Path) -> serde_json::Value {
    json!({
        "problem": name,
        "status": r.status.as_str(),
        "final_x": r.final_x.as_slice(),
        "final_objective": r.final_objective,
        "final_step_norm": r.final_step_norm,
        "kkt": {
            "stationarity": r.kkt.stationarity,
            "feasibility": r.kkt.feasibility,
            "complementarity": r.kkt.complementarity,
        },
        "iterations": r.iterations,
        "serious_steps": r.serious_steps,
        "rejected_steps": r.rejected_steps,
        "restoration_iterations": r.restoration_iterations,
        "oracle_calls": r.oracle_calls,
        "constraint_evals": r.constraint_evals,
        "final_alpha": r.final_alpha,
        "final_theta": r.final_theta,
        "final_pi": r.final_pi,
        "restoration_violation": r.restoration_violation,
        "trace": trace_path.file_name().map(|f| f.to_string_lossy().into_owned()),
    })
}
