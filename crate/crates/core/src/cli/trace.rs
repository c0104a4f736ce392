//! Iteration trace files (CSV or JSON lines) and atomic writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::config::TraceFormat;
use super::CliError;
use crate::solver::{IterationRecord, Phase, StepOutcome};

/// CSV header, in `IterationRecord` field order.
pub const TRACE_COLUMNS: [&str; 18] = [
    "iter",
    "phase",
    "alpha",
    "theta",
    "pi",
    "objective",
    "merit",
    "constraint_l1",
    "step_norm",
    "delta",
    "delta_beta",
    "rho",
    "rho_beta",
    "beta",
    "accepted",
    "outcome",
    "oracle_calls",
    "wall_time_ms",
];

/// 17 significant digits, enough to round-trip any f64.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn json_float(v: f64) -> String {
    // JSON has no NaN/inf.
    if v.is_finite() {
        float(v)
    } else {
        "null".into()
    }
}

fn json_opt(v: Option<f64>) -> String {
    v.map(json_float).unwrap_or_else(|| "null".into())
}

fn csv_row(r: &IterationRecord) -> String {
    [
        r.iter.to_string(),
        r.phase.as_str().to_string(),
        float(r.alpha),
        float(r.theta),
        csv_opt(r.pi),
        float(r.objective),
        float(r.merit),
        float(r.constraint_l1),
        float(r.step_norm),
        float(r.delta),
        csv_opt(r.delta_beta),
        csv_opt(r.rho),
        csv_opt(r.rho_beta),
        csv_opt(r.beta),
        r.accepted.to_string(),
        r.outcome.as_str().to_string(),
        r.oracle_calls.to_string(),
        float(r.wall_time_ms),
    ]
    .join(",")
}

fn json_row(r: &IterationRecord) -> String {
    let values = [
        r.iter.to_string(),
        format!("\"{}\"", r.phase.as_str()),
        json_float(r.alpha),
        json_float(r.theta),
        json_opt(r.pi),
        json_float(r.objective),
        json_float(r.merit),
        json_float(r.constraint_l1),
        json_float(r.step_norm),
        json_float(r.delta),
        json_opt(r.delta_beta),
        json_opt(r.rho),
        json_opt(r.rho_beta),
        json_opt(r.beta),
        r.accepted.to_string(),
        format!("\"{}\"", r.outcome.as_str()),
        r.oracle_calls.to_string(),
        json_float(r.wall_time_ms),
    ];
    let mut line = String::from("{");
    for (i, (k, v)) in TRACE_COLUMNS.iter().zip(values).enumerate() {
        if i > 0 {
            line.push(',');
        }
        let _ = write!(line, "\"{k}\":{v}");
    }
    line.push('}');
    line
}

/// Render records in the given format.
pub fn render_trace(records: &[IterationRecord], format: TraceFormat) -> String {
    let mut out = String::new();
    if format == TraceFormat::Csv {
        out.push_str(&TRACE_COLUMNS.join(","));
        out.push('\n');
    }
    for r in records {
        out.push_str(&match format {
            TraceFormat::Csv => csv_row(r),
            TraceFormat::Jsonlines => json_row(r),
        });
        out.push('\n');
    }
    out
}

/// Write a trace atomically. Refuses to write an empty trace.
pub fn emit_trace(records: &[IterationRecord], path: &Path, format: TraceFormat) -> Result<(), CliError> {
    if records.is_empty() {
        return Err(CliError::EmptyTrace);
    }
    write_atomic(path, render_trace(records, format).as_bytes())
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {msg}"),
    }
}

fn parse_phase(s: &str) -> Option<Phase> {
    match s {
        "normal" => Some(Phase::Normal),
        "restoration" => Some(Phase::Restoration),
        _ => None,
    }
}

fn parse_outcome(s: &str) -> Option<StepOutcome> {
    match s {
        "serious" => Some(StepOutcome::Serious),
        "rejected" => Some(StepOutcome::Rejected),
        "terminated" => Some(StepOutcome::Terminated),
        _ => None,
    }
}

/// Read a trace written by [`emit_trace`].
pub fn read_trace(path: &Path, format: TraceFormat) -> Result<Vec<IterationRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        TraceFormat::Csv => {
            let mut lines = text.lines();
            let header = lines.next().unwrap_or_default();
            if header != TRACE_COLUMNS.join(",") {
                return Err(parse_err(path, 1, "unexpected header"));
            }
            lines
                .enumerate()
                .map(|(i, line)| parse_csv_row(line).ok_or_else(|| parse_err(path, i + 2, "malformed row")))
                .collect()
        }
        TraceFormat::Jsonlines => text
            .lines()
            .enumerate()
            .map(|(i, line)| serde_json::from_str(line).map_err(|e| parse_err(path, i + 1, e)))
            .collect(),
    }
}

fn parse_csv_row(line: &str) -> Option<IterationRecord> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != TRACE_COLUMNS.len() {
        return None;
    }
    let num = |s: &str| s.parse::<f64>().ok();
    let opt = |s: &str| -> Option<Option<f64>> {
        if s.is_empty() {
            Some(None)
        } else {
            num(s).map(Some)
        }
    };
    Some(IterationRecord {
        iter: f[0].parse().ok()?,
        phase: parse_phase(f[1])?,
        alpha: num(f[2])?,
        theta: num(f[3])?,
        pi: opt(f[4])?,
        objective: num(f[5])?,
        merit: num(f[6])?,
        constraint_l1: num(f[7])?,
        step_norm: num(f[8])?,
        delta: num(f[9])?,
        delta_beta: opt(f[10])?,
        rho: opt(f[11])?,
        rho_beta: opt(f[12])?,
        beta: opt(f[13])?,
        accepted: f[14].parse().ok()?,
        outcome: parse_outcome(f[15])?,
        oracle_calls: f[16].parse().ok()?,
        wall_time_ms: num(f[17])?,
    })
}
