//! Run configuration files.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::CliError;
use crate::error::OracleError;
use crate::oracle::{AffineConstraints, OracleResponse, ProblemSpec};
use crate::problems::catalog::{self, Instance};
use crate::solver::SolverConfig;

/// Environment variable that overrides `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "SBUNDLE_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    #[default]
    Csv,
    Jsonlines,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Jsonlines => "jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative paths below are resolved against this directory.
    pub dir: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub format: TraceFormat,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Registered instance name, or a path to a problem file (`*.toml`).
    pub problem: String,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Seed for generated instances.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Scenario count for the generated two-stage instances.
    #[serde(default)]
    pub scenarios: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A config together with the directory it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = RunConfig::parse(&text).map_err(|message| CliError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    /// Resolve the problem and starting point.
    pub fn instance(&self) -> Result<Instance, CliError> {
        let cfg = &self.config;
        let mut inst = if cfg.problem.ends_with(".toml") {
            load_problem_file(&self.base_dir.join(&cfg.problem))?
        } else {
            named_instance(&cfg.problem, cfg.seed, cfg.scenarios)?
        };
        if let Some(x0) = &cfg.x0 {
            if x0.len() != inst.spec.n() {
                return Err(CliError::Config(format!(
                    "x0 has {} entries, problem {} has n = {}",
                    x0.len(),
                    inst.spec.name(),
                    inst.spec.n()
                )));
            }
            inst.x0 = DVector::from_column_slice(x0);
        }
        inst.spec
            .check_in_box(&inst.x0)
            .map_err(|e| CliError::Config(format!("x0: {e}")))?;
        Ok(inst)
    }

    /// Output directory: the environment override, else `output.dir`
    /// relative to the config file, else the config file's directory.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            return PathBuf::from(dir);
        }
        match &self.config.output.dir {
            Some(dir) => self.base_dir.join(dir),
            None => self.base_dir.clone(),
        }
    }

    pub fn trace_path(&self, problem: &str) -> PathBuf {
        let out = &self.config.output;
        let name = out
            .trace
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{problem}_trace.{}", out.format.extension())));
        self.output_dir().join(name)
    }

    pub fn summary_path(&self, problem: &str) -> PathBuf {
        let name = self
            .config
            .output
            .summary
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{problem}_summary.json")));
        self.output_dir().join(name)
    }
}

impl RunConfig {
    /// Parse and validate; the message carries line and key context.
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.solver.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn named_instance(name: &str, seed: Option<u64>, scenarios: Option<usize>) -> Result<Instance, CliError> {
    let synthetic = match name {
        "two_stage_synthetic" => Some(false),
        "two_stage_synthetic_constrained" => Some(true),
        _ => None,
    };
    match synthetic {
        Some(constrained) => catalog::two_stage_synthetic(
            scenarios.unwrap_or(catalog::SYNTHETIC_SCENARIOS),
            seed.unwrap_or(catalog::SYNTHETIC_SEED),
            constrained,
        )
        .map_err(|e| CliError::Config(e.to_string())),
        None => {
            if scenarios.is_some() {
                return Err(CliError::Config(format!("`scenarios` does not apply to {name}")));
            }
            catalog::build(name).ok_or_else(|| CliError::UnknownProblem(name.to_string()))
        }
    }
}

/// Problem described in a file: a squared-distance objective (minimum over
/// one or more targets) with optional affine equalities `Ax = b`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    name: String,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x0: Vec<f64>,
    targets: Vec<Vec<f64>>,
    #[serde(default = "one")]
    weight: f64,
    #[serde(default)]
    constraint_rows: Vec<Vec<f64>>,
    #[serde(default)]
    constraint_rhs: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn load_problem_file(path: &Path) -> Result<Instance, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: ProblemFile = toml::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let n = file.lower.len();
    let bad = |msg: String| CliError::Parse {
        path: path.to_path_buf(),
        message: msg,
    };
    if file.upper.len() != n || file.x0.len() != n {
        return Err(bad("lower, upper and x0 must have the same length".into()));
    }
    if file.targets.is_empty() || file.targets.iter().any(|t| t.len() != n) {
        return Err(bad(format!("targets must be a nonempty list of length-{n} points")));
    }
    if !(file.weight > 0.0) {
        return Err(bad("weight must be positive".into()));
    }
    if file.constraint_rows.len() != file.constraint_rhs.len() || file.constraint_rows.iter().any(|r| r.len() != n) {
        return Err(bad(
            "constraint_rows must be m rows of length n matching constraint_rhs".into(),
        ));
    }

    let targets: Vec<DVector<f64>> = file.targets.iter().map(|t| DVector::from_column_slice(t)).collect();
    let weight = file.weight;
    let objective = move |x: &DVector<f64>| -> Result<OracleResponse, OracleError> {
        let (value, diff) = targets
            .iter()
            .map(|t| {
                let diff = x - t;
                (weight * diff.norm_squared(), diff)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("at least one target");
        Ok(OracleResponse::new(value, 2.0 * weight * diff))
    };
    let mut spec = ProblemSpec::new(
        file.name,
        DVector::from_column_slice(&file.lower),
        DVector::from_column_slice(&file.upper),
        objective,
    )
    .map_err(|e| bad(e.to_string()))?
    .with_witness(2.0 * weight);
    let m = file.constraint_rows.len();
    if m > 0 {
        let jac = DMatrix::from_fn(n, m, |i, j| file.constraint_rows[j][i]);
        let offset = DVector::from_iterator(m, file.constraint_rhs.iter().map(|b| -b));
        spec = spec.with_constraints(AffineConstraints::new(jac, offset));
    }
    Ok(Instance {
        spec,
        x0: DVector::from_column_slice(&file.x0),
        description: "problem file",
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::parse("problem = \"example1\"\n").unwrap();
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.output.format, TraceFormat::Csv);
    }

    #[test]
    fn unknown_keys_are_rejected_with_context() {
        let err = RunConfig::parse("problem = \"example1\"\n[solver]\netaa = 1.0\n").unwrap_err();
        assert!(err.contains("etaa") && err.contains("line 3"), "{err}");
        let err = RunConfig::parse("problem = \"example1\"\nbogus = 2\n").unwrap_err();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn invalid_parameters_are_named() {
        let err = RunConfig::parse("problem = \"example1\"\n[solver]\neta_beta = 1.0\n").unwrap_err();
        assert!(err.contains("eta_beta < eta_gamma_plus"), "{err}");
    }

    #[test]
    fn synthetic_options() {
        assert!(named_instance("two_stage_synthetic", Some(3), Some(4)).is_ok());
        assert!(matches!(
            named_instance("example1", None, Some(4)),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            named_instance("nope", None, None),
            Err(CliError::UnknownProblem(_))
        ));
    }
}
