//! Run configuration: TOML with fixed top-level sections and per-problem
//! `[params]`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use pdeopt::linesearch::{LineSearchConfig, LineSearchMethod};
use pdeopt::optimize::{Algorithm, OptimizerConfig};
use serde::Deserialize;

use crate::error::CliError;
use crate::problems::Problem;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub vtk: bool,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub linesearch: LineSearchSection,
    #[serde(default)]
    pub params: toml::Table,
    #[serde(default)]
    pub gradient_check: GradientCheckSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub resolution: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub algorithm: Option<String>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub max_iter: Option<usize>,
    pub memory: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSearchSection {
    pub method: Option<String>,
    pub c1: Option<f64>,
    pub shrink: Option<f64>,
    pub alpha0: Option<f64>,
    pub max_trials: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientCheckSection {
    pub steps: Option<Vec<f64>>,
    pub directions: Option<usize>,
    /// Test hook: multiplies the adjoint derivative.
    pub scale: Option<f64>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Config = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        Problem::from_name(&self.problem)
    }

    /// Output directory, overridden by `PDEOPT_OUTPUT_DIR`.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os("PDEOPT_OUTPUT_DIR") {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let problem = self.problem()?;
        let allowed: BTreeSet<&str> = problem.param_keys().iter().copied().collect();
        for key in self.params.keys() {
            if !allowed.contains(key.as_str()) {
                return Err(CliError::Config(format!(
                    "params.{key} is not a parameter of {}; expected one of: {}",
                    problem.name(),
                    problem.param_keys().join(", ")
                )));
            }
        }
        if self.mesh.resolution == Some(0) {
            return Err(CliError::Config("mesh.resolution must be positive".into()));
        }
        self.optimizer_config(OptimizerConfig::default())?;
        if let Some(steps) = &self.gradient_check.steps {
            if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0)) {
                return Err(CliError::Config(
                    "gradient_check.steps must be nonempty and positive".into(),
                ));
            }
        }
        if self.gradient_check.directions == Some(0) {
            return Err(CliError::Config("gradient_check.directions must be positive".into()));
        }
        Ok(())
    }

    pub fn resolution(&self, default: usize) -> usize {
        self.mesh.resolution.unwrap_or(default)
    }

    pub fn linesearch_config(&self) -> Result<LineSearchConfig, CliError> {
        let s = &self.linesearch;
        let mut cfg = LineSearchConfig::default();
        if let Some(m) = &s.method {
            cfg.method = match m.as_str() {
                "armijo" => LineSearchMethod::Armijo,
                "polynomial" => LineSearchMethod::Polynomial,
                other => {
                    return Err(CliError::Config(format!(
                        "linesearch.method: unknown method {other:?}; expected armijo or polynomial"
                    )))
                }
            };
        }
        cfg.c1 = s.c1.unwrap_or(cfg.c1);
        cfg.shrink = s.shrink.unwrap_or(cfg.shrink);
        cfg.alpha0 = s.alpha0.unwrap_or(cfg.alpha0);
        cfg.max_trials = s.max_trials.unwrap_or(cfg.max_trials);
        cfg.validate()
            .map_err(|e| CliError::Config(format!("linesearch: {e}")))?;
        Ok(cfg)
    }

    /// Optimizer settings on top of problem-specific defaults.
    pub fn optimizer_config(&self, defaults: OptimizerConfig) -> Result<OptimizerConfig, CliError> {
        let s = &self.optimizer;
        let mut cfg = defaults;
        if let Some(a) = &s.algorithm {
            cfg.algorithm = match a.as_str() {
                "steepest" => Algorithm::Steepest,
                "ncg" => Algorithm::Ncg,
                "lbfgs" => Algorithm::Lbfgs,
                other => {
                    return Err(CliError::Config(format!(
                        "optimizer.algorithm: unknown algorithm {other:?}; expected steepest, ncg or lbfgs"
                    )))
                }
            };
        }
        cfg.rtol = s.rtol.unwrap_or(cfg.rtol);
        cfg.atol = s.atol.unwrap_or(cfg.atol);
        cfg.max_iter = s.max_iter.unwrap_or(cfg.max_iter);
        cfg.lbfgs_memory = s.memory.unwrap_or(cfg.lbfgs_memory);
        cfg.linesearch = self.linesearch_config()?;
        cfg.validate()
            .map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
        Ok(cfg)
    }

    pub fn params(&self) -> Params<'_> {
        Params { table: &self.params }
    }
}

/// Typed access to `[params]`; keys were checked against the problem.
pub struct Params<'a> {
    table: &'a toml::Table,
}

impl Params<'_> {
    pub fn f64(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.table.get(key) {
            None => Ok(default),
            Some(toml::Value::Float(v)) => Ok(*v),
            Some(toml::Value::Integer(v)) => Ok(*v as f64),
            Some(other) => Err(type_error(key, "a number", other)),
        }
    }

    pub fn positive(&self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.f64(key, default)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(CliError::Config(format!("params.{key} must be positive, got {v}")))
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.table.get(key) {
            None => Ok(default),
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(*v as usize),
            Some(other) => Err(type_error(key, "a nonnegative integer", other)),
        }
    }

    pub fn string(&self, key: &str, default: &str) -> Result<String, CliError> {
        match self.table.get(key) {
            None => Ok(default.to_string()),
            Some(toml::Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(type_error(key, "a string", other)),
        }
    }

    pub fn f64_array(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.table.get(key) {
            None => Ok(default.to_vec()),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Float(f) => Ok(*f),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    other => Err(type_error(key, "an array of numbers", other)),
                })
                .collect(),
            Some(other) => Err(type_error(key, "an array of numbers", other)),
        }
    }
}

fn type_error(key: &str, expected: &str, got: &toml::Value) -> CliError {
    CliError::Config(format!("params.{key} must be {expected}, got {}", got.type_str()))
}
