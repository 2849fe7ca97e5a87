//! Registry of runnable demo problems.

mod control;
mod mapping;
mod shape;
mod topology;

use pdeopt::mesh::Mesh2D;
use pdeopt::optimize::Gradient;
use pdeopt::optimize::Objective;

use crate::config::Config;
use crate::error::CliError;
use crate::history::History;

/// Relative FD error a gradient check must reach.
pub const CHECK_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    PoissonControl,
    ShapePoisson,
    TopoptSource,
    ConstrainedControl,
    SpacemappingFlow,
    SpacemappingSemilinear,
}

impl Problem {
    pub const ALL: [Problem; 6] = [
        Problem::PoissonControl,
        Problem::ShapePoisson,
        Problem::TopoptSource,
        Problem::ConstrainedControl,
        Problem::SpacemappingFlow,
        Problem::SpacemappingSemilinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Problem::PoissonControl => "poisson_control",
            Problem::ShapePoisson => "shape_poisson",
            Problem::TopoptSource => "topopt_source",
            Problem::ConstrainedControl => "constrained_control",
            Problem::SpacemappingFlow => "spacemapping_flow",
            Problem::SpacemappingSemilinear => "spacemapping_semilinear",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, CliError> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
            CliError::Config(format!(
                "problem: unknown problem {name:?}; valid names: {}",
                names.join(", ")
            ))
        })
    }

    pub fn description(self) -> &'static str {
        match self {
            Problem::PoissonControl => "distributed control of the Poisson equation on the unit square",
            Problem::ShapePoisson => "shape optimization of a Poisson state integral on the unit disk",
            Problem::TopoptSource => "level-set source identification on the unit square",
            Problem::ConstrainedControl => "Poisson control with an upper bound on the state integral",
            Problem::SpacemappingFlow => "space mapping for the outlet flow distribution of a channel",
            Problem::SpacemappingSemilinear => "space mapping from linear to cubic Poisson, quadrant controls",
        }
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            Problem::PoissonControl => &["iter", "cost", "grad_norm", "step"],
            Problem::ShapePoisson => &["iter", "cost", "grad_norm", "step", "min_quality"],
            Problem::TopoptSource => &["iter", "cost", "angle_deg", "kappa"],
            Problem::ConstrainedControl => &["iter", "cost", "mu", "max_violation", "inner_iterations"],
            Problem::SpacemappingFlow | Problem::SpacemappingSemilinear => {
                &["iter", "cost", "mapping_residual", "fine_evals"]
            }
        }
    }

    pub fn param_keys(self) -> &'static [&'static str] {
        match self {
            Problem::PoissonControl => &["alpha", "product"],
            Problem::ShapePoisson => &[
                "inner_product",
                "p",
                "eps",
                "mass_weight",
                "mu",
                "lambda",
                "damping",
                "quality_threshold",
            ],
            Problem::TopoptSource => &["algorithm", "memory", "kappa_init", "kappa_min", "angle_tol"],
            Problem::ConstrainedControl => &["alpha", "method", "mu0", "growth", "tol_feas", "max_outer", "offset"],
            Problem::SpacemappingFlow => &["tol"],
            Problem::SpacemappingSemilinear => &["tol", "reaction", "target"],
        }
    }
}

/// Mesh and fields for one VTK file.
#[derive(Debug, Clone)]
pub struct VtkOutput {
    pub name: String,
    pub mesh: Mesh2D,
    pub point_data: Vec<(String, Vec<f64>)>,
    pub cell_data: Vec<(String, Vec<f64>)>,
}

impl VtkOutput {
    pub fn new(name: impl Into<String>, mesh: Mesh2D) -> Self {
        Self {
            name: name.into(),
            mesh,
            point_data: Vec::new(),
            cell_data: Vec::new(),
        }
    }

    pub fn point(mut self, name: &str, values: Vec<f64>) -> Self {
        self.point_data.push((name.to_string(), values));
        self
    }

    pub fn cell(mut self, name: &str, values: Vec<f64>) -> Self {
        self.cell_data.push((name.to_string(), values));
        self
    }
}

/// Result of one demo run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub problem: Problem,
    pub history: History,
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
    /// Problem-specific stationarity measure for the summary line.
    pub measure: (&'static str, f64),
    /// Named final quantities (quality, imbalance, ...).
    pub metrics: Vec<(&'static str, f64)>,
    /// Whether every accepted line-search step satisfied Armijo, for
    /// problems that use a line search.
    pub armijo_ok: Option<bool>,
    pub vtk: Vec<VtkOutput>,
}

impl Outcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    pub fn summary(&self) -> String {
        let status = if self.converged { "converged" } else { "not converged" };
        format!(
            "{}: {status} after {} iterations, cost {:e}, {} {:e}",
            self.problem.name(),
            self.iterations,
            self.cost,
            self.measure.0,
            self.measure.1
        )
    }
}

pub fn run(config: &Config) -> Result<Outcome, CliError> {
    match config.problem()? {
        Problem::PoissonControl => control::run_poisson(config),
        Problem::ConstrainedControl => control::run_constrained(config),
        Problem::ShapePoisson => shape::run(config),
        Problem::TopoptSource => topology::run(config),
        Problem::SpacemappingFlow => mapping::run_flow(config),
        Problem::SpacemappingSemilinear => mapping::run_semilinear(config),
    }
}

/// FD-vs-adjoint sweep for one direction.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub label: String,
    pub errors: Vec<f64>,
}

impl CheckLine {
    pub fn best(&self) -> f64 {
        self.errors.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub steps: Vec<f64>,
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    /// Largest per-direction best error.
    pub fn worst_best(&self) -> f64 {
        self.lines.iter().map(CheckLine::best).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst_best() <= CHECK_THRESHOLD
    }
}

pub fn gradient_check(config: &Config) -> Result<CheckReport, CliError> {
    match config.problem()? {
        Problem::PoissonControl => control::check_poisson(config),
        Problem::ConstrainedControl => control::check_constrained(config),
        Problem::ShapePoisson => shape::check(config),
        other => Err(CliError::Config(format!(
            "problem: gradient-check is available for poisson_control, constrained_control and shape_poisson, not {}",
            other.name()
        ))),
    }
}

/// Multiplies the derivative of an objective (gradient-check test hook).
pub(crate) struct ScaledDerivative<'a> {
    pub inner: &'a mut dyn Objective,
    pub scale: f64,
}

impl Objective for ScaledDerivative<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&mut self, x: &[f64]) -> pdeopt::Result<f64> {
        self.inner.value(x)
    }

    fn gradient(&mut self, x: &[f64]) -> pdeopt::Result<Gradient> {
        let g = self.inner.gradient(x)?;
        Ok(Gradient {
            riesz: g.riesz.iter().map(|v| self.scale * v).collect(),
            derivative: g.derivative.iter().map(|v| self.scale * v).collect(),
        })
    }
}

pub(crate) fn check_steps(config: &Config) -> Vec<f64> {
    config
        .gradient_check
        .steps
        .clone()
        .unwrap_or_else(|| pdeopt::reduced_problem::FD_STEPS.to_vec())
}
