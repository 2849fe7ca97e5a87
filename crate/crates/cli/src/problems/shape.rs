use pdeopt::mesh::Mesh2D;
use pdeopt::optimize::{history_satisfies_armijo, Status};
use pdeopt::shapeopt::{
    check_shape_derivative, optimize_shape, smooth_field, InnerProduct, PoissonShape, ShapeGradientConfig,
    ShapeOptConfig, ShapeProblem,
};

use super::{check_steps, CheckLine, CheckReport, Outcome, Problem, VtkOutput};
use crate::config::Config;
use crate::error::CliError;
use crate::history::History;

fn inner_product(config: &Config) -> Result<InnerProduct, CliError> {
    let p = config.params();
    match p.string("inner_product", "h1")?.as_str() {
        "h1" => Ok(InnerProduct::H1 {
            mass_weight: p.positive("mass_weight", 1.0)?,
        }),
        "elasticity" => Ok(InnerProduct::Elasticity {
            mu: p.positive("mu", 1.0)?,
            lambda: p.f64("lambda", 0.5)?,
            damping: p.f64("damping", 0.1)?,
        }),
        "p_laplace" => Ok(InnerProduct::PLaplace {
            p: p.positive("p", 4.0)?,
            eps: p.positive("eps", 1e-8)?,
            mass_weight: p.positive("mass_weight", 1.0)?,
        }),
        other => Err(CliError::Config(format!(
            "params.inner_product: unknown inner product {other:?}; expected h1, elasticity or p_laplace"
        ))),
    }
}

fn initial_mesh(config: &Config) -> Result<Mesh2D, CliError> {
    Ok(Mesh2D::unit_disk(config.resolution(8))?)
}

pub fn run(config: &Config) -> Result<Outcome, CliError> {
    let gradient = ShapeGradientConfig::new(inner_product(config)?);
    let s = &config.optimizer;
    let defaults = ShapeOptConfig::default();
    let cfg = ShapeOptConfig {
        rtol: s.rtol.unwrap_or(1e-2),
        atol: s.atol.unwrap_or(defaults.atol),
        max_iter: s.max_iter.unwrap_or(50),
        linesearch: config.linesearch_config()?,
        quality_threshold: config.params().f64("quality_threshold", defaults.quality_threshold)?,
    };
    let mesh0 = initial_mesh(config)?;
    let result = optimize_shape(&mut PoissonShape, &mesh0, &gradient, &cfg)?;

    let mut history = History::new(Problem::ShapePoisson.header());
    for r in &result.history {
        history.push(vec![
            r.iter.into(),
            r.cost.into(),
            r.grad_norm.into(),
            r.step.into(),
            r.mesh_quality.unwrap_or(f64::NAN).into(),
        ]);
    }
    let first = &result.history[0];
    let last = result.history.last().expect("history starts with the initial record");
    let state = PoissonShape.solve_state(&result.mesh)?;
    let vtk = VtkOutput::new("shape_poisson", result.mesh.clone()).point("state", state);
    Ok(Outcome {
        problem: Problem::ShapePoisson,
        converged: result.status == Status::Converged,
        iterations: result.iterations(),
        cost: last.cost,
        measure: ("grad_norm", last.grad_norm),
        metrics: vec![
            ("grad_norm", last.grad_norm),
            ("grad_reduction", first.grad_norm / last.grad_norm),
            ("min_quality", result.mesh.min_quality()),
        ],
        armijo_ok: Some(history_satisfies_armijo(&result.history, cfg.linesearch.c1)),
        history,
        vtk: vec![vtk],
    })
}

/// Multiplies the shape derivative (gradient-check test hook).
struct Scaled {
    scale: f64,
}

impl ShapeProblem for Scaled {
    fn solve_state(&mut self, mesh: &Mesh2D) -> pdeopt::Result<Vec<f64>> {
        PoissonShape.solve_state(mesh)
    }

    fn solve_adjoint(&mut self, mesh: &Mesh2D, state: &[f64]) -> pdeopt::Result<Vec<f64>> {
        PoissonShape.solve_adjoint(mesh, state)
    }

    fn cost(&mut self, mesh: &Mesh2D, state: &[f64]) -> pdeopt::Result<f64> {
        PoissonShape.cost(mesh, state)
    }

    fn shape_derivative(&mut self, mesh: &Mesh2D, state: &[f64], adjoint: &[f64]) -> pdeopt::Result<Vec<f64>> {
        let d = PoissonShape.shape_derivative(mesh, state, adjoint)?;
        Ok(d.into_iter().map(|v| self.scale * v).collect())
    }
}

pub fn check(config: &Config) -> Result<CheckReport, CliError> {
    let mesh = initial_mesh(config)?;
    let steps = check_steps(config);
    let mut problem = Scaled {
        scale: config.gradient_check.scale.unwrap_or(1.0),
    };
    let lines = (0..config.gradient_check.directions.unwrap_or(5))
        .map(|k| {
            let field = smooth_field(&mesh, config.seed.wrapping_add(k as u64));
            Ok(CheckLine {
                label: format!("field {k}"),
                errors: check_shape_derivative(&mut problem, &mesh, &field, &steps)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(CheckReport { steps, lines })
}
