use pdeopt::constraints::{
    augmented_lagrangian_solve, quadratic_penalty_solve, Constraint, ConstraintKind, OuterLoopConfig, OuterStatus,
    StateConstraint,
};
use pdeopt::optimize::{history_satisfies_armijo, minimize, Objective, OptimizerConfig, Status};
use pdeopt::reduced_problem::{
    check_gradient, random_direction, PoissonControl, ReducedFunctional, ScalarProduct, StateIntegral,
};

use super::{check_steps, CheckLine, CheckReport, Outcome, Problem, ScaledDerivative, VtkOutput};
use crate::config::Config;
use crate::error::CliError;
use crate::history::History;

const DEFAULT_ALPHA: f64 = 1e-3;

fn product(config: &Config, problem: &PoissonControl) -> Result<ScalarProduct, CliError> {
    match config.params().string("product", "l2")?.as_str() {
        "l2" => Ok(ScalarProduct::Matrix(problem.mass().clone())),
        "identity" => Ok(ScalarProduct::Identity),
        other => Err(CliError::Config(format!(
            "params.product: unknown scalar product {other:?}; expected l2 or identity"
        ))),
    }
}

fn functional(config: &Config, n: usize) -> Result<ReducedFunctional<PoissonControl>, CliError> {
    let alpha = config.params().positive("alpha", DEFAULT_ALPHA)?;
    let problem = PoissonControl::new(n, alpha)?;
    let product = product(config, &problem)?;
    Ok(ReducedFunctional::new(problem, product)?)
}

fn poisson_defaults() -> OptimizerConfig {
    OptimizerConfig {
        rtol: 1e-6,
        max_iter: 200,
        ..OptimizerConfig::default()
    }
}

pub fn run_poisson(config: &Config) -> Result<Outcome, CliError> {
    let cfg = config.optimizer_config(poisson_defaults())?;
    let mut f = functional(config, config.resolution(16))?;
    let q0 = vec![0.0; f.problem().mesh().num_nodes()];
    let result = minimize(&mut f, &q0, &cfg)?;

    let mut history = History::new(Problem::PoissonControl.header());
    for r in &result.history {
        history.push(vec![r.iter.into(), r.cost.into(), r.grad_norm.into(), r.step.into()]);
    }
    let state = f.state(&result.x)?;
    let p = f.problem();
    let vtk = VtkOutput::new("poisson_control", p.mesh().clone())
        .point("control", result.x.clone())
        .point("state", state)
        .point("target", p.target().to_vec());
    Ok(Outcome {
        problem: Problem::PoissonControl,
        converged: result.status == Status::Converged,
        iterations: result.iterations(),
        cost: result.cost,
        measure: ("grad_norm", result.grad_norm),
        metrics: vec![("grad_norm", result.grad_norm)],
        armijo_ok: Some(history_satisfies_armijo(&result.history, cfg.linesearch.c1)),
        history,
        vtk: vec![vtk],
    })
}

/// Random base point and directions, all drawn from the seed.
fn sweep(config: &Config, objective: &mut dyn Objective, label: &str) -> Result<Vec<CheckLine>, CliError> {
    let n = objective.dim();
    let seed = config.seed;
    let q = random_direction(n, seed);
    let steps = check_steps(config);
    let scale = config.gradient_check.scale.unwrap_or(1.0);
    let mut scaled = ScaledDerivative {
        inner: objective,
        scale,
    };
    (0..config.gradient_check.directions.unwrap_or(3))
        .map(|k| {
            let d = random_direction(n, seed.wrapping_add(1 + k as u64));
            let errors = check_gradient(&mut scaled, &q, &d, &steps)?;
            Ok(CheckLine {
                label: format!("{label} direction {k}"),
                errors,
            })
        })
        .collect()
}

pub fn check_poisson(config: &Config) -> Result<CheckReport, CliError> {
    let mut f = functional(config, config.resolution(16))?;
    Ok(CheckReport {
        steps: check_steps(config),
        lines: sweep(config, &mut f, "cost")?,
    })
}

fn constrained_parts(
    config: &Config,
) -> Result<(ReducedFunctional<PoissonControl>, ReducedFunctional<StateIntegral>), CliError> {
    let n = config.resolution(8);
    let f = functional(config, n)?;
    let alpha = config.params().positive("alpha", DEFAULT_ALPHA)?;
    let integral = ReducedFunctional::new(
        StateIntegral {
            state: PoissonControl::new(n, alpha)?,
        },
        f.product().clone(),
    )?;
    Ok((f, integral))
}

pub fn run_constrained(config: &Config) -> Result<Outcome, CliError> {
    let params = config.params();
    let inner = config.optimizer_config(OptimizerConfig {
        rtol: 1e-6,
        max_iter: 300,
        ..OptimizerConfig::default()
    })?;
    let defaults = OuterLoopConfig::default();
    let outer = OuterLoopConfig {
        mu0: params.positive("mu0", defaults.mu0)?,
        growth: params.positive("growth", defaults.growth)?,
        tol_feas: params.positive("tol_feas", 1e-6)?,
        max_outer: params.usize("max_outer", defaults.max_outer)?,
        inner,
        ..defaults
    };
    let method = params.string("method", "augmented_lagrangian")?;
    if method != "augmented_lagrangian" && method != "quadratic_penalty" {
        return Err(CliError::Config(format!(
            "params.method: unknown method {method:?}; expected augmented_lagrangian or quadratic_penalty"
        )));
    }
    let offset = params.f64("offset", 0.05)?;

    let (mut f, mut integral) = constrained_parts(config)?;
    let q0 = vec![0.0; f.problem().mesh().num_nodes()];
    // the bound sits `offset` below the unconstrained optimum's state integral
    let free = minimize(&mut f, &q0, &OptimizerConfig { rtol: 1e-8, ..inner })?;
    let bound = integral.evaluate(&free.x)? - offset;
    let mut cons: Vec<Box<dyn Constraint>> = vec![Box::new(StateConstraint {
        kind: ConstraintKind::Inequality,
        functional: integral,
        bound,
    })];
    let result = if method == "augmented_lagrangian" {
        augmented_lagrangian_solve(&mut f, &mut cons, &q0, &[0.0], &outer)?
    } else {
        quadratic_penalty_solve(&mut f, &mut cons, &q0, &outer)?
    };

    let mut history = History::new(Problem::ConstrainedControl.header());
    for r in &result.history {
        history.push(vec![
            r.outer.into(),
            r.cost.into(),
            r.mu.into(),
            r.max_violation.into(),
            r.inner_iterations.into(),
        ]);
    }
    let armijo = result
        .inner_histories
        .iter()
        .all(|h| history_satisfies_armijo(h, inner.linesearch.c1));
    let cost = result.history.last().map_or(f64::NAN, |r| r.cost);
    let state = f.state(&result.q)?;
    let vtk = VtkOutput::new("constrained_control", f.problem().mesh().clone())
        .point("control", result.q.clone())
        .point("state", state);
    Ok(Outcome {
        problem: Problem::ConstrainedControl,
        converged: result.status == OuterStatus::Converged,
        iterations: result.history.last().map_or(0, |r| r.outer),
        cost,
        measure: ("max_violation", result.final_violation()),
        metrics: vec![
            ("max_violation", result.final_violation()),
            ("lambda", result.lambda.first().copied().unwrap_or(0.0)),
            ("bound", bound),
        ],
        armijo_ok: Some(armijo),
        history,
        vtk: vec![vtk],
    })
}

pub fn check_constrained(config: &Config) -> Result<CheckReport, CliError> {
    let (mut f, mut integral) = constrained_parts(config)?;
    let mut lines = sweep(config, &mut f, "cost")?;
    lines.extend(sweep(config, &mut integral, "state integral")?);
    Ok(CheckReport {
        steps: check_steps(config),
        lines,
    })
}
