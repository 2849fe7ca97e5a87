use pdeopt::topopt::{solve, SourceIdentification, TopAlgorithm, TopOptConfig, TopStatus, TopologyProblem};

use super::{Outcome, Problem, VtkOutput};
use crate::config::Config;
use crate::error::CliError;
use crate::history::History;

pub fn run(config: &Config) -> Result<Outcome, CliError> {
    let p = config.params();
    let defaults = TopOptConfig::default();
    let algorithm = match p.string("algorithm", "convex_combination")?.as_str() {
        "convex_combination" => TopAlgorithm::ConvexCombination,
        "quasi_newton" => TopAlgorithm::QuasiNewton {
            memory: p.usize("memory", 5)?,
        },
        other => {
            return Err(CliError::Config(format!(
                "params.algorithm: unknown algorithm {other:?}; expected convex_combination or quasi_newton"
            )))
        }
    };
    let cfg = TopOptConfig {
        kappa_init: p.f64("kappa_init", defaults.kappa_init)?,
        kappa_min: p.f64("kappa_min", defaults.kappa_min)?,
        angle_tol: p.f64("angle_tol", defaults.angle_tol)?,
        max_iter: config.optimizer.max_iter.unwrap_or(defaults.max_iter),
        algorithm,
    };
    cfg.validate().map_err(|e| CliError::Config(format!("params: {e}")))?;

    let mut problem = SourceIdentification::demo(config.resolution(32))?;
    let psi0 = vec![1.0; problem.mesh().num_nodes()];
    let mut supplier = problem.supplier();
    let result = solve(&mut problem, &psi0, &mut supplier, &cfg)?;

    let mut history = History::new(Problem::TopoptSource.header());
    for r in &result.history {
        history.push(vec![r.iter.into(), r.cost.into(), r.angle_deg.into(), r.kappa.into()]);
    }
    let last = result.history.last().expect("history starts with the initial record");
    let first_below_5 = result
        .history
        .iter()
        .find(|r| r.angle_deg <= 5.0)
        .map_or(f64::NAN, |r| r.iter as f64);
    let material: Vec<f64> = problem
        .layout(&result.psi)
        .into_iter()
        .map(|b| b as u8 as f64)
        .collect();
    let state = problem.solve_state(&result.psi)?;
    let vtk = VtkOutput::new("topopt_source", problem.mesh().clone())
        .point("psi", result.psi.clone())
        .point("state", state)
        .point("target", problem.target().to_vec())
        .cell("material", material);
    Ok(Outcome {
        problem: Problem::TopoptSource,
        converged: result.status == TopStatus::Converged,
        iterations: result.iterations(),
        cost: last.cost,
        measure: ("angle_deg", last.angle_deg),
        metrics: vec![("angle_deg", last.angle_deg), ("first_iter_below_5deg", first_below_5)],
        armijo_ok: None,
        history,
        vtk: vec![vtk],
    })
}
