use pdeopt::spacemapping::{
    flow_imbalance, solve, ChannelModel, ChannelPhysics, CoarseModel, FineModel, Instrumented, QuadrantModel,
    QuadrantPhysics, SpaceMappingConfig, SpaceMappingResult, SpaceMappingStatus,
};

use super::{Outcome, Problem, VtkOutput};
use crate::config::Config;
use crate::error::CliError;
use crate::history::History;

fn sm_config(config: &Config) -> Result<SpaceMappingConfig, CliError> {
    let defaults = SpaceMappingConfig::default();
    Ok(SpaceMappingConfig {
        tol: config.params().positive("tol", defaults.tol)?,
        max_iter: config.optimizer.max_iter.unwrap_or(defaults.max_iter),
    })
}

fn outcome(
    problem: Problem,
    result: &SpaceMappingResult,
    derivative_calls: usize,
    mut metrics: Vec<(&'static str, f64)>,
    vtk: Vec<VtkOutput>,
) -> Outcome {
    let mut history = History::new(problem.header());
    for r in &result.history {
        history.push(vec![
            r.iter.into(),
            r.cost.into(),
            r.mapping_residual.into(),
            r.fine_evals.into(),
        ]);
    }
    let last = result.history.last().expect("history starts with the initial record");
    metrics.push(("fine_evals", last.fine_evals as f64));
    metrics.push(("fine_derivative_calls", derivative_calls as f64));
    Outcome {
        problem,
        converged: result.status == SpaceMappingStatus::Converged,
        iterations: result.iterations(),
        cost: last.cost,
        measure: ("mapping_residual", last.mapping_residual),
        metrics,
        armijo_ok: None,
        history,
        vtk,
    }
}

pub fn run_flow(config: &Config) -> Result<Outcome, CliError> {
    let cfg = sm_config(config)?;
    let r = config.resolution(1);
    let mut coarse = ChannelModel::new(r, ChannelPhysics::Linear)?;
    let mut fine = Instrumented::new(ChannelModel::new(2 * r, ChannelPhysics::Nonlinear)?);
    let result = solve(&mut fine, &mut coarse, &cfg)?;
    let rates = fine.inner.rates(&result.x)?;
    let mut vtk = Vec::new();
    if config.vtk {
        for rec in &result.history {
            let (mesh, u, kappa) = fine.inner.potential(&rec.x)?;
            vtk.push(
                VtkOutput::new(format!("flow_iter_{:03}", rec.iter), mesh)
                    .point("potential", u)
                    .cell("kappa", kappa),
            );
        }
    }
    let mut metrics = vec![("imbalance", flow_imbalance(&rates))];
    metrics.extend([("rate_1", rates[0]), ("rate_2", rates[1]), ("rate_3", rates[2])]);
    Ok(outcome(
        Problem::SpacemappingFlow,
        &result,
        fine.derivative_calls,
        metrics,
        vtk,
    ))
}

pub fn run_semilinear(config: &Config) -> Result<Outcome, CliError> {
    let cfg = sm_config(config)?;
    let p = config.params();
    let n = config.resolution(8);
    let target = p.f64_array("target", &[0.3, 0.5, 0.4, 0.6])?;
    if target.len() != 4 {
        return Err(CliError::Config(format!(
            "params.target needs 4 quadrant values, got {}",
            target.len()
        )));
    }
    let reaction = p.f64("reaction", 10.0)?;
    if reaction < 0.0 {
        return Err(CliError::Config(format!(
            "params.reaction must be nonnegative, got {reaction}"
        )));
    }
    let mut coarse = QuadrantModel::new(n, QuadrantPhysics::Linear, target.clone())
        .map_err(|e| CliError::Config(format!("mesh.resolution: {e}")))?;
    let mut fine = Instrumented::new(QuadrantModel::new(
        2 * n,
        QuadrantPhysics::Cubic(reaction),
        target.clone(),
    )?);
    let result = solve(&mut fine, &mut coarse, &cfg)?;
    let response = fine.inner.evaluate(&result.x)?;
    let miss = response
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut vtk = Vec::new();
    if config.vtk {
        let state = fine.inner.state(&result.x)?;
        vtk.push(VtkOutput::new("semilinear_state", fine.inner.mesh().clone()).point("state", state));
    }
    let coarse_response = coarse.response(&result.z_star)?;
    let coarse_cost = coarse.objective(&coarse_response);
    Ok(outcome(
        Problem::SpacemappingSemilinear,
        &result,
        fine.derivative_calls,
        vec![("target_miss", miss), ("coarse_cost", coarse_cost)],
        vtk,
    ))
}
