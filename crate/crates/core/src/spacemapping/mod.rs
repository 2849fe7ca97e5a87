//! Aggressive space mapping with good Broyden updates.
//!
//! The fine model is only ever evaluated; its derivatives are never
//! requested. Each iteration extracts the coarse parameter `p(x)` whose
//! coarse response matches the fine response at `x`, then takes a
//! quasi-Newton step on `p(x) = z*`.

mod flow;
mod semilinear;

pub use flow::{flow_imbalance, ChannelModel, ChannelPhysics};
pub use semilinear::{QuadrantModel, QuadrantPhysics};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linesearch::LineSearchConfig;
use crate::optimize::{minimize, Algorithm, Gradient, Objective, OptimizationResult, OptimizerConfig, Status};

/// Expensive model: responses only.
pub trait FineModel {
    fn evaluate(&mut self, x: &[f64]) -> Result<Vec<f64>>;

    /// Jacobian rows of the response. Space mapping never calls this.
    fn derivative(&mut self, _x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Err(Error::InvalidArgument("fine model provides no derivative".into()))
    }
}

/// Cheap model with derivatives and its own design objective.
pub trait CoarseModel {
    fn design_dim(&self) -> usize;
    fn response(&mut self, z: &[f64]) -> Result<Vec<f64>>;
    /// `Jᵀ w` for the response Jacobian `J` at `z`.
    fn response_transpose_apply(&mut self, z: &[f64], w: &[f64]) -> Result<Vec<f64>>;
    /// Design objective as a function of the response.
    fn objective(&self, response: &[f64]) -> f64;
    fn objective_gradient(&self, response: &[f64]) -> Vec<f64>;

    fn initial_design(&self) -> Vec<f64> {
        vec![0.0; self.design_dim()]
    }

    /// Coarse optimum `z*`.
    fn optimize(&mut self) -> Result<Vec<f64>>
    where
        Self: Sized,
    {
        let z0 = self.initial_design();
        let result = minimize_composite(self, &z0, 1.0, |m, r| (m.objective(r), m.objective_gradient(r)))?;
        if result.status == Status::MaxIterations {
            return Err(Error::NonConvergence {
                method: "coarse optimization",
                iterations: result.iterations(),
                residual: result.grad_norm,
            });
        }
        Ok(result.x)
    }
}

/// Counts fine-model evaluations and derivative requests.
#[derive(Debug, Clone)]
pub struct Instrumented<F> {
    pub inner: F,
    pub evaluations: usize,
    pub derivative_calls: usize,
}

impl<F> Instrumented<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            evaluations: 0,
            derivative_calls: 0,
        }
    }
}

impl<F: FineModel> FineModel for Instrumented<F> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.evaluations += 1;
        self.inner.evaluate(x)
    }

    fn derivative(&mut self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.derivative_calls += 1;
        self.inner.derivative(x)
    }
}

/// Optimizer settings shared by extraction and the coarse optimum.
pub fn inner_config() -> OptimizerConfig {
    OptimizerConfig {
        algorithm: Algorithm::Lbfgs,
        rtol: 1e-8,
        atol: 1e-13,
        max_iter: 200,
        lbfgs_memory: 5,
        linesearch: LineSearchConfig::default(),
    }
}

/// `phi(c(z)) / scale²`, where `phi` returns the value and the gradient with
/// respect to the response.
struct Composite<'a, C, P> {
    coarse: &'a mut C,
    weight: f64,
    phi: P,
}

impl<C: CoarseModel, P: Fn(&C, &[f64]) -> (f64, Vec<f64>)> Objective for Composite<'_, C, P> {
    fn dim(&self) -> usize {
        self.coarse.design_dim()
    }

    fn value(&mut self, z: &[f64]) -> Result<f64> {
        let r = self.coarse.response(z)?;
        Ok(self.weight * (self.phi)(self.coarse, &r).0)
    }

    fn gradient(&mut self, z: &[f64]) -> Result<Gradient> {
        let r = self.coarse.response(z)?;
        let dr: Vec<f64> = (self.phi)(self.coarse, &r).1.iter().map(|v| self.weight * v).collect();
        Ok(Gradient::euclidean(self.coarse.response_transpose_apply(z, &dr)?))
    }
}

fn minimize_composite<C: CoarseModel>(
    coarse: &mut C,
    z0: &[f64],
    scale: f64,
    phi: impl Fn(&C, &[f64]) -> (f64, Vec<f64>),
) -> Result<OptimizationResult> {
    check_len(coarse.design_dim(), z0.len())?;
    let mut objective = Composite {
        coarse,
        weight: 1.0 / (scale * scale),
        phi,
    };
    minimize(&mut objective, z0, &inner_config())
}

/// `argmin_z ½‖c(z) - r‖² / scale²` from the warm start `z0`.
pub fn parameter_extraction<C: CoarseModel>(coarse: &mut C, r: &[f64], z0: &[f64], scale: f64) -> Result<Vec<f64>> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "response scale must be positive, got {scale}"
        )));
    }
    let result = minimize_composite(coarse, z0, scale, |_, c| {
        let d: Vec<f64> = c.iter().zip(r).map(|(c, r)| c - r).collect();
        (0.5 * d.iter().map(|v| v * v).sum::<f64>(), d)
    })?;
    if result.status == Status::MaxIterations {
        return Err(Error::ExtractionFailure {
            best: result.x,
            gradient_norm: result.grad_norm,
        });
    }
    Ok(result.x)
}

/// Good Broyden update `B += (Δp - B Δx) Δxᵀ / ⟨Δx, Δx⟩`; skipped when
/// `‖Δx‖ < 1e-14`.
pub fn broyden_update(b: &mut DMatrix<f64>, dx: &[f64], dp: &[f64]) {
    let dx = DVector::from_column_slice(dx);
    let dp = DVector::from_column_slice(dp);
    let ss = dx.dot(&dx);
    if ss.sqrt() < 1e-14 {
        return;
    }
    let defect = &dp - &*b * &dx;
    *b += defect * dx.transpose() / ss;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceMappingConfig {
    /// Relative tolerance on `‖p - z*‖ / ‖z*‖` (absolute when `z* = 0`).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpaceMappingConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceMappingRecord {
    pub iter: usize,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Coarse objective at the fine response.
    pub cost: f64,
    /// `‖p - z*‖`.
    pub mapping_residual: f64,
    pub fine_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceMappingStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceMappingResult {
    /// Best fine design (smallest mapping residual).
    pub x: Vec<f64>,
    pub z_star: Vec<f64>,
    pub history: Vec<SpaceMappingRecord>,
    pub status: SpaceMappingStatus,
    /// Broyden matrices after each update, for the secant check.
    pub updates: Vec<BroydenUpdate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroydenUpdate {
    pub b: DMatrix<f64>,
    pub dx: Vec<f64>,
    pub dp: Vec<f64>,
}

impl SpaceMappingResult {
    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Solves `B h = rhs`, resetting `B` to the identity once if it is singular.
fn broyden_solve(b: &mut DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let rhs = DVector::from_column_slice(rhs);
    let finite = |h: &DVector<f64>| h.iter().all(|v| v.is_finite());
    if let Some(h) = b.clone().lu().solve(&rhs).filter(finite) {
        return Ok(h.as_slice().to_vec());
    }
    log::warn!("space mapping: singular Broyden matrix, resetting to identity");
    *b = DMatrix::identity(b.nrows(), b.ncols());
    b.clone()
        .lu()
        .solve(&rhs)
        .filter(finite)
        .map(|h| h.as_slice().to_vec())
        .ok_or_else(|| Error::StepFailure("Broyden system is singular after reset".into()))
}

/// Aggressive space mapping from the coarse optimum.
pub fn solve<F: FineModel, C: CoarseModel>(
    fine: &mut F,
    coarse: &mut C,
    cfg: &SpaceMappingConfig,
) -> Result<SpaceMappingResult> {
    let z_star = coarse.optimize()?;
    solve_from(fine, coarse, &z_star, cfg)
}

/// As [`solve`], with a precomputed coarse optimum.
pub fn solve_from<F: FineModel, C: CoarseModel>(
    fine: &mut F,
    coarse: &mut C,
    z_star: &[f64],
    cfg: &SpaceMappingConfig,
) -> Result<SpaceMappingResult> {
    let n = coarse.design_dim();
    check_len(n, z_star.len())?;
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(
            "space mapping tolerance must be positive".into(),
        ));
    }
    let z_norm = z_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = if z_norm > 0.0 { cfg.tol * z_norm } else { cfg.tol };
    let reference = coarse.response(z_star)?;
    let scale = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if scale > 0.0 { scale } else { 1.0 };

    let mut fine_evals = 0;
    let mut x = z_star.to_vec();
    let r = fine.evaluate(&x)?;
    fine_evals += 1;
    let mut p = parameter_extraction(coarse, &r, z_star, scale)?;
    let mut residual = distance(&p, z_star);
    let mut history = vec![SpaceMappingRecord {
        iter: 0,
        x: x.clone(),
        p: p.clone(),
        cost: coarse.objective(&r),
        mapping_residual: residual,
        fine_evals,
    }];
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut updates = Vec::new();
    let mut status = SpaceMappingStatus::MaxIterations;
    let mut k = 0;
    loop {
        if residual <= tol {
            status = SpaceMappingStatus::Converged;
            break;
        }
        if k == cfg.max_iter {
            break;
        }
        k += 1;
        let rhs: Vec<f64> = p.iter().zip(z_star).map(|(p, z)| z - p).collect();
        let h = broyden_solve(&mut b, &rhs)?;
        let x_new: Vec<f64> = x.iter().zip(&h).map(|(x, h)| x + h).collect();
        let r = fine.evaluate(&x_new)?;
        fine_evals += 1;
        let p_new = parameter_extraction(coarse, &r, &p, scale)?;
        let dp: Vec<f64> = p_new.iter().zip(&p).map(|(a, b)| a - b).collect();
        broyden_update(&mut b, &h, &dp);
        updates.push(BroydenUpdate {
            b: b.clone(),
            dx: h,
            dp,
        });
        x = x_new;
        p = p_new;
        residual = distance(&p, z_star);
        history.push(SpaceMappingRecord {
            iter: k,
            x: x.clone(),
            p: p.clone(),
            cost: coarse.objective(&r),
            mapping_residual: residual,
            fine_evals,
        });
    }
    let best = history
        .iter()
        .min_by(|a, b| a.mapping_residual.total_cmp(&b.mapping_residual))
        .map(|r| r.x.clone())
        .unwrap_or(x);
    Ok(SpaceMappingResult {
        x: best,
        z_star: z_star.to_vec(),
        history,
        status,
        updates,
    })
}
