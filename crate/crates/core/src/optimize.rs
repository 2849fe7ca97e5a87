//! First-order reduced-space optimizers: steepest descent, nonlinear CG
//! (Polak-Ribière+) and L-BFGS, all measured in a design scalar product.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::fem::dot;
use crate::linesearch::{self, LineSearchConfig};

/// Derivative of an objective together with its Riesz representative in the
/// design scalar product (`M riesz = derivative`).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub riesz: Vec<f64>,
    pub derivative: Vec<f64>,
}

impl Gradient {
    /// Euclidean gradient, for which both vectors coincide.
    pub fn euclidean(g: Vec<f64>) -> Self {
        Self {
            riesz: g.clone(),
            derivative: g,
        }
    }

    /// Norm in the design scalar product.
    pub fn norm(&self) -> f64 {
        dot(&self.riesz, &self.derivative).max(0.0).sqrt()
    }
}

/// A differentiable function of a design vector.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&mut self, x: &[f64]) -> Result<f64>;
    fn gradient(&mut self, x: &[f64]) -> Result<Gradient>;
    /// Design scalar product `a^T M b`.
    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, b)
    }
    /// Solves `M g = derivative`.
    fn riesz(&self, derivative: &[f64]) -> Result<Vec<f64>> {
        Ok(derivative.to_vec())
    }
}

/// Objective built from closures, using the Euclidean scalar product.
pub struct FnObjective<F, G> {
    dim: usize,
    value: F,
    gradient: G,
}

impl<F, G> FnObjective<F, G>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    pub fn new(dim: usize, value: F, gradient: G) -> Self {
        Self { dim, value, gradient }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&mut self, x: &[f64]) -> Result<f64> {
        Ok((self.value)(x))
    }

    fn gradient(&mut self, x: &[f64]) -> Result<Gradient> {
        Ok(Gradient::euclidean((self.gradient)(x)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Steepest,
    Ncg,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub rtol: f64,
    pub atol: f64,
    pub max_iter: usize,
    /// Number of stored curvature pairs; 0 turns L-BFGS into steepest descent.
    pub lbfgs_memory: usize,
    pub linesearch: LineSearchConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Lbfgs,
            rtol: 1e-3,
            atol: 0.0,
            max_iter: 100,
            lbfgs_memory: 5,
            linesearch: LineSearchConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol >= 0.0) || !(self.atol >= 0.0) {
            return Err(Error::InvalidArgument("tolerances must be nonnegative".into()));
        }
        self.linesearch.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub mesh_quality: Option<f64>,
    /// Directional derivative along the search direction that produced this
    /// iterate; zero for the initial record.
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    pub history: Vec<IterationRecord>,
    pub status: Status,
}

impl OptimizationResult {
    /// Number of accepted updates.
    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }
}

/// True when every recorded step satisfies the Armijo inequality with `c1`.
pub fn history_satisfies_armijo(history: &[IterationRecord], c1: f64) -> bool {
    history
        .windows(2)
        .all(|w| w[1].cost <= w[0].cost + c1 * w[1].step * w[1].slope)
}

/// Polak-Ribière+ direction with restart to steepest descent when the result
/// is not a descent direction. Returns the direction and the `beta` used.
pub fn ncg_direction(
    g_new: &[f64],
    g_old: &[f64],
    d_old: &[f64],
    inner: impl Fn(&[f64], &[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let diff: Vec<f64> = g_new.iter().zip(g_old).map(|(a, b)| a - b).collect();
    let old_sq = inner(g_old, g_old);
    let mut beta = if old_sq > 0.0 {
        (inner(g_new, &diff) / old_sq).max(0.0)
    } else {
        0.0
    };
    let mut d: Vec<f64> = g_new.iter().zip(d_old).map(|(g, d)| -g + beta * d).collect();
    if !(inner(&d, g_new) < 0.0) {
        beta = 0.0;
        d = g_new.iter().map(|g| -g).collect();
    }
    (d, beta)
}

struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
    sy: f64,
    yy: f64,
}

/// Two-loop recursion: returns `-H g` for the stored pairs.
fn lbfgs_direction(g: &[f64], pairs: &VecDeque<CurvaturePair>, inner: impl Fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (i, p) in pairs.iter().enumerate().rev() {
        let a = p.rho * inner(&p.s, &q);
        alphas[i] = a;
        q.iter_mut().zip(&p.y).for_each(|(q, y)| *q -= a * y);
    }
    if let Some(last) = pairs.back() {
        let gamma = last.sy / last.yy;
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (i, p) in pairs.iter().enumerate() {
        let b = p.rho * inner(&p.y, &q);
        let coef = alphas[i] - b;
        q.iter_mut().zip(&p.s).for_each(|(r, s)| *r += coef * s);
    }
    q.iter().map(|v| -v).collect()
}

/// Minimizes `objective` from `x0`.
///
/// Terminates when `||g_k|| <= max(atol, rtol ||g_0||)` or after `max_iter`
/// accepted steps. A failed line search ends the run with the last accepted
/// iterate and [`Status::LineSearchFailed`].
pub fn minimize(objective: &mut dyn Objective, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut x = x0.to_vec();
    let mut f = objective.value(&x)?;
    if !f.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let mut g = objective.gradient(&x)?;
    let g0 = g.norm();
    let mut history = vec![IterationRecord {
        iter: 0,
        cost: f,
        grad_norm: g0,
        step: 0.0,
        mesh_quality: None,
        slope: 0.0,
    }];
    let tol = cfg.atol.max(cfg.rtol * g0);
    let mut status = Status::MaxIterations;
    if g0 <= cfg.atol || g0 == 0.0 {
        status = Status::Converged;
    }

    let mut pairs: VecDeque<CurvaturePair> = VecDeque::new();
    let mut d_old: Vec<f64> = Vec::new();
    let mut g_old: Vec<f64> = Vec::new();
    let mut last_step: Option<(f64, bool)> = None;
    let mut k = 0;
    while status != Status::Converged && k < cfg.max_iter {
        k += 1;
        let inner = |a: &[f64], b: &[f64]| objective.inner(a, b);
        let mut d = match cfg.algorithm {
            Algorithm::Steepest => g.riesz.iter().map(|v| -v).collect(),
            Algorithm::Ncg if d_old.is_empty() => g.riesz.iter().map(|v| -v).collect(),
            Algorithm::Ncg => ncg_direction(&g.riesz, &g_old, &d_old, inner).0,
            Algorithm::Lbfgs => lbfgs_direction(&g.riesz, &pairs, inner),
        };
        let mut slope = dot(&d, &g.derivative);
        if !(slope < 0.0) {
            pairs.clear();
            d = g.riesz.iter().map(|v| -v).collect();
            slope = dot(&d, &g.derivative);
        }
        if !(slope < 0.0) {
            // gradient vanished to round-off
            status = Status::Converged;
            break;
        }

        let initial = if cfg.algorithm == Algorithm::Lbfgs && !pairs.is_empty() {
            cfg.linesearch.alpha0
        } else {
            match last_step {
                None => cfg.linesearch.alpha0,
                Some((a, true)) => 2.0 * a,
                Some((a, false)) => a,
            }
        };
        let mut trial = vec![0.0; x.len()];
        let outcome = linesearch::search(
            |a| {
                trial
                    .iter_mut()
                    .zip(x.iter().zip(&d))
                    .for_each(|(t, (x, d))| *t = x + a * d);
                match objective.value(&trial) {
                    Ok(v) => v,
                    Err(Error::NonFiniteCost) => f64::NAN,
                    Err(_) => f64::INFINITY,
                }
            },
            f,
            slope,
            initial,
            &cfg.linesearch,
        );
        let outcome = match outcome {
            Ok(o) => o,
            Err(Error::LineSearchFailure { .. }) => {
                status = Status::LineSearchFailed;
                break;
            }
            Err(e) => return Err(e),
        };
        let step = outcome.step;
        last_step = Some((step, outcome.trials.len() == 1));
        let x_new: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + step * d).collect();
        if x_new == x {
            status = Status::LineSearchFailed;
            break;
        }
        let f_new = objective.value(&x_new)?;
        let g_new = objective.gradient(&x_new)?;

        if cfg.algorithm == Algorithm::Lbfgs && cfg.lbfgs_memory > 0 {
            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.riesz.iter().zip(&g.riesz).map(|(a, b)| a - b).collect();
            let y_der: Vec<f64> = g_new.derivative.iter().zip(&g.derivative).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y_der);
            let ss = objective.inner(&s, &s);
            let yy = objective.inner(&y, &y);
            if sy > 1e-14 * (ss * yy).sqrt() {
                if pairs.len() == cfg.lbfgs_memory {
                    pairs.pop_front();
                }
                pairs.push_back(CurvaturePair {
                    s,
                    y,
                    rho: 1.0 / sy,
                    sy,
                    yy,
                });
            }
        }
        g_old = std::mem::replace(&mut g, g_new).riesz;
        d_old = d;
        x = x_new;
        f = f_new;
        let gn = g.norm();
        history.push(IterationRecord {
            iter: k,
            cost: f,
            grad_norm: gn,
            step,
            mesh_quality: None,
            slope,
        });
        if gn <= tol {
            status = Status::Converged;
        }
    }
    debug_assert!(
        history_satisfies_armijo(&history, cfg.linesearch.c1),
        "accepted step violates Armijo"
    );
    let grad_norm = history.last().map_or(0.0, |r| r.grad_norm);
    Ok(OptimizationResult {
        x,
        cost: f,
        grad_norm,
        history,
        status,
    })
}
