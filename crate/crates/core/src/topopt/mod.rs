//! Level-set topology optimization on the L² unit sphere.
//!
//! The material layout is `Ω = {ψ < 0}` (per triangle, by the vertex average).
//! A user-supplied generalized topological derivative `g` is oriented so that
//! `ψ = g / ‖g‖` is the local optimality condition; the iteration moves `ψ`
//! along the great circle towards `g`.

mod source;

pub use source::{SignConvention, SourceIdentification};

use crate::error::{check_len, Error, Result};
use crate::fem::CsrMatrix;
use crate::mesh::Mesh2D;

/// `‖v‖` in the mass-matrix norm.
pub fn l2_norm(v: &[f64], mass: &CsrMatrix) -> f64 {
    mass.inner(v, v).max(0.0).sqrt()
}

/// Scales `v` to unit L² norm.
pub fn normalize(v: &[f64], mass: &CsrMatrix) -> Result<Vec<f64>> {
    let n = l2_norm(v, mass);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateDerivative);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Angle between `ψ` and `g` in the L² scalar product, in `[0, π]`.
pub fn angle(psi: &[f64], g: &[f64], mass: &CsrMatrix) -> Result<f64> {
    check_len(psi.len(), g.len())?;
    let ng = l2_norm(g, mass);
    let np = l2_norm(psi, mass);
    if !(ng > 0.0) || !(np > 0.0) {
        return Err(Error::DegenerateDerivative);
    }
    let c = (mass.inner(psi, g) / (np * ng)).clamp(-1.0, 1.0);
    Ok(c.acos())
}

/// Great-circle step from `ψ` towards `g/‖g‖` by the fraction `κ` of the
/// angle between them, renormalized.
pub fn update_level_set(psi: &[f64], g: &[f64], kappa: f64, mass: &CsrMatrix) -> Result<Vec<f64>> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::InvalidArgument(format!("kappa must lie in (0, 1], got {kappa}")));
    }
    let theta = angle(psi, g, mass)?;
    if theta == 0.0 {
        return Ok(psi.to_vec());
    }
    let s = theta.sin();
    if theta == std::f64::consts::PI || s.abs() < 1e-14 {
        return Err(Error::AntipodalLevelSet);
    }
    let ng = l2_norm(g, mass);
    let a = ((1.0 - kappa) * theta).sin() / s;
    let b = (kappa * theta).sin() / (s * ng);
    let combined: Vec<f64> = psi.iter().zip(g).map(|(p, g)| a * p + b * g).collect();
    normalize(&combined, mass)
}

/// Triangles inside the material (`vertex average of ψ < 0`).
pub fn material_indicator(mesh: &Mesh2D, psi: &[f64]) -> Vec<bool> {
    mesh.triangles()
        .iter()
        .map(|t| psi[t[0]] + psi[t[1]] + psi[t[2]] < 0.0)
        .collect()
}

/// A topology problem: state and adjoint solves for the layout encoded by `ψ`.
pub trait TopologyProblem {
    fn mesh(&self) -> &Mesh2D;
    fn mass(&self) -> &CsrMatrix;
    fn solve_state(&mut self, psi: &[f64]) -> Result<Vec<f64>>;
    fn solve_adjoint(&mut self, psi: &[f64], state: &[f64]) -> Result<Vec<f64>>;
    fn cost(&mut self, psi: &[f64], state: &[f64]) -> Result<f64>;

    fn evaluate(&mut self, psi: &[f64]) -> Result<f64> {
        let y = self.solve_state(psi)?;
        self.cost(psi, &y)
    }
}

/// Callback `(mesh, state, adjoint, ψ) -> g`.
pub type DerivativeSupplier<'a> = dyn FnMut(&Mesh2D, &[f64], &[f64], &[f64]) -> Vec<f64> + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopAlgorithm {
    ConvexCombination,
    /// Limited-memory BFGS on the sphere with the given number of pairs.
    QuasiNewton {
        memory: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopOptConfig {
    pub kappa_init: f64,
    pub kappa_min: f64,
    /// Angle tolerance in degrees.
    pub angle_tol: f64,
    pub max_iter: usize,
    pub algorithm: TopAlgorithm,
}

impl Default for TopOptConfig {
    fn default() -> Self {
        Self {
            kappa_init: 1.0,
            kappa_min: 1e-4,
            angle_tol: 1.0,
            max_iter: 100,
            algorithm: TopAlgorithm::ConvexCombination,
        }
    }
}

impl TopOptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_min > 0.0 && self.kappa_min <= self.kappa_init && self.kappa_init <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < kappa_min <= kappa_init <= 1 (got {} and {})",
                self.kappa_min, self.kappa_init
            )));
        }
        if !(self.angle_tol >= 0.0) {
            return Err(Error::InvalidArgument("angle tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopRecord {
    pub iter: usize,
    pub cost: f64,
    /// Angle between `ψ` and `g` at this iterate, in degrees.
    pub angle_deg: f64,
    /// Accepted step fraction (0 for the initial record).
    pub kappa: f64,
    /// True when the step came from the quasi-Newton direction.
    pub quasi_newton: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopStatus {
    Converged,
    MaxIterations,
    /// `κ` fell below `κ_min` without a nonincreasing trial.
    Stagnated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopResult {
    pub psi: Vec<f64>,
    pub history: Vec<TopRecord>,
    pub status: TopStatus,
}

impl TopResult {
    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }
}

struct Evaluated {
    psi: Vec<f64>,
    cost: f64,
    g: Vec<f64>,
    theta: f64,
}

fn evaluate_point(
    problem: &mut dyn TopologyProblem,
    supplier: &mut DerivativeSupplier,
    psi: Vec<f64>,
) -> Result<Evaluated> {
    let y = problem.solve_state(&psi)?;
    let cost = problem.cost(&psi, &y)?;
    if !cost.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let p = problem.solve_adjoint(&psi, &y)?;
    let g = supplier(problem.mesh(), &y, &p, &psi);
    check_len(psi.len(), g.len())?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("topological derivative is not finite".into()));
    }
    let theta = if l2_norm(&g, problem.mass()) == 0.0 {
        0.0
    } else {
        angle(&psi, &g, problem.mass())?
    };
    Ok(Evaluated { psi, cost, g, theta })
}

/// Halves `κ` from `κ_init` until the cost does not increase.
fn convex_combination_step(
    problem: &mut dyn TopologyProblem,
    current: &Evaluated,
    cfg: &TopOptConfig,
) -> Result<Option<(Vec<f64>, f64, f64)>> {
    let mut kappa = cfg.kappa_init;
    while kappa >= cfg.kappa_min {
        let trial = update_level_set(&current.psi, &current.g, kappa, problem.mass())?;
        let cost = problem.evaluate(&trial)?;
        if cost <= current.cost {
            return Ok(Some((trial, kappa, cost)));
        }
        kappa *= 0.5;
    }
    Ok(None)
}

/// Tangential fixed-point residual `ĝ - <ĝ, ψ> ψ`.
fn tangent_residual(psi: &[f64], g: &[f64], mass: &CsrMatrix) -> Result<Vec<f64>> {
    let gh = normalize(g, mass)?;
    let c = mass.inner(&gh, psi);
    Ok(gh.iter().zip(psi).map(|(g, p)| g - c * p).collect())
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion for `H r`, where `-r` plays the role of the gradient.
fn quasi_newton_direction(r: &[f64], pairs: &[Pair], mass: &CsrMatrix) -> Vec<f64> {
    let mut q = r.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (i, p) in pairs.iter().enumerate().rev() {
        alphas[i] = p.rho * mass.inner(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(q, y)| *q -= alphas[i] * y);
    }
    if let Some(last) = pairs.last() {
        let gamma = mass.inner(&last.s, &last.y) / mass.inner(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (i, p) in pairs.iter().enumerate() {
        let b = p.rho * mass.inner(&p.y, &q);
        q.iter_mut().zip(&p.s).for_each(|(q, s)| *q += (alphas[i] - b) * s);
    }
    q
}

/// Runs the configured level-set algorithm from `ψ0`.
///
/// The quasi-Newton variant treats `-r(ψ)` (the tangential residual) as a
/// gradient, builds curvature pairs from successive iterates, and proposes
/// `normalize(ψ + H r)`. The proposal replaces the convex-combination step
/// only when its cost is strictly lower. With memory 0 no proposal is ever
/// made and the iteration equals the convex-combination run.
pub fn solve(
    problem: &mut dyn TopologyProblem,
    psi0: &[f64],
    supplier: &mut DerivativeSupplier,
    cfg: &TopOptConfig,
) -> Result<TopResult> {
    cfg.validate()?;
    check_len(problem.mesh().num_nodes(), psi0.len())?;
    let psi = normalize(psi0, problem.mass())?;
    let mut current = evaluate_point(problem, supplier, psi)?;
    let mut history = vec![TopRecord {
        iter: 0,
        cost: current.cost,
        angle_deg: current.theta.to_degrees(),
        kappa: 0.0,
        quasi_newton: false,
    }];
    let memory = match cfg.algorithm {
        TopAlgorithm::ConvexCombination => 0,
        TopAlgorithm::QuasiNewton { memory } => memory,
    };
    let mut pairs: Vec<Pair> = Vec::new();
    let mut residual = tangent_residual_or_zero(&current, problem.mass())?;
    let mut status = TopStatus::MaxIterations;
    for k in 1..=cfg.max_iter + 1 {
        if current.theta.to_degrees() <= cfg.angle_tol {
            status = TopStatus::Converged;
            break;
        }
        if k > cfg.max_iter {
            break;
        }
        let mut step = convex_combination_step(problem, &current, cfg)?.map(|(p, kappa, cost)| (p, kappa, cost, false));
        if !pairs.is_empty() {
            let d = quasi_newton_direction(&residual, &pairs, problem.mass());
            let proposal: Vec<f64> = current.psi.iter().zip(&d).map(|(p, d)| p + d).collect();
            if let Ok(trial) = normalize(&proposal, problem.mass()) {
                let cost = problem.evaluate(&trial)?;
                let bound = step.as_ref().map_or(current.cost, |s| s.2);
                if cost < bound && cost <= current.cost {
                    step = Some((trial, 1.0, cost, true));
                }
            }
        }
        let Some((psi_new, kappa, _, quasi_newton)) = step else {
            status = TopStatus::Stagnated;
            break;
        };
        let next = evaluate_point(problem, supplier, psi_new)?;
        let r_new = tangent_residual_or_zero(&next, problem.mass())?;
        if memory > 0 {
            let s: Vec<f64> = next.psi.iter().zip(&current.psi).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = residual.iter().zip(&r_new).map(|(a, b)| a - b).collect();
            let sy = problem.mass().inner(&s, &y);
            let ss = problem.mass().inner(&s, &s);
            let yy = problem.mass().inner(&y, &y);
            if sy > 1e-14 * (ss * yy).sqrt() {
                if pairs.len() == memory {
                    pairs.remove(0);
                }
                pairs.push(Pair { s, y, rho: 1.0 / sy });
            }
        }
        current = next;
        residual = r_new;
        history.push(TopRecord {
            iter: k,
            cost: current.cost,
            angle_deg: current.theta.to_degrees(),
            kappa,
            quasi_newton,
        });
    }
    Ok(TopResult {
        psi: current.psi,
        history,
        status,
    })
}

fn tangent_residual_or_zero(point: &Evaluated, mass: &CsrMatrix) -> Result<Vec<f64>> {
    if point.theta == 0.0 {
        Ok(vec![0.0; point.psi.len()])
    } else {
        tangent_residual(&point.psi, &point.g, mass)
    }
}
