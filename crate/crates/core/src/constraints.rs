//! Quadratic-penalty and augmented-Lagrangian outer loops.
//!
//! Both methods minimize a sequence of unconstrained problems with
//! [`crate::optimize::minimize`], warm-started from the previous solution.

use crate::error::{check_len, Error, Result};
use crate::fem::dot;
use crate::optimize::{minimize, Gradient, IterationRecord, Objective, OptimizerConfig, Status};
use crate::reduced_problem::{DiscreteProblem, ReducedFunctional};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `c(q) = 0`
    Equality,
    /// `c(q) <= 0`
    Inequality,
}

/// A scalar constraint with its Euclidean derivative.
pub trait Constraint {
    fn kind(&self) -> ConstraintKind;
    fn value(&mut self, q: &[f64]) -> Result<f64>;
    fn derivative(&mut self, q: &[f64]) -> Result<Vec<f64>>;
}

/// Violation measure: `|c|` for equalities, `max(0, c)` for inequalities.
pub fn violation(kind: ConstraintKind, c: f64) -> f64 {
    match kind {
        ConstraintKind::Equality => c.abs(),
        ConstraintKind::Inequality => c.max(0.0),
    }
}

/// `<w, q> - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub kind: ConstraintKind,
    pub w: Vec<f64>,
    pub b: f64,
}

impl Constraint for LinearConstraint {
    fn kind(&self) -> ConstraintKind {
        self.kind
    }

    fn value(&mut self, q: &[f64]) -> Result<f64> {
        check_len(self.w.len(), q.len())?;
        Ok(dot(&self.w, q) - self.b)
    }

    fn derivative(&mut self, q: &[f64]) -> Result<Vec<f64>> {
        check_len(self.w.len(), q.len())?;
        Ok(self.w.clone())
    }
}

/// State constraint `F(y(q), q) - bound`, where `F` is the cost of a discrete
/// problem (e.g. `∫ y dx`). Its derivative comes from an adjoint solve.
pub struct StateConstraint<P> {
    pub kind: ConstraintKind,
    pub functional: ReducedFunctional<P>,
    pub bound: f64,
}

impl<P: DiscreteProblem> Constraint for StateConstraint<P> {
    fn kind(&self) -> ConstraintKind {
        self.kind
    }

    fn value(&mut self, q: &[f64]) -> Result<f64> {
        Ok(self.functional.evaluate(q)? - self.bound)
    }

    fn derivative(&mut self, q: &[f64]) -> Result<Vec<f64>> {
        self.functional.derivative(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterLoopConfig {
    pub mu0: f64,
    pub growth: f64,
    pub tol_feas: f64,
    /// `μ` grows when the violation is not reduced below this fraction.
    pub progress_ratio: f64,
    pub max_outer: usize,
    pub inner: OptimizerConfig,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            growth: 10.0,
            tol_feas: 1e-5,
            progress_ratio: 0.25,
            max_outer: 25,
            inner: OptimizerConfig::default(),
        }
    }
}

impl OuterLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) || !(self.growth > 1.0) || !(self.tol_feas >= 0.0) || !(self.progress_ratio > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid outer loop configuration {self:?}"
            )));
        }
        self.inner.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub outer: usize,
    /// Penalty parameter used for this subproblem.
    pub mu: f64,
    pub max_violation: f64,
    pub inner_iterations: usize,
    /// Unpenalized cost at the subproblem solution.
    pub cost: f64,
    /// Multipliers after the update following this subproblem.
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterStatus {
    Converged,
    /// Outer iteration limit reached with the violation above tolerance.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedResult {
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    pub history: Vec<OuterRecord>,
    pub inner_histories: Vec<Vec<IterationRecord>>,
    pub status: OuterStatus,
}

impl ConstrainedResult {
    pub fn final_violation(&self) -> f64 {
        self.history.last().map_or(f64::INFINITY, |r| r.max_violation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Penalty {
    /// `μ/2 Σ v_i²`
    Quadratic,
    /// `Σ λ_i ĉ_i + μ/2 ĉ_i²`
    Augmented,
}

struct Subproblem<'s, 'c> {
    f: &'s mut dyn Objective,
    constraints: &'s mut [Box<dyn Constraint + 'c>],
    lambda: &'s [f64],
    mu: f64,
    penalty: Penalty,
}

impl Subproblem<'_, '_> {
    /// Penalty value and the factor multiplying `∇c_i`.
    fn term(&self, kind: ConstraintKind, lambda: f64, c: f64) -> (f64, f64) {
        match self.penalty {
            Penalty::Quadratic => {
                let v = match kind {
                    ConstraintKind::Equality => c,
                    ConstraintKind::Inequality => c.max(0.0),
                };
                (0.5 * self.mu * v * v, self.mu * v)
            }
            Penalty::Augmented => {
                let ch = match kind {
                    ConstraintKind::Equality => c,
                    ConstraintKind::Inequality => c.max(-lambda / self.mu),
                };
                (lambda * ch + 0.5 * self.mu * ch * ch, lambda + self.mu * ch)
            }
        }
    }
}

impl Objective for Subproblem<'_, '_> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn value(&mut self, q: &[f64]) -> Result<f64> {
        let mut total = self.f.value(q)?;
        for i in 0..self.constraints.len() {
            let c = self.constraints[i].value(q)?;
            total += self.term(self.constraints[i].kind(), self.lambda[i], c).0;
        }
        Ok(total)
    }

    fn gradient(&mut self, q: &[f64]) -> Result<Gradient> {
        let g = self.f.gradient(q)?;
        let mut extra = vec![0.0; q.len()];
        for i in 0..self.constraints.len() {
            let c = self.constraints[i].value(q)?;
            let factor = self.term(self.constraints[i].kind(), self.lambda[i], c).1;
            if factor != 0.0 {
                let dc = self.constraints[i].derivative(q)?;
                extra.iter_mut().zip(&dc).for_each(|(e, d)| *e += factor * d);
            }
        }
        let extra_riesz = self.f.riesz(&extra)?;
        Ok(Gradient {
            riesz: g.riesz.iter().zip(&extra_riesz).map(|(a, b)| a + b).collect(),
            derivative: g.derivative.iter().zip(&extra).map(|(a, b)| a + b).collect(),
        })
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.f.inner(a, b)
    }

    fn riesz(&self, derivative: &[f64]) -> Result<Vec<f64>> {
        self.f.riesz(derivative)
    }
}

/// Options of the shared outer loop.
#[derive(Debug, Clone, Copy)]
struct LoopMode {
    penalty: Penalty,
    update_multipliers: bool,
    always_grow: bool,
}

fn outer_loop<'a>(
    f: &mut dyn Objective,
    constraints: &mut [Box<dyn Constraint + 'a>],
    q0: &[f64],
    lambda0: &[f64],
    cfg: &OuterLoopConfig,
    mode: LoopMode,
) -> Result<ConstrainedResult> {
    cfg.validate()?;
    check_len(f.dim(), q0.len())?;
    check_len(constraints.len(), lambda0.len())?;
    let mut q = q0.to_vec();
    let mut lambda = lambda0.to_vec();
    let mut mu = cfg.mu0;
    let mut prev_violation = f64::INFINITY;
    let mut history = Vec::new();
    let mut inner_histories = Vec::new();
    let mut status = OuterStatus::Infeasible;
    for outer in 1..=cfg.max_outer {
        let res = {
            let mut sub = Subproblem {
                f: &mut *f,
                constraints: &mut *constraints,
                lambda: &lambda,
                mu,
                penalty: mode.penalty,
            };
            minimize(&mut sub, &q, &cfg.inner)?
        };
        q = res.x;
        let mut max_violation: f64 = 0.0;
        let mut values = Vec::with_capacity(constraints.len());
        for con in constraints.iter_mut() {
            let c = con.value(&q)?;
            max_violation = max_violation.max(violation(con.kind(), c));
            values.push(c);
        }
        if mode.update_multipliers {
            for ((l, c), con) in lambda.iter_mut().zip(&values).zip(constraints.iter()) {
                *l = update_multiplier(con.kind(), *l, mu, *c);
            }
        }
        let inner_iterations = res.history.len() - 1;
        // a line-search failure at this point means round-off stagnation
        let inner_converged = res.status != Status::MaxIterations;
        inner_histories.push(res.history);
        history.push(OuterRecord {
            outer,
            mu,
            max_violation,
            inner_iterations,
            cost: f.value(&q)?,
            lambda: lambda.clone(),
        });
        log::debug!("outer {outer}: mu {mu:e}, violation {max_violation:e}");
        if max_violation <= cfg.tol_feas && inner_converged {
            status = OuterStatus::Converged;
            break;
        }
        if mode.always_grow || max_violation > cfg.progress_ratio * prev_violation {
            mu *= cfg.growth;
        }
        prev_violation = max_violation;
    }
    Ok(ConstrainedResult {
        q,
        lambda,
        history,
        inner_histories,
        status,
    })
}

/// Minimizes `J + μ/2 Σ v_i²`, multiplying `μ` by the growth factor after every
/// outer iteration until the violation is below `tol_feas`.
pub fn quadratic_penalty_solve<'a>(
    f: &mut dyn Objective,
    constraints: &mut [Box<dyn Constraint + 'a>],
    q0: &[f64],
    cfg: &OuterLoopConfig,
) -> Result<ConstrainedResult> {
    let zeros = vec![0.0; constraints.len()];
    let mode = LoopMode {
        penalty: Penalty::Quadratic,
        update_multipliers: false,
        always_grow: true,
    };
    outer_loop(f, constraints, q0, &zeros, cfg, mode)
}

/// Augmented-Lagrangian method with first-order multiplier updates.
pub fn augmented_lagrangian_solve<'a>(
    f: &mut dyn Objective,
    constraints: &mut [Box<dyn Constraint + 'a>],
    q0: &[f64],
    lambda0: &[f64],
    cfg: &OuterLoopConfig,
) -> Result<ConstrainedResult> {
    let mode = LoopMode {
        penalty: Penalty::Augmented,
        update_multipliers: true,
        always_grow: false,
    };
    outer_loop(f, constraints, q0, lambda0, cfg, mode)
}

/// Augmented-Lagrangian subproblems with the multipliers frozen at zero and
/// `μ` grown every iteration; equivalent to the quadratic penalty method.
pub fn augmented_lagrangian_frozen<'a>(
    f: &mut dyn Objective,
    constraints: &mut [Box<dyn Constraint + 'a>],
    q0: &[f64],
    cfg: &OuterLoopConfig,
) -> Result<ConstrainedResult> {
    let zeros = vec![0.0; constraints.len()];
    let mode = LoopMode {
        penalty: Penalty::Augmented,
        update_multipliers: false,
        always_grow: true,
    };
    outer_loop(f, constraints, q0, &zeros, cfg, mode)
}

/// First-order multiplier update for a single constraint.
pub fn update_multiplier(kind: ConstraintKind, lambda: f64, mu: f64, c: f64) -> f64 {
    match kind {
        ConstraintKind::Equality => lambda + mu * c,
        ConstraintKind::Inequality => (lambda + mu * c).max(0.0),
    }
}
