//! Discrete-adjoint reduced functionals.
//!
//! A [`DiscreteProblem`] supplies the residual `R(y, q)`, the cost `J(y, q)`
//! and their first derivatives. [`ReducedFunctional`] turns that into
//! `q -> J(y(q), q)` with gradients computed by one adjoint solve.

mod poisson;

pub use poisson::{reference_control, PoissonControl, StateIntegral};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::fem::{dot, norm, solve, CsrMatrix, DEFAULT_RTOL};
use crate::optimize::{Gradient, Objective};

/// A discretized PDE constraint with a cost functional.
///
/// The state Jacobian must be square and symmetric positive definite (after
/// boundary elimination) so that state and adjoint systems can be solved by
/// conjugate gradients.
pub trait DiscreteProblem {
    fn state_dim(&self) -> usize;
    fn design_dim(&self) -> usize;
    fn residual(&self, y: &[f64], q: &[f64]) -> Result<Vec<f64>>;
    fn state_jacobian(&self, y: &[f64], q: &[f64]) -> Result<CsrMatrix>;
    /// `(dR/dq) dq`.
    fn design_jacobian_apply(&self, y: &[f64], q: &[f64], dq: &[f64]) -> Result<Vec<f64>>;
    /// `(dR/dq)^T p`.
    fn design_jacobian_transpose_apply(&self, y: &[f64], q: &[f64], p: &[f64]) -> Result<Vec<f64>>;
    fn cost(&self, y: &[f64], q: &[f64]) -> f64;
    fn cost_grad_state(&self, y: &[f64], q: &[f64]) -> Vec<f64>;
    fn cost_grad_design(&self, y: &[f64], q: &[f64]) -> Vec<f64>;

    /// Linear problems are solved by a single Newton step.
    fn is_linear(&self) -> bool {
        false
    }

    fn initial_state(&self, _q: &[f64]) -> Vec<f64> {
        vec![0.0; self.state_dim()]
    }

    /// Relative residual reduction required from Newton's method.
    fn newton_tolerance(&self) -> f64 {
        1e-10
    }
}

/// Scalar product on the design space used to form Riesz representatives.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarProduct {
    Identity,
    /// Symmetric positive definite matrix, e.g. a mass matrix.
    Matrix(CsrMatrix),
}

impl ScalarProduct {
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Self::Identity => dot(a, b),
            Self::Matrix(m) => m.inner(a, b),
        }
    }

    /// Solves `M g = derivative`.
    pub fn riesz(&self, derivative: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Identity => Ok(derivative.to_vec()),
            Self::Matrix(m) => {
                check_len(m.nrows(), derivative.len())?;
                solve(m, derivative, DEFAULT_RTOL)
            }
        }
    }
}

const MAX_NEWTON: usize = 25;
const MAX_HALVINGS: usize = 30;

/// Solves `R(y, q) = 0` by damped Newton; one undamped step for linear problems.
pub fn solve_state<P: DiscreteProblem + ?Sized>(problem: &P, q: &[f64]) -> Result<Vec<f64>> {
    let mut y = problem.initial_state(q);
    check_len(problem.state_dim(), y.len())?;
    let mut r = problem.residual(&y, q)?;
    let r0 = norm(&r);
    if r0 == 0.0 {
        return Ok(y);
    }
    let target = problem.newton_tolerance() * r0;
    let mut r_norm = r0;
    for _ in 0..MAX_NEWTON {
        let jac = problem.state_jacobian(&y, q)?;
        let dy = solve(&jac, &r, DEFAULT_RTOL)?;
        if problem.is_linear() {
            y.iter_mut().zip(&dy).for_each(|(y, d)| *y -= d);
            return Ok(y);
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = y.iter().zip(&dy).map(|(y, d)| y - t * d).collect();
            let r_trial = problem.residual(&trial, q)?;
            let n_trial = norm(&r_trial);
            if n_trial < r_norm {
                y = trial;
                r = r_trial;
                r_norm = n_trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if r_norm <= target {
            return Ok(y);
        }
    }
    Err(Error::NonConvergence {
        method: "newton",
        iterations: MAX_NEWTON,
        residual: r_norm,
    })
}

struct Cache {
    q: Vec<f64>,
    y: Vec<f64>,
    cost: f64,
    adjoint: Option<Vec<f64>>,
}

/// `q -> J(y(q), q)` with cached state and adjoint.
///
/// The cache is keyed on the exact design vector; any change triggers a new
/// state solve.
pub struct ReducedFunctional<P> {
    problem: P,
    product: ScalarProduct,
    cache: Option<Cache>,
    state_solves: usize,
    adjoint_solves: usize,
}

impl<P: DiscreteProblem> ReducedFunctional<P> {
    pub fn new(problem: P, product: ScalarProduct) -> Result<Self> {
        if let ScalarProduct::Matrix(m) = &product {
            check_len(problem.design_dim(), m.nrows())?;
            check_len(problem.design_dim(), m.ncols())?;
        }
        Ok(Self {
            problem,
            product,
            cache: None,
            state_solves: 0,
            adjoint_solves: 0,
        })
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    /// Mutable access to the problem; clears the cache.
    pub fn problem_mut(&mut self) -> &mut P {
        self.cache = None;
        &mut self.problem
    }

    pub fn product(&self) -> &ScalarProduct {
        &self.product
    }

    pub fn set_product(&mut self, product: ScalarProduct) {
        self.product = product;
    }

    pub fn state_solves(&self) -> usize {
        self.state_solves
    }

    pub fn adjoint_solves(&self) -> usize {
        self.adjoint_solves
    }

    fn ensure_state(&mut self, q: &[f64]) -> Result<&mut Cache> {
        check_len(self.problem.design_dim(), q.len())?;
        let hit = self.cache.as_ref().is_some_and(|c| c.q == q);
        if !hit {
            self.cache = None;
            let y = solve_state(&self.problem, q)?;
            self.state_solves += 1;
            let cost = self.problem.cost(&y, q);
            self.cache = Some(Cache {
                q: q.to_vec(),
                y,
                cost,
                adjoint: None,
            });
        }
        Ok(self.cache.as_mut().expect("cache filled"))
    }

    /// Solves the state equation (if needed) and returns `J`.
    pub fn evaluate(&mut self, q: &[f64]) -> Result<f64> {
        let cost = self.ensure_state(q)?.cost;
        if cost.is_finite() {
            Ok(cost)
        } else {
            Err(Error::NonFiniteCost)
        }
    }

    pub fn state(&mut self, q: &[f64]) -> Result<Vec<f64>> {
        Ok(self.ensure_state(q)?.y.clone())
    }

    /// Solves `(dR/dy)^T p = -(dJ/dy)^T`.
    pub fn adjoint(&mut self, q: &[f64]) -> Result<Vec<f64>> {
        self.ensure_state(q)?;
        let cache = self.cache.as_mut().expect("cache filled");
        if let Some(p) = &cache.adjoint {
            return Ok(p.clone());
        }
        let jac = self.problem.state_jacobian(&cache.y, q)?.transpose();
        let rhs: Vec<f64> = self.problem.cost_grad_state(&cache.y, q).iter().map(|v| -v).collect();
        let p = solve(&jac, &rhs, DEFAULT_RTOL)?;
        self.adjoint_solves += 1;
        cache.adjoint = Some(p.clone());
        Ok(p)
    }

    /// Euclidean derivative `dJ/dq + (dR/dq)^T p`.
    pub fn derivative(&mut self, q: &[f64]) -> Result<Vec<f64>> {
        let p = self.adjoint(q)?;
        let y = &self.cache.as_ref().expect("cache filled").y;
        let mut g = self.problem.cost_grad_design(y, q);
        let rp = self.problem.design_jacobian_transpose_apply(y, q, &p)?;
        g.iter_mut().zip(&rp).for_each(|(g, r)| *g += r);
        Ok(g)
    }

    /// Derivative and its Riesz representative.
    pub fn gradient(&mut self, q: &[f64]) -> Result<Gradient> {
        let derivative = self.derivative(q)?;
        let riesz = self.product.riesz(&derivative)?;
        Ok(Gradient { riesz, derivative })
    }
}

impl<P: DiscreteProblem> Objective for ReducedFunctional<P> {
    fn dim(&self) -> usize {
        self.problem.design_dim()
    }

    fn value(&mut self, x: &[f64]) -> Result<f64> {
        self.evaluate(x)
    }

    fn gradient(&mut self, x: &[f64]) -> Result<Gradient> {
        ReducedFunctional::gradient(self, x)
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.product.inner(a, b)
    }

    fn riesz(&self, derivative: &[f64]) -> Result<Vec<f64>> {
        self.product.riesz(derivative)
    }
}

/// Deterministic random vector with entries in `[-1, 1]`.
pub fn random_direction(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Relative discrepancy `|a - b| / |b|`, zero when both vanish.
pub fn relative_error(approx: f64, exact: f64) -> f64 {
    let diff = (approx - exact).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / exact.abs()
    }
}

fn relative_error_vec(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: Vec<f64> = approx.iter().zip(exact).map(|(a, b)| a - b).collect();
    let d = norm(&diff);
    if d == 0.0 {
        0.0
    } else {
        d / norm(exact)
    }
}

/// Forward-difference errors for each step, per derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub steps: Vec<f64>,
    pub state_jacobian: Vec<f64>,
    pub design_jacobian: Vec<f64>,
    pub cost_grad_state: Vec<f64>,
    pub cost_grad_design: Vec<f64>,
}

impl DerivativeReport {
    pub fn worst_best(&self) -> f64 {
        [
            &self.state_jacobian,
            &self.design_jacobian,
            &self.cost_grad_state,
            &self.cost_grad_design,
        ]
        .iter()
        .map(|errs| errs.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
    }
}

/// Forward-difference probe of all four problem derivatives along `dy`, `dq`.
pub fn verify_derivatives<P: DiscreteProblem + ?Sized>(
    problem: &P,
    y: &[f64],
    q: &[f64],
    dy: &[f64],
    dq: &[f64],
    steps: &[f64],
) -> Result<DerivativeReport> {
    check_len(y.len(), dy.len())?;
    check_len(q.len(), dq.len())?;
    let r0 = problem.residual(y, q)?;
    let j0 = problem.cost(y, q);
    let jy = problem.state_jacobian(y, q)?.mul_vec(dy);
    let jq = problem.design_jacobian_apply(y, q, dq)?;
    let gy = dot(&problem.cost_grad_state(y, q), dy);
    let gq = dot(&problem.cost_grad_design(y, q), dq);
    let shift = |x: &[f64], d: &[f64], h: f64| -> Vec<f64> { x.iter().zip(d).map(|(x, d)| x + h * d).collect() };
    let mut report = DerivativeReport {
        steps: steps.to_vec(),
        state_jacobian: Vec::new(),
        design_jacobian: Vec::new(),
        cost_grad_state: Vec::new(),
        cost_grad_design: Vec::new(),
    };
    for &h in steps {
        let y_h = shift(y, dy, h);
        let q_h = shift(q, dq, h);
        let fd = |r: Vec<f64>| -> Vec<f64> { r.iter().zip(&r0).map(|(a, b)| (a - b) / h).collect() };
        report
            .state_jacobian
            .push(relative_error_vec(&fd(problem.residual(&y_h, q)?), &jy));
        report
            .design_jacobian
            .push(relative_error_vec(&fd(problem.residual(y, &q_h)?), &jq));
        report
            .cost_grad_state
            .push(relative_error((problem.cost(&y_h, q) - j0) / h, gy));
        report
            .cost_grad_design
            .push(relative_error((problem.cost(y, &q_h) - j0) / h, gq));
    }
    Ok(report)
}

/// Default step sweep for gradient checks.
pub const FD_STEPS: [f64; 5] = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

/// Central-difference check of `<dJ(q), d>` over a step sweep; returns one
/// relative error per step.
pub fn check_gradient(objective: &mut dyn Objective, q: &[f64], direction: &[f64], steps: &[f64]) -> Result<Vec<f64>> {
    check_len(q.len(), direction.len())?;
    let g = objective.gradient(q)?;
    let exact = dot(&g.derivative, direction);
    let mut errors = Vec::with_capacity(steps.len());
    for &h in steps {
        let plus: Vec<f64> = q.iter().zip(direction).map(|(q, d)| q + h * d).collect();
        let minus: Vec<f64> = q.iter().zip(direction).map(|(q, d)| q - h * d).collect();
        let fd = (objective.value(&plus)? - objective.value(&minus)?) / (2.0 * h);
        errors.push(relative_error(fd, exact));
    }
    Ok(errors)
}
