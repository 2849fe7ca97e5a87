//! Shape optimization on node-wise deformations.
//!
//! Shape derivatives are covectors over interleaved nodal vector fields
//! `[x0, y0, x1, y1, ...]`. A shape gradient is the deformation `V` solving
//! `a(V, W) = -dJ[W]` for a chosen scalar product `a`, with the nodes of the
//! fixed boundary markers held in place.

mod poisson;

pub use poisson::{PoissonShape, VolumeFunctional};

use crate::error::{check_len, Error, Result};
use crate::fem::{
    apply_dirichlet, assemble_elasticity, assemble_vector_laplace, dot, fixed_vector_dofs, norm, solve, Coefficient,
    CsrMatrix, DEFAULT_RTOL,
};
use crate::linesearch::{self, LineSearchConfig, Trial};
use crate::mesh::{DeformationField, Mesh2D};
use crate::optimize::{IterationRecord, Status};

/// A shape functional with its discrete state and adjoint equations.
pub trait ShapeProblem {
    fn solve_state(&mut self, mesh: &Mesh2D) -> Result<Vec<f64>>;
    fn solve_adjoint(&mut self, mesh: &Mesh2D, state: &[f64]) -> Result<Vec<f64>>;
    fn cost(&mut self, mesh: &Mesh2D, state: &[f64]) -> Result<f64>;
    /// Interleaved covector of `dJ(Ω)[V]`.
    fn shape_derivative(&mut self, mesh: &Mesh2D, state: &[f64], adjoint: &[f64]) -> Result<Vec<f64>>;

    /// Solves the state and returns the cost.
    fn evaluate(&mut self, mesh: &Mesh2D) -> Result<f64> {
        let y = self.solve_state(mesh)?;
        self.cost(mesh, &y)
    }

    /// State, adjoint and derivative in one go.
    fn derivative(&mut self, mesh: &Mesh2D) -> Result<Vec<f64>> {
        let y = self.solve_state(mesh)?;
        let p = self.solve_adjoint(mesh, &y)?;
        self.shape_derivative(mesh, &y, &p)
    }
}

/// Applies a covector to a deformation field.
pub fn apply_derivative(derivative: &[f64], field: &DeformationField) -> f64 {
    dot(derivative, &field.to_flat())
}

/// Smooth pseudo-random test field built from a few global modes.
pub fn smooth_field(mesh: &Mesh2D, seed: u64) -> DeformationField {
    let c = crate::reduced_problem::random_direction(10, seed);
    DeformationField::from_fn(mesh, |x, y| {
        [
            c[0] + c[1] * x + c[2] * y + c[3] * (2.0 * x + y).sin() + c[4] * (x - 2.0 * y).cos(),
            c[5] + c[6] * x + c[7] * y + c[8] * (x * y).sin() + c[9] * (3.0 * y).cos(),
        ]
    })
}

/// Relative errors of central differences on perturbed meshes against
/// `dJ[V]`, one per step.
pub fn check_shape_derivative(
    problem: &mut dyn ShapeProblem,
    mesh: &Mesh2D,
    field: &DeformationField,
    steps: &[f64],
) -> Result<Vec<f64>> {
    let exact = apply_derivative(&problem.derivative(mesh)?, field);
    steps
        .iter()
        .map(|&h| {
            let plus = problem.evaluate(&mesh.deform(&field.scaled(h))?)?;
            let minus = problem.evaluate(&mesh.deform(&field.scaled(-h))?)?;
            Ok(crate::reduced_problem::relative_error(
                (plus - minus) / (2.0 * h),
                exact,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum InnerProduct {
    /// `int grad V : grad W + mass_weight V . W`
    H1 { mass_weight: f64 },
    /// `int 2 mu eps(V):eps(W) + lambda div V div W + damping V . W`
    Elasticity { mu: f64, lambda: f64, damping: f64 },
    /// Any SPD matrix on interleaved nodal fields.
    Custom(CsrMatrix),
    /// `int (eps + |grad V|^2)^((p-2)/2) (grad V : grad W + mass_weight V . W)`
    PLaplace { p: f64, eps: f64, mass_weight: f64 },
}

impl InnerProduct {
    pub fn h1() -> Self {
        Self::H1 { mass_weight: 1.0 }
    }

    pub fn elasticity(mu: f64, lambda: f64) -> Self {
        Self::Elasticity {
            mu,
            lambda,
            damping: 0.0,
        }
    }

    pub fn p_laplace(p: f64) -> Self {
        Self::PLaplace {
            p,
            eps: 1e-8,
            mass_weight: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeGradientConfig {
    pub inner_product: InnerProduct,
    /// Boundary markers whose nodes do not move.
    pub fixed_markers: Vec<u32>,
}

impl ShapeGradientConfig {
    pub fn new(inner_product: InnerProduct) -> Self {
        Self {
            inner_product,
            fixed_markers: Vec::new(),
        }
    }
}

/// Zeroes the covector entries of fixed nodes.
pub fn eliminate_fixed(derivative: &mut [f64], mesh: &Mesh2D, fixed_markers: &[u32]) {
    for i in mesh.boundary_nodes(fixed_markers) {
        derivative[2 * i] = 0.0;
        derivative[2 * i + 1] = 0.0;
    }
}

fn solve_vector_system(matrix: &CsrMatrix, rhs: &[f64], fixed: &[(usize, f64)]) -> Result<Vec<f64>> {
    let (a, b) = apply_dirichlet(matrix, rhs, fixed);
    solve(&a, &b, DEFAULT_RTOL)
}

/// Riesz representative `V` of `-dJ` in the configured scalar product.
pub fn shape_gradient(derivative: &[f64], mesh: &Mesh2D, cfg: &ShapeGradientConfig) -> Result<DeformationField> {
    check_len(2 * mesh.num_nodes(), derivative.len())?;
    let fixed = fixed_vector_dofs(&mesh.boundary_nodes(&cfg.fixed_markers));
    let rhs: Vec<f64> = derivative.iter().map(|v| -v).collect();
    let matrix = match &cfg.inner_product {
        InnerProduct::H1 { mass_weight } => assemble_vector_laplace(mesh, Coefficient::Constant(1.0), *mass_weight)?,
        InnerProduct::Elasticity { mu, lambda, damping } => assemble_elasticity(mesh, *mu, *lambda, *damping)?,
        InnerProduct::Custom(m) => {
            check_len(2 * mesh.num_nodes(), m.nrows())?;
            m.clone()
        }
        InnerProduct::PLaplace { p, eps, mass_weight } => {
            return p_laplace_gradient(derivative, mesh, *p, *eps, *mass_weight, &cfg.fixed_markers)
        }
    };
    Ok(DeformationField::from_flat(&solve_vector_system(
        &matrix, &rhs, &fixed,
    )?))
}

const P_LAPLACE_RTOL: f64 = 1e-8;
const P_LAPLACE_MAX_ITER: usize = 50;

fn frobenius_sq_per_triangle(mesh: &Mesh2D, v: &[f64]) -> Vec<f64> {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let g = mesh.barycentric_gradients(t);
            let mut dv = [[0.0; 2]; 2];
            for k in 0..3 {
                for a in 0..2 {
                    for b in 0..2 {
                        dv[a][b] += v[2 * tri[k] + a] * g[k][b];
                    }
                }
            }
            dv.iter().flatten().map(|x| x * x).sum()
        })
        .collect()
}

/// p-Laplace shape gradient by relaxed coefficient freezing.
///
/// Each sweep solves the weighted H1 problem with the coefficient
/// `(eps + |grad V|^2)^((p-2)/2)` frozen at the current iterate and relaxes
/// the update with `omega = 2/p`. The optional mass term sits inside the
/// coefficient, so the ratio of smoothing to damping matches the H1 product. The start is the linear (`p = 2`) solution
/// rescaled to the homogeneity of the nonlinear operator.
pub fn p_laplace_gradient(
    derivative: &[f64],
    mesh: &Mesh2D,
    p: f64,
    eps: f64,
    mass_weight: f64,
    fixed_markers: &[u32],
) -> Result<DeformationField> {
    if !(p >= 2.0) || !(eps > 0.0) || !(mass_weight >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "p-Laplace needs p >= 2, eps > 0 and a nonnegative mass weight (got {p}, {eps}, {mass_weight})"
        )));
    }
    check_len(2 * mesh.num_nodes(), derivative.len())?;
    let fixed = fixed_vector_dofs(&mesh.boundary_nodes(fixed_markers));
    let rhs: Vec<f64> = derivative.iter().map(|v| -v).collect();
    let linear = assemble_vector_laplace(mesh, Coefficient::Constant(1.0), mass_weight)?;
    let mut v = solve_vector_system(&linear, &rhs, &fixed)?;
    if p == 2.0 || norm(&v) == 0.0 {
        return Ok(DeformationField::from_flat(&v));
    }
    let areas: Vec<f64> = (0..mesh.num_triangles()).map(|t| mesh.signed_area(t)).collect();
    let energy: f64 = frobenius_sq_per_triangle(mesh, &v)
        .iter()
        .zip(&areas)
        .map(|(g2, a)| a * g2.powf(p / 2.0))
        .sum();
    let work = dot(&rhs, &v);
    if energy > 0.0 && work > 0.0 {
        let s = (work / energy).powf(1.0 / (p - 1.0));
        v.iter_mut().for_each(|x| *x *= s);
    }
    let omega = 2.0 / p;
    let mut change = f64::INFINITY;
    for _ in 0..P_LAPLACE_MAX_ITER {
        let kappa: Vec<f64> = frobenius_sq_per_triangle(mesh, &v)
            .iter()
            .map(|g2| (eps + g2).powf((p - 2.0) / 2.0))
            .collect();
        let a = weighted_h1(mesh, &kappa, mass_weight);
        let t = solve_vector_system(&a, &rhs, &fixed)?;
        let next: Vec<f64> = v.iter().zip(&t).map(|(v, t)| (1.0 - omega) * v + omega * t).collect();
        let diff: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
        change = norm(&diff) / norm(&next).max(f64::MIN_POSITIVE);
        v = next;
        if change <= P_LAPLACE_RTOL {
            return Ok(DeformationField::from_flat(&v));
        }
    }
    Err(Error::NonConvergence {
        method: "p-Laplace fixed point",
        iterations: P_LAPLACE_MAX_ITER,
        residual: change,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeOptConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_iter: usize,
    pub linesearch: LineSearchConfig,
    /// Trial meshes with a smaller minimum quality are rejected.
    pub quality_threshold: f64,
}

impl Default for ShapeOptConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-3,
            atol: 0.0,
            max_iter: 100,
            linesearch: LineSearchConfig::default(),
            quality_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShapeResult {
    pub mesh: Mesh2D,
    pub history: Vec<IterationRecord>,
    pub status: Status,
}

impl ShapeResult {
    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }
}

const STEP_UNDERFLOW: f64 = 1e-12;

enum TrialOutcome {
    Value(f64),
    Quality(usize, f64),
}

fn trial_value(
    problem: &mut dyn ShapeProblem,
    mesh: &Mesh2D,
    field: &DeformationField,
    step: f64,
    threshold: f64,
) -> (TrialOutcome, Option<Mesh2D>) {
    match mesh.deform(&field.scaled(step)) {
        Err(Error::MeshInversion { triangle, .. }) => (TrialOutcome::Quality(triangle, 0.0), None),
        Err(_) => (TrialOutcome::Value(f64::INFINITY), None),
        Ok(m) => {
            let (t, q) = m.worst_triangle();
            if q < threshold {
                return (TrialOutcome::Quality(t, q), None);
            }
            let value = match problem.evaluate(&m) {
                Ok(v) => v,
                Err(Error::NonFiniteCost) => f64::NAN,
                Err(_) => f64::INFINITY,
            };
            (TrialOutcome::Value(value), Some(m))
        }
    }
}

/// Steepest-descent shape optimization with mesh-quality safeguarded steps.
///
/// Each iteration computes the shape gradient `V` and searches along
/// `mesh + a V`. Trial meshes that fail to deform or fall below the quality
/// threshold count as rejected trials. A step below `1e-12` caused by the
/// quality guard yields [`Error::QualityLock`].
pub fn optimize_shape(
    problem: &mut dyn ShapeProblem,
    mesh0: &Mesh2D,
    gradient_cfg: &ShapeGradientConfig,
    cfg: &ShapeOptConfig,
) -> Result<ShapeResult> {
    cfg.linesearch.validate()?;
    let q0 = mesh0.min_quality();
    if q0 < cfg.quality_threshold {
        return Err(Error::InvalidArgument(format!(
            "initial mesh quality {q0} is below the threshold {}",
            cfg.quality_threshold
        )));
    }
    let mut mesh = mesh0.clone();
    let mut state = problem.solve_state(&mesh)?;
    let mut cost = problem.cost(&mesh, &state)?;
    if !cost.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let mut history = Vec::new();
    let mut status = Status::MaxIterations;
    let mut tol = 0.0;
    let mut last_step: Option<(f64, bool)> = None;
    for k in 0..=cfg.max_iter {
        let adjoint = problem.solve_adjoint(&mesh, &state)?;
        let mut derivative = problem.shape_derivative(&mesh, &state, &adjoint)?;
        eliminate_fixed(&mut derivative, &mesh, &gradient_cfg.fixed_markers);
        let field = shape_gradient(&derivative, &mesh, gradient_cfg)?;
        let slope = apply_derivative(&derivative, &field);
        let grad_norm = slope.abs().sqrt();
        if k == 0 {
            tol = cfg.atol.max(cfg.rtol * grad_norm);
            history.push(IterationRecord {
                iter: 0,
                cost,
                grad_norm,
                step: 0.0,
                mesh_quality: Some(mesh.min_quality()),
                slope: 0.0,
            });
            if grad_norm <= cfg.atol || grad_norm == 0.0 {
                status = Status::Converged;
                break;
            }
        } else {
            let last = history.last_mut().expect("history has a record");
            last.grad_norm = grad_norm;
            if grad_norm <= tol {
                status = Status::Converged;
                break;
            }
        }
        if k == cfg.max_iter {
            break;
        }
        if !(slope < 0.0) {
            status = Status::LineSearchFailed;
            break;
        }

        let mut step = match last_step {
            None => cfg.linesearch.alpha0,
            Some((a, true)) => 2.0 * a,
            Some((a, false)) => a,
        };
        let mut trials: Vec<Trial> = Vec::new();
        let accepted = loop {
            let (outcome, trial_mesh) = trial_value(problem, &mesh, &field, step, cfg.quality_threshold);
            let value = match outcome {
                TrialOutcome::Value(v) if v.is_nan() => return Err(Error::NonFiniteCost),
                TrialOutcome::Value(v) => v,
                TrialOutcome::Quality(..) => f64::INFINITY,
            };
            trials.push(Trial { step, value });
            if let Some(m) = trial_mesh {
                if cfg.linesearch.armijo_holds(cost, slope, step, value) {
                    break Some((m, value));
                }
            }
            let next = linesearch::next_step(cost, slope, &trials, &cfg.linesearch);
            if next < STEP_UNDERFLOW {
                if let TrialOutcome::Quality(triangle, quality) = outcome {
                    return Err(Error::QualityLock { triangle, quality });
                }
                break None;
            }
            step = next;
        };
        let Some((new_mesh, value)) = accepted else {
            status = Status::LineSearchFailed;
            break;
        };
        last_step = Some((step, trials.len() == 1));
        mesh = new_mesh;
        state = problem.solve_state(&mesh)?;
        cost = value;
        history.push(IterationRecord {
            iter: k + 1,
            cost,
            grad_norm: f64::NAN,
            step,
            mesh_quality: Some(mesh.min_quality()),
            slope,
        });
    }
    debug_assert!(
        crate::optimize::history_satisfies_armijo(&history, cfg.linesearch.c1),
        "accepted step violates Armijo"
    );
    Ok(ShapeResult { mesh, history, status })
}

/// `int kappa_T (grad V : grad W + mass_weight V . W)` with one coefficient
/// per triangle.
fn weighted_h1(mesh: &Mesh2D, kappa: &[f64], mass_weight: f64) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(18 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.signed_area(t);
        let g = mesh.barycentric_gradients(t);
        let m = crate::fem::local_mass(area);
        for i in 0..3 {
            for j in 0..3 {
                let v = kappa[t] * (area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]) + mass_weight * m[i][j]);
                for a in 0..2 {
                    triplets.push((2 * tri[i] + a, 2 * tri[j] + a, v));
                }
            }
        }
    }
    let n = 2 * mesh.num_nodes();
    CsrMatrix::from_triplets(n, n, &triplets)
}
