//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any failure.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use pdeopt::constraints::{
    augmented_lagrangian_frozen, augmented_lagrangian_solve, quadratic_penalty_solve, Constraint, ConstraintKind,
    LinearConstraint, OuterLoopConfig, OuterStatus,
};
use pdeopt::costfunctional::{CostFunctional, CostTerm};
use pdeopt::fem::{
    apply_dirichlet, assemble_mass, assemble_stiffness, dirichlet_values, interpolate, l2_error, solve, Coefficient,
    DirichletBC, DEFAULT_RTOL,
};
use pdeopt::linesearch::{armijo, polynomial_step, LineSearchConfig, Trial};
use pdeopt::mesh::Mesh2D;
use pdeopt::optimize::{FnObjective, Objective, OptimizerConfig};
use pdeopt::reduced_problem::random_direction;
use pdeopt::spacemapping::{
    solve as space_map, CoarseModel, FineModel, Instrumented, SpaceMappingConfig, SpaceMappingResult,
    SpaceMappingStatus,
};
use pdeopt::topopt::{SourceIdentification, TopologyProblem};
use pdeopt_cli::{gradient_check, run, write_outputs, Config, Outcome};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn demo_configs() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(configs())
        .expect("configs directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    paths
}

fn load(name: &str) -> Config {
    Config::load(&configs().join(name)).expect("demo config loads")
}

fn run_demo(name: &str) -> Result<Outcome, String> {
    run(&load(name)).map_err(|e| format!("{name}: {e}"))
}

fn metric(o: &Outcome, name: &str) -> f64 {
    o.metric(name).unwrap_or(f64::NAN)
}

fn csv_column(o: &Outcome, column: usize) -> Vec<f64> {
    o.history
        .to_csv()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(column).unwrap().parse().unwrap())
        .collect()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn adjoint_gradient() -> Verdict {
    let config = Config::parse(
        "problem = \"poisson_control\"\nseed = 3\n[mesh]\nresolution = 16\n[gradient_check]\ndirections = 5\n",
    )
    .map_err(|e| e.to_string())?;
    let (report, elapsed) = timed(|| gradient_check(&config));
    let report = report.map_err(|e| e.to_string())?;
    let worst = report.worst_best();
    ensure(
        report.steps == [1e-3, 1e-4, 1e-5, 1e-6, 1e-7] && worst <= 1e-6 && elapsed < Duration::from_secs(10),
        format!(
            "worst best FD error {worst:.2e} over {} directions, {elapsed:.2?}",
            report.lines.len()
        ),
    )
}

fn poisson_l2_error(n: usize) -> f64 {
    use std::f64::consts::PI;
    let mesh = Mesh2D::unit_square(n).unwrap();
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let f = interpolate(&mesh, |x, y| 2.0 * PI * PI * exact(x, y));
    let k = assemble_stiffness(&mesh, Coefficient::Constant(1.0)).unwrap();
    let load = assemble_mass(&mesh).mul_vec(&f);
    let bcs: Vec<DirichletBC> = mesh.markers().into_iter().map(DirichletBC::homogeneous).collect();
    let fixed = dirichlet_values(&mesh, &bcs).unwrap();
    let (a, b) = apply_dirichlet(&k, &load, &fixed);
    let u = solve(&a, &b, DEFAULT_RTOL).unwrap();
    l2_error(&mesh, &u, exact)
}

fn manufactured_convergence() -> Verdict {
    let ((e16, e32), elapsed) = timed(|| (poisson_l2_error(16), poisson_l2_error(32)));
    let ratio = e16 / e32;
    ensure(
        (3.5..=4.5).contains(&ratio) && elapsed < Duration::from_secs(30),
        format!("L2 errors {e16:.3e} -> {e32:.3e}, ratio {ratio:.3}, {elapsed:.2?}"),
    )
}

fn shape_derivative() -> Verdict {
    let config =
        Config::parse("problem = \"shape_poisson\"\n[gradient_check]\ndirections = 5\n").map_err(|e| e.to_string())?;
    let report = gradient_check(&config).map_err(|e| e.to_string())?;
    let bests: Vec<String> = report.lines.iter().map(|l| format!("{:.1e}", l.best())).collect();
    ensure(
        report.lines.len() == 5 && report.lines.iter().all(|l| l.best() <= 1e-4),
        format!("best FD errors per field [{}]", bests.join(", ")),
    )
}

fn shape_run() -> Verdict {
    let h1 = run_demo("shape_poisson.toml")?;
    let pl = run_demo("shape_plaplace.toml")?;
    let reduction = metric(&h1, "grad_reduction");
    let (q_h1, q_pl) = (metric(&h1, "min_quality"), metric(&pl, "min_quality"));
    ensure(
        reduction >= 1e2 && h1.iterations <= 50 && q_h1 >= 0.1 && q_pl >= q_h1 - 0.05,
        format!(
            "H1: reduction {reduction:.1} in {} iterations, quality {q_h1:.3}; p-Laplace quality {q_pl:.3}",
            h1.iterations
        ),
    )
}

fn switch_errors() -> Vec<f64> {
    let problem = SourceIdentification::demo(64).unwrap();
    let mesh = problem.mesh();
    let empty = vec![false; mesh.num_triangles()];
    let y = problem.state_for_layout(&empty).unwrap();
    let p = problem.adjoint_for_state(&y).unwrap();
    let j0 = problem.cost_for_layout(&empty).unwrap();
    [[0.5, 0.5], [0.3, 0.6], [0.7, 0.25]]
        .iter()
        .map(|x| {
            let dist = |t: usize| {
                let c = mesh.centroid(t);
                (c[0] - x[0]).powi(2) + (c[1] - x[1]).powi(2)
            };
            let t = (0..mesh.num_triangles())
                .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
                .unwrap();
            let mut flipped = empty.clone();
            flipped[t] = true;
            let actual = problem.cost_for_layout(&flipped).unwrap() - j0;
            (actual - problem.predicted_switch(t, false, &p)).abs() / actual.abs()
        })
        .collect()
}

fn topology() -> Verdict {
    let cc = run_demo("topopt_source.toml")?;
    let qn = run_demo("topopt_quasi_newton.toml")?;
    let first_cc = metric(&cc, "first_iter_below_5deg");
    let first_qn = metric(&qn, "first_iter_below_5deg");
    let costs = csv_column(&cc, 1);
    let monotone = costs.windows(2).all(|w| w[1] <= w[0]);
    let flips = switch_errors();
    ensure(
        first_cc <= 100.0 && monotone && flips.iter().all(|&e| e <= 0.2) && first_qn <= first_cc,
        format!(
            "theta <= 5 deg at iteration {first_cc} (quasi-Newton {first_qn}), cost nonincreasing {monotone}, \
             flip errors [{}]",
            flips.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn shifted_norm(a: Vec<f64>) -> impl Objective {
    let a2 = a.clone();
    FnObjective::new(
        a.len(),
        move |q: &[f64]| 0.5 * q.iter().zip(&a).map(|(q, a)| (q - a).powi(2)).sum::<f64>(),
        move |q: &[f64]| q.iter().zip(&a2).map(|(q, a)| q - a).collect(),
    )
}

fn linear<'a>(w: Vec<f64>, b: f64) -> Vec<Box<dyn Constraint + 'a>> {
    vec![Box::new(LinearConstraint {
        kind: ConstraintKind::Equality,
        w,
        b,
    })]
}

fn constraints() -> Verdict {
    let n = 6;
    let a = random_direction(n, 4);
    let w = random_direction(n, 5);
    let b = 0.7;
    // [I w; w^T 0] [q; λ] = [a; b]
    let mut k = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        k[(i, i)] = 1.0;
        k[(i, n)] = w[i];
        k[(n, i)] = w[i];
        rhs[i] = a[i];
    }
    rhs[n] = b;
    let kkt = k.lu().solve(&rhs).ok_or("singular KKT matrix")?;

    let cfg = OuterLoopConfig {
        tol_feas: 1e-9,
        max_outer: 40,
        inner: OptimizerConfig {
            rtol: 1e-12,
            atol: 1e-13,
            max_iter: 500,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut f = shifted_norm(a.clone());
    let mut cons = linear(w.clone(), b);
    let al = augmented_lagrangian_solve(&mut f, &mut cons, &vec![0.0; n], &[0.0], &cfg).map_err(|e| e.to_string())?;
    let q_err = (0..n).map(|i| (al.q[i] - kkt[i]).abs()).fold(0.0, f64::max);
    let l_err = (al.lambda[0] - kkt[n]).abs();

    let penalty_cfg = OuterLoopConfig {
        tol_feas: 1e-7,
        ..Default::default()
    };
    let bound = pdeopt::fem::dot(&w, &a) - 1.0;
    let mut f1 = shifted_norm(a.clone());
    let mut c1 = linear(w.clone(), bound);
    let qp = quadratic_penalty_solve(&mut f1, &mut c1, &vec![0.0; n], &penalty_cfg).map_err(|e| e.to_string())?;
    let mut f2 = shifted_norm(a);
    let mut c2 = linear(w, bound);
    let frozen =
        augmented_lagrangian_frozen(&mut f2, &mut c2, &vec![0.0; n], &penalty_cfg).map_err(|e| e.to_string())?;
    let identical = qp == frozen && qp.history.len() > 2;
    ensure(
        al.status == OuterStatus::Converged && q_err <= 1e-6 && l_err <= 1e-6 && identical,
        format!(
            "KKT error q {q_err:.1e}, lambda {l_err:.1e}; frozen AL == penalty over {} outer iterations: {identical}",
            qp.history.len()
        ),
    )
}

/// `c(z) = A (z - shift) + nonlinear (z1², z0 z1)`.
#[derive(Clone)]
struct Analytic {
    nonlinear: f64,
    target: Vec<f64>,
    shift: [f64; 2],
}

const A: [[f64; 2]; 2] = [[2.0, 0.5], [-0.3, 1.5]];

impl Analytic {
    fn map(&self, z: &[f64]) -> Vec<f64> {
        let z = [z[0] - self.shift[0], z[1] - self.shift[1]];
        vec![
            A[0][0] * z[0] + A[0][1] * z[1] + self.nonlinear * z[1] * z[1],
            A[1][0] * z[0] + A[1][1] * z[1] + self.nonlinear * z[0] * z[1],
        ]
    }
}

impl FineModel for Analytic {
    fn evaluate(&mut self, x: &[f64]) -> pdeopt::Result<Vec<f64>> {
        Ok(self.map(x))
    }
}

impl CoarseModel for Analytic {
    fn design_dim(&self) -> usize {
        2
    }

    fn response(&mut self, z: &[f64]) -> pdeopt::Result<Vec<f64>> {
        Ok(self.map(z))
    }

    fn response_transpose_apply(&mut self, z: &[f64], w: &[f64]) -> pdeopt::Result<Vec<f64>> {
        let z = [z[0] - self.shift[0], z[1] - self.shift[1]];
        let n = self.nonlinear;
        let jac = [
            [A[0][0], A[0][1] + 2.0 * n * z[1]],
            [A[1][0] + n * z[1], A[1][1] + n * z[0]],
        ];
        Ok((0..2).map(|j| jac[0][j] * w[0] + jac[1][j] * w[1]).collect())
    }

    fn objective(&self, r: &[f64]) -> f64 {
        0.5 * r.iter().zip(&self.target).map(|(r, t)| (r - t).powi(2)).sum::<f64>()
    }

    fn objective_gradient(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.target).map(|(r, t)| r - t).collect()
    }
}

fn secant_error(result: &SpaceMappingResult) -> f64 {
    result
        .updates
        .iter()
        .map(|u| {
            let dp = DVector::from_column_slice(&u.dp);
            (&u.b * DVector::from_column_slice(&u.dx) - &dp).norm() / dp.norm()
        })
        .fold(0.0, f64::max)
}

fn space_mapping_exact() -> Verdict {
    let model = Analytic {
        nonlinear: 0.1,
        target: vec![1.0, 2.0],
        shift: [0.0; 2],
    };
    let mut fine = Instrumented::new(model.clone());
    let mut coarse = model;
    let same = space_map(&mut fine, &mut coarse, &SpaceMappingConfig::default()).map_err(|e| e.to_string())?;

    let shift = [0.25, -0.4];
    let mut coarse = Analytic {
        nonlinear: 0.0,
        target: vec![1.0, -0.5],
        shift: [0.0; 2],
    };
    let mut shifted = Instrumented::new(Analytic {
        shift,
        ..coarse.clone()
    });
    let cfg = SpaceMappingConfig {
        tol: 1e-8,
        max_iter: 25,
    };
    let pair = space_map(&mut shifted, &mut coarse, &cfg).map_err(|e| e.to_string())?;
    let x_err = (0..2)
        .map(|k| (pair.x[k] - pair.z_star[k] - shift[k]).abs())
        .fold(0.0, f64::max);

    let mut coarse = Analytic {
        nonlinear: 0.2,
        target: vec![0.8, 0.3],
        shift: [0.0; 2],
    };
    let mut bent = Instrumented::new(Analytic {
        shift: [0.1, 0.15],
        nonlinear: 0.25,
        ..coarse.clone()
    });
    let nonlinear = space_map(&mut bent, &mut coarse, &SpaceMappingConfig::default()).map_err(|e| e.to_string())?;
    let secant = secant_error(&pair).max(secant_error(&nonlinear));
    let derivative_calls = fine.derivative_calls + shifted.derivative_calls + bent.derivative_calls;
    ensure(
        same.status == SpaceMappingStatus::Converged
            && same.iterations() == 0
            && pair.status == SpaceMappingStatus::Converged
            && pair.iterations() <= 2
            && x_err <= 1e-8
            && !nonlinear.updates.is_empty()
            && secant <= 1e-12
            && derivative_calls == 0,
        format!(
            "identical pair {} iterations; shifted pair {} iterations, design error {x_err:.1e}; \
             worst secant residual {secant:.1e} over {} updates; fine derivative calls {derivative_calls}",
            same.iterations(),
            pair.iterations(),
            pair.updates.len() + nonlinear.updates.len()
        ),
    )
}

fn flow_analog() -> Verdict {
    let (outcome, elapsed) = timed(|| run_demo("spacemapping_flow.toml"));
    let o = outcome?;
    let imbalance = metric(&o, "imbalance");
    let calls = metric(&o, "fine_derivative_calls");
    ensure(
        o.converged && o.iterations <= 10 && imbalance <= 0.02 && calls == 0.0 && elapsed < Duration::from_secs(120),
        format!(
            "{} iterations, outlet imbalance {:.2}% of the mean rate, {elapsed:.2?}",
            o.iterations,
            100.0 * imbalance
        ),
    )
}

fn quadratic_term<'a>(name: &str, weight: f64, center: Vec<f64>, scale: f64) -> CostTerm<'a> {
    CostTerm::new(name, weight, move |x: &[f64]| {
        Ok(scale * x.iter().zip(&center).map(|(x, c)| (x - c).powi(2)).sum::<f64>())
    })
}

fn scaling() -> Verdict {
    let x0 = [0.3, -1.2];
    let weights = [1.0, 3.5, 2.0];
    let terms = vec![
        quadratic_term("a", weights[0], vec![1.0, 2.0], 7.0),
        quadratic_term("b", weights[1], vec![-2.0, 0.1], 1e-3),
        quadratic_term("zero", weights[2], x0.to_vec(), 1.0),
    ];
    let mut c = CostFunctional::new(2, terms).map_err(|e| e.to_string())?;
    let gamma = c.compute_scaling(&x0).map_err(|e| e.to_string())?;
    let values = c.term_values(&x0).map_err(|e| e.to_string())?;
    let rel = (0..2)
        .map(|i| ((gamma[i] * values[i]).abs() - weights[i]).abs() / weights[i])
        .fold(0.0, f64::max);
    ensure(
        rel <= 1e-14 && gamma[2] == 1.0 && c.degenerate_terms() == [2],
        format!("max relative error {rel:.1e}; zero term gamma {}", gamma[2]),
    )
}

fn line_search() -> Verdict {
    // phi(a) = 4 (a - 1/4)² - 1/4, one trial at a = 1; all values exact in binary
    let phi = |a: f64| 4.0 * (a - 0.25) * (a - 0.25) - 0.25;
    let (phi0, dphi0) = (phi(0.0), -2.0);
    let trial = Trial {
        step: 1.0,
        value: phi(1.0),
    };
    let expected = -dphi0 / (2.0 * (trial.value - phi0 - dphi0));
    let step = polynomial_step(phi0, dphi0, &[trial], &LineSearchConfig::polynomial());

    let mut calls = Vec::new();
    let trace = armijo(
        |a| {
            calls.push(a);
            a * a - a
        },
        0.0,
        -1.0,
        &LineSearchConfig::default(),
    )
    .map_err(|e| e.to_string())?;

    // each demo also trips a debug assertion inside the optimizers on any violation
    let mut checked = Vec::new();
    for path in demo_configs() {
        let o = run(&Config::load(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if let Some(ok) = o.armijo_ok {
            checked.push((o.problem.name(), ok));
        }
    }
    let demos_ok = checked.iter().all(|c| c.1);
    ensure(
        step == expected && step == 0.25 && calls == [1.0, 0.5] && trace.step == 0.5 && demos_ok,
        format!(
            "polynomial step {step} (minimizer 0.25); Armijo trace {calls:?}; {} demo runs with Armijo records all ok: {demos_ok}",
            checked.len()
        ),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut differing = Vec::new();
    let paths = demo_configs();
    for path in &paths {
        let config = Config::load(path).map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        for k in 0..2 {
            let out = dir
                .path()
                .join(format!("{}_{k}", path.file_stem().unwrap().to_string_lossy()));
            let outcome = run(&config).map_err(|e| e.to_string())?;
            write_outputs(&outcome, &out, false).map_err(|e| e.to_string())?;
            files.push(std::fs::read(out.join("history.csv")).map_err(|e| e.to_string())?);
        }
        if files[0] != files[1] {
            differing.push(path.display().to_string());
        }
    }
    ensure(
        differing.is_empty(),
        format!("{} demo configs rerun, differing: {differing:?}", paths.len()),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("adjoint gradient vs finite differences", adjoint_gradient),
        ("manufactured solution convergence", manufactured_convergence),
        ("shape derivative consistency", shape_derivative),
        ("shape optimization run", shape_run),
        ("topology optimization", topology),
        ("constraint handling", constraints),
        ("space mapping exact cases", space_mapping_exact),
        ("space mapping flow analog", flow_analog),
        ("cost functional scaling", scaling),
        ("line search", line_search),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let verdict = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(format!(
                "panicked: {:?}",
                p.downcast_ref::<String>()
                    .map(String::as_str)
                    .or(p.downcast_ref::<&str>().copied())
            ))
        });
        match verdict {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
