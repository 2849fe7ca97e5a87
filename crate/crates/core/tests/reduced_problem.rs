use pdeopt::fem::{apply_dirichlet, assemble_mass, assemble_stiffness, dot, interpolate, solve, Coefficient};
use pdeopt::mesh::Mesh2D;
use pdeopt::optimize::{minimize, Algorithm, OptimizerConfig, Status};
use pdeopt::reduced_problem::{
    check_gradient, random_direction, reference_control, solve_state, verify_derivatives, DiscreteProblem,
    PoissonControl, ReducedFunctional, ScalarProduct, FD_STEPS,
};

fn mass_product(p: &PoissonControl) -> ScalarProduct {
    ScalarProduct::Matrix(p.mass().clone())
}

fn functional(n: usize, alpha: f64) -> ReducedFunctional<PoissonControl> {
    let p = PoissonControl::new(n, alpha).unwrap();
    let product = mass_product(&p);
    ReducedFunctional::new(p, product).unwrap()
}

#[test]
fn zero_control_cost_is_half_target_norm() {
    let mut rf = functional(8, 1e-4);
    let q = vec![0.0; rf.problem().design_dim()];
    let j = rf.evaluate(&q).unwrap();
    let yd = rf.problem().target().to_vec();
    let oracle = 0.5 * assemble_mass(rf.problem().mesh()).inner(&yd, &yd);
    assert!((j - oracle).abs() <= 1e-14 * oracle);
    assert!(oracle > 0.0);
}

#[test]
fn zero_misfit_leaves_regularization() {
    let mut rf = functional(8, 0.3);
    let q = interpolate(rf.problem().mesh(), |x, y| x * (1.0 - y) + 0.5);
    let y = rf.state(&q).unwrap();
    rf.problem_mut().set_target(y).unwrap();
    let j = rf.evaluate(&q).unwrap();
    let reg = 0.5 * 0.3 * rf.problem().mass().inner(&q, &q);
    assert!((j - reg).abs() <= 1e-12 * reg);

    let mut rf0 = functional(8, 0.0);
    let u_ref = interpolate(rf0.problem().mesh(), reference_control);
    assert!(rf0.evaluate(&u_ref).unwrap() < 1e-20);
}

#[test]
fn gradient_is_alpha_u_plus_adjoint() {
    let alpha = 1e-2;
    let mut rf = functional(12, alpha);
    let mesh = rf.problem().mesh().clone();
    let q = interpolate(&mesh, |x, y| (3.0 * x).cos() + y * y);
    let g = rf.gradient(&q).unwrap();

    // independent continuous-style adjoint: -Δp = y - y_d, p = 0 on the boundary
    let y = rf.state(&q).unwrap();
    let m = assemble_mass(&mesh);
    let k = assemble_stiffness(&mesh, Coefficient::Constant(1.0)).unwrap();
    let e: Vec<f64> = y.iter().zip(rf.problem().target()).map(|(a, b)| a - b).collect();
    let fixed: Vec<(usize, f64)> = mesh
        .boundary_nodes(&mesh.markers())
        .into_iter()
        .map(|i| (i, 0.0))
        .collect();
    let (kd, rhs) = apply_dirichlet(&k, &m.mul_vec(&e), &fixed);
    let p = solve(&kd, &rhs, 1e-13).unwrap();
    let scale = g.riesz.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..q.len() {
        let expected = alpha * q[i] + p[i];
        assert!((g.riesz[i] - expected).abs() <= 1e-8 * scale, "node {i}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rf = functional(16, 1e-4);
    let q = interpolate(rf.problem().mesh(), |x, y| x - y * y);
    let d = random_direction(q.len(), 7);
    let errs = check_gradient(&mut rf, &q, &d, &FD_STEPS).unwrap();
    let best = errs.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(best <= 1e-6, "{errs:?}");
}

#[test]
fn semilinear_gradient_matches_central_differences() {
    let mesh = Mesh2D::unit_square(8).unwrap();
    let target = interpolate(&mesh, |x, y| (x * (1.0 - x) * y * (1.0 - y)) * 4.0);
    let p = PoissonControl::with_target(mesh, 1e-3, 5.0, target).unwrap();
    let product = mass_product(&p);
    let mut rf = ReducedFunctional::new(p, product).unwrap();
    let q = interpolate(rf.problem().mesh(), |x, y| 20.0 * x * y);
    let d = random_direction(q.len(), 11);
    let errs = check_gradient(&mut rf, &q, &d, &FD_STEPS).unwrap();
    assert!(errs.iter().copied().fold(f64::INFINITY, f64::min) <= 1e-6, "{errs:?}");
}

#[test]
fn design_jacobian_transpose_contract() {
    let p = PoissonControl::new(6, 1e-3).unwrap();
    let n = p.design_dim();
    let y = vec![0.0; n];
    let q = vec![0.0; n];
    for seed in 0..5 {
        let d = random_direction(n, seed);
        let w = random_direction(n, 100 + seed);
        let lhs = dot(&p.design_jacobian_apply(&y, &q, &d).unwrap(), &w);
        let rhs = dot(&d, &p.design_jacobian_transpose_apply(&y, &q, &w).unwrap());
        assert!((lhs - rhs).abs() <= 1e-14 * lhs.abs().max(1.0));
    }
}

#[test]
fn verify_derivatives_linear_is_exact() {
    let p = PoissonControl::new(6, 1e-3).unwrap();
    let n = p.state_dim();
    let y = random_direction(n, 1);
    let q = random_direction(n, 2);
    let rep = verify_derivatives(
        &p,
        &y,
        &q,
        &random_direction(n, 3),
        &random_direction(n, 4),
        &[1e-1, 1e-2, 1e-3],
    )
    .unwrap();
    // residual is affine: forward differences exact up to cancellation
    for e in rep.state_jacobian.iter().chain(&rep.design_jacobian) {
        assert!(*e < 1e-10, "{rep:?}");
    }
    // the cost is quadratic: error shrinks in proportion to the step
    for errs in [&rep.cost_grad_state, &rep.cost_grad_design] {
        assert!(
            (errs[0] / errs[1] - 10.0).abs() < 0.1 && (errs[1] / errs[2] - 10.0).abs() < 0.1,
            "{rep:?}"
        );
    }
}

#[test]
fn verify_derivatives_semilinear_is_first_order() {
    let mesh = Mesh2D::unit_square(6).unwrap();
    let p = PoissonControl::with_target(mesh, 1e-3, 10.0, Vec::new()).unwrap();
    let n = p.state_dim();
    let y: Vec<f64> = random_direction(n, 5).iter().map(|v| 2.0 * v).collect();
    let q = random_direction(n, 6);
    let steps = [1e-2, 1e-3, 1e-4];
    let rep = verify_derivatives(&p, &y, &q, &random_direction(n, 8), &random_direction(n, 9), &steps).unwrap();
    let e = &rep.state_jacobian;
    let slope = ((e[0] / e[2]).log10()) / 2.0;
    assert!((slope - 1.0).abs() < 0.1, "slope {slope}, {e:?}");

    let zero = vec![0.0; n];
    let rep0 = verify_derivatives(&p, &y, &q, &zero, &zero, &steps).unwrap();
    assert!(rep0
        .state_jacobian
        .iter()
        .chain(&rep0.cost_grad_design)
        .all(|&e| e == 0.0));
}

#[test]
fn exact_optimum_is_stationary_in_every_product() {
    let mut rf = functional(10, 0.0);
    let u_ref = interpolate(rf.problem().mesh(), reference_control);
    let g = rf.gradient(&u_ref).unwrap();
    assert!(g.norm() < 1e-10, "{}", g.norm());
    rf.set_product(ScalarProduct::Identity);
    let g_id = rf.gradient(&u_ref).unwrap();
    assert!(g_id.riesz.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn cache_is_keyed_on_exact_design() {
    let mut rf = functional(6, 1e-3);
    let mut q = vec![0.5; rf.problem().design_dim()];
    rf.evaluate(&q).unwrap();
    rf.gradient(&q).unwrap();
    rf.evaluate(&q).unwrap();
    assert_eq!(rf.state_solves(), 1);
    assert_eq!(rf.adjoint_solves(), 1);
    q[3] += 1e-15;
    rf.evaluate(&q).unwrap();
    assert_eq!(rf.state_solves(), 2);
}

#[test]
fn state_solve_satisfies_residual() {
    let mesh = Mesh2D::unit_square(8).unwrap();
    let p = PoissonControl::with_target(mesh, 1e-3, 50.0, Vec::new()).unwrap();
    let q = vec![30.0; p.design_dim()];
    let y = solve_state(&p, &q).unwrap();
    let r = p.residual(&y, &q).unwrap();
    let r0 = p.residual(&vec![0.0; p.state_dim()], &q).unwrap();
    assert!(pdeopt::fem::norm(&r) <= 1e-10 * pdeopt::fem::norm(&r0));
}

#[test]
fn lbfgs_reduces_gradient_and_matches_steepest_plateau() {
    let cfg = OptimizerConfig {
        algorithm: Algorithm::Lbfgs,
        rtol: 1e-3,
        max_iter: 50,
        ..Default::default()
    };
    let mut rf = functional(16, 1e-4);
    let q0 = vec![0.0; rf.problem().design_dim()];
    let res = minimize(&mut rf, &q0, &cfg).unwrap();
    assert_eq!(res.status, Status::Converged);
    assert!(res.grad_norm <= 1e-3 * res.history[0].grad_norm);
    assert!(res.history.windows(2).all(|w| w[1].cost < w[0].cost));

    let steep_cfg = OptimizerConfig {
        algorithm: Algorithm::Steepest,
        rtol: 1e-3,
        max_iter: 2000,
        ..Default::default()
    };
    let mut rf2 = functional(16, 1e-4);
    let steep = minimize(&mut rf2, &q0, &steep_cfg).unwrap();
    assert_eq!(steep.status, Status::Converged);
    let rel = (steep.cost - res.cost).abs() / res.cost;
    assert!(rel < 1e-2, "lbfgs {} steepest {}", res.cost, steep.cost);
}
