use pdeopt::error::Error;
use pdeopt::mesh::{DeformationField, Mesh2D};
use pdeopt::optimize::{history_satisfies_armijo, Status};
use pdeopt::reduced_problem::random_direction;
use pdeopt::shapeopt::{
    apply_derivative, eliminate_fixed, optimize_shape, p_laplace_gradient, shape_gradient, InnerProduct, PoissonShape,
    ShapeGradientConfig, ShapeOptConfig, ShapeProblem, VolumeFunctional,
};

fn smooth_field(mesh: &Mesh2D, seed: u64) -> DeformationField {
    let c = random_direction(10, seed);
    DeformationField::from_fn(mesh, |x, y| {
        [
            c[0] + c[1] * x + c[2] * y + c[3] * (2.0 * x + y).sin() + c[4] * (x - 2.0 * y).cos(),
            c[5] + c[6] * x + c[7] * y + c[8] * (x * y).sin() + c[9] * (3.0 * y).cos(),
        ]
    })
}

fn disk() -> Mesh2D {
    Mesh2D::unit_disk(8).unwrap()
}

#[test]
fn volume_derivative_examples() {
    let square = Mesh2D::unit_square(6).unwrap();
    let mut vol = VolumeFunctional;
    let d = vol.derivative(&square).unwrap();
    let constant = DeformationField(vec![[0.3, -1.7]; square.num_nodes()]);
    assert!(apply_derivative(&d, &constant).abs() < 1e-14);
    let radial = DeformationField::from_fn(&square, |x, y| [x, y]);
    assert!((apply_derivative(&d, &radial) - 2.0).abs() < 1e-14);
    let rotation = DeformationField::from_fn(&square, |x, y| [-y, x]);
    assert!(apply_derivative(&d, &rotation).abs() < 1e-14);
}

#[test]
fn poisson_shape_derivative_matches_finite_differences() {
    let mesh = disk();
    let mut prob = PoissonShape;
    let d = prob.derivative(&mesh).unwrap();
    for seed in 0..5 {
        let v = smooth_field(&mesh, seed);
        let exact = apply_derivative(&d, &v);
        let mut best = f64::INFINITY;
        for h in [1e-3, 1e-4, 1e-5, 1e-6, 1e-7] {
            let plus = prob.evaluate(&mesh.deform(&v.scaled(h)).unwrap()).unwrap();
            let minus = prob.evaluate(&mesh.deform(&v.scaled(-h)).unwrap()).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            best = best.min((fd - exact).abs() / exact.abs());
        }
        assert!(best <= 1e-4, "seed {seed}: best relative error {best}");
    }
}

#[test]
fn fixed_nodes_are_eliminated() {
    let mesh = Mesh2D::unit_square(6).unwrap();
    let mut d = PoissonShape.derivative(&mesh).unwrap();
    eliminate_fixed(&mut d, &mesh, &[1, 3]);
    let fixed = mesh.boundary_nodes(&[1, 3]);
    let mut v = DeformationField::zeros(mesh.num_nodes());
    for &i in &fixed {
        v.0[i] = [1.0 + i as f64, -2.0];
    }
    assert_eq!(apply_derivative(&d, &v), 0.0);
}

#[test]
fn gradient_is_linear_and_vanishes_for_zero_derivative() {
    let mesh = disk();
    let cfg = ShapeGradientConfig::new(InnerProduct::h1());
    let zero = shape_gradient(&vec![0.0; 2 * mesh.num_nodes()], &mesh, &cfg).unwrap();
    assert!(zero.0.iter().all(|v| *v == [0.0, 0.0]));
    let d = PoissonShape.derivative(&mesh).unwrap();
    let v = shape_gradient(&d, &mesh, &cfg).unwrap();
    let d3: Vec<f64> = d.iter().map(|x| 3.0 * x).collect();
    let v3 = shape_gradient(&d3, &mesh, &cfg).unwrap();
    for (a, b) in v.0.iter().zip(&v3.0) {
        for k in 0..2 {
            assert!((3.0 * a[k] - b[k]).abs() <= 1e-9 * (1.0 + b[k].abs()));
        }
    }
    let zero = p_laplace_gradient(&vec![0.0; 2 * mesh.num_nodes()], &mesh, 4.0, 1e-8, 1.0, &[]).unwrap();
    assert!(zero.0.iter().all(|v| *v == [0.0, 0.0]));
}

#[test]
fn h1_and_elasticity_are_both_descent_directions() {
    let mesh = disk();
    let d = PoissonShape.derivative(&mesh).unwrap();
    let h1 = shape_gradient(&d, &mesh, &ShapeGradientConfig::new(InnerProduct::h1())).unwrap();
    let elasticity = InnerProduct::Elasticity {
        mu: 1.0,
        lambda: 0.5,
        damping: 0.1,
    };
    let el = shape_gradient(&d, &mesh, &ShapeGradientConfig::new(elasticity)).unwrap();
    assert!(apply_derivative(&d, &h1) < 0.0);
    assert!(apply_derivative(&d, &el) < 0.0);
    let diff: f64 =
        h1.0.iter()
            .zip(&el.0)
            .map(|(a, b)| (a[0] - b[0]).abs() + (a[1] - b[1]).abs())
            .sum();
    assert!(diff > 1e-3);
}

#[test]
fn p_laplace_with_p2_is_the_linear_gradient() {
    let mesh = Mesh2D::unit_square(8).unwrap();
    let d = PoissonShape.derivative(&mesh).unwrap();
    let linear = ShapeGradientConfig {
        inner_product: InnerProduct::H1 { mass_weight: 0.0 },
        fixed_markers: vec![1],
    };
    let v_lin = shape_gradient(&d, &mesh, &linear).unwrap();
    let v_p2 = p_laplace_gradient(&d, &mesh, 2.0, 1e-8, 0.0, &[1]).unwrap();
    for (a, b) in v_lin.0.iter().zip(&v_p2.0) {
        assert!((a[0] - b[0]).abs() <= 1e-10 && (a[1] - b[1]).abs() <= 1e-10);
    }
}

#[test]
fn p_laplace_p4_is_a_descent_direction() {
    let mesh = disk();
    let d = PoissonShape.derivative(&mesh).unwrap();
    let v = p_laplace_gradient(&d, &mesh, 4.0, 1e-8, 1.0, &[]).unwrap();
    assert!(apply_derivative(&d, &v) < 0.0);
}

struct Flat;

impl ShapeProblem for Flat {
    fn solve_state(&mut self, _mesh: &Mesh2D) -> pdeopt::Result<Vec<f64>> {
        Ok(Vec::new())
    }
    fn solve_adjoint(&mut self, _mesh: &Mesh2D, _state: &[f64]) -> pdeopt::Result<Vec<f64>> {
        Ok(Vec::new())
    }
    fn cost(&mut self, _mesh: &Mesh2D, _state: &[f64]) -> pdeopt::Result<f64> {
        Ok(1.0)
    }
    fn shape_derivative(&mut self, mesh: &Mesh2D, _state: &[f64], _adjoint: &[f64]) -> pdeopt::Result<Vec<f64>> {
        Ok(vec![0.0; 2 * mesh.num_nodes()])
    }
}

#[test]
fn stationary_shape_takes_no_iterations() {
    let res = optimize_shape(
        &mut Flat,
        &disk(),
        &ShapeGradientConfig::new(InnerProduct::h1()),
        &ShapeOptConfig::default(),
    )
    .unwrap();
    assert_eq!(res.iterations(), 0);
    assert_eq!(res.status, Status::Converged);
}

fn demo_run(inner_product: InnerProduct) -> pdeopt::shapeopt::ShapeResult {
    let cfg = ShapeOptConfig {
        rtol: 1e-2,
        max_iter: 50,
        ..Default::default()
    };
    optimize_shape(
        &mut PoissonShape,
        &disk(),
        &ShapeGradientConfig::new(inner_product),
        &cfg,
    )
    .unwrap()
}

#[test]
fn poisson_shape_optimization_h1_and_p_laplace() {
    let h1 = demo_run(InnerProduct::h1());
    let pl = demo_run(InnerProduct::PLaplace {
        p: 4.0,
        eps: 1e-8,
        mass_weight: 1.0,
    });
    assert_eq!(h1.status, Status::Converged, "{:?}", h1.history.last());
    assert!(h1.iterations() <= 50);
    assert!(h1.history.last().unwrap().grad_norm <= 1e-2 * h1.history[0].grad_norm);
    for res in [&h1, &pl] {
        let h = &res.history;
        assert!(res.mesh.min_quality() >= 0.1);
        assert!(history_satisfies_armijo(h, 1e-4));
        assert!(h.windows(2).all(|w| w[1].cost < w[0].cost));
    }
    assert!(pl.mesh.min_quality() >= h1.mesh.min_quality() - 0.05);
}

#[test]
fn quality_guard_reports_blocking_triangle() {
    let mesh = disk();
    let cfg = ShapeOptConfig {
        quality_threshold: mesh.min_quality(),
        ..Default::default()
    };
    match optimize_shape(
        &mut PoissonShape,
        &mesh,
        &ShapeGradientConfig::new(InnerProduct::h1()),
        &cfg,
    ) {
        Err(Error::QualityLock { triangle, quality }) => {
            assert!(triangle < mesh.num_triangles());
            assert!(quality < mesh.min_quality());
        }
        other => panic!("expected a quality lock, got {:?}", other.map(|r| r.history)),
    }
}
