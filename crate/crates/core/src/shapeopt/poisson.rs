//! Shipped shape problems.

use super::ShapeProblem;
use crate::error::Result;
use crate::fem::sensitivity::{divergence_covector, mass_covector, stiffness_covector};
use crate::fem::{apply_dirichlet, assemble_mass, assemble_stiffness, interpolate, solve, Coefficient, DEFAULT_RTOL};
use crate::mesh::Mesh2D;

/// `J(Ω) = |Ω|`, with `dJ[V] = int div V`.
#[derive(Debug, Clone, Copy, Default)]
pub struct VolumeFunctional;

impl ShapeProblem for VolumeFunctional {
    fn solve_state(&mut self, _mesh: &Mesh2D) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }

    fn solve_adjoint(&mut self, _mesh: &Mesh2D, _state: &[f64]) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }

    fn cost(&mut self, mesh: &Mesh2D, _state: &[f64]) -> Result<f64> {
        Ok(mesh.area())
    }

    fn shape_derivative(&mut self, mesh: &Mesh2D, _state: &[f64], _adjoint: &[f64]) -> Result<Vec<f64>> {
        Ok(divergence_covector(mesh, &vec![1.0; mesh.num_nodes()]))
    }
}

/// `J(Ω) = int_Ω y` with `-Δy = f` in Ω and `y = 0` on ∂Ω, where
/// `f = 2.5 (x + 0.4 - y^2)^2 + x^2 + y^2 - 1` is interpolated at the nodes.
///
/// The derivative is exact for the discrete problem: with the adjoint
/// `K p = -M 1` (`p = 0` on ∂Ω),
///
/// ```text
/// dJ[V] = int y div V + int (div V I - DV - DV^T) grad y . grad p
///         - int f_h p div V - sum_i (M p)_i grad f(X_i) . V_i
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct PoissonShape;

impl PoissonShape {
    pub fn source(x: f64, y: f64) -> f64 {
        2.5 * (x + 0.4 - y * y).powi(2) + x * x + y * y - 1.0
    }

    pub fn source_gradient(x: f64, y: f64) -> [f64; 2] {
        let s = x + 0.4 - y * y;
        [5.0 * s + 2.0 * x, -10.0 * s * y + 2.0 * y]
    }

    fn boundary(mesh: &Mesh2D) -> Vec<(usize, f64)> {
        mesh.boundary_nodes(&mesh.markers())
            .into_iter()
            .map(|i| (i, 0.0))
            .collect()
    }
}

impl ShapeProblem for PoissonShape {
    fn solve_state(&mut self, mesh: &Mesh2D) -> Result<Vec<f64>> {
        let k = assemble_stiffness(mesh, Coefficient::Constant(1.0))?;
        let rhs = assemble_mass(mesh).mul_vec(&interpolate(mesh, Self::source));
        let (a, b) = apply_dirichlet(&k, &rhs, &Self::boundary(mesh));
        solve(&a, &b, DEFAULT_RTOL)
    }

    fn solve_adjoint(&mut self, mesh: &Mesh2D, _state: &[f64]) -> Result<Vec<f64>> {
        let k = assemble_stiffness(mesh, Coefficient::Constant(1.0))?;
        let rhs: Vec<f64> = assemble_mass(mesh).mul_vec(&vec![-1.0; mesh.num_nodes()]);
        let (a, b) = apply_dirichlet(&k, &rhs, &Self::boundary(mesh));
        solve(&a, &b, DEFAULT_RTOL)
    }

    fn cost(&mut self, mesh: &Mesh2D, state: &[f64]) -> Result<f64> {
        Ok(assemble_mass(mesh).mul_vec(state).iter().sum())
    }

    fn shape_derivative(&mut self, mesh: &Mesh2D, state: &[f64], adjoint: &[f64]) -> Result<Vec<f64>> {
        let f = interpolate(mesh, Self::source);
        let mut d = divergence_covector(mesh, state);
        let dk = stiffness_covector(mesh, Coefficient::Constant(1.0), state, adjoint);
        let dm = mass_covector(mesh, &f, adjoint);
        let mp = assemble_mass(mesh).mul_vec(adjoint);
        for (i, node) in mesh.nodes().iter().enumerate() {
            let gf = Self::source_gradient(node[0], node[1]);
            for a in 0..2 {
                d[2 * i + a] += dk[2 * i + a] - dm[2 * i + a] - mp[i] * gf[a];
            }
        }
        Ok(d)
    }
}
