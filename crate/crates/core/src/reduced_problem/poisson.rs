//! Distributed control of the Poisson equation on the unit square:
//! `-Δy + c y^3 = u` in Ω, `y = 0` on ∂Ω,
//! `J = ½‖y − y_d‖² + α/2 ‖u‖²` (L² norms).
//!
//! The reaction term uses the lumped mass so the state Jacobian stays
//! symmetric. With `c = 0` the problem is linear.

use std::f64::consts::PI;

use super::{solve_state, DiscreteProblem};
use crate::error::{check_len, Result};
use crate::fem::{
    apply_dirichlet, assemble_mass, assemble_stiffness, interpolate, lumped_mass, Coefficient, CsrMatrix,
};
use crate::mesh::Mesh2D;

/// Reference control used to generate the default target state.
pub fn reference_control(x: f64, y: f64) -> f64 {
    10.0 * (PI * x).sin() * (2.0 * PI * y).sin()
}

#[derive(Debug, Clone)]
pub struct PoissonControl {
    mesh: Mesh2D,
    stiffness: CsrMatrix,
    /// Stiffness with Dirichlet rows and columns replaced by identity.
    eliminated: CsrMatrix,
    mass: CsrMatrix,
    lumped: Vec<f64>,
    fixed: Vec<bool>,
    target: Vec<f64>,
    alpha: f64,
    reaction: f64,
}

impl PoissonControl {
    /// Linear problem on `unit_square(n)` with the target generated by
    /// [`reference_control`].
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        let mesh = Mesh2D::unit_square(n)?;
        let mut problem = Self::with_target(mesh, alpha, 0.0, Vec::new())?;
        let u_ref = interpolate(&problem.mesh, reference_control);
        problem.target = solve_state(&problem, &u_ref)?;
        Ok(problem)
    }

    /// Problem on any mesh; every boundary node is fixed to zero. An empty
    /// target means `y_d = 0`.
    pub fn with_target(mesh: Mesh2D, alpha: f64, reaction: f64, target: Vec<f64>) -> Result<Self> {
        let n = mesh.num_nodes();
        let target = if target.is_empty() { vec![0.0; n] } else { target };
        check_len(n, target.len())?;
        let stiffness = assemble_stiffness(&mesh, Coefficient::Constant(1.0))?;
        let mut fixed = vec![false; n];
        let markers = mesh.markers();
        let boundary: Vec<(usize, f64)> = mesh.boundary_nodes(&markers).into_iter().map(|i| (i, 0.0)).collect();
        for &(i, _) in &boundary {
            fixed[i] = true;
        }
        let (eliminated, _) = apply_dirichlet(&stiffness, &vec![0.0; n], &boundary);
        Ok(Self {
            mass: assemble_mass(&mesh),
            lumped: lumped_mass(&mesh),
            mesh,
            stiffness,
            eliminated,
            fixed,
            target,
            alpha,
            reaction,
        })
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn set_target(&mut self, target: Vec<f64>) -> Result<()> {
        check_len(self.mesh.num_nodes(), target.len())?;
        self.target = target;
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed[i]
    }

    fn free_part(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.fixed)
            .map(|(v, &f)| if f { 0.0 } else { *v })
            .collect()
    }
}

impl DiscreteProblem for PoissonControl {
    fn state_dim(&self) -> usize {
        self.mesh.num_nodes()
    }

    fn design_dim(&self) -> usize {
        self.mesh.num_nodes()
    }

    fn residual(&self, y: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        check_len(self.state_dim(), y.len())?;
        check_len(self.design_dim(), q.len())?;
        let y_free = self.free_part(y);
        let ky = self.stiffness.mul_vec(&y_free);
        let mq = self.mass.mul_vec(q);
        Ok((0..y.len())
            .map(|i| {
                if self.fixed[i] {
                    y[i]
                } else {
                    ky[i] + self.reaction * self.lumped[i] * y[i].powi(3) - mq[i]
                }
            })
            .collect())
    }

    fn state_jacobian(&self, y: &[f64], _q: &[f64]) -> Result<CsrMatrix> {
        check_len(self.state_dim(), y.len())?;
        if self.reaction == 0.0 {
            return Ok(self.eliminated.clone());
        }
        let diag: Vec<f64> = (0..y.len())
            .map(|i| {
                if self.fixed[i] {
                    0.0
                } else {
                    3.0 * self.reaction * self.lumped[i] * y[i] * y[i]
                }
            })
            .collect();
        Ok(self.eliminated.add_scaled(&CsrMatrix::from_diagonal(&diag), 1.0))
    }

    fn design_jacobian_apply(&self, _y: &[f64], _q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        check_len(self.design_dim(), dq.len())?;
        Ok(self.free_part(&self.mass.mul_vec(dq)).iter().map(|v| -v).collect())
    }

    fn design_jacobian_transpose_apply(&self, _y: &[f64], _q: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        check_len(self.state_dim(), p.len())?;
        Ok(self
            .mass
            .mul_transpose_vec(&self.free_part(p))
            .iter()
            .map(|v| -v)
            .collect())
    }

    fn cost(&self, y: &[f64], q: &[f64]) -> f64 {
        let e: Vec<f64> = y.iter().zip(&self.target).map(|(y, d)| y - d).collect();
        0.5 * self.mass.inner(&e, &e) + 0.5 * self.alpha * self.mass.inner(q, q)
    }

    fn cost_grad_state(&self, y: &[f64], _q: &[f64]) -> Vec<f64> {
        let e: Vec<f64> = y.iter().zip(&self.target).map(|(y, d)| y - d).collect();
        self.mass.mul_vec(&e)
    }

    fn cost_grad_design(&self, _y: &[f64], q: &[f64]) -> Vec<f64> {
        self.mass.mul_vec(q).iter().map(|v| v * self.alpha).collect()
    }

    fn is_linear(&self) -> bool {
        self.reaction == 0.0
    }
}

/// `∫ y dx` subject to the state equation of a [`PoissonControl`]; used as a
/// state constraint.
#[derive(Debug, Clone)]
pub struct StateIntegral {
    pub state: PoissonControl,
}

impl DiscreteProblem for StateIntegral {
    fn state_dim(&self) -> usize {
        self.state.state_dim()
    }

    fn design_dim(&self) -> usize {
        self.state.design_dim()
    }

    fn residual(&self, y: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        self.state.residual(y, q)
    }

    fn state_jacobian(&self, y: &[f64], q: &[f64]) -> Result<CsrMatrix> {
        self.state.state_jacobian(y, q)
    }

    fn design_jacobian_apply(&self, y: &[f64], q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        self.state.design_jacobian_apply(y, q, dq)
    }

    fn design_jacobian_transpose_apply(&self, y: &[f64], q: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        self.state.design_jacobian_transpose_apply(y, q, p)
    }

    fn cost(&self, y: &[f64], _q: &[f64]) -> f64 {
        self.state.mass.mul_vec(y).iter().sum()
    }

    fn cost_grad_state(&self, _y: &[f64], _q: &[f64]) -> Vec<f64> {
        self.state.mass.mul_vec(&vec![1.0; self.state_dim()])
    }

    fn cost_grad_design(&self, _y: &[f64], q: &[f64]) -> Vec<f64> {
        vec![0.0; q.len()]
    }

    fn is_linear(&self) -> bool {
        self.state.is_linear()
    }
}
