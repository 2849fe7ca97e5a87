//! Flow-distribution analog: potential flow through the three-outlet channel.
//!
//! Unit flux enters at the inlet, the potential vanishes on the outlets and
//! the walls are impermeable. Responses are the three outlet flow rates.
//! Two design parameters widen the left and middle outlet stubs.

use super::{CoarseModel, FineModel};
use crate::error::{check_len, Error, Result};
use crate::fem::sensitivity::stiffness_apply;
use crate::fem::{
    apply_dirichlet, assemble_stiffness, gradient_on_triangle, solve, Coefficient, CsrMatrix, DEFAULT_RTOL,
};
use crate::mesh::{DeformationField, Mesh2D};

const INLET: u32 = 1;
const OUTLETS: [u32; 3] = [2, 3, 4];
const STUB_CENTERS: [f64; 2] = [0.7, 1.5];
const PICARD_TOL: f64 = 1e-11;
const PICARD_MAX: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelPhysics {
    /// `κ ≡ 1`.
    Linear,
    /// `κ = 1 + ½ / (1 + |∇u|²)`, solved by Picard iteration.
    Nonlinear,
}

#[derive(Debug, Clone)]
pub struct ChannelModel {
    reference: Mesh2D,
    physics: ChannelPhysics,
    modes: Vec<DeformationField>,
    outlets: Vec<Vec<usize>>,
    fixed: Vec<(usize, f64)>,
}

/// Horizontal profile moving the walls of the stub centred at `c` by ±1.
fn hat(x: f64, c: f64) -> f64 {
    let s = x - c;
    if s.abs() <= 0.2 {
        s / 0.2
    } else if s.abs() < 0.4 {
        s.signum() * (0.4 - s.abs()) / 0.2
    } else {
        0.0
    }
}

/// 0 below `y = 0.6`, 1 from the channel top `y = 1` upwards.
fn ramp(y: f64) -> f64 {
    ((y - 0.6) / 0.4).clamp(0.0, 1.0)
}

/// `max_k |q_k - mean| / mean`.
pub fn flow_imbalance(rates: &[f64]) -> f64 {
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    rates.iter().map(|q| (q - mean).abs()).fold(0.0, f64::max) / mean
}

impl ChannelModel {
    pub fn new(resolution: usize, physics: ChannelPhysics) -> Result<Self> {
        let reference = Mesh2D::three_outlet_channel(resolution)?;
        let modes = STUB_CENTERS
            .iter()
            .map(|&c| DeformationField::from_fn(&reference, |x, y| [hat(x, c) * ramp(y), 0.0]))
            .collect();
        let outlets: Vec<Vec<usize>> = OUTLETS.iter().map(|&m| reference.boundary_nodes(&[m])).collect();
        let fixed = reference
            .boundary_nodes(&OUTLETS)
            .into_iter()
            .map(|i| (i, 0.0))
            .collect();
        Ok(Self {
            reference,
            physics,
            modes,
            outlets,
            fixed,
        })
    }

    pub fn physics(&self) -> ChannelPhysics {
        self.physics
    }

    pub fn reference(&self) -> &Mesh2D {
        &self.reference
    }

    /// Channel geometry for design `z` (stub half-width offsets).
    pub fn mesh(&self, z: &[f64]) -> Result<Mesh2D> {
        check_len(self.modes.len(), z.len())?;
        let mut field = DeformationField::zeros(self.reference.num_nodes());
        for (mode, &zj) in self.modes.iter().zip(z) {
            for (v, m) in field.0.iter_mut().zip(&mode.0) {
                v[0] += zj * m[0];
                v[1] += zj * m[1];
            }
        }
        self.reference.deform(&field)
    }

    /// Velocity potential and per-triangle coefficient on the deformed mesh.
    pub fn potential(&self, z: &[f64]) -> Result<(Mesh2D, Vec<f64>, Vec<f64>)> {
        let mesh = self.mesh(z)?;
        let load = inlet_load(&mesh);
        let mut kappa = vec![1.0; mesh.num_triangles()];
        let mut u = self.solve_with(&mesh, &kappa, &load)?;
        if self.physics == ChannelPhysics::Nonlinear {
            let mut converged = false;
            let mut change = f64::INFINITY;
            for _ in 0..PICARD_MAX {
                for (t, k) in kappa.iter_mut().enumerate() {
                    let g = gradient_on_triangle(&mesh, t, &u);
                    *k = 1.0 + 0.5 / (1.0 + g[0] * g[0] + g[1] * g[1]);
                }
                let next = self.solve_with(&mesh, &kappa, &load)?;
                let scale = next.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
                change = next.iter().zip(&u).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs())) / scale;
                u = next;
                if change <= PICARD_TOL {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NonConvergence {
                    method: "Picard iteration",
                    iterations: PICARD_MAX,
                    residual: change,
                });
            }
            // coefficient consistent with the returned potential
            for (t, k) in kappa.iter_mut().enumerate() {
                let g = gradient_on_triangle(&mesh, t, &u);
                *k = 1.0 + 0.5 / (1.0 + g[0] * g[0] + g[1] * g[1]);
            }
        }
        Ok((mesh, u, kappa))
    }

    /// Outlet flow rates `-Σ_{i ∈ outlet} (K u)_i`.
    pub fn rates(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (mesh, u, kappa) = self.potential(z)?;
        let k = assemble_stiffness(&mesh, Coefficient::PerTriangle(&kappa))?;
        Ok(self.outlet_sums(&k.mul_vec(&u)))
    }

    /// Jacobian of the rates, one row per outlet (linear physics).
    pub fn rate_jacobian(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        if self.physics != ChannelPhysics::Linear {
            return Err(Error::InvalidArgument(
                "rate Jacobian is only available for linear physics".into(),
            ));
        }
        let (mesh, u, _) = self.potential(z)?;
        let k = assemble_stiffness(&mesh, Coefficient::Constant(1.0))?;
        let mut jac = vec![vec![0.0; self.modes.len()]; self.outlets.len()];
        // the load does not move: the modes vanish on the inlet
        for (j, mode) in self.modes.iter().enumerate() {
            let dk_u = stiffness_apply(&mesh, Coefficient::Constant(1.0), &mode.0, &u);
            let rhs: Vec<f64> = dk_u.iter().map(|v| -v).collect();
            let (a, b) = apply_dirichlet(&k, &rhs, &self.fixed);
            let du = solve(&a, &b, DEFAULT_RTOL)?;
            let kdu = k.mul_vec(&du);
            let total: Vec<f64> = dk_u.iter().zip(&kdu).map(|(a, b)| a + b).collect();
            for (row, d) in jac.iter_mut().zip(self.outlet_sums(&total)) {
                row[j] = d;
            }
        }
        Ok(jac)
    }

    fn outlet_sums(&self, v: &[f64]) -> Vec<f64> {
        self.outlets
            .iter()
            .map(|nodes| -nodes.iter().map(|&i| v[i]).sum::<f64>())
            .collect()
    }

    fn solve_with(&self, mesh: &Mesh2D, kappa: &[f64], load: &[f64]) -> Result<Vec<f64>> {
        let k: CsrMatrix = assemble_stiffness(mesh, Coefficient::PerTriangle(kappa))?;
        let (a, b) = apply_dirichlet(&k, load, &self.fixed);
        solve(&a, &b, DEFAULT_RTOL)
    }
}

/// Unit normal flux through the inlet edges.
fn inlet_load(mesh: &Mesh2D) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_nodes()];
    for e in mesh.boundary_edges().iter().filter(|e| e.marker == INLET) {
        let [i, j] = e.nodes;
        let (p, q) = (mesh.nodes()[i], mesh.nodes()[j]);
        let half = 0.5 * ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        b[i] += half;
        b[j] += half;
    }
    b
}

impl FineModel for ChannelModel {
    fn evaluate(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.rates(x)
    }
}

impl CoarseModel for ChannelModel {
    fn design_dim(&self) -> usize {
        self.modes.len()
    }

    fn response(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        self.rates(z)
    }

    fn response_transpose_apply(&mut self, z: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.outlets.len(), w.len())?;
        let jac = self.rate_jacobian(z)?;
        Ok((0..self.modes.len())
            .map(|j| jac.iter().zip(w).map(|(row, w)| row[j] * w).sum())
            .collect())
    }

    /// `½ ‖q - q̄‖²` against equal rates `q̄`.
    fn objective(&self, response: &[f64]) -> f64 {
        let target = response.iter().sum::<f64>() / response.len() as f64;
        0.5 * response.iter().map(|q| (q - target).powi(2)).sum::<f64>()
    }

    fn objective_gradient(&self, response: &[f64]) -> Vec<f64> {
        // the mean's own dependence cancels: Σ (q_k - q̄) = 0
        let target = response.iter().sum::<f64>() / response.len() as f64;
        response.iter().map(|q| q - target).collect()
    }
}
