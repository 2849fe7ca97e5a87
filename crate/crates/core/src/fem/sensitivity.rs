//! Derivatives of P1 element integrals with respect to node positions.
//!
//! Moving the nodes with a P1 velocity field `V` transports the basis
//! functions, which gives the exact identities
//!
//! ```text
//! d/dt int_T u v dx          = int_T u v div V
//! d/dt int_T k grad u.grad v = int_T k (div V I - DV - DV^T) grad u . grad v
//! ```
//!
//! Covector routines return the interleaved `[x0, y0, x1, y1, ...]` gradient
//! of such a term with respect to `V`; `*_apply` routines return the action of
//! the differentiated matrix on a nodal vector.

use super::assembly::{gradient_on_triangle, local_mass, Coefficient};
use crate::mesh::Mesh2D;

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `DV` (with `DV[a][b] = dV_a/dx_b`) and `div V` on triangle `t`.
pub fn velocity_jacobian(mesh: &Mesh2D, t: usize, velocity: &[[f64; 2]]) -> ([[f64; 2]; 2], f64) {
    let g = mesh.barycentric_gradients(t);
    let tri = mesh.triangles()[t];
    let mut dv = [[0.0; 2]; 2];
    for k in 0..3 {
        let v = velocity[tri[k]];
        for a in 0..2 {
            for b in 0..2 {
                dv[a][b] += v[a] * g[k][b];
            }
        }
    }
    (dv, dv[0][0] + dv[1][1])
}

/// Gradient with respect to `V` of `int k (div V I - DV - DV^T) grad u . grad w`.
pub fn stiffness_covector(mesh: &Mesh2D, coefficient: Coefficient, u: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let scale = coefficient.on_triangle(mesh, t) * mesh.signed_area(t);
        let g = mesh.barycentric_gradients(t);
        let gu = gradient_on_triangle(mesh, t, u);
        let gw = gradient_on_triangle(mesh, t, w);
        let uw = dot2(gu, gw);
        for k in 0..3 {
            let gk_w = dot2(g[k], gw);
            let gk_u = dot2(g[k], gu);
            for a in 0..2 {
                out[2 * tri[k] + a] += scale * (uw * g[k][a] - gu[a] * gk_w - gw[a] * gk_u);
            }
        }
    }
    out
}

/// Gradient with respect to `V` of `int u w div V`.
pub fn mass_covector(mesh: &Mesh2D, u: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let m = local_mass(mesh.signed_area(t));
        let mut uw = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                uw += u[tri[i]] * m[i][j] * w[tri[j]];
            }
        }
        let g = mesh.barycentric_gradients(t);
        for k in 0..3 {
            for a in 0..2 {
                out[2 * tri[k] + a] += uw * g[k][a];
            }
        }
    }
    out
}

/// Gradient with respect to `V` of `int u div V`.
pub fn divergence_covector(mesh: &Mesh2D, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let integral = mesh.signed_area(t) * (u[tri[0]] + u[tri[1]] + u[tri[2]]) / 3.0;
        let g = mesh.barycentric_gradients(t);
        for k in 0..3 {
            for a in 0..2 {
                out[2 * tri[k] + a] += integral * g[k][a];
            }
        }
    }
    out
}

/// `(dK[V] u)_i = int k (div V I - DV - DV^T) grad u . grad phi_i`.
pub fn stiffness_apply(mesh: &Mesh2D, coefficient: Coefficient, velocity: &[[f64; 2]], u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let scale = coefficient.on_triangle(mesh, t) * mesh.signed_area(t);
        let (dv, div) = velocity_jacobian(mesh, t, velocity);
        let gu = gradient_on_triangle(mesh, t, u);
        // A(V) grad u with A = div I - DV - DV^T
        let mut agu = [div * gu[0], div * gu[1]];
        for a in 0..2 {
            for b in 0..2 {
                agu[a] -= (dv[a][b] + dv[b][a]) * gu[b];
            }
        }
        let g = mesh.barycentric_gradients(t);
        for k in 0..3 {
            out[tri[k]] += scale * dot2(agu, g[k]);
        }
    }
    out
}

/// `(dM[V] u)_i = int u phi_i div V`.
pub fn mass_apply(mesh: &Mesh2D, velocity: &[[f64; 2]], u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (_, div) = velocity_jacobian(mesh, t, velocity);
        let m = local_mass(mesh.signed_area(t));
        for i in 0..3 {
            for j in 0..3 {
                out[tri[i]] += div * m[i][j] * u[tri[j]];
            }
        }
    }
    out
}
