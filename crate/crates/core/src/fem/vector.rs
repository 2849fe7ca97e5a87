//! Operators on P1 vector fields with interleaved unknowns `[x0, y0, x1, ...]`.

use super::assembly::{local_mass, Coefficient};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::mesh::Mesh2D;

/// `int kappa grad V : grad W + mass_weight V . W`.
pub fn assemble_vector_laplace(mesh: &Mesh2D, coefficient: Coefficient, mass_weight: f64) -> Result<CsrMatrix> {
    let mut triplets = Vec::with_capacity(18 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let kappa = coefficient.on_triangle(mesh, t);
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidCoefficient {
                triangle: t,
                value: kappa,
            });
        }
        let area = mesh.signed_area(t);
        let g = mesh.barycentric_gradients(t);
        let m = local_mass(area);
        for i in 0..3 {
            for j in 0..3 {
                let v = kappa * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]) + mass_weight * m[i][j];
                for a in 0..2 {
                    triplets.push((2 * tri[i] + a, 2 * tri[j] + a, v));
                }
            }
        }
    }
    let n = 2 * mesh.num_nodes();
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// Linear elasticity `int 2 mu eps(V):eps(W) + lambda div V div W`, plus an
/// optional `mass_weight V . W` term.
pub fn assemble_elasticity(mesh: &Mesh2D, mu: f64, lambda: f64, mass_weight: f64) -> Result<CsrMatrix> {
    if !(mu > 0.0) || lambda < 0.0 || mass_weight < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "elasticity needs mu > 0, lambda >= 0 and mass_weight >= 0 (got {mu}, {lambda}, {mass_weight})"
        )));
    }
    let mut triplets = Vec::with_capacity(36 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.signed_area(t);
        let g = mesh.barycentric_gradients(t);
        let m = local_mass(area);
        for k in 0..3 {
            for l in 0..3 {
                let gkgl = g[k][0] * g[l][0] + g[k][1] * g[l][1];
                for a in 0..2 {
                    for b in 0..2 {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        let v = area * (mu * (delta * gkgl + g[k][b] * g[l][a]) + lambda * g[k][a] * g[l][b])
                            + mass_weight * delta * m[k][l];
                        triplets.push((2 * tri[k] + a, 2 * tri[l] + b, v));
                    }
                }
            }
        }
    }
    let n = 2 * mesh.num_nodes();
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// Zero values for both components of the given nodes.
pub fn fixed_vector_dofs(nodes: &[usize]) -> Vec<(usize, f64)> {
    nodes.iter().flat_map(|&i| [(2 * i, 0.0), (2 * i + 1, 0.0)]).collect()
}
