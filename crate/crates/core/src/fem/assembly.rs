//! P1 assembly on triangle meshes. All element integrals are exact for
//! piecewise-linear data and piecewise-constant coefficients.

use super::sparse::CsrMatrix;
use crate::error::{check_len, Error, Result};
use crate::mesh::Mesh2D;

/// Diffusion coefficient. Nodal coefficients enter as the vertex average on
/// each triangle.
#[derive(Debug, Clone, Copy)]
pub enum Coefficient<'a> {
    Constant(f64),
    Nodal(&'a [f64]),
    PerTriangle(&'a [f64]),
}

impl Coefficient<'_> {
    pub fn on_triangle(&self, mesh: &Mesh2D, t: usize) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Nodal(v) => {
                let [a, b, c] = mesh.triangles()[t];
                (v[a] + v[b] + v[c]) / 3.0
            }
            Coefficient::PerTriangle(v) => v[t],
        }
    }

    fn check(&self, mesh: &Mesh2D) -> Result<()> {
        match self {
            Coefficient::Constant(_) => Ok(()),
            Coefficient::Nodal(v) => check_len(mesh.num_nodes(), v.len()),
            Coefficient::PerTriangle(v) => check_len(mesh.num_triangles(), v.len()),
        }
    }
}

/// Local mass matrix of a triangle with the given area.
pub fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Local stiffness matrix `kappa * area * grad(l_i).grad(l_j)`.
pub fn local_stiffness(mesh: &Mesh2D, t: usize, kappa: f64) -> [[f64; 3]; 3] {
    let g = mesh.barycentric_gradients(t);
    let area = mesh.signed_area(t);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = kappa * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

/// Galerkin stiffness matrix of `-div(kappa grad u)`.
pub fn assemble_stiffness(mesh: &Mesh2D, coefficient: Coefficient) -> Result<CsrMatrix> {
    coefficient.check(mesh)?;
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let kappa = coefficient.on_triangle(mesh, t);
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidCoefficient {
                triangle: t,
                value: kappa,
            });
        }
        let k = local_stiffness(mesh, t, kappa);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], k[i][j]));
            }
        }
    }
    let n = mesh.num_nodes();
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// Consistent P1 mass matrix.
pub fn assemble_mass(mesh: &Mesh2D) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let m = local_mass(mesh.signed_area(t));
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], m[i][j]));
            }
        }
    }
    let n = mesh.num_nodes();
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Row sums of the mass matrix (area / 3 per incident triangle).
pub fn lumped_mass(mesh: &Mesh2D) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(t) / 3.0;
        for &i in tri {
            m[i] += a;
        }
    }
    m
}

/// Load vector of a piecewise-constant source: `int_T f_T phi_i`.
pub fn assemble_load_per_triangle(mesh: &Mesh2D, source: &[f64]) -> Result<Vec<f64>> {
    check_len(mesh.num_triangles(), source.len())?;
    let mut b = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let share = source[t] * mesh.signed_area(t) / 3.0;
        for &i in tri {
            b[i] += share;
        }
    }
    Ok(b)
}

/// Nodal values of `f` at the current node positions.
pub fn interpolate(mesh: &Mesh2D, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    mesh.nodes().iter().map(|p| f(p[0], p[1])).collect()
}

/// `int_Omega u dx` for a P1 field.
pub fn integrate(mesh: &Mesh2D, u: &[f64]) -> f64 {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| mesh.signed_area(t) * (u[tri[0]] + u[tri[1]] + u[tri[2]]) / 3.0)
        .sum()
}

/// Constant gradient of a P1 field on triangle `t`.
pub fn gradient_on_triangle(mesh: &Mesh2D, t: usize, u: &[f64]) -> [f64; 2] {
    let g = mesh.barycentric_gradients(t);
    let tri = mesh.triangles()[t];
    let mut out = [0.0; 2];
    for k in 0..3 {
        out[0] += u[tri[k]] * g[k][0];
        out[1] += u[tri[k]] * g[k][1];
    }
    out
}

// Degree-5 seven-point rule on the reference triangle (barycentric, weight).
fn quadrature7() -> [([f64; 3], f64); 7] {
    let s = 15f64.sqrt();
    let a1 = (6.0 - s) / 21.0;
    let b1 = (9.0 + 2.0 * s) / 21.0;
    let w1 = (155.0 - s) / 1200.0;
    let a2 = (6.0 + s) / 21.0;
    let b2 = (9.0 - 2.0 * s) / 21.0;
    let w2 = (155.0 + s) / 1200.0;
    [
        ([1.0 / 3.0; 3], 9.0 / 40.0),
        ([a1, a1, b1], w1),
        ([a1, b1, a1], w1),
        ([b1, a1, a1], w1),
        ([a2, a2, b2], w2),
        ([a2, b2, a2], w2),
        ([b2, a2, a2], w2),
    ]
}

/// `|| u_h - u ||_{L^2}` with a degree-5 quadrature per triangle.
pub fn l2_error(mesh: &Mesh2D, u_h: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let rule = quadrature7();
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.vertices(t);
        let area = mesh.signed_area(t);
        for (bary, w) in rule.iter() {
            let x = bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0];
            let y = bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1];
            let uh = bary[0] * u_h[tri[0]] + bary[1] * u_h[tri[1]] + bary[2] * u_h[tri[2]];
            sum += w * area * (uh - exact(x, y)).powi(2);
        }
    }
    sum.sqrt()
}
