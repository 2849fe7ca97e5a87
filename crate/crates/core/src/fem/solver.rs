//! Dirichlet elimination and the Jacobi-preconditioned CG solver.

use std::fmt;

use super::sparse::{axpy, dot, norm, CsrMatrix};
use crate::error::{Error, Result};
use crate::mesh::Mesh2D;

/// Default relative residual tolerance for linear solves.
pub const DEFAULT_RTOL: f64 = 1e-12;

/// Dirichlet condition `u = value(x, y)` on edges carrying `marker`.
pub struct DirichletBC {
    pub marker: u32,
    pub value: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl DirichletBC {
    pub fn new(marker: u32, value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            marker,
            value: Box::new(value),
        }
    }

    pub fn homogeneous(marker: u32) -> Self {
        Self::new(marker, |_, _| 0.0)
    }
}

impl fmt::Debug for DirichletBC {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirichletBC")
            .field("marker", &self.marker)
            .finish_non_exhaustive()
    }
}

/// Resolves boundary conditions to sorted `(node, value)` pairs. Later
/// conditions win on shared nodes.
pub fn dirichlet_values(mesh: &Mesh2D, bcs: &[DirichletBC]) -> Result<Vec<(usize, f64)>> {
    let markers = mesh.markers();
    let mut values = vec![None; mesh.num_nodes()];
    for bc in bcs {
        if !markers.contains(&bc.marker) {
            return Err(Error::InvalidArgument(format!(
                "boundary marker {} does not exist in the mesh",
                bc.marker
            )));
        }
        for i in mesh.boundary_nodes(&[bc.marker]) {
            let p = mesh.nodes()[i];
            values[i] = Some((bc.value)(p[0], p[1]));
        }
    }
    Ok(values
        .into_iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect())
}

/// Symmetric row/column elimination of prescribed values.
///
/// Free rows receive the correction `-A[:, D] g`; eliminated rows become unit
/// rows with right-hand side `g`.
pub fn apply_dirichlet(matrix: &CsrMatrix, rhs: &[f64], fixed: &[(usize, f64)]) -> (CsrMatrix, Vec<f64>) {
    let n = matrix.nrows();
    let mut value = vec![None; n];
    for &(i, g) in fixed {
        value[i] = Some(g);
    }
    let mut b = rhs.to_vec();
    let mut triplets = Vec::with_capacity(matrix.nnz());
    for i in 0..n {
        if let Some(g) = value[i] {
            triplets.push((i, i, 1.0));
            b[i] = g;
            continue;
        }
        for (j, a) in matrix.row(i) {
            match value[j] {
                Some(g) => b[i] -= a * g,
                None => triplets.push((i, j, a)),
            }
        }
    }
    (CsrMatrix::from_triplets(n, n, &triplets), b)
}

/// Outcome of a CG solve.
#[derive(Debug, Clone)]
pub struct CgInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves an SPD system to `||b - A x|| <= rtol ||b||`.
pub fn solve(matrix: &CsrMatrix, rhs: &[f64], rtol: f64) -> Result<Vec<f64>> {
    solve_with_info(matrix, rhs, rtol, None).map(|(x, _)| x)
}

/// Preconditioned CG with optional initial guess; at most `10 n` iterations.
pub fn solve_with_info(
    matrix: &CsrMatrix,
    rhs: &[f64],
    rtol: f64,
    initial: Option<&[f64]>,
) -> Result<(Vec<f64>, CgInfo)> {
    let n = matrix.nrows();
    assert_eq!(matrix.ncols(), n, "CG needs a square matrix");
    assert_eq!(rhs.len(), n);
    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            CgInfo {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = matrix
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |r: &[f64]| -> Vec<f64> { r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect() };
    let target = rtol * b_norm;
    let max_iter = 10 * n.max(1);

    let mut x = initial.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = residual(matrix, rhs, &x);
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut restarts = 0;
    for it in 0..=max_iter {
        let r_norm = norm(&r);
        if r_norm <= target {
            // the recurrence drifts; confirm against the true residual
            let true_r = residual(matrix, rhs, &x);
            let true_norm = norm(&true_r);
            if true_norm <= target {
                return Ok((
                    x,
                    CgInfo {
                        iterations: it,
                        relative_residual: true_norm / b_norm,
                    },
                ));
            }
            restarts += 1;
            if restarts > 5 {
                return Err(Error::SolverFailure {
                    iterations: it,
                    residual: true_norm / b_norm,
                });
            }
            r = true_r;
            z = precondition(&r);
            p = z.clone();
            rz = dot(&r, &z);
        }
        if it == max_iter {
            break;
        }
        matrix.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverFailure {
                iterations: it,
                residual: r_norm / b_norm,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let final_res = norm(&residual(matrix, rhs, &x)) / b_norm;
    Err(Error::SolverFailure {
        iterations: max_iter,
        residual: final_res,
    })
}

fn residual(matrix: &CsrMatrix, rhs: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = matrix.mul_vec(x);
    rhs.iter().zip(ax).map(|(b, a)| b - a).collect()
}
