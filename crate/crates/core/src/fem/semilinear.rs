//! Newton solver for `-Δy + N(y) = f` with Dirichlet data.
//!
//! The reaction term uses the lumped mass matrix so that the Newton matrix
//! `K + diag(m_i N'(y_i))` stays symmetric.

use super::assembly::{assemble_mass, assemble_stiffness, lumped_mass, Coefficient};
use super::solver::{apply_dirichlet, dirichlet_values, solve, DirichletBC, DEFAULT_RTOL};
use super::sparse::{norm, CsrMatrix};
use crate::error::{check_len, Error, Result};
use crate::mesh::Mesh2D;

const MAX_NEWTON: usize = 25;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone)]
pub struct SemilinearSolution {
    pub values: Vec<f64>,
    pub newton_iterations: usize,
    pub residual: f64,
}

/// Solves the semilinear problem with source given by nodal values `f`.
pub fn solve_semilinear(
    mesh: &Mesh2D,
    nonlinearity: impl Fn(f64) -> f64,
    derivative: impl Fn(f64) -> f64,
    f: &[f64],
    bcs: &[DirichletBC],
    tol: f64,
) -> Result<SemilinearSolution> {
    check_len(mesh.num_nodes(), f.len())?;
    let load = assemble_mass(mesh).mul_vec(f);
    solve_semilinear_with_load(mesh, nonlinearity, derivative, &load, bcs, tol)
}

/// As [`solve_semilinear`], with the assembled load vector `int f phi_i`.
pub fn solve_semilinear_with_load(
    mesh: &Mesh2D,
    nonlinearity: impl Fn(f64) -> f64,
    derivative: impl Fn(f64) -> f64,
    load: &[f64],
    bcs: &[DirichletBC],
    tol: f64,
) -> Result<SemilinearSolution> {
    check_len(mesh.num_nodes(), load.len())?;
    let n = mesh.num_nodes();
    let k = assemble_stiffness(mesh, Coefficient::Constant(1.0))?;
    let lumped = lumped_mass(mesh);
    let fixed = dirichlet_values(mesh, bcs)?;
    let mut is_fixed = vec![false; n];
    let mut y = vec![0.0; n];
    for &(i, g) in &fixed {
        is_fixed[i] = true;
        y[i] = g;
    }
    let residual = |y: &[f64]| -> Vec<f64> {
        let ky = k.mul_vec(y);
        (0..n)
            .map(|i| {
                if is_fixed[i] {
                    0.0
                } else {
                    ky[i] + lumped[i] * nonlinearity(y[i]) - load[i]
                }
            })
            .collect()
    };

    let mut r = residual(&y);
    let mut r_norm = norm(&r);
    let mut iterations = 0;
    while r_norm > tol {
        if iterations == MAX_NEWTON {
            return Err(Error::NonConvergence {
                method: "semilinear Newton",
                iterations,
                residual: r_norm,
            });
        }
        iterations += 1;
        let reaction: Vec<f64> = (0..n).map(|i| lumped[i] * derivative(y[i])).collect();
        let jac = k.add_scaled(&CsrMatrix::from_diagonal(&reaction), 1.0);
        let homogeneous: Vec<(usize, f64)> = fixed.iter().map(|&(i, _)| (i, 0.0)).collect();
        let minus_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let (a, b) = apply_dirichlet(&jac, &minus_r, &homogeneous);
        let step = solve(&a, &b, DEFAULT_RTOL)?;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = y.iter().zip(&step).map(|(y, s)| y + t * s).collect();
            let r_trial = residual(&trial);
            let n_trial = norm(&r_trial);
            if n_trial < r_norm {
                y = trial;
                r = r_trial;
                r_norm = n_trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                method: "semilinear Newton (damping stagnated)",
                iterations,
                residual: r_norm,
            });
        }
    }
    Ok(SemilinearSolution {
        values: y,
        newton_iterations: iterations,
        residual: r_norm,
    })
}
