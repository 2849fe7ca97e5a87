//! Control-type pair: a piecewise-constant source on the four quadrants of
//! the unit square, observed through the quadrant averages of the state.
//! The coarse model is linear Poisson, the fine one adds a cubic reaction on
//! a refined mesh.

use super::{CoarseModel, FineModel};
use crate::error::{check_len, Error, Result};
use crate::fem::{assemble_load_per_triangle, integrate, solve_semilinear_with_load, DirichletBC};
use crate::mesh::Mesh2D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadrantPhysics {
    /// `-Δy = u`.
    Linear,
    /// `-Δy + c y³ = u`.
    Cubic(f64),
}

#[derive(Debug, Clone)]
pub struct QuadrantModel {
    mesh: Mesh2D,
    physics: QuadrantPhysics,
    quadrant: Vec<usize>,
    areas: [f64; 4],
    target: Vec<f64>,
    /// Response columns `A e_j` of the linear model.
    columns: Option<Vec<Vec<f64>>>,
}

fn quadrant_of(c: [f64; 2]) -> usize {
    (c[0] >= 0.5) as usize + 2 * (c[1] >= 0.5) as usize
}

impl QuadrantModel {
    /// `target` holds the desired quadrant averages.
    pub fn new(n: usize, physics: QuadrantPhysics, target: Vec<f64>) -> Result<Self> {
        check_len(4, target.len())?;
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "quadrant model needs an even resolution, got {n}"
            )));
        }
        let mesh = Mesh2D::unit_square(n)?;
        let quadrant: Vec<usize> = (0..mesh.num_triangles())
            .map(|t| quadrant_of(mesh.centroid(t)))
            .collect();
        let mut areas = [0.0; 4];
        for (t, &q) in quadrant.iter().enumerate() {
            areas[q] += mesh.signed_area(t);
        }
        let mut model = Self {
            mesh,
            physics,
            quadrant,
            areas,
            target,
            columns: None,
        };
        if physics == QuadrantPhysics::Linear {
            let columns = (0..4)
                .map(|j| {
                    let mut e = [0.0; 4];
                    e[j] = 1.0;
                    model.averages(&e)
                })
                .collect::<Result<Vec<_>>>()?;
            model.columns = Some(columns);
        }
        Ok(model)
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// State for the quadrant source values `u`.
    pub fn state(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(4, u.len())?;
        let source: Vec<f64> = self.quadrant.iter().map(|&q| u[q]).collect();
        let load = assemble_load_per_triangle(&self.mesh, &source)?;
        let c = match self.physics {
            QuadrantPhysics::Linear => 0.0,
            QuadrantPhysics::Cubic(c) => c,
        };
        let bcs: Vec<DirichletBC> = self.mesh.markers().into_iter().map(DirichletBC::homogeneous).collect();
        let sol = solve_semilinear_with_load(
            &self.mesh,
            move |y| c * y * y * y,
            move |y| 3.0 * c * y * y,
            &load,
            &bcs,
            1e-12,
        )?;
        Ok(sol.values)
    }

    fn averages(&self, u: &[f64]) -> Result<Vec<f64>> {
        let y = self.state(u)?;
        let mut sums = [0.0; 4];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            sums[self.quadrant[t]] += self.mesh.signed_area(t) * (y[tri[0]] + y[tri[1]] + y[tri[2]]) / 3.0;
        }
        debug_assert!((integrate(&self.mesh, &y) - sums.iter().sum::<f64>()).abs() < 1e-12);
        Ok(sums.iter().zip(&self.areas).map(|(s, a)| s / a).collect())
    }
}

impl FineModel for QuadrantModel {
    fn evaluate(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.averages(x)
    }
}

impl CoarseModel for QuadrantModel {
    fn design_dim(&self) -> usize {
        4
    }

    fn response(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(4, z.len())?;
        match &self.columns {
            Some(cols) => Ok((0..4).map(|k| (0..4).map(|j| cols[j][k] * z[j]).sum()).collect()),
            None => self.averages(z),
        }
    }

    fn response_transpose_apply(&mut self, z: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        check_len(4, z.len())?;
        check_len(4, w.len())?;
        let cols = self
            .columns
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("response Jacobian needs linear physics".into()))?;
        Ok(cols.iter().map(|c| c.iter().zip(w).map(|(a, b)| a * b).sum()).collect())
    }

    fn objective(&self, response: &[f64]) -> f64 {
        0.5 * response
            .iter()
            .zip(&self.target)
            .map(|(r, t)| (r - t).powi(2))
            .sum::<f64>()
    }

    fn objective_gradient(&self, response: &[f64]) -> Vec<f64> {
        response.iter().zip(&self.target).map(|(r, t)| r - t).collect()
    }
}
