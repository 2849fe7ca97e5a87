//! Source identification: recover a piecewise-constant source `f1` on `Ω`,
//! `f2` elsewhere, from a target state.

use super::{material_indicator, TopologyProblem};
use crate::error::{check_len, Result};
use crate::fem::{
    apply_dirichlet, assemble_load_per_triangle, assemble_mass, assemble_stiffness, solve, Coefficient, CsrMatrix,
    DEFAULT_RTOL,
};
use crate::mesh::Mesh2D;

/// Which sign of `ψ` marks the material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    /// Material where `ψ < 0`.
    NegativeInside,
    /// Material where `ψ > 0`.
    PositiveInside,
}

/// `-Δy = f` with `y = 0` on the boundary and
/// `J = ½ ∫ (y - y_d)²`.
#[derive(Debug, Clone)]
pub struct SourceIdentification {
    mesh: Mesh2D,
    stiffness: CsrMatrix,
    mass: CsrMatrix,
    fixed: Vec<(usize, f64)>,
    f_inside: f64,
    f_outside: f64,
    target: Vec<f64>,
    convention: SignConvention,
}

/// Subdivisions per edge for the area-fraction quadrature.
const FRACTION_SAMPLES: usize = 12;

impl SourceIdentification {
    /// The shipped demo on `unit_square(n)`: `f = 10` inside, `1` outside,
    /// target from a source of 20 on the centred disk of radius 0.25.
    pub fn demo(n: usize) -> Result<Self> {
        Self::with_disk_target(Mesh2D::unit_square(n)?, 10.0, 1.0, [0.5, 0.5], 0.25, [20.0, 1.0])
    }

    /// Problem whose target is the state of the source `reference[0]` on the
    /// disk `|x - center| < radius` and `reference[1]` elsewhere, resolved by
    /// area fractions.
    pub fn with_disk_target(
        mesh: Mesh2D,
        f_inside: f64,
        f_outside: f64,
        center: [f64; 2],
        radius: f64,
        reference: [f64; 2],
    ) -> Result<Self> {
        let mut problem = Self::new(mesh, f_inside, f_outside, Vec::new())?;
        let inside = |x: f64, y: f64| (x - center[0]).powi(2) + (y - center[1]).powi(2) < radius * radius;
        let source: Vec<f64> = (0..problem.mesh.num_triangles())
            .map(|t| {
                let frac = area_fraction(&problem.mesh, t, inside);
                reference[1] + (reference[0] - reference[1]) * frac
            })
            .collect();
        problem.target = problem.state_for_source(&source)?;
        Ok(problem)
    }

    /// `target` empty means `y_d = 0`.
    pub fn new(mesh: Mesh2D, f_inside: f64, f_outside: f64, target: Vec<f64>) -> Result<Self> {
        let target = if target.is_empty() {
            vec![0.0; mesh.num_nodes()]
        } else {
            target
        };
        check_len(mesh.num_nodes(), target.len())?;
        let stiffness = assemble_stiffness(&mesh, Coefficient::Constant(1.0))?;
        let mass = assemble_mass(&mesh);
        let fixed = mesh
            .boundary_nodes(&mesh.markers())
            .into_iter()
            .map(|i| (i, 0.0))
            .collect();
        Ok(Self {
            mesh,
            stiffness,
            mass,
            fixed,
            f_inside,
            f_outside,
            target,
            convention: SignConvention::NegativeInside,
        })
    }

    pub fn with_convention(mut self, convention: SignConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn convention(&self) -> SignConvention {
        self.convention
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Triangles carrying `f_inside` for the level set `ψ`.
    pub fn layout(&self, psi: &[f64]) -> Vec<bool> {
        let negative = material_indicator(&self.mesh, psi);
        match self.convention {
            SignConvention::NegativeInside => negative,
            SignConvention::PositiveInside => {
                // zero vertex averages belong to neither side
                self.mesh
                    .triangles()
                    .iter()
                    .map(|t| psi[t[0]] + psi[t[1]] + psi[t[2]] > 0.0)
                    .collect()
            }
        }
    }

    pub fn state_for_layout(&self, inside: &[bool]) -> Result<Vec<f64>> {
        check_len(self.mesh.num_triangles(), inside.len())?;
        let source: Vec<f64> = inside
            .iter()
            .map(|&i| if i { self.f_inside } else { self.f_outside })
            .collect();
        self.state_for_source(&source)
    }

    pub fn cost_for_layout(&self, inside: &[bool]) -> Result<f64> {
        let y = self.state_for_layout(inside)?;
        Ok(self.misfit(&y))
    }

    /// Adjoint `-Δp = y - y_d`, `p = 0` on the boundary.
    pub fn adjoint_for_state(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_len(self.mesh.num_nodes(), state.len())?;
        let diff: Vec<f64> = state.iter().zip(&self.target).map(|(y, d)| y - d).collect();
        let rhs = self.mass.mul_vec(&diff);
        let (a, b) = apply_dirichlet(&self.stiffness, &rhs, &self.fixed);
        solve(&a, &b, DEFAULT_RTOL)
    }

    /// Generalized topological derivative `(f_inside - f_outside) p`,
    /// negated under [`SignConvention::PositiveInside`].
    pub fn topological_derivative(&self, adjoint: &[f64]) -> Vec<f64> {
        let sign = match self.convention {
            SignConvention::NegativeInside => 1.0,
            SignConvention::PositiveInside => -1.0,
        };
        let c = sign * (self.f_inside - self.f_outside);
        adjoint.iter().map(|p| c * p).collect()
    }

    /// [`Self::topological_derivative`] as a standalone supplier.
    pub fn supplier(&self) -> impl FnMut(&Mesh2D, &[f64], &[f64], &[f64]) -> Vec<f64> {
        let shadow = Self {
            target: Vec::new(),
            ..self.clone()
        };
        move |_, _, adjoint, _| shadow.topological_derivative(adjoint)
    }

    /// Change of `J` predicted for switching triangle `t` to the other
    /// material, from the adjoint of the current layout.
    pub fn predicted_switch(&self, t: usize, currently_inside: bool, adjoint: &[f64]) -> f64 {
        let tri = self.mesh.triangles()[t];
        let mean_p = (adjoint[tri[0]] + adjoint[tri[1]] + adjoint[tri[2]]) / 3.0;
        let jump = if currently_inside {
            self.f_outside - self.f_inside
        } else {
            self.f_inside - self.f_outside
        };
        jump * mean_p * self.mesh.signed_area(t)
    }

    fn state_for_source(&self, source: &[f64]) -> Result<Vec<f64>> {
        let rhs = assemble_load_per_triangle(&self.mesh, source)?;
        let (a, b) = apply_dirichlet(&self.stiffness, &rhs, &self.fixed);
        solve(&a, &b, DEFAULT_RTOL)
    }

    fn misfit(&self, state: &[f64]) -> f64 {
        let diff: Vec<f64> = state.iter().zip(&self.target).map(|(y, d)| y - d).collect();
        0.5 * self.mass.inner(&diff, &diff)
    }
}

impl TopologyProblem for SourceIdentification {
    fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    fn solve_state(&mut self, psi: &[f64]) -> Result<Vec<f64>> {
        check_len(self.mesh.num_nodes(), psi.len())?;
        self.state_for_layout(&self.layout(psi))
    }

    fn solve_adjoint(&mut self, _psi: &[f64], state: &[f64]) -> Result<Vec<f64>> {
        self.adjoint_for_state(state)
    }

    fn cost(&mut self, _psi: &[f64], state: &[f64]) -> Result<f64> {
        check_len(self.mesh.num_nodes(), state.len())?;
        Ok(self.misfit(state))
    }
}

/// Fraction of triangle `t` where `inside` holds, sampled at the centroids
/// of a uniform sub-triangulation.
fn area_fraction(mesh: &Mesh2D, t: usize, inside: impl Fn(f64, f64) -> bool) -> f64 {
    let [a, b, c] = mesh.vertices(t);
    let k = FRACTION_SAMPLES;
    let at = |l1: f64, l2: f64| {
        let l0 = 1.0 - l1 - l2;
        [l0 * a[0] + l1 * b[0] + l2 * c[0], l0 * a[1] + l1 * b[1] + l2 * c[1]]
    };
    let h = 1.0 / k as f64;
    let mut hits = 0usize;
    for i in 0..k {
        for j in 0..k - i {
            let (x, y) = (i as f64 * h, j as f64 * h);
            let up = at(x + h / 3.0, y + h / 3.0);
            hits += inside(up[0], up[1]) as usize;
            if i + j + 1 < k {
                let down = at(x + 2.0 * h / 3.0, y + 2.0 * h / 3.0);
                hits += inside(down[0], down[1]) as usize;
            }
        }
    }
    hits as f64 / (k * k) as f64
}
