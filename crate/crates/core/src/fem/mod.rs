//! P1 finite elements: assembly, sparse storage and linear/semilinear solvers.

mod assembly;
mod semilinear;
pub mod sensitivity;
mod solver;
mod sparse;
mod vector;

pub use assembly::{
    assemble_load_per_triangle, assemble_mass, assemble_stiffness, gradient_on_triangle, integrate, interpolate,
    l2_error, local_mass, local_stiffness, lumped_mass, Coefficient,
};
pub use semilinear::{solve_semilinear, solve_semilinear_with_load, SemilinearSolution};
pub use solver::{apply_dirichlet, dirichlet_values, solve, solve_with_info, CgInfo, DirichletBC, DEFAULT_RTOL};
pub use sparse::{axpy, dot, norm, CsrMatrix};
pub use vector::{assemble_elasticity, assemble_vector_laplace, fixed_vector_dofs};
