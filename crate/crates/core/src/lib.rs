//! Adjoint-based PDE-constrained optimization on 2D P1 finite elements.

pub mod constraints;
pub mod costfunctional;
pub mod error;
pub mod fem;
pub mod mesh;

pub use error::{Error, Result};
pub mod linesearch;
pub mod optimize;
pub mod reduced_problem;
pub mod shapeopt;
pub mod spacemapping;
pub mod topopt;
