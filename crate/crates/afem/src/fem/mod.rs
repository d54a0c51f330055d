//! P1 Lagrange finite elements: quadrature rules, sparse operators, spaces
//! over conforming triangle meshes, and assembly of the nonlinear form, its
//! Jacobian, the load, and the energy functional.

mod assembly;
mod quadrature;
mod space;
mod sparse;

#[cfg(test)]
mod tests;

pub use assembly::{
    energy, h1_error_vs_exact, h1_seminorm_diff, jacobian_matrix, load_vector, residual_vector,
    stiffness_matrix,
};
pub use quadrature::{map_bary, TriRule, EDGE_GAUSS3, TRI_DEGREE4, TRI_DEGREE6};
pub use space::{FeFunction, FeSpace, BOUNDARY_DOF};
pub use sparse::SparseOperator;

use thiserror::Error;

/// Errors from space construction, function handling, and assembly.
#[derive(Debug, Error)]
pub enum FemError {
    #[error("coefficient vector has length {got}, space has {want} dofs")]
    DimensionMismatch { got: usize, want: usize },
    #[error("non-finite value at dof {0}")]
    NonFiniteCoefficient(usize),
    #[error("non-finite value interpolating at vertex {0}")]
    NonFiniteSample(usize),
    #[error("functions live on different meshes")]
    SpaceMismatch,
    #[error("problem has no exact solution")]
    MissingExactSolution,
    #[error("assembled operator not symmetric at ({i}, {j}): {a} vs {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("non-finite entry assembling row {0}")]
    NonFiniteEntry(usize),
    #[error("target mesh was not derived from the function's mesh")]
    DerivationMismatch,
}
