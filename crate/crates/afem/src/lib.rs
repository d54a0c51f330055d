//! Adaptive finite element engine for quasi-linear elliptic equations
//!
//! Solves −∇·[α(x,|∇u|²)∇u] = f on polygonal 2D domains with homogeneous
//! Dirichlet data, using piecewise linear elements on triangle meshes driven
//! through the classical SOLVE → ESTIMATE → MARK → REFINE loop:
//!
//! - [`mesh`]: conforming triangle meshes, newest-vertex bisection with
//!   recursive conformity closure, mesh overlay, plain-text mesh I/O
//! - [`problem`]: coefficient models α(x,s), their derived energy densities
//!   and monotonicity/Lipschitz constants, built-in benchmark problems
//! - [`fem`]: P1 spaces, quadrature, residual/Jacobian assembly, the energy
//!   functional, H¹ seminorm distances
//! - [`solver`]: damped Newton with Jacobi-preconditioned CG inner solves
//! - [`estimator`]: residual-based a posteriori error indicators, data
//!   oscillation, and the estimator perturbation term
//! - [`adapt`]: Dörfler marking, the adaptive loop, and empirical checks of
//!   the convergence/optimality inequality chain (contraction, quasi-
//!   orthogonality, estimator reduction, complexity, rate fits)
//! - [`cli`]: the `afem` command line (run / verify / study / mesh-info)

pub(crate) mod geometry;

pub mod adapt;
pub mod cli;
pub mod estimator;
pub mod fem;
pub mod mesh;
pub mod problem;
pub mod solver;
