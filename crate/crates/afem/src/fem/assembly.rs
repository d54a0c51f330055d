//! Elementwise assembly of the nonlinear form, its Jacobian, loads, the
//! energy functional, and H¹ seminorm distances.
//!
//! All nonlinear integrands use the degree-4 triangle rule; error measures
//! against exact solutions use the degree-6 rule. Gradients of P1 functions
//! are elementwise constant, so x enters the integrands only through the
//! coefficient and the load. Element loops run in ascending id order with a
//! fixed reduction order, which makes every assembled object bit-stable.

use std::sync::Arc;

use super::quadrature::{map_bary, TRI_DEGREE4, TRI_DEGREE6};
use super::space::{FeFunction, FeSpace};
use super::sparse::SparseOperator;
use super::FemError;
use crate::problem::ProblemSpec;

/// Gradients of the three barycentric basis functions and the element area.
pub(crate) fn grad_basis(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
        - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        g[i] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    (g, 0.5 * det)
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Poisson stiffness ∫∇φ_j·∇φ_i, assembled in closed form (the integrand is
/// elementwise constant).
pub fn stiffness_matrix(space: &Arc<FeSpace>) -> SparseOperator {
    let mesh = space.mesh();
    let n = space.num_dofs();
    let mut trips = Vec::new();
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let (gb, area) = grad_basis(mesh.element_points(e));
        for a in 0..3 {
            let Some(i) = space.dof_of_vertex(el.vertices[a]) else { continue };
            for b in a..3 {
                let Some(j) = space.dof_of_vertex(el.vertices[b]) else { continue };
                let v = area * dot(gb[a], gb[b]);
                trips.push((i, j, v));
                if a != b {
                    trips.push((j, i, v));
                }
            }
        }
    }
    SparseOperator::from_triplets(n, trips, true).expect("stiffness is symmetric by construction")
}

/// Load vector entries ∫ f φ_i by degree-4 quadrature.
pub fn load_vector(space: &Arc<FeSpace>, problem: &ProblemSpec) -> Vec<f64> {
    let mesh = space.mesh();
    let mut out = vec![0.0; space.num_dofs()];
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let p = mesh.element_points(e);
        let area = mesh.element_area(e);
        for (bary, w) in TRI_DEGREE4.points.iter().zip(TRI_DEGREE4.weights) {
            let fx = problem.f(map_bary(p, *bary));
            for a in 0..3 {
                if let Some(i) = space.dof_of_vertex(el.vertices[a]) {
                    out[i] += area * w * fx * bary[a];
                }
            }
        }
    }
    out
}

/// Residual entries ⟨R(U), φ_i⟩ = ∫ α(x,|∇U|²)∇U·∇φ_i − ∫ f φ_i.
/// U solves the discrete problem iff this vector is numerically zero.
pub fn residual_vector(problem: &ProblemSpec, u: &FeFunction) -> Vec<f64> {
    let space = u.space();
    let mesh = space.mesh();
    let mut out = vec![0.0; space.num_dofs()];
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let p = mesh.element_points(e);
        let (gb, area) = grad_basis(p);
        let mut g = [0.0, 0.0];
        for a in 0..3 {
            let v = u.vertex_value(el.vertices[a]);
            g[0] += v * gb[a][0];
            g[1] += v * gb[a][1];
        }
        let s = dot(g, g);
        let mut alpha_mean = 0.0;
        let mut load = [0.0; 3];
        for (bary, w) in TRI_DEGREE4.points.iter().zip(TRI_DEGREE4.weights) {
            let x = map_bary(p, *bary);
            alpha_mean += w * problem.coefficient.alpha(x, s);
            let fx = problem.f(x);
            for a in 0..3 {
                load[a] += w * fx * bary[a];
            }
        }
        for a in 0..3 {
            if let Some(i) = space.dof_of_vertex(el.vertices[a]) {
                out[i] += area * (alpha_mean * dot(g, gb[a]) - load[a]);
            }
        }
    }
    out
}

/// Newton derivative of the residual: entries ∫ D²γ(x,∇U)∇φ_j·∇φ_i with
/// D²γ = α·I + 2·∂α/∂s·∇U∇Uᵀ. Each unordered pair is evaluated once and
/// mirrored, so the assembled matrix is exactly symmetric.
pub fn jacobian_matrix(
    problem: &ProblemSpec,
    u: &FeFunction,
) -> Result<SparseOperator, FemError> {
    let space = u.space();
    let mesh = space.mesh();
    let n = space.num_dofs();
    let mut trips = Vec::new();
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let p = mesh.element_points(e);
        let (gb, area) = grad_basis(p);
        let mut g = [0.0, 0.0];
        for a in 0..3 {
            let v = u.vertex_value(el.vertices[a]);
            g[0] += v * gb[a][0];
            g[1] += v * gb[a][1];
        }
        let s = dot(g, g);
        let mut alpha_mean = 0.0;
        let mut dalpha_mean = 0.0;
        for (bary, w) in TRI_DEGREE4.points.iter().zip(TRI_DEGREE4.weights) {
            let x = map_bary(p, *bary);
            alpha_mean += w * problem.coefficient.alpha(x, s);
            dalpha_mean += w * 2.0 * problem.coefficient.d2_alpha(x, s);
        }
        for a in 0..3 {
            let Some(i) = space.dof_of_vertex(el.vertices[a]) else { continue };
            for b in a..3 {
                let Some(j) = space.dof_of_vertex(el.vertices[b]) else { continue };
                let v = area
                    * (alpha_mean * dot(gb[a], gb[b])
                        + dalpha_mean * dot(g, gb[a]) * dot(g, gb[b]));
                trips.push((i, j, v));
                if a != b {
                    trips.push((j, i, v));
                }
            }
        }
    }
    SparseOperator::from_triplets(n, trips, true)
}

/// Energy functional F(V) = ∫ γ(x,∇V) − f V; its directional derivatives
/// are the residual entries, and its minimizer over the space is the
/// discrete solution.
pub fn energy(problem: &ProblemSpec, u: &FeFunction) -> f64 {
    let space = u.space();
    let mesh = space.mesh();
    let mut total = 0.0;
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let p = mesh.element_points(e);
        let area = mesh.element_area(e);
        let g = u.element_gradient(e);
        let s = dot(g, g);
        let values = [
            u.vertex_value(el.vertices[0]),
            u.vertex_value(el.vertices[1]),
            u.vertex_value(el.vertices[2]),
        ];
        let mut acc = 0.0;
        for (bary, w) in TRI_DEGREE4.points.iter().zip(TRI_DEGREE4.weights) {
            let x = map_bary(p, *bary);
            let uq = bary[0] * values[0] + bary[1] * values[1] + bary[2] * values[2];
            acc += w * (problem.coefficient.gamma_value(x, s) - problem.f(x) * uq);
        }
        total += area * acc;
    }
    total
}

/// ‖∇(V−W)‖ for two functions on the same mesh; exact because the gradients
/// are piecewise constant.
pub fn h1_seminorm_diff(v: &FeFunction, w: &FeFunction) -> Result<f64, FemError> {
    let mesh = v.space().mesh();
    if mesh.uid() != w.space().mesh().uid() {
        return Err(FemError::SpaceMismatch);
    }
    let mut total = 0.0;
    for e in 0..mesh.num_elements() {
        let gv = v.element_gradient(e);
        let gw = w.element_gradient(e);
        let d = [gv[0] - gw[0], gv[1] - gw[1]];
        total += mesh.element_area(e) * dot(d, d);
    }
    Ok(total.sqrt())
}

/// ‖∇(V−u)‖ against the problem's manufactured gradient, by degree-6
/// quadrature.
pub fn h1_error_vs_exact(problem: &ProblemSpec, v: &FeFunction) -> Result<f64, FemError> {
    let exact = problem.exact.as_ref().ok_or(FemError::MissingExactSolution)?;
    let mesh = v.space().mesh();
    let mut total = 0.0;
    for e in 0..mesh.num_elements() {
        let p = mesh.element_points(e);
        let area = mesh.element_area(e);
        let g = v.element_gradient(e);
        let mut acc = 0.0;
        for (bary, w) in TRI_DEGREE6.points.iter().zip(TRI_DEGREE6.weights) {
            let gu = (exact.gradient)(map_bary(p, *bary));
            let d = [g[0] - gu[0], g[1] - gu[1]];
            acc += w * dot(d, d);
        }
        total += area * acc;
    }
    Ok(total.sqrt())
}
