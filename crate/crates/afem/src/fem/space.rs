//! P1 spaces with homogeneous Dirichlet data and nodal functions on them.

use std::sync::Arc;

use super::FemError;
use crate::mesh::Mesh;

/// Marker in `dof_of_vertex` for boundary vertices, which carry no unknown.
pub const BOUNDARY_DOF: usize = usize::MAX;

/// Piecewise-linear space over a conforming mesh with zero boundary values.
/// Dofs enumerate interior vertices in ascending vertex-id order, which
/// keeps orderings reproducible across runs.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    free: Vec<usize>,
    dof_of_vertex: Vec<usize>,
}

impl FeSpace {
    pub fn build(mesh: Arc<Mesh>) -> Arc<FeSpace> {
        let mut free = Vec::new();
        let mut dof_of_vertex = vec![BOUNDARY_DOF; mesh.num_vertices()];
        for (v, vert) in mesh.vertices().iter().enumerate() {
            if !vert.on_boundary {
                dof_of_vertex[v] = free.len();
                free.push(v);
            }
        }
        Arc::new(FeSpace { mesh, free, dof_of_vertex })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        self.free.len()
    }

    /// Interior vertex ids in dof order.
    pub fn free_vertices(&self) -> &[usize] {
        &self.free
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        match self.dof_of_vertex[v] {
            BOUNDARY_DOF => None,
            d => Some(d),
        }
    }
}

/// A function in an [`FeSpace`]: nodal values at free vertices, implicit
/// zeros on the boundary.
#[derive(Debug, Clone)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn zero(space: &Arc<FeSpace>) -> FeFunction {
        FeFunction { space: Arc::clone(space), coeffs: vec![0.0; space.num_dofs()] }
    }

    pub fn from_coeffs(space: &Arc<FeSpace>, coeffs: Vec<f64>) -> Result<FeFunction, FemError> {
        if coeffs.len() != space.num_dofs() {
            return Err(FemError::DimensionMismatch { got: coeffs.len(), want: space.num_dofs() });
        }
        if let Some(i) = coeffs.iter().position(|v| !v.is_finite()) {
            return Err(FemError::NonFiniteCoefficient(i));
        }
        Ok(FeFunction { space: Arc::clone(space), coeffs })
    }

    /// Nodal interpolation of a pointwise function (boundary values stay 0).
    pub fn interpolate(
        space: &Arc<FeSpace>,
        f: impl Fn([f64; 2]) -> f64,
    ) -> Result<FeFunction, FemError> {
        let mesh = space.mesh();
        let mut coeffs = Vec::with_capacity(space.num_dofs());
        for &v in space.free_vertices() {
            let value = f(mesh.vertex(v).pos());
            if !value.is_finite() {
                return Err(FemError::NonFiniteSample(v));
            }
            coeffs.push(value);
        }
        Ok(FeFunction { space: Arc::clone(space), coeffs })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Value at a mesh vertex (0 on the boundary).
    pub fn vertex_value(&self, v: usize) -> f64 {
        match self.space.dof_of_vertex(v) {
            Some(d) => self.coeffs[d],
            None => 0.0,
        }
    }

    /// The (constant) gradient on element `e`.
    pub fn element_gradient(&self, e: usize) -> [f64; 2] {
        let mesh = self.space.mesh();
        let el = mesh.element(e);
        let p = mesh.element_points(e);
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut g = [0.0, 0.0];
        for i in 0..3 {
            let a = p[(i + 1) % 3];
            let b = p[(i + 2) % 3];
            let v = self.vertex_value(el.vertices[i]);
            g[0] += v * (a[1] - b[1]) / det;
            g[1] += v * (b[0] - a[0]) / det;
        }
        g
    }

    /// Value at barycentric coordinates inside element `e`.
    pub fn value_at_bary(&self, e: usize, bary: [f64; 3]) -> f64 {
        let el = self.space.mesh().element(e);
        (0..3).map(|i| bary[i] * self.vertex_value(el.vertices[i])).sum()
    }

    /// Point evaluation via mesh point location; None outside the domain.
    pub fn eval(&self, p: [f64; 2]) -> Option<f64> {
        let (e, bary) = self.space.mesh().locate_point(p)?;
        Some(self.value_at_bary(e, bary))
    }

    /// Largest |∇·| over all elements; used to track the gradient range the
    /// coefficient constants must be certified on.
    pub fn max_gradient_norm(&self) -> f64 {
        (0..self.space.mesh().num_elements())
            .map(|e| {
                let g = self.element_gradient(e);
                (g[0] * g[0] + g[1] * g[1]).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Exact transfer into a space on a mesh refined from this function's
    /// mesh (P1 nodal values at inherited vertices, edge-midpoint averages
    /// at bisection vertices). The result represents the same function, so
    /// energies and seminorms are preserved exactly.
    pub fn prolong_to(&self, fine: &Arc<FeSpace>) -> Result<FeFunction, FemError> {
        let coarse_mesh = self.space.mesh();
        let fine_mesh = fine.mesh();
        let d = fine_mesh.derivation().ok_or(FemError::DerivationMismatch)?;
        if d.parent_uid != coarse_mesh.uid() || d.parent_vertices != coarse_mesh.num_vertices() {
            return Err(FemError::DerivationMismatch);
        }
        let mut values = Vec::with_capacity(fine_mesh.num_vertices());
        for v in 0..d.parent_vertices {
            values.push(self.vertex_value(v));
        }
        for &(a, b) in &d.midpoints {
            // Midpoint sources always precede the midpoint itself.
            values.push(0.5 * (values[a] + values[b]));
        }
        let coeffs = fine.free_vertices().iter().map(|&v| values[v]).collect();
        FeFunction::from_coeffs(fine, coeffs)
    }
}
