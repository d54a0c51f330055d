//! Conforming triangle meshes with newest-vertex bisection.
//!
//! Conventions:
//! - Vertices and elements are identified by their index (dense, 0-based).
//! - Element vertices are listed CCW; the refinement edge is always the edge
//!   (v0, v1), i.e. the edge opposite the newest vertex at position 2.
//! - Bisection inserts the midpoint of (v0, v1) as position-2 vertex of both
//!   children, so the convention is self-propagating.
//! - Every element remembers its ancestor in the initial mesh and the
//!   left/right bisection path from it; two meshes refined from the same
//!   initial mesh can be compared and overlaid exactly through these paths,
//!   without floating-point geometry.
//!
//! Meshes are immutable: refinement and overlay return new meshes.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::geometry as geo;

mod builtin;
mod io;
mod overlay;
mod refine;

pub use builtin::{builtin_domain, l_shape, unit_square};
pub use overlay::overlay;

/// Sentinel for "no element" in edge incidence slots.
pub const NO_ELEMENT: usize = usize::MAX;

/// Bisection paths are stored in a u128 bit field, which bounds the
/// generation any element can reach.
pub const MAX_GENERATION: u32 = 127;

static NEXT_MESH_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_MESH_UID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteCoordinate(usize),
    #[error("element {element} references vertex {vertex} out of range")]
    VertexOutOfRange { element: usize, vertex: usize },
    #[error("element {0} is degenerate or not counter-clockwise")]
    NonPositiveArea(usize),
    #[error("vertex {0} belongs to no element")]
    IsolatedVertex(usize),
    #[error("edge ({0}, {1}) is shared by more than two elements")]
    EdgeOvershared(usize, usize),
    #[error("mesh is not conforming: {0}")]
    NotConforming(String),
    #[error("conformity closure exceeded depth {depth}; initial refinement-edge labeling is incompatible")]
    IncompatibleLabeling { depth: usize },
    #[error("marked element {id} out of range (mesh has {elements} elements)")]
    MarkOutOfRange { id: usize, elements: usize },
    #[error("bisection count must be at least 1")]
    ZeroBisections,
    #[error("element generation would exceed {MAX_GENERATION}")]
    GenerationOverflow,
    #[error("meshes do not descend from the same initial mesh")]
    LineageMismatch,
    #[error("refinement history is empty")]
    EmptyHistory,
    #[error("mesh file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
    /// Derived from edge incidence, never stored externally.
    pub on_boundary: bool,
}

impl Vertex {
    #[inline]
    pub fn pos(&self) -> geo::Point {
        [self.x, self.y]
    }
}

/// Left/right bisection choices from an initial-mesh element, packed as bits.
/// The path length equals the element's generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ElementPath {
    bits: u128,
    len: u8,
}

impl ElementPath {
    pub const ROOT: ElementPath = ElementPath { bits: 0, len: 0 };

    #[inline]
    pub fn len(&self) -> u32 {
        self.len as u32
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Path of the left (side 0) or right (side 1) bisection child.
    pub fn child(&self, side: u8) -> Result<ElementPath, MeshError> {
        if self.len() >= MAX_GENERATION {
            return Err(MeshError::GenerationOverflow);
        }
        Ok(ElementPath {
            bits: self.bits | ((side as u128 & 1) << self.len),
            len: self.len + 1,
        })
    }

    /// True if `self` is a strict ancestor of `other` in the bisection tree.
    pub fn is_strict_prefix_of(&self, other: &ElementPath) -> bool {
        self.len < other.len && (other.bits & ((1u128 << self.len) - 1)) == self.bits
    }

    /// All strict ancestors, from the root path down to the direct parent.
    pub fn strict_prefixes(&self) -> impl Iterator<Item = ElementPath> + '_ {
        (0..self.len).map(move |l| ElementPath {
            bits: self.bits & ((1u128 << l) - 1),
            len: l,
        })
    }

    /// Bit at depth `i` (0 = first bisection below the root).
    pub fn side_at(&self, i: u32) -> u8 {
        debug_assert!(i < self.len());
        ((self.bits >> i) & 1) as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    /// CCW vertex ids; the refinement edge is (vertices[0], vertices[1]).
    pub vertices: [usize; 3],
    /// Index of the ancestor element in the initial mesh.
    pub root: usize,
    /// Bisection path from that ancestor; its length is the generation.
    pub path: ElementPath,
}

impl Element {
    #[inline]
    pub fn generation(&self) -> u32 {
        self.path.len()
    }

    /// The edge this element will be bisected through, as an unordered key.
    #[inline]
    pub fn refinement_edge(&self) -> (usize, usize) {
        edge_key(self.vertices[0], self.vertices[1])
    }

    /// Identity of this element across meshes from the same initial mesh.
    #[inline]
    pub fn key(&self) -> (usize, ElementPath) {
        (self.root, self.path)
    }
}

#[inline]
pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoint vertex ids with a < b.
    pub a: usize,
    pub b: usize,
    /// Incident element ids; elements[1] is NO_ELEMENT on boundary edges.
    pub elements: [usize; 2],
}

impl Edge {
    #[inline]
    pub fn is_boundary(&self) -> bool {
        self.elements[1] == NO_ELEMENT
    }
}

/// Sorted, deduplicated set of element ids selected for refinement.
#[derive(Debug, Clone, Default)]
pub struct MarkedSet(Vec<usize>);

impl MarkedSet {
    pub fn new(ids: impl IntoIterator<Item = usize>) -> MarkedSet {
        let mut v: Vec<usize> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        MarkedSet(v)
    }

    pub fn all(mesh: &Mesh) -> MarkedSet {
        MarkedSet((0..mesh.num_elements()).collect())
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.binary_search(&id).is_ok()
    }
}

/// The initial mesh every refinement descends from. Shared by reference so
/// lineage identity is a pointer/id comparison.
#[derive(Debug)]
pub(crate) struct Ancestry {
    pub id: u64,
    pub vertices: Vec<Vertex>,
    pub elements: Vec<[usize; 3]>,
    pub domain_area: f64,
}

/// How a refined mesh's vertices relate to its immediate parent mesh:
/// vertices below `parent_vertices` are carried over id-for-id, vertex
/// `parent_vertices + i` is the midpoint of edge `midpoints[i]` (endpoint
/// ids in the *new* mesh, both smaller than the vertex they define).
#[derive(Debug, Clone)]
pub struct Derivation {
    pub parent_uid: u64,
    pub parent_vertices: usize,
    pub midpoints: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    uid: u64,
    base: Arc<Ancestry>,
    vertices: Vec<Vertex>,
    elements: Vec<Element>,
    /// Edges in deterministic first-seen order (scanning elements in order).
    edges: Vec<Edge>,
    edge_ids: HashMap<(usize, usize), usize>,
    /// Elements incident to each vertex, ascending.
    vertex_elements: Vec<Vec<usize>>,
    derivation: Option<Derivation>,
}

pub struct ConformityReport {
    pub is_conforming: bool,
    pub issues: Vec<String>,
}

impl Mesh {
    /// Builds and validates an initial mesh. Element triples must be CCW;
    /// the order encodes the refinement-edge labeling, which is probed by a
    /// trial uniform refinement so incompatible labelings fail fast.
    pub fn initial(coords: Vec<[f64; 2]>, tris: Vec<[usize; 3]>) -> Result<Mesh, MeshError> {
        let vertices: Vec<Vertex> = coords
            .into_iter()
            .map(|[x, y]| Vertex { x, y, on_boundary: false })
            .collect();
        let mut domain_area = 0.0;
        for (i, t) in tris.iter().enumerate() {
            for &v in t {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange { element: i, vertex: v });
                }
            }
            domain_area += geo::tri_area(
                vertices[t[0]].pos(),
                vertices[t[1]].pos(),
                vertices[t[2]].pos(),
            );
        }
        let base = Arc::new(Ancestry {
            id: fresh_uid(),
            vertices: vertices.clone(),
            elements: tris.clone(),
            domain_area,
        });
        let elements = tris
            .into_iter()
            .enumerate()
            .map(|(i, vertices)| Element { vertices, root: i, path: ElementPath::ROOT })
            .collect();
        let mesh = Mesh::assemble(base, vertices, elements, None)?;
        for (v, incident) in mesh.vertex_elements.iter().enumerate() {
            if incident.is_empty() {
                return Err(MeshError::IsolatedVertex(v));
            }
        }
        let report = mesh.check_conformity();
        if !report.is_conforming {
            return Err(MeshError::NotConforming(report.issues.join("; ")));
        }
        // Labeling probe: a full uniform bisection must close.
        mesh.refine(&MarkedSet::all(&mesh), 1)?;
        Ok(mesh)
    }

    /// Shared constructor: builds edge and incidence tables, re-derives
    /// vertex boundary flags, and enforces the structural invariants that
    /// hold by construction for refine/overlay outputs.
    pub(crate) fn assemble(
        base: Arc<Ancestry>,
        mut vertices: Vec<Vertex>,
        elements: Vec<Element>,
        derivation: Option<Derivation>,
    ) -> Result<Mesh, MeshError> {
        for (i, v) in vertices.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite()) {
                return Err(MeshError::NonFiniteCoordinate(i));
            }
        }
        let mut edges: Vec<Edge> = Vec::new();
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut vertex_elements: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
        for (i, el) in elements.iter().enumerate() {
            let [a, b, c] = el.vertices;
            for &v in &el.vertices {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange { element: i, vertex: v });
                }
                vertex_elements[v].push(i);
            }
            if geo::tri_area(vertices[a].pos(), vertices[b].pos(), vertices[c].pos()) <= 0.0 {
                return Err(MeshError::NonPositiveArea(i));
            }
            for (p, q) in [(a, b), (b, c), (c, a)] {
                let key = edge_key(p, q);
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(Edge { a: key.0, b: key.1, elements: [NO_ELEMENT; 2] });
                    edges.len() - 1
                });
                let slots = &mut edges[id].elements;
                if slots[0] == NO_ELEMENT {
                    slots[0] = i;
                } else if slots[1] == NO_ELEMENT {
                    slots[1] = i;
                } else {
                    return Err(MeshError::EdgeOvershared(key.0, key.1));
                }
            }
        }
        for v in vertices.iter_mut() {
            v.on_boundary = false;
        }
        for e in &edges {
            if e.is_boundary() {
                vertices[e.a].on_boundary = true;
                vertices[e.b].on_boundary = true;
            }
        }
        Ok(Mesh {
            uid: fresh_uid(),
            base,
            vertices,
            elements,
            edges,
            edge_ids,
            vertex_elements,
            derivation,
        })
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub(crate) fn base(&self) -> &Arc<Ancestry> {
        &self.base
    }

    pub fn base_id(&self) -> u64 {
        self.base.id
    }

    pub fn base_element_count(&self) -> usize {
        self.base.elements.len()
    }

    /// Area of the computational domain, fixed by the initial mesh.
    pub fn domain_area(&self) -> f64 {
        self.base.domain_area
    }

    pub fn derivation(&self) -> Option<&Derivation> {
        self.derivation.as_ref()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Vertex {
        &self.vertices[i]
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &Element {
        &self.elements[i]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_ids.get(&edge_key(a, b)).copied()
    }

    /// Edge ids of element `e` in the order (v0,v1), (v1,v2), (v2,v0).
    pub fn element_edge_ids(&self, e: usize) -> [usize; 3] {
        let [a, b, c] = self.elements[e].vertices;
        [
            self.edge_ids[&edge_key(a, b)],
            self.edge_ids[&edge_key(b, c)],
            self.edge_ids[&edge_key(c, a)],
        ]
    }

    pub fn element_points(&self, e: usize) -> [geo::Point; 3] {
        let [a, b, c] = self.elements[e].vertices;
        [self.vertices[a].pos(), self.vertices[b].pos(), self.vertices[c].pos()]
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.element_points(e);
        geo::tri_area(a, b, c)
    }

    /// Local mesh size H_T = |T|^(1/2).
    pub fn mesh_size(&self, e: usize) -> f64 {
        self.element_area(e).sqrt()
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        let [a, b, c] = self.element_points(e);
        geo::tri_diameter(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.element_area(e)).sum()
    }

    /// Elements incident to vertex `v`, ascending.
    pub fn elements_at_vertex(&self, v: usize) -> &[usize] {
        &self.vertex_elements[v]
    }

    /// All elements sharing at least one vertex with `e`, excluding `e`.
    pub fn neighbors(&self, e: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.elements[e]
            .vertices
            .iter()
            .flat_map(|&v| self.vertex_elements[v].iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out.retain(|&t| t != e);
        out
    }

    /// The patch ω(e): `e` together with its vertex-sharing neighbors.
    pub fn patch(&self, e: usize) -> Vec<usize> {
        let mut out = self.neighbors(e);
        out.push(e);
        out.sort_unstable();
        out
    }

    /// Worst ratio diameter/inradius over all elements.
    pub fn shape_regularity(&self) -> Result<f64, MeshError> {
        let mut worst: f64 = 0.0;
        for e in 0..self.num_elements() {
            let [a, b, c] = self.element_points(e);
            let rho = geo::tri_inradius(a, b, c);
            if rho <= 0.0 {
                return Err(MeshError::NonPositiveArea(e));
            }
            worst = worst.max(geo::tri_diameter(a, b, c) / rho);
        }
        Ok(worst)
    }

    /// Full conformity audit: positive CCW areas, edge incidence counts, and
    /// geometric hanging-vertex detection along single-incidence edges.
    pub fn check_conformity(&self) -> ConformityReport {
        let mut issues = Vec::new();
        for e in 0..self.num_elements() {
            if self.element_area(e) <= 0.0 {
                issues.push(format!("element {e} has non-positive area"));
            }
        }
        for edge in &self.edges {
            if edge.elements[0] == NO_ELEMENT {
                issues.push(format!("edge ({}, {}) has no incident element", edge.a, edge.b));
            }
            if edge.is_boundary() {
                // A vertex strictly inside this edge means the neighbor side
                // was split without closure.
                let pa = self.vertices[edge.a].pos();
                let pb = self.vertices[edge.b].pos();
                let len = geo::dist(pa, pb);
                for (v, vr) in self.vertices.iter().enumerate() {
                    if v == edge.a || v == edge.b {
                        continue;
                    }
                    let p = vr.pos();
                    if (geo::dist(pa, p) + geo::dist(p, pb) - len).abs() <= 1e-12 * len {
                        issues.push(format!(
                            "vertex {v} hangs on edge ({}, {})",
                            edge.a, edge.b
                        ));
                    }
                }
            }
        }
        ConformityReport { is_conforming: issues.is_empty(), issues }
    }

    /// Uniform refinement: every element bisected once.
    pub fn uniform_refine(&self) -> Result<Mesh, MeshError> {
        self.refine(&MarkedSet::all(self), 1)
    }

    /// Locates the element containing `p` by walking down the bisection
    /// trees from the initial mesh; returns the element id and barycentric
    /// coordinates, or None if `p` is outside the domain.
    pub fn locate_point(&self, p: geo::Point) -> Option<(usize, [f64; 3])> {
        let tol = 1e-10;
        let leaf: HashMap<(usize, ElementPath), usize> = self
            .elements
            .iter()
            .enumerate()
            .map(|(i, el)| (el.key(), i))
            .collect();
        self.locate_point_with(&leaf, p, tol)
    }

    /// As `locate_point` but with a caller-held leaf table, for repeated queries.
    pub fn element_table(&self) -> HashMap<(usize, ElementPath), usize> {
        self.elements
            .iter()
            .enumerate()
            .map(|(i, el)| (el.key(), i))
            .collect()
    }

    pub fn locate_point_with(
        &self,
        leaf: &HashMap<(usize, ElementPath), usize>,
        p: geo::Point,
        tol: f64,
    ) -> Option<(usize, [f64; 3])> {
        'roots: for (r, tri) in self.base.elements.iter().enumerate() {
            let mut verts = [
                self.base.vertices[tri[0]].pos(),
                self.base.vertices[tri[1]].pos(),
                self.base.vertices[tri[2]].pos(),
            ];
            if !geo::point_in_triangle(verts[0], verts[1], verts[2], p, tol) {
                continue;
            }
            let mut path = ElementPath::ROOT;
            loop {
                if let Some(&e) = leaf.get(&(r, path)) {
                    return Some((e, geo::barycentric(verts[0], verts[1], verts[2], p)));
                }
                if path.len() >= MAX_GENERATION {
                    continue 'roots; // stale table; give up on this root
                }
                let m = geo::midpoint(verts[0], verts[1]);
                let left = [verts[2], verts[0], m];
                let right = [verts[1], verts[2], m];
                let bl = geo::barycentric(left[0], left[1], left[2], p);
                let br = geo::barycentric(right[0], right[1], right[2], p);
                let min_l = bl[0].min(bl[1]).min(bl[2]);
                let min_r = br[0].min(br[1]).min(br[2]);
                if min_l >= min_r {
                    verts = left;
                    path = path.child(0).ok()?;
                } else {
                    verts = right;
                    path = path.child(1).ok()?;
                }
            }
        }
        None
    }
}

/// Running audit of the refinement-complexity bound: after step k the growth
/// #Τ_k − #Τ_0 is compared with the total number of elements marked so far.
#[derive(Debug, Clone)]
pub struct ComplexityAudit {
    /// Ratio (#Τ_k − #Τ_0) / Σ_{i<k} #M_i per step; NaN-free, zero-mark
    /// prefixes are skipped.
    pub ratios: Vec<f64>,
    /// Max ratio, or None if nothing was ever marked.
    pub c_s: Option<f64>,
}

/// `steps[k]` holds (#M_k, #Τ_{k+1}) for each refinement step performed on a
/// mesh that started with `initial_elements` elements.
pub fn complexity_audit(
    initial_elements: usize,
    steps: &[(usize, usize)],
) -> Result<ComplexityAudit, MeshError> {
    if steps.is_empty() {
        return Err(MeshError::EmptyHistory);
    }
    let mut marked_total = 0usize;
    let mut ratios = Vec::new();
    let mut c_s: Option<f64> = None;
    for &(marked, elements_after) in steps {
        marked_total += marked;
        if marked_total == 0 {
            continue;
        }
        let r = (elements_after.saturating_sub(initial_elements)) as f64 / marked_total as f64;
        ratios.push(r);
        c_s = Some(c_s.map_or(r, |c: f64| c.max(r)));
    }
    Ok(ComplexityAudit { ratios, c_s })
}
