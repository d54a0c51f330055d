//! Newest-vertex bisection with recursive conformity closure.
//!
//! To bisect an element we first make its neighbor across the refinement
//! edge compatible (bisecting it recursively if its own refinement edge
//! differs), then split both at the shared midpoint. The recursion depth is
//! bounded by the current element count; exceeding it means the initial
//! labeling admits a closure cycle.

use std::collections::HashMap;

use crate::geometry as geo;

use super::{
    edge_key, Derivation, Element, ElementPath, MarkedSet, Mesh, MeshError, Vertex, NO_ELEMENT,
};

struct WorkTri {
    v: [usize; 3],
    root: usize,
    path: ElementPath,
    children: Option<(usize, usize)>,
}

impl WorkTri {
    #[inline]
    fn refinement_edge(&self) -> (usize, usize) {
        edge_key(self.v[0], self.v[1])
    }
}

struct Work {
    verts: Vec<Vertex>,
    tris: Vec<WorkTri>,
    /// Live incidence per edge key; NO_ELEMENT marks a free slot.
    incidence: HashMap<(usize, usize), [usize; 2]>,
    midpoints: HashMap<(usize, usize), usize>,
    /// Provenance of appended midpoint vertices, in creation order.
    new_midpoints: Vec<(usize, usize)>,
}

impl Work {
    fn new(mesh: &Mesh) -> Work {
        let mut w = Work {
            verts: mesh.vertices.clone(),
            tris: mesh
                .elements
                .iter()
                .map(|e| WorkTri { v: e.vertices, root: e.root, path: e.path, children: None })
                .collect(),
            incidence: HashMap::new(),
            midpoints: HashMap::new(),
            new_midpoints: Vec::new(),
        };
        for i in 0..w.tris.len() {
            let [a, b, c] = w.tris[i].v;
            for (p, q) in [(a, b), (b, c), (c, a)] {
                w.link(edge_key(p, q), i);
            }
        }
        w
    }

    fn link(&mut self, key: (usize, usize), tri: usize) {
        let slots = self.incidence.entry(key).or_insert([NO_ELEMENT; 2]);
        if slots[0] == NO_ELEMENT {
            slots[0] = tri;
        } else {
            debug_assert_eq!(slots[1], NO_ELEMENT, "edge shared by three elements");
            slots[1] = tri;
        }
    }

    fn unlink(&mut self, key: (usize, usize), tri: usize) {
        let slots = self.incidence.get_mut(&key).expect("unlinking unknown edge");
        if slots[0] == tri {
            slots[0] = NO_ELEMENT;
        } else {
            debug_assert_eq!(slots[1], tri);
            slots[1] = NO_ELEMENT;
        }
    }

    /// The live element across `key` from `tri`, if any.
    fn across(&self, key: (usize, usize), tri: usize) -> Option<usize> {
        let slots = self.incidence.get(&key)?;
        slots.iter().copied().find(|&t| t != tri && t != NO_ELEMENT)
    }

    fn midpoint_vertex(&mut self, key: (usize, usize)) -> usize {
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let p = geo::midpoint(self.verts[key.0].pos(), self.verts[key.1].pos());
        // Boundary flag is re-derived when the mesh is assembled.
        self.verts.push(Vertex { x: p[0], y: p[1], on_boundary: false });
        let m = self.verts.len() - 1;
        self.midpoints.insert(key, m);
        self.new_midpoints.push(key);
        m
    }

    /// Replaces `tri` by its two bisection children through midpoint `m` of
    /// its refinement edge. Children keep CCW order with `m` at position 2,
    /// so the parent's remaining edges become the children's refinement edges.
    fn split(&mut self, tri: usize, m: usize) -> Result<(), MeshError> {
        let [a, b, c] = self.tris[tri].v;
        let path = self.tris[tri].path;
        let root = self.tris[tri].root;
        for (p, q) in [(a, b), (b, c), (c, a)] {
            self.unlink(edge_key(p, q), tri);
        }
        let left = WorkTri { v: [c, a, m], root, path: path.child(0)?, children: None };
        let right = WorkTri { v: [b, c, m], root, path: path.child(1)?, children: None };
        let il = self.tris.len();
        self.tris.push(left);
        let ir = self.tris.len();
        self.tris.push(right);
        self.tris[tri].children = Some((il, ir));
        for (t, [x, y, z]) in [(il, [c, a, m]), (ir, [b, c, m])] {
            for (p, q) in [(x, y), (y, z), (z, x)] {
                self.link(edge_key(p, q), t);
            }
        }
        Ok(())
    }

    /// Bisects live element `tri`, closing the mesh by bisecting the
    /// refinement-edge neighbor first when its refinement edge differs.
    fn bisect(&mut self, tri: usize, depth: usize) -> Result<(), MeshError> {
        if depth > self.tris.len() {
            return Err(MeshError::IncompatibleLabeling { depth });
        }
        debug_assert!(self.tris[tri].children.is_none(), "bisecting a dead element");
        let e = self.tris[tri].refinement_edge();
        match self.across(e, tri) {
            None => {
                let m = self.midpoint_vertex(e);
                self.split(tri, m)
            }
            Some(nb) if self.tris[nb].refinement_edge() == e => {
                let m = self.midpoint_vertex(e);
                self.split(tri, m)?;
                self.split(nb, m)
            }
            Some(nb) => {
                self.bisect(nb, depth + 1)?;
                let nb2 = self
                    .across(e, tri)
                    .expect("closure must expose a neighbor across the refinement edge");
                debug_assert_eq!(self.tris[nb2].refinement_edge(), e);
                let m = self.midpoint_vertex(e);
                self.split(tri, m)?;
                self.split(nb2, m)
            }
        }
    }

    /// Ensures the subtree below `tri` reaches depth at least `n`, bisecting
    /// as needed. Elements already split by closure only need the remainder.
    fn ensure_depth(&mut self, tri: usize, n: u32) -> Result<(), MeshError> {
        if n == 0 {
            return Ok(());
        }
        if self.tris[tri].children.is_none() {
            self.bisect(tri, 0)?;
        }
        let (l, r) = self.tris[tri].children.expect("just split");
        self.ensure_depth(l, n - 1)?;
        self.ensure_depth(r, n - 1)
    }
}

impl Mesh {
    /// Refines the mesh so every marked element is bisected at least `n`
    /// times, plus whatever conformity closure demands. Returns a new mesh;
    /// an empty marked set returns an identical copy (with a trivial
    /// derivation record).
    pub fn refine(&self, marked: &MarkedSet, n: u32) -> Result<Mesh, MeshError> {
        if n == 0 {
            return Err(MeshError::ZeroBisections);
        }
        for &id in marked.ids() {
            if id >= self.num_elements() {
                return Err(MeshError::MarkOutOfRange { id, elements: self.num_elements() });
            }
        }
        let derivation = |mids: Vec<(usize, usize)>| Derivation {
            parent_uid: self.uid(),
            parent_vertices: self.num_vertices(),
            midpoints: mids,
        };
        if marked.is_empty() {
            return Mesh::assemble(
                self.base().clone(),
                self.vertices.clone(),
                self.elements.clone(),
                Some(derivation(Vec::new())),
            );
        }
        let mut work = Work::new(self);
        for &id in marked.ids() {
            work.ensure_depth(id, n)?;
        }
        let elements: Vec<Element> = work
            .tris
            .iter()
            .filter(|t| t.children.is_none())
            .map(|t| Element { vertices: t.v, root: t.root, path: t.path })
            .collect();
        Mesh::assemble(
            self.base().clone(),
            work.verts,
            elements,
            Some(derivation(work.new_midpoints)),
        )
    }
}
