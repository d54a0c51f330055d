//! Overlay (smallest common refinement) of two meshes refined from the same
//! initial mesh.
//!
//! Because bisection is deterministic, each mesh is fully described by the
//! set of leaf paths it keeps per initial element. The overlay keeps a leaf
//! of either input unless the other input refines strictly below it; the
//! union is replayed from the initial mesh so midpoint vertices deduplicate
//! by edge index, never by coordinate comparison.

use std::collections::{HashMap, HashSet};

use super::{edge_key, Element, ElementPath, Mesh, MeshError, Vertex};

/// Smallest common conforming refinement of `a` and `b`.
pub fn overlay(a: &Mesh, b: &Mesh) -> Result<Mesh, MeshError> {
    if a.base_id() != b.base_id() {
        return Err(MeshError::LineageMismatch);
    }
    let roots = a.base_element_count();
    let mut leaves_a: Vec<Vec<ElementPath>> = vec![Vec::new(); roots];
    let mut leaves_b: Vec<Vec<ElementPath>> = vec![Vec::new(); roots];
    for el in a.elements() {
        leaves_a[el.root].push(el.path);
    }
    for el in b.elements() {
        leaves_b[el.root].push(el.path);
    }

    let strict_prefixes = |leaves: &[ElementPath]| -> HashSet<ElementPath> {
        let mut set = HashSet::new();
        for leaf in leaves {
            for p in leaf.strict_prefixes() {
                set.insert(p);
            }
        }
        set
    };

    let base = a.base().clone();
    let mut vertices = base.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut elements: Vec<Element> = Vec::new();

    for root in 0..roots {
        let below_a = strict_prefixes(&leaves_a[root]);
        let below_b = strict_prefixes(&leaves_b[root]);
        let mut keep: HashSet<ElementPath> = HashSet::new();
        for &p in &leaves_a[root] {
            if !below_b.contains(&p) {
                keep.insert(p);
            }
        }
        for &p in &leaves_b[root] {
            if !below_a.contains(&p) {
                keep.insert(p);
            }
        }
        // Depth-first replay of the union tree, left child first.
        let mut stack: Vec<([usize; 3], ElementPath)> =
            vec![(base.elements[root], ElementPath::ROOT)];
        while let Some((v, path)) = stack.pop() {
            if keep.contains(&path) {
                elements.push(Element { vertices: v, root, path });
                continue;
            }
            let key = edge_key(v[0], v[1]);
            let m = *midpoints.entry(key).or_insert_with(|| {
                let p = crate::geometry::midpoint(vertices[key.0].pos(), vertices[key.1].pos());
                vertices.push(Vertex { x: p[0], y: p[1], on_boundary: false });
                vertices.len() - 1
            });
            stack.push(([v[1], v[2], m], path.child(1)?));
            stack.push(([v[2], v[0], m], path.child(0)?));
        }
    }

    let mesh = Mesh::assemble(base, vertices, elements, None)?;
    debug_assert!(mesh.check_conformity().is_conforming);
    Ok(mesh)
}
