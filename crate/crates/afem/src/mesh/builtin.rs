//! Built-in initial meshes with hand-verified compatible refinement-edge
//! labelings: every interior edge is the refinement edge of both incident
//! elements or of neither, so closure never cascades on the coarsest level.

use super::{Mesh, MeshError};

/// Unit square (0,1)² as two triangles whose shared diagonal is the
/// refinement edge of both.
pub fn unit_square() -> Mesh {
    let coords = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let tris = vec![[1, 3, 0], [3, 1, 2]];
    Mesh::initial(coords, tris).expect("built-in square mesh is valid")
}

/// L-shaped domain (−1,1)² minus the quadrant [0,1)×(−1,0], six triangles,
/// all diagonals meeting the reentrant corner at the origin.
pub fn l_shape() -> Mesh {
    let coords = vec![
        [-1.0, -1.0], // 0
        [0.0, -1.0],  // 1
        [0.0, 0.0],   // 2  reentrant corner
        [1.0, 0.0],   // 3
        [1.0, 1.0],   // 4
        [0.0, 1.0],   // 5
        [-1.0, 1.0],  // 6
        [-1.0, 0.0],  // 7
    ];
    let tris = vec![
        [2, 0, 1], // lower-left square, diagonal 0–2
        [0, 2, 7],
        [2, 6, 7], // upper-left square, diagonal 2–6
        [6, 2, 5],
        [4, 2, 3], // upper-right square, diagonal 2–4
        [2, 4, 5],
    ];
    Mesh::initial(coords, tris).expect("built-in L-shape mesh is valid")
}

/// Looks up a built-in initial mesh by its domain name.
pub fn builtin_domain(name: &str) -> Result<Mesh, MeshError> {
    match name {
        "square" => Ok(unit_square()),
        "lshape" => Ok(l_shape()),
        other => Err(MeshError::Format(format!("unknown built-in domain {other:?}"))),
    }
}
