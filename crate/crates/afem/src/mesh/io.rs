//! Plain-text mesh exchange format.
//!
//! ```text
//! afemmesh v1 d=2
//! vertex <id> <x> <y>
//! element <id> <v0> <v1> <v2>
//! ```
//!
//! Ids must be dense and in order. Coordinates are written with 17
//! significant digits so a write/read round trip reproduces every f64 bit
//! for bit. Vertex order inside an element line encodes the refinement edge
//! (v0, v1); boundary flags are re-derived from edge incidence on load.

use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, MeshError};

const HEADER: &str = "afemmesh v1 d=2";

impl Mesh {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for (i, v) in self.vertices().iter().enumerate() {
            writeln!(out, "vertex {} {:.16e} {:.16e}", i, v.x, v.y).unwrap();
        }
        for (i, e) in self.elements().iter().enumerate() {
            let [a, b, c] = e.vertices;
            writeln!(out, "element {i} {a} {b} {c}").unwrap();
        }
        out
    }

    /// Parses the text format and validates the result as an initial mesh
    /// (a written refinement reloads as a fresh initial mesh).
    pub fn from_text(text: &str) -> Result<Mesh, MeshError> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .ok_or_else(|| MeshError::Format("empty file".into()))?;
        if header.1.trim() != HEADER {
            return Err(MeshError::Format(format!(
                "bad header {:?}, expected {:?}",
                header.1, HEADER
            )));
        }
        let mut coords: Vec<[f64; 2]> = Vec::new();
        let mut tris: Vec<[usize; 3]> = Vec::new();
        for (lineno, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let kind = parts.next().unwrap();
            let fail = |msg: &str| MeshError::Format(format!("line {}: {}", lineno + 1, msg));
            match kind {
                "vertex" => {
                    let id: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| fail("bad vertex id"))?;
                    if id != coords.len() {
                        return Err(fail("vertex ids must be dense and in order"));
                    }
                    let x: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| fail("bad x coordinate"))?;
                    let y: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| fail("bad y coordinate"))?;
                    if parts.next().is_some() {
                        return Err(fail("trailing fields on vertex line"));
                    }
                    coords.push([x, y]);
                }
                "element" => {
                    let id: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| fail("bad element id"))?;
                    if id != tris.len() {
                        return Err(fail("element ids must be dense and in order"));
                    }
                    let mut v = [0usize; 3];
                    for slot in &mut v {
                        *slot = parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| fail("bad vertex reference"))?;
                    }
                    if parts.next().is_some() {
                        return Err(fail("trailing fields on element line"));
                    }
                    tris.push(v);
                }
                other => return Err(fail(&format!("unknown record {other:?}"))),
            }
        }
        if tris.is_empty() {
            return Err(MeshError::Format("no elements".into()));
        }
        Mesh::initial(coords, tris)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Mesh, MeshError> {
        Mesh::from_text(&std::fs::read_to_string(path)?)
    }
}
