//! Small planar geometry helpers shared by the mesh and FEM layers.
//! Points are `[f64; 2]`; triangles are CCW vertex triples.

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Twice the signed area of triangle (a, b, c); positive for CCW order.
#[inline]
pub fn signed_area_x2(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[inline]
pub fn tri_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * signed_area_x2(a, b, c)
}

/// Longest edge length.
pub fn tri_diameter(a: Point, b: Point, c: Point) -> f64 {
    dist(a, b).max(dist(b, c)).max(dist(c, a))
}

/// Inradius 2·|T| / perimeter; zero for degenerate triangles.
pub fn tri_inradius(a: Point, b: Point, c: Point) -> f64 {
    let per = dist(a, b) + dist(b, c) + dist(c, a);
    if per == 0.0 {
        return 0.0;
    }
    2.0 * tri_area(a, b, c).abs() / per
}

/// Barycentric coordinates of `p` with respect to (a, b, c).
pub fn barycentric(a: Point, b: Point, c: Point, p: Point) -> [f64; 3] {
    let den = signed_area_x2(a, b, c);
    let la = signed_area_x2(p, b, c) / den;
    let lb = signed_area_x2(a, p, c) / den;
    [la, lb, 1.0 - la - lb]
}

/// Containment test with a small inclusive tolerance on the edges.
pub fn point_in_triangle(a: Point, b: Point, c: Point, p: Point, tol: f64) -> bool {
    let l = barycentric(a, b, c, p);
    l.iter().all(|&v| v >= -tol)
}
