//! Small planar-geometry toolbox shared by the mesh and assembly layers:
//! signed areas, barycentric coordinates, segment/triangle distances and
//! point-in-polygon tests. Everything is plain f64 with explicit tolerances;
//! no exact predicates are needed at the mesh sizes this crate targets.

use nalgebra::Vector2;

/// 2D point/vector used throughout the crate.
pub type Vec2 = Vector2<f64>;

/// Signed area of the triangle (a, b, c); positive for counter-clockwise
/// orientation.
pub fn signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Barycentric coordinates (λ_a, λ_b, λ_c) of `p` with respect to the
/// triangle (a, b, c). Valid for non-degenerate triangles of either
/// orientation; coordinates sum to 1 and may be negative outside.
pub fn barycentric(p: Vec2, a: Vec2, b: Vec2, c: Vec2) -> [f64; 3] {
    let area = signed_area(a, b, c);
    let la = signed_area(p, b, c) / area;
    let lb = signed_area(a, p, c) / area;
    let lc = 1.0 - la - lb;
    [la, lb, lc]
}

/// True when `p` lies in the closed triangle (a, b, c), with a barycentric
/// slack of `tol` to absorb roundoff on edges.
pub fn point_in_triangle(p: Vec2, a: Vec2, b: Vec2, c: Vec2, tol: f64) -> bool {
    let [la, lb, lc] = barycentric(p, a, b, c);
    la >= -tol && lb >= -tol && lc >= -tol
}

/// Euclidean distance from `p` to the closed segment [a, b].
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

/// True when the closed segments [a, b] and [c, d] intersect (shared
/// endpoints and collinear overlap count as intersections).
pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = signed_area(c, d, a);
    let d2 = signed_area(c, d, b);
    let d3 = signed_area(a, b, c);
    let d4 = signed_area(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |s: f64, p: Vec2, q: Vec2, r: Vec2| -> bool {
        s == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(d1, c, d, a) || on(d2, c, d, b) || on(d3, a, b, c) || on(d4, a, b, d)
}

/// Euclidean distance between the closed segments [a, b] and [c, d]
/// (0 when they intersect).
pub fn segment_segment_distance(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Euclidean distance between two closed triangles; 0 when they overlap,
/// touch or one contains the other.
pub fn triangle_triangle_distance(t1: &[Vec2; 3], t2: &[Vec2; 3]) -> f64 {
    // Containment covers the no-edge-intersection overlap case; the segment
    // sweep below covers everything else, returning 0 on any crossing.
    if point_in_triangle(t1[0], t2[0], t2[1], t2[2], 0.0)
        || point_in_triangle(t2[0], t1[0], t1[1], t1[2], 0.0)
    {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..3 {
        let (a, b) = (t1[i], t1[(i + 1) % 3]);
        for j in 0..3 {
            let (c, d) = (t2[j], t2[(j + 1) % 3]);
            best = best.min(segment_segment_distance(a, b, c, d));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}

/// True when `p` lies strictly inside or on the closed polygon `poly`
/// (vertices in order, implicitly closed). Uses the even-odd crossing rule
/// with an explicit on-boundary check so edge points count as inside.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2], boundary_tol: f64) -> bool {
    let n = poly.len();
    for i in 0..n {
        if point_segment_distance(p, poly[i], poly[(i + 1) % n]) <= boundary_tol {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}
