//! Exact Euclidean distances between points, triangles and axis-parallel
//! boxes.

use super::{Aabb, Triangle};
use nalgebra::Vector3;

/// Closest point to `p` on the triangle `(a, b, c)` (Voronoi-region walk).
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Distance from a point to a triangle.
pub fn point_triangle_distance(p: &Vector3<f64>, tri: &Triangle) -> f64 {
    (p - closest_point_on_triangle(p, &tri[0], &tri[1], &tri[2])).norm()
}

/// Closest points between segments `[p1,q1]` and `[p2,q2]`.
fn closest_points_on_segments(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let eps = 1e-300;
    if a <= eps && e <= eps {
        return (*p1, *p2);
    }
    let (s, t);
    if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let s0 = if denom != 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                s = s0;
                t = t0;
            }
        }
    }
    (p1 + d1 * s, p2 + d2 * t)
}

/// Distance between two triangles that do not cross each other
/// (the minimum is then attained on an edge pair or a vertex-face pair).
/// Panels of a valid surface mesh never cross.
pub fn triangle_triangle_distance(t1: &Triangle, t2: &Triangle) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..3 {
        let (p1, q1) = (t1[i], t1[(i + 1) % 3]);
        for j in 0..3 {
            let (p2, q2) = (t2[j], t2[(j + 1) % 3]);
            let (x, y) = closest_points_on_segments(&p1, &q1, &p2, &q2);
            best = best.min((x - y).norm());
        }
    }
    for v in t1 {
        best = best.min(point_triangle_distance(v, t2));
    }
    for v in t2 {
        best = best.min(point_triangle_distance(v, t1));
    }
    best
}

/// Euclidean distance between two axis-parallel boxes (0 when they overlap).
pub fn box_box_distance(a: &Aabb, b: &Aabb) -> f64 {
    let mut d2 = 0.0;
    for axis in 0..3 {
        let gap = (b.lo[axis] - a.hi[axis]).max(a.lo[axis] - b.hi[axis]).max(0.0);
        d2 += gap * gap;
    }
    d2.sqrt()
}
