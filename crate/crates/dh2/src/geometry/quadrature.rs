//! Panel and panel-pair quadrature.
//!
//! Single panels use a tensor Gauss rule mapped onto the reference triangle
//! through the collapsed-square substitution `(u, v) = (a, a*b)`. Pairs of
//! panels that touch (identical, shared edge, shared vertex) are integrated
//! with the classical regularizing coordinate transforms: the four-dimensional
//! domain is split into subregions on which radial scaling removes the `1/r`
//! kernel singularity, leaving an analytic integrand for the tensor Gauss
//! rule. Disjoint pairs use the plain product rule.

use super::Triangle;
use crate::error::{Error, Result};
use crate::Cplx;
use nalgebra::{Vector2, Vector3};

/// Gauss–Legendre nodes and weights on `[0, 1]`.
///
/// Nodes are ascending; weights sum to 1. Rejects `q = 0` and `q > 100`.
pub fn gauss_legendre(q: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if q == 0 || q > 100 {
        return Err(Error::InvalidParameter(format!(
            "Gauss rule order {q} outside 1..=100"
        )));
    }
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let n = q as f64;
    for i in 0..q {
        // Standard initial guess for the i-th root of the Legendre polynomial.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_q and its derivative by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=q {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (p0 - x * p1) / (1.0 - x * x);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1, 1] -> [0, 1]; roots come out descending in i.
        nodes[q - 1 - i] = 0.5 * (x + 1.0);
        weights[q - 1 - i] = 0.5 * w;
    }
    Ok((nodes, weights))
}

/// Quadrature rule on the reference triangle `{(u, v) : 0 <= v <= u <= 1}`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// `(u, v, weight)` triples; weights sum to the triangle area 1/2.
    pub points: Vec<(f64, f64, f64)>,
}

/// Tensor Gauss rule with `q^2` points on the reference triangle, exact for
/// bivariate polynomials of total degree `2q - 2`.
pub fn triangle_quadrature(q: usize) -> Result<TriangleRule> {
    let (x, w) = gauss_legendre(q)?;
    let mut points = Vec::with_capacity(q * q);
    for (a, wa) in x.iter().zip(&w) {
        for (b, wb) in x.iter().zip(&w) {
            // (u, v) = (a, a*b) maps the unit square onto the reference
            // triangle with Jacobian a.
            points.push((*a, a * b, wa * wb * a));
        }
    }
    Ok(TriangleRule { points })
}

/// Affine chart of a panel over the reference triangle:
/// `(0,0) -> v0`, `(1,0) -> v1`, `(1,1) -> v2`.
#[inline]
pub(crate) fn chart(tri: &Triangle, u: f64, v: f64) -> Vector3<f64> {
    tri[0] + (tri[1] - tri[0]) * u + (tri[2] - tri[1]) * v
}

/// The metric factor of the chart: integrals over the panel equal
/// reference-triangle integrals times `2 * area`.
#[inline]
fn gram(tri: &Triangle) -> f64 {
    (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm()
}

/// How two panels touch. Matching is by exact coordinate equality, which is
/// the right notion for panels taken from a common vertex list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelAdjacency {
    Identical,
    SharedEdge,
    SharedVertex,
    Disjoint,
}

/// Classifies a panel pair and returns both panels with their corners
/// reordered so the shared simplex comes first, in the same order on both
/// sides (required by the regularizing transforms).
pub(crate) fn classify_pair(ta: &Triangle, tb: &Triangle) -> (PanelAdjacency, Triangle, Triangle) {
    let mut shared: Vec<(usize, usize)> = Vec::new();
    for (i, va) in ta.iter().enumerate() {
        for (j, vb) in tb.iter().enumerate() {
            if va == vb {
                shared.push((i, j));
            }
        }
    }
    match shared.len() {
        3 => (PanelAdjacency::Identical, *ta, *ta),
        2 => {
            let (mut a0, mut b0) = shared[0];
            let (mut a1, mut b1) = shared[1];
            // Canonical edge orientation, independent of the argument order:
            // the lexicographically smaller end of the shared edge comes
            // first. With it, swapping the panels swaps the reordered pair
            // exactly, which makes the symmetrized edge rule symmetric to
            // the last bit.
            let u = &ta[a0];
            let v = &ta[a1];
            if (v.x, v.y, v.z) < (u.x, u.y, u.z) {
                std::mem::swap(&mut a0, &mut a1);
                std::mem::swap(&mut b0, &mut b1);
            }
            let a2 = 3 - a0 - a1;
            let b2 = 3 - b0 - b1;
            (
                PanelAdjacency::SharedEdge,
                [ta[a0], ta[a1], ta[a2]],
                [tb[b0], tb[b1], tb[b2]],
            )
        }
        1 => {
            let (a0, b0) = shared[0];
            (
                PanelAdjacency::SharedVertex,
                [ta[a0], ta[(a0 + 1) % 3], ta[(a0 + 2) % 3]],
                [tb[b0], tb[(b0 + 1) % 3], tb[(b0 + 2) % 3]],
            )
        }
        _ => (PanelAdjacency::Disjoint, *ta, *tb),
    }
}

/// Public adjacency query.
pub fn panel_adjacency(ta: &Triangle, tb: &Triangle) -> PanelAdjacency {
    classify_pair(ta, tb).0
}

type RegionPoint = (Vector2<f64>, Vector2<f64>, f64);

/// Subregion maps for the identical-panel case: six images of the unit cube
/// in `(x̂, ŷ)` coordinates, each with Jacobian `ξ³ η1² η2`. The six come in
/// swapped pairs, which makes the rule exactly symmetric in the two panels.
#[inline]
fn regions_identical(xi: f64, e1: f64, e2: f64, e3: f64, out: &mut Vec<RegionPoint>) {
    let j = xi * xi * xi * e1 * e1 * e2;
    let pairs = [
        (
            Vector2::new(xi, xi * (1.0 - e1 + e1 * e2)),
            Vector2::new(xi * (1.0 - e1 * e2 * e3), xi * (1.0 - e1)),
        ),
        (
            Vector2::new(xi, xi * e1 * (1.0 - e2 + e2 * e3)),
            Vector2::new(xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)),
        ),
        (
            Vector2::new(xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)),
            Vector2::new(xi, xi * e1 * (1.0 - e2)),
        ),
    ];
    for (x, y) in pairs {
        out.push((x, y, j));
        out.push((y, x, j));
    }
}

/// Subregion maps for the shared-edge case (the edge is `v0 -> v1` on both
/// panels): five images of the unit cube.
#[inline]
fn regions_edge(xi: f64, e1: f64, e2: f64, e3: f64, out: &mut Vec<RegionPoint>) {
    let j1 = xi * xi * xi * e1 * e1;
    let j2 = j1 * e2;
    out.push((
        Vector2::new(xi, xi * e1 * e3),
        Vector2::new(xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)),
        j1,
    ));
    out.push((
        Vector2::new(xi, xi * e1),
        Vector2::new(xi * (1.0 - e1 * e2 * e3), xi * e1 * e2 * (1.0 - e3)),
        j2,
    ));
    out.push((
        Vector2::new(xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)),
        Vector2::new(xi, xi * e1 * e2 * e3),
        j2,
    ));
    out.push((
        Vector2::new(xi * (1.0 - e1 * e2 * e3), xi * e1 * e2 * (1.0 - e3)),
        Vector2::new(xi, xi * e1),
        j2,
    ));
    out.push((
        Vector2::new(xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)),
        Vector2::new(xi, xi * e1 * e2),
        j2,
    ));
}

/// Subregion maps for the shared-vertex case (the vertex is `v0` on both
/// panels): two images of the unit cube with Jacobian `ξ³ η2`, swapped images
/// of each other.
#[inline]
fn regions_vertex(xi: f64, e1: f64, e2: f64, e3: f64, out: &mut Vec<RegionPoint>) {
    let j = xi * xi * xi * e2;
    out.push((
        Vector2::new(xi, xi * e1),
        Vector2::new(xi * e2, xi * e2 * e3),
        j,
    ));
    out.push((
        Vector2::new(xi * e2, xi * e1 * e2),
        Vector2::new(xi, xi * e3),
        j,
    ));
}

fn singular_pair_quadrature<K>(
    kernel: &K,
    ta: &Triangle,
    tb: &Triangle,
    adj: PanelAdjacency,
    nodes: &[f64],
    weights: &[f64],
) -> Cplx
where
    K: Fn(&Vector3<f64>, &Vector3<f64>) -> Cplx,
{
    let q = nodes.len();
    let mut acc = Cplx::new(0.0, 0.0);
    let mut pts: Vec<RegionPoint> = Vec::with_capacity(6);
    for i0 in 0..q {
        for i1 in 0..q {
            for i2 in 0..q {
                for i3 in 0..q {
                    let w = weights[i0] * weights[i1] * weights[i2] * weights[i3];
                    pts.clear();
                    match adj {
                        PanelAdjacency::Identical => {
                            regions_identical(nodes[i0], nodes[i1], nodes[i2], nodes[i3], &mut pts)
                        }
                        PanelAdjacency::SharedEdge => {
                            regions_edge(nodes[i0], nodes[i1], nodes[i2], nodes[i3], &mut pts)
                        }
                        PanelAdjacency::SharedVertex => {
                            regions_vertex(nodes[i0], nodes[i1], nodes[i2], nodes[i3], &mut pts)
                        }
                        PanelAdjacency::Disjoint => unreachable!(),
                    }
                    for (xh, yh, jac) in &pts {
                        let x = chart(ta, xh.x, xh.y);
                        let y = chart(tb, yh.x, yh.y);
                        acc += kernel(&x, &y) * (w * jac);
                    }
                }
            }
        }
    }
    acc * gram(ta) * gram(tb)
}

/// Integral of `kernel(x, y)` over a pair of panels,
/// `∫_τa ∫_τb kernel(x, y) dS_y dS_x`.
///
/// `q` is the number of Gauss points per coordinate direction. Touching
/// pairs (detected by exact corner equality) are handled with regularizing
/// transforms, so kernels with an integrable point singularity at `x = y`
/// (like `1/(4π|x-y|)`) are admissible; the kernel is then never evaluated
/// at `x = y`. For a symmetric kernel the result is symmetric in the two
/// panels to rounding accuracy: the identical and shared-vertex transforms
/// are symmetric by construction and the shared-edge case is symmetrized
/// explicitly.
pub fn panel_pair_integral<K>(kernel: K, ta: &Triangle, tb: &Triangle, q: usize) -> Result<Cplx>
where
    K: Fn(&Vector3<f64>, &Vector3<f64>) -> Cplx,
{
    let (nodes, weights) = gauss_legendre(q)?;
    let (adj, a, b) = classify_pair(ta, tb);
    match adj {
        PanelAdjacency::Disjoint => {
            let rule = triangle_quadrature(q)?;
            let mut acc = Cplx::new(0.0, 0.0);
            for &(ua, va, wa) in &rule.points {
                let x = chart(&a, ua, va);
                for &(ub, vb, wb) in &rule.points {
                    let y = chart(&b, ub, vb);
                    acc += kernel(&x, &y) * (wa * wb);
                }
            }
            Ok(acc * gram(&a) * gram(&b))
        }
        PanelAdjacency::SharedEdge => {
            let fwd = singular_pair_quadrature(&kernel, &a, &b, adj, &nodes, &weights);
            let swapped = |y: &Vector3<f64>, x: &Vector3<f64>| kernel(x, y);
            let bwd = singular_pair_quadrature(&swapped, &b, &a, adj, &nodes, &weights);
            Ok(0.5 * (fwd + bwd))
        }
        _ => Ok(singular_pair_quadrature(&kernel, &a, &b, adj, &nodes, &weights)),
    }
}
