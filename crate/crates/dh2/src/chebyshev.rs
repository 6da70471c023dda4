//! Tensor Chebyshev interpolation on axis-parallel boxes.
//!
//! One-dimensional interpolation uses Chebyshev points of the first kind on
//! the reference interval `[-1, 1]`, evaluated through the barycentric form
//! of the Lagrange polynomials. Three-dimensional grids are tensor products
//! over the box axes; a box axis of width zero degenerates gracefully to a
//! single node (the Lagrange factor along that axis is the constant 1).
//!
//! A parent grid's Lagrange polynomials are polynomials of the child grid's
//! degree too, so they expand exactly in the child basis; [`transfer_matrix`]
//! computes those expansion coefficients axis by axis, which is what makes
//! nested (H²-style) cluster bases possible.

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::Cplx;
use nalgebra::{DMatrix, Vector3};

/// Chebyshev points of the first kind for polynomial degree `degree`:
/// `cos((2i+1) pi / (2 degree + 2))`, `i = 0..=degree`, in descending order.
pub fn cheb_nodes(degree: usize) -> Vec<f64> {
    let m = degree as f64;
    (0..=degree)
        .map(|i| ((2.0 * i as f64 + 1.0) * std::f64::consts::PI / (2.0 * m + 2.0)).cos())
        .collect()
}

/// Barycentric weights matching [`cheb_nodes`] (up to an irrelevant common
/// factor): `(-1)^i sin((2i+1) pi / (2 degree + 2))`.
pub fn barycentric_weights(degree: usize) -> Vec<f64> {
    let m = degree as f64;
    (0..=degree)
        .map(|i| {
            let s = ((2.0 * i as f64 + 1.0) * std::f64::consts::PI / (2.0 * m + 2.0)).sin();
            if i % 2 == 0 {
                s
            } else {
                -s
            }
        })
        .collect()
}

/// Evaluates all 1-d Lagrange polynomials at reference coordinate `t`,
/// writing into `out` (barycentric formula; exact node hits handled).
fn lagrange_all_1d(nodes: &[f64], weights: &[f64], t: f64, out: &mut [f64]) {
    debug_assert_eq!(nodes.len(), out.len());
    if nodes.len() == 1 {
        out[0] = 1.0;
        return;
    }
    for (i, &x) in nodes.iter().enumerate() {
        if t == x {
            out.fill(0.0);
            out[i] = 1.0;
            return;
        }
    }
    let mut denom = 0.0;
    for i in 0..nodes.len() {
        let r = weights[i] / (t - nodes[i]);
        out[i] = r;
        denom += r;
    }
    for v in out.iter_mut() {
        *v /= denom;
    }
}

/// Tensor Chebyshev grid on a box.
#[derive(Debug, Clone)]
pub struct ChebyshevGrid {
    bbox: Aabb,
    degree: usize,
    /// Effective degree per axis: equals `degree`, except 0 on axes where
    /// the box has width zero.
    axis_degrees: [usize; 3],
    ref_nodes: [Vec<f64>; 3],
    ref_weights: [Vec<f64>; 3],
    mapped_nodes: [Vec<f64>; 3],
}

impl ChebyshevGrid {
    /// Grid of `(degree + 1)^3` tensor Chebyshev points on `bbox` (fewer when
    /// some box axis is degenerate).
    pub fn new(bbox: Aabb, degree: usize) -> Self {
        let w = bbox.widths();
        let c = bbox.center();
        let mut axis_degrees = [0usize; 3];
        let mut ref_nodes: [Vec<f64>; 3] = Default::default();
        let mut ref_weights: [Vec<f64>; 3] = Default::default();
        let mut mapped_nodes: [Vec<f64>; 3] = Default::default();
        for a in 0..3 {
            let d = if w[a] == 0.0 { 0 } else { degree };
            axis_degrees[a] = d;
            ref_nodes[a] = cheb_nodes(d);
            ref_weights[a] = barycentric_weights(d);
            mapped_nodes[a] = ref_nodes[a]
                .iter()
                .map(|t| c[a] + 0.5 * w[a] * t)
                .collect();
        }
        Self {
            bbox,
            degree,
            axis_degrees,
            ref_nodes,
            ref_weights,
            mapped_nodes,
        }
    }

    /// The box the grid lives on.
    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    /// The requested polynomial degree.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Effective per-axis degrees (0 on degenerate axes).
    pub fn axis_degrees(&self) -> [usize; 3] {
        self.axis_degrees
    }

    /// Nodes per axis.
    pub fn shape(&self) -> [usize; 3] {
        [
            self.axis_degrees[0] + 1,
            self.axis_degrees[1] + 1,
            self.axis_degrees[2] + 1,
        ]
    }

    /// Total number of tensor nodes (the expansion rank of the grid).
    pub fn len(&self) -> usize {
        let s = self.shape();
        s[0] * s[1] * s[2]
    }

    /// True when the grid is a single point.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of flat node index (last axis fastest).
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let s = self.shape();
        let i2 = flat % s[2];
        let rest = flat / s[2];
        [rest / s[1], rest % s[1], i2]
    }

    /// Flat index of a multi-index.
    pub fn flat_index(&self, mu: [usize; 3]) -> usize {
        let s = self.shape();
        (mu[0] * s[1] + mu[1]) * s[2] + mu[2]
    }

    /// Coordinates of tensor node `flat`.
    pub fn node(&self, flat: usize) -> Vector3<f64> {
        let mu = self.multi_index(flat);
        Vector3::new(
            self.mapped_nodes[0][mu[0]],
            self.mapped_nodes[1][mu[1]],
            self.mapped_nodes[2][mu[2]],
        )
    }

    /// All tensor nodes in flat order.
    pub fn nodes(&self) -> Vec<Vector3<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Pulls a point back to reference coordinates per axis (degenerate axes
    /// map to 0).
    fn pullback(&self, p: &Vector3<f64>) -> [f64; 3] {
        let w = self.bbox.widths();
        let c = self.bbox.center();
        let mut t = [0.0; 3];
        for a in 0..3 {
            t[a] = if w[a] == 0.0 {
                0.0
            } else {
                2.0 * (p[a] - c[a]) / w[a]
            };
        }
        t
    }

    /// Values of all tensor Lagrange polynomials at `p`, in flat order.
    ///
    /// Cost is `O(len)` — the per-axis barycentric vectors are formed once
    /// and combined by products.
    pub fn basis_at(&self, p: &Vector3<f64>) -> Vec<f64> {
        let t = self.pullback(p);
        let s = self.shape();
        let mut per_axis: [Vec<f64>; 3] = [vec![0.0; s[0]], vec![0.0; s[1]], vec![0.0; s[2]]];
        for a in 0..3 {
            lagrange_all_1d(&self.ref_nodes[a], &self.ref_weights[a], t[a], &mut per_axis[a]);
        }
        let mut out = Vec::with_capacity(self.len());
        for i0 in 0..s[0] {
            for i1 in 0..s[1] {
                let p01 = per_axis[0][i0] * per_axis[1][i1];
                for i2 in 0..s[2] {
                    out.push(p01 * per_axis[2][i2]);
                }
            }
        }
        out
    }

    /// Value of the tensor Lagrange polynomial with multi-index `mu` at `p`.
    pub fn lagrange(&self, mu: [usize; 3], p: &Vector3<f64>) -> f64 {
        let t = self.pullback(p);
        let mut prod = 1.0;
        for a in 0..3 {
            let n = self.axis_degrees[a] + 1;
            let mut vals = vec![0.0; n];
            lagrange_all_1d(&self.ref_nodes[a], &self.ref_weights[a], t[a], &mut vals);
            prod *= vals[mu[a]];
        }
        prod
    }

    /// Interpolates samples given at the tensor nodes (flat order) at `p`.
    pub fn interpolate(&self, samples: &[Cplx], p: &Vector3<f64>) -> Cplx {
        let basis = self.basis_at(p);
        samples
            .iter()
            .zip(&basis)
            .map(|(s, b)| s * *b)
            .sum()
    }
}

/// Expansion of a parent grid's Lagrange polynomials in a child grid's basis,
/// stored as one factor matrix per axis (entry `[i, j]` is the parent's i-th
/// 1-d polynomial evaluated at the child's j-th node).
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    axis: [DMatrix<f64>; 3],
    child_shape: [usize; 3],
    parent_shape: [usize; 3],
}

/// Builds the transfer matrix from `parent` to `child`.
///
/// Exactness requires the child degree to be at least the parent degree
/// (expansion orders never shrink towards the leaves); violations are
/// rejected. Degenerate axes are exempt: a width-zero child axis carries a
/// single node, which represents any polynomial exactly on that slice.
pub fn transfer_matrix(parent: &ChebyshevGrid, child: &ChebyshevGrid) -> Result<TransferMatrix> {
    if child.degree() < parent.degree() {
        return Err(Error::InvalidParameter(format!(
            "child grid degree {} is below parent degree {}",
            child.degree(),
            parent.degree()
        )));
    }
    let ps = parent.shape();
    let cs = child.shape();
    let mut axis: [DMatrix<f64>; 3] = [
        DMatrix::zeros(ps[0], cs[0]),
        DMatrix::zeros(ps[1], cs[1]),
        DMatrix::zeros(ps[2], cs[2]),
    ];
    let pw = parent.bbox.widths();
    let pc = parent.bbox.center();
    for a in 0..3 {
        let np = ps[a];
        let mut vals = vec![0.0; np];
        for j in 0..cs[a] {
            let x = child.mapped_nodes[a][j];
            let t = if pw[a] == 0.0 {
                0.0
            } else {
                2.0 * (x - pc[a]) / pw[a]
            };
            lagrange_all_1d(&parent.ref_nodes[a], &parent.ref_weights[a], t, &mut vals);
            for i in 0..np {
                axis[a][(i, j)] = vals[i];
            }
        }
    }
    Ok(TransferMatrix {
        axis,
        child_shape: cs,
        parent_shape: ps,
    })
}

impl TransferMatrix {
    /// Single coefficient `q[mu, nu]` (product of the per-axis factors).
    pub fn entry(&self, mu: [usize; 3], nu: [usize; 3]) -> f64 {
        self.axis[0][(mu[0], nu[0])] * self.axis[1][(mu[1], nu[1])] * self.axis[2][(mu[2], nu[2])]
    }

    /// Applies the transfer: given values indexed by the child grid, returns
    /// values indexed by the parent grid (`y[mu] = sum_nu q[mu, nu] x[nu]`).
    pub fn apply(&self, child_values: &[Cplx]) -> Vec<Cplx> {
        assert_eq!(
            child_values.len(),
            self.child_shape.iter().product::<usize>()
        );
        let mut data = child_values.to_vec();
        let mut shape = self.child_shape;
        for a in 0..3 {
            data = contract_axis(&self.axis[a], &data, &shape, a, false);
            shape[a] = self.parent_shape[a];
        }
        data
    }

    /// Applies the transpose: parent-indexed values to child-indexed values
    /// (`y[nu] = sum_mu q[mu, nu] x[mu]`).
    pub fn apply_transpose(&self, parent_values: &[Cplx]) -> Vec<Cplx> {
        assert_eq!(
            parent_values.len(),
            self.parent_shape.iter().product::<usize>()
        );
        let mut data = parent_values.to_vec();
        let mut shape = self.parent_shape;
        for a in 0..3 {
            data = contract_axis(&self.axis[a], &data, &shape, a, true);
            shape[a] = self.child_shape[a];
        }
        data
    }
}

/// Contracts `mat` (or its transpose) with tensor `data` along `axis`.
fn contract_axis(
    mat: &DMatrix<f64>,
    data: &[Cplx],
    shape: &[usize; 3],
    axis: usize,
    transpose: bool,
) -> Vec<Cplx> {
    let (rows, cols) = if transpose {
        (mat.ncols(), mat.nrows())
    } else {
        (mat.nrows(), mat.ncols())
    };
    debug_assert_eq!(shape[axis], cols);
    let mut out_shape = *shape;
    out_shape[axis] = rows;
    let mut out = vec![Cplx::new(0.0, 0.0); out_shape.iter().product()];
    // Strides for the last-axis-fastest layout.
    let stride = |s: &[usize; 3], a: usize| -> usize { s[a + 1..].iter().product() };
    let in_stride = stride(shape, axis);
    let out_stride = stride(&out_shape, axis);
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    for o in 0..outer {
        let in_base = o * shape[axis] * in_stride;
        let out_base = o * rows * out_stride;
        for r in 0..rows {
            for c in 0..cols {
                let m = if transpose { mat[(c, r)] } else { mat[(r, c)] };
                if m == 0.0 {
                    continue;
                }
                let src = in_base + c * in_stride;
                let dst = out_base + r * out_stride;
                for i in 0..inner {
                    out[dst + i] += data[src + i] * m;
                }
            }
        }
    }
    out
}

/// Lebesgue constant of the 1-d Chebyshev interpolation of degree `degree`,
/// estimated by maximizing the Lebesgue function over a uniform grid of
/// 10001 points on `[-1, 1]` (endpoints included).
pub fn lebesgue_constant(degree: usize) -> f64 {
    let nodes = cheb_nodes(degree);
    let weights = barycentric_weights(degree);
    let n = degree + 1;
    let mut vals = vec![0.0; n];
    let samples = 10001;
    let mut best = 0.0f64;
    for k in 0..samples {
        let t = -1.0 + 2.0 * (k as f64) / ((samples - 1) as f64);
        lagrange_all_1d(&nodes, &weights, t, &mut vals);
        let sum: f64 = vals.iter().map(|v| v.abs()).sum();
        best = best.max(sum);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn nodes_are_cosines_descending() {
        let n = cheb_nodes(2);
        assert_relative_eq!(n[0], 3.0f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_relative_eq!(n[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(n[2], -(3.0f64.sqrt()) / 2.0, epsilon = 1e-15);
        for d in 0..8 {
            let n = cheb_nodes(d);
            assert_eq!(n.len(), d + 1);
            for w in n.windows(2) {
                assert!(w[0] > w[1]);
            }
        }
    }

    #[test]
    fn lagrange_cardinal_property() {
        let bbox = Aabb::new(Vector3::new(-1.0, 0.0, 2.0), Vector3::new(3.0, 1.0, 5.0));
        let grid = ChebyshevGrid::new(bbox, 3);
        for i in 0..grid.len() {
            let xi = grid.node(i);
            for j in 0..grid.len() {
                let v = grid.lagrange(grid.multi_index(j), &xi);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(v, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn basis_matches_lagrange_and_sums_to_one() {
        let bbox = Aabb::new(Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, 1.0, 1.0));
        let grid = ChebyshevGrid::new(bbox, 4);
        let p = Vector3::new(0.3, 0.9, 0.11);
        let basis = grid.basis_at(&p);
        let total: f64 = basis.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        for flat in 0..grid.len() {
            assert_relative_eq!(
                basis[flat],
                grid.lagrange(grid.multi_index(flat), &p),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let bbox = Aabb::new(Vector3::new(-1.0, -1.0, -1.0), Vector3::new(1.0, 2.0, 1.0));
        let grid = ChebyshevGrid::new(bbox, 3);
        let f = |p: &Vector3<f64>| {
            Cplx::new(
                1.0 + p.x + p.x * p.y * p.z + p.z * p.z * p.z,
                p.y * p.y - 2.0 * p.x,
            )
        };
        let samples: Vec<Cplx> = (0..grid.len()).map(|i| f(&grid.node(i))).collect();
        let p = Vector3::new(0.37, 1.21, -0.55);
        let got = grid.interpolate(&samples, &p);
        let want = f(&p);
        assert_relative_eq!(got.re, want.re, max_relative = 1e-12);
        assert_relative_eq!(got.im, want.im, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_axis_uses_single_node() {
        let bbox = Aabb::new(Vector3::new(0.0, 0.0, 1.0), Vector3::new(2.0, 3.0, 1.0));
        let grid = ChebyshevGrid::new(bbox, 3);
        assert_eq!(grid.shape(), [4, 4, 1]);
        assert_eq!(grid.len(), 16);
        // Along the degenerate axis the factor is constant 1.
        let p = Vector3::new(0.5, 0.5, 1.0);
        let basis = grid.basis_at(&p);
        assert_relative_eq!(basis.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn transfer_reproduces_parent_polynomials() {
        let parent = ChebyshevGrid::new(
            Aabb::new(Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, 2.0, 2.0)),
            2,
        );
        let child = ChebyshevGrid::new(
            Aabb::new(Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 2.0, 2.0)),
            2,
        );
        let q = transfer_matrix(&parent, &child).unwrap();
        // L^parent_mu(x) = sum_nu q[mu, nu] L^child_nu(x) for any x
        // (polynomial identity; check points inside the child box).
        let pts = [
            Vector3::new(0.2, 1.7, 0.4),
            Vector3::new(0.9, 0.1, 1.9),
            Vector3::new(0.5, 1.0, 1.0),
        ];
        for x in &pts {
            let child_basis = child.basis_at(x);
            for mu_flat in 0..parent.len() {
                let mu = parent.multi_index(mu_flat);
                let direct = parent.lagrange(mu, x);
                let expanded: f64 = (0..child.len())
                    .map(|nf| q.entry(mu, child.multi_index(nf)) * child_basis[nf])
                    .sum();
                assert_relative_eq!(direct, expanded, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn transfer_apply_matches_entries() {
        let parent = ChebyshevGrid::new(
            Aabb::new(Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, 1.0, 1.0)),
            2,
        );
        let child = ChebyshevGrid::new(
            Aabb::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(2.0, 1.0, 0.5)),
            3,
        );
        let q = transfer_matrix(&parent, &child).unwrap();
        let x: Vec<Cplx> = (0..child.len())
            .map(|i| Cplx::new(i as f64 * 0.37 - 1.0, (i as f64).sin()))
            .collect();
        let fast = q.apply(&x);
        for mu_flat in 0..parent.len() {
            let mu = parent.multi_index(mu_flat);
            let mut slow = Cplx::new(0.0, 0.0);
            for (nf, xv) in x.iter().enumerate() {
                slow += xv * q.entry(mu, child.multi_index(nf));
            }
            assert_relative_eq!(fast[mu_flat].re, slow.re, epsilon = 1e-12);
            assert_relative_eq!(fast[mu_flat].im, slow.im, epsilon = 1e-12);
        }
        // Transpose consistency: <Q x, y> = <x, Q^T y> (bilinear pairing).
        let y: Vec<Cplx> = (0..parent.len())
            .map(|i| Cplx::new((i as f64).cos(), 0.1 * i as f64))
            .collect();
        let qty = q.apply_transpose(&y);
        let lhs: Cplx = fast.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: Cplx = x.iter().zip(&qty).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs.re, rhs.re, max_relative = 1e-12);
        assert_relative_eq!(lhs.im, rhs.im, max_relative = 1e-12);
    }

    #[test]
    fn transfer_rejects_smaller_child_degree() {
        let parent = ChebyshevGrid::new(
            Aabb::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0)),
            3,
        );
        let child = ChebyshevGrid::new(
            Aabb::new(Vector3::zeros(), Vector3::new(0.5, 1.0, 1.0)),
            2,
        );
        assert!(transfer_matrix(&parent, &child).is_err());
    }

    #[test]
    fn lebesgue_small_orders() {
        assert_relative_eq!(lebesgue_constant(0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(lebesgue_constant(1), 2.0f64.sqrt(), epsilon = 1e-6);
        // The classical logarithmic bound dominates the measured constants.
        for d in 0..30 {
            let bound = (2.0 / std::f64::consts::PI) * ((d as f64) + 1.0).ln() + 1.0;
            let measured = lebesgue_constant(d);
            assert!(measured <= bound + 1e-9, "degree {d}: {measured} > {bound}");
            assert!(measured >= 1.0 - 1e-12);
        }
    }

    proptest! {
        /// Interpolation at a node returns the sample at that node.
        #[test]
        fn node_hit_is_exact(flat in 0usize..27, seed in 0u64..1000) {
            let grid = ChebyshevGrid::new(
                Aabb::new(Vector3::new(-1.0, 0.5, 0.0), Vector3::new(1.0, 2.5, 4.0)),
                2,
            );
            let samples: Vec<Cplx> = (0..grid.len())
                .map(|i| Cplx::new((i as f64 + seed as f64).sin(), (i as f64).cos()))
                .collect();
            let v = grid.interpolate(&samples, &grid.node(flat));
            prop_assert!((v - samples[flat]).norm() < 1e-12);
        }

        /// Partition of unity on the box and under mild extrapolation.
        /// (Far outside the box, the barycentric form cancels catastrophically
        /// and the identity degrades; we never evaluate there.)
        #[test]
        fn partition_of_unity(
            px in -1.6f64..1.6, py in -1.6f64..1.6, pz in -1.6f64..1.6, deg in 0usize..6
        ) {
            let grid = ChebyshevGrid::new(
                Aabb::new(Vector3::new(-1.0, -1.0, -1.0), Vector3::new(1.0, 1.0, 1.0)),
                deg,
            );
            let total: f64 = grid.basis_at(&Vector3::new(px, py, pz)).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-8, "sum {total}");
        }
    }
}
