//! Per-level sets of unit directions for the plane-wave modulation.
//!
//! A box of diameter `delta` sees the kernel oscillate about
//! `|Im zeta| * delta` radians across its extent, so the admissible
//! directions for its blocks must cover the unit sphere with radius
//! `eta1 / (|Im zeta| * delta)`. Levels with `|Im zeta| * delta <= eta1`
//! are effectively non-oscillatory and get by with one fixed direction.
//!
//! The covering candidates are uniform `p x p` grids of cell centers on the
//! six faces of the cube `[-1, 1]^3`, projected onto the sphere; `p` is
//! escalated until a sampled covering radius (20000 spiral points, with a
//! 5% safety margin) meets the target. Coarser levels have larger boxes and
//! therefore finer direction sets; each direction of a level maps to its
//! nearest neighbour one level down, which is the direction its son
//! clusters use in the transfer step.

use crate::error::{Error, Result};
use nalgebra::Vector3;

/// Number of sphere samples behind every covering-radius estimate.
const COVERING_SAMPLES: usize = 20_000;
/// Safety factor compensating the sampling underestimate of the radius.
const COVERING_SAFETY: f64 = 0.95;
/// Largest face-grid parameter tried before giving up.
const MAX_GRID_PARAM: usize = 64;

/// Directions used by one tree level.
#[derive(Debug, Clone)]
pub struct DirectionSet {
    directions: Vec<Vector3<f64>>,
    grid_param: usize,
    covering_radius: f64,
}

impl DirectionSet {
    /// The degenerate one-direction set for non-oscillatory levels.
    pub fn single() -> Self {
        Self {
            directions: vec![Vector3::new(1.0, 0.0, 0.0)],
            grid_param: 0,
            covering_radius: 2.0,
        }
    }

    /// `p x p` cell centers per cube face, projected onto the sphere
    /// (`6 p^2` directions). Face order: +x, -x, +y, -y, +z, -z; within a
    /// face the two remaining axes run in row-major order.
    pub fn cube_grid(p: usize) -> Self {
        let directions = cube_grid_directions(p);
        let covering_radius = covering_radius_sampled(&directions, COVERING_SAMPLES);
        Self {
            directions,
            grid_param: p,
            covering_radius,
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// True for the one-direction set of non-oscillatory levels.
    pub fn is_single(&self) -> bool {
        self.grid_param == 0
    }

    pub fn direction(&self, i: usize) -> Vector3<f64> {
        self.directions[i]
    }

    pub fn directions(&self) -> &[Vector3<f64>] {
        &self.directions
    }

    /// Face-grid parameter (0 for the single set).
    pub fn grid_param(&self) -> usize {
        self.grid_param
    }

    /// Sampled covering radius of the set.
    pub fn covering_radius(&self) -> f64 {
        self.covering_radius
    }

    /// Index of the direction closest to `v` (lowest index on ties).
    pub fn nearest(&self, v: &Vector3<f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.directions.iter().enumerate() {
            let d = (v - c).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

fn cube_grid_directions(p: usize) -> Vec<Vector3<f64>> {
    assert!(p >= 1);
    let mut directions = Vec::with_capacity(6 * p * p);
    let coord = |i: usize| -1.0 + (2 * i + 1) as f64 / p as f64;
    for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)] {
        for i in 0..p {
            for j in 0..p {
                let mut v = Vector3::zeros();
                v[axis] = sign;
                v[(axis + 1) % 3] = coord(i);
                v[(axis + 2) % 3] = coord(j);
                directions.push(v.normalize());
            }
        }
    }
    directions
}

/// Deterministic, nearly uniform spiral of `n` points on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Largest sampled distance from the sphere to the direction set.
pub fn covering_radius_sampled(dirs: &[Vector3<f64>], samples: usize) -> f64 {
    fibonacci_sphere(samples)
        .iter()
        .map(|s| {
            dirs.iter()
                .map(|c| (s - c).norm_squared())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max)
        .sqrt()
}

/// True when every sampled sphere point is within `radius` of the set;
/// bails out at the first gap.
fn covers_within(dirs: &[Vector3<f64>], radius: f64, samples: usize) -> bool {
    let r2 = radius * radius;
    fibonacci_sphere(samples).iter().all(|s| {
        dirs.iter()
            .any(|c| (s - c).norm_squared() <= r2)
    })
}

/// Direction sets for all levels of a cluster tree plus the
/// parent-direction-to-son-direction maps used by transfers.
#[derive(Debug, Clone)]
pub struct DirectionFamily {
    levels: Vec<DirectionSet>,
    /// `son_map[l][i]`: index in level `l + 1` of the direction nearest to
    /// direction `i` of level `l`.
    son_map: Vec<Vec<usize>>,
    im_zeta: f64,
    eta1: f64,
}

impl DirectionFamily {
    /// Builds the family for per-level box diameters `deltas` (root first).
    pub fn build(deltas: &[f64], im_zeta: f64, eta1: f64) -> Result<Self> {
        if !(eta1 > 0.0) || !im_zeta.is_finite() {
            return Err(Error::InvalidParameter(
                "direction sets need eta1 > 0 and finite Im zeta".into(),
            ));
        }
        let im = im_zeta.abs();
        let mut raw_cache: Vec<Option<Vec<Vector3<f64>>>> = vec![None; MAX_GRID_PARAM + 1];
        let mut accepted: Vec<Option<DirectionSet>> = vec![None; MAX_GRID_PARAM + 1];
        let mut levels = Vec::with_capacity(deltas.len());
        for &delta in deltas {
            if im * delta <= eta1 {
                levels.push(DirectionSet::single());
                continue;
            }
            let target = COVERING_SAFETY * eta1 / (im * delta);
            let mut chosen = None;
            for p in 1..=MAX_GRID_PARAM {
                if let Some(set) = &accepted[p] {
                    if set.covering_radius() <= target {
                        chosen = Some(set.clone());
                        break;
                    }
                    continue;
                }
                let dirs = raw_cache[p].get_or_insert_with(|| cube_grid_directions(p));
                if covers_within(dirs, target, COVERING_SAMPLES) {
                    let set = DirectionSet {
                        directions: dirs.clone(),
                        grid_param: p,
                        covering_radius: covering_radius_sampled(dirs, COVERING_SAMPLES),
                    };
                    accepted[p] = Some(set.clone());
                    chosen = Some(set);
                    break;
                }
            }
            let set = chosen.ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "no direction grid up to p = {MAX_GRID_PARAM} covers radius \
                     {target:.3e} (needed for |Im zeta| * delta = {:.3e})",
                    im * delta
                ))
            })?;
            levels.push(set);
        }
        let son_map = (1..levels.len())
            .map(|l| {
                let (coarse, fine) = (&levels[l], &levels[l - 1]);
                fine.directions()
                    .iter()
                    .map(|c| coarse.nearest(c))
                    .collect()
            })
            .collect();
        Ok(Self {
            levels,
            son_map,
            im_zeta,
            eta1,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn set(&self, level: usize) -> &DirectionSet {
        &self.levels[level]
    }

    /// Direction index on level `level + 1` that the sons of a cluster use
    /// when the cluster itself uses direction `dir` of level `level`.
    pub fn son_direction(&self, level: usize, dir: usize) -> usize {
        self.son_map[level][dir]
    }

    /// Picks the direction of `level` for a block with box centers
    /// `center_t`, `center_s`.
    pub fn assign(
        &self,
        level: usize,
        center_t: &Vector3<f64>,
        center_s: &Vector3<f64>,
    ) -> Result<usize> {
        let d = center_t - center_s;
        let norm = d.norm();
        if norm == 0.0 {
            return Err(Error::CoincidentCenters);
        }
        Ok(self.levels[level].nearest(&(d / norm)))
    }

    pub fn im_zeta(&self) -> f64 {
        self.im_zeta
    }

    pub fn eta1(&self) -> f64 {
        self.eta1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spiral_points_are_unit_and_spread() {
        let pts = fibonacci_sphere(1000);
        assert_eq!(pts.len(), 1000);
        for p in &pts {
            assert_relative_eq!(p.norm(), 1.0, max_relative = 1e-12);
        }
        // 1000 spiral points cover the sphere to well under 0.2.
        let r = covering_radius_sampled(&pts, 5000);
        assert!(r < 0.2, "covering radius {r}");
    }

    #[test]
    fn cube_grid_one_is_the_axis_set() {
        let set = DirectionSet::cube_grid(1);
        assert_eq!(set.len(), 6);
        assert_relative_eq!((set.direction(0) - Vector3::new(1.0, 0.0, 0.0)).norm(), 0.0);
        assert_relative_eq!((set.direction(1) + Vector3::new(1.0, 0.0, 0.0)).norm(), 0.0);
        for i in 0..6 {
            assert_relative_eq!(set.direction(i).norm(), 1.0, max_relative = 1e-14);
        }
        // Nearest picks the obvious axis, and ties go to the lowest index.
        assert_eq!(set.nearest(&Vector3::new(0.9, 0.1, -0.05).normalize()), 0);
        let tie = Vector3::new(1.0, 1.0, 0.0).normalize();
        assert_eq!(set.nearest(&tie), 0);
    }

    #[test]
    fn covering_radius_shrinks_with_p() {
        let r: Vec<f64> = [1usize, 2, 4]
            .iter()
            .map(|&p| DirectionSet::cube_grid(p).covering_radius())
            .collect();
        assert!(r[0] > r[1] && r[1] > r[2], "radii {r:?}");
        // 6 axis directions leave gaps of about the cube-diagonal angle;
        // the measured radii are 0.92, 0.60 and 0.34.
        assert!(r[0] > 0.85 && r[0] < 0.95);
        assert!(r[2] > 0.30 && r[2] < 0.35);
    }

    #[test]
    fn family_switches_to_single_when_oscillation_is_mild() {
        let deltas = [3.46, 1.97, 0.9, 0.4];
        let fam = DirectionFamily::build(&deltas, 8.0, 10.0).unwrap();
        // |Im| * delta = 27.7, 15.8, 7.2, 3.2 against eta1 = 10.
        assert!(!fam.set(0).is_single());
        assert!(!fam.set(1).is_single());
        assert!(fam.set(2).is_single());
        assert!(fam.set(3).is_single());
        // Coarser levels need at least as many directions.
        assert!(fam.set(0).len() >= fam.set(1).len());
        // Zero imaginary part: single everywhere.
        let laplace = DirectionFamily::build(&deltas, 0.0, 10.0).unwrap();
        assert!((0..4).all(|l| laplace.set(l).is_single()));
    }

    #[test]
    fn family_sets_meet_their_covering_targets() {
        let deltas = [3.46, 1.97];
        let im = 12.0;
        let eta1 = 2.0;
        let fam = DirectionFamily::build(&deltas, im, eta1).unwrap();
        for (l, &delta) in deltas.iter().enumerate() {
            let set = fam.set(l);
            assert!(!set.is_single());
            let target = eta1 / (im * delta);
            // Check the real covering property on an independent sample.
            for s in fibonacci_sphere(487) {
                let d = (s - set.direction(set.nearest(&s))).norm();
                assert!(d <= target, "gap {d} > target {target} on level {l}");
            }
        }
    }

    #[test]
    fn son_map_points_to_nearest_coarser_direction() {
        let deltas = [4.0, 2.0, 1.0];
        let fam = DirectionFamily::build(&deltas, 10.0, 2.0).unwrap();
        for l in 0..2 {
            let fine = fam.set(l);
            let coarse = fam.set(l + 1);
            for i in 0..fine.len() {
                let j = fam.son_direction(l, i);
                let d = (fine.direction(i) - coarse.direction(j)).norm();
                for k in 0..coarse.len() {
                    assert!(d <= (fine.direction(i) - coarse.direction(k)).norm() + 1e-15);
                }
            }
        }
    }

    #[test]
    fn assign_matches_block_geometry() {
        let fam = DirectionFamily::build(&[2.0], 20.0, 2.0).unwrap();
        let t = Vector3::new(3.0, 0.1, 0.0);
        let s = Vector3::new(-3.0, -0.1, 0.0);
        let idx = fam.assign(0, &t, &s).unwrap();
        let ideal = (t - s).normalize();
        let got = fam.set(0).direction(idx);
        assert!((got - ideal).norm() <= fam.set(0).covering_radius() + 1e-12);
        assert!(matches!(
            fam.assign(0, &t, &t),
            Err(Error::CoincidentCenters)
        ));
    }

    #[test]
    fn impossible_covering_targets_are_rejected() {
        // |Im| * delta huge: even p = 64 cannot cover the required radius.
        let err = DirectionFamily::build(&[3.46], 1.0e4, 10.0);
        assert!(err.is_err());
    }
}
