//! Binary cluster trees over the panels of a surface mesh.
//!
//! A cluster is a contiguous range of a panel permutation together with two
//! axis-parallel boxes: the `raw` box that drives the geometric subdivision
//! and the `bbox` actually used by admissibility and interpolation, which is
//! guaranteed to contain every vertex of every owned panel.
//!
//! Both modes share one subdivision: the root raw box is the bounding cube
//! of all mesh vertices; a cluster is split by halving its raw box at the
//! midpoint of the longest axis and distributing panels by barycenter side.
//! Empty halves are discarded by halving again (so son boxes can be several
//! halvings smaller than the parent). The modes differ only in the box used
//! downstream:
//!
//! * [`TreeMode::Regular`]: the used boxes are the raw boxes inflated by a
//!   per-level margin — the largest overhang of a panel vertex over its
//!   cluster's raw box on that level — so that box widths stay uniform
//!   across each level wherever no contraction occurred.
//! * [`TreeMode::Tight`]: the used box is the minimal bounding box of the
//!   owned panel vertices, which may stick out of the raw box.
//!
//! Panels are reordered only through the permutation; the mesh itself is
//! never touched. Splits partition stably, so every leaf owns a sorted run
//! of panel ids and traversals are deterministic.
//!
//! Used boxes contain their panels but are not nested, and their diameters
//! are not monotone across levels: the inflation margin jumps once boxes
//! shrink to panel scale. Nothing downstream relies on nesting — transfers
//! between interpolation grids are exact for polynomials regardless.

use crate::error::{Error, Result};
use crate::geometry::{Aabb, SurfaceMesh};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Box policy for the tree construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeMode {
    /// Congruent halved boxes per level, inflated by a per-level margin.
    Regular,
    /// Minimal per-cluster bounding boxes.
    Tight,
}

impl std::str::FromStr for TreeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(Self::Regular),
            "tight" => Ok(Self::Tight),
            other => Err(Error::InvalidParameter(format!(
                "unknown tree mode '{other}' (expected 'regular' or 'tight')"
            ))),
        }
    }
}

/// One node of the cluster tree.
#[derive(Debug, Clone)]
pub struct Cluster {
    /// Depth below the root (root has level 0).
    pub level: usize,
    begin: usize,
    end: usize,
    /// Box driving the subdivision (regular: a halved cube, never inflated).
    pub raw_box: Aabb,
    /// Box used for admissibility and interpolation; contains all vertices
    /// of the owned panels.
    pub bbox: Aabb,
    sons: Option<[usize; 2]>,
    pub parent: Option<usize>,
}

impl Cluster {
    /// Positions in the tree permutation owned by this cluster.
    pub fn panel_range(&self) -> Range<usize> {
        self.begin..self.end
    }

    pub fn num_panels(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_leaf(&self) -> bool {
        self.sons.is_none()
    }

    pub fn sons(&self) -> Option<[usize; 2]> {
        self.sons
    }
}

/// Binary tree of nested panel clusters; cluster 0 is the root.
#[derive(Debug, Clone)]
pub struct ClusterTree {
    clusters: Vec<Cluster>,
    /// Position -> panel id; each cluster owns a contiguous, sorted slice.
    permutation: Vec<usize>,
    /// Panel id -> position (inverse of `permutation`).
    positions: Vec<usize>,
    /// Cluster ids per level, root first.
    levels: Vec<Vec<usize>>,
    /// Largest used-box diameter per level.
    deltas: Vec<f64>,
    mode: TreeMode,
    leaf_size: usize,
}

/// How many times a raw box may be halved while looking for a non-trivial
/// split before the cluster is declared geometrically unsplittable.
const MAX_CONTRACTIONS: usize = 256;

impl ClusterTree {
    /// Builds the tree for `mesh`, splitting clusters with more than
    /// `leaf_size` panels.
    pub fn build(mesh: &SurfaceMesh, mode: TreeMode, leaf_size: usize) -> Result<Self> {
        if leaf_size == 0 {
            return Err(Error::InvalidParameter("leaf size must be positive".into()));
        }
        let n = mesh.num_panels();
        if n == 0 {
            return Err(Error::InvalidMesh("cannot cluster an empty mesh".into()));
        }
        let barycenters: Vec<Vector3<f64>> = (0..n).map(|i| mesh.barycenter(i)).collect();

        let vertex_box = Aabb::containing(mesh.vertices().iter().copied())
            .ok_or_else(|| Error::InvalidMesh("mesh has no vertices".into()))?;
        let root_box = {
            let c = vertex_box.center();
            let half = vertex_box.widths().max() / 2.0;
            let r = Vector3::new(half, half, half);
            Aabb::new(c - r, c + r)
        };

        let mut tree = Self {
            clusters: vec![Cluster {
                level: 0,
                begin: 0,
                end: n,
                raw_box: root_box,
                bbox: root_box,
                sons: None,
                parent: None,
            }],
            permutation: (0..n).collect(),
            positions: vec![0; n],
            levels: Vec::new(),
            deltas: Vec::new(),
            mode,
            leaf_size,
        };

        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if tree.clusters[id].num_panels() <= leaf_size {
                continue;
            }
            if let Some([a, b]) = tree.split(id, &barycenters) {
                stack.push(a);
                stack.push(b);
            }
        }

        for (pos, &panel) in tree.permutation.iter().enumerate() {
            tree.positions[panel] = pos;
        }
        tree.levels = {
            let depth = tree.clusters.iter().map(|c| c.level).max().unwrap_or(0);
            let mut levels = vec![Vec::new(); depth + 1];
            for (id, c) in tree.clusters.iter().enumerate() {
                levels[c.level].push(id);
            }
            levels
        };
        tree.fit_used_boxes(mesh);
        tree.deltas = tree
            .levels
            .iter()
            .map(|ids| {
                ids.iter()
                    .map(|&id| tree.clusters[id].bbox.diameter())
                    .fold(0.0, f64::max)
            })
            .collect();
        Ok(tree)
    }

    /// Splits cluster `id`; returns the son ids, or `None` when the panels
    /// cannot be separated geometrically (the cluster stays a leaf).
    fn split(&mut self, id: usize, barycenters: &[Vector3<f64>]) -> Option<[usize; 2]> {
        let (begin, end, level) = {
            let c = &self.clusters[id];
            (c.begin, c.end, c.level)
        };
        let mut work = self.clusters[id].raw_box;

        for _ in 0..MAX_CONTRACTIONS {
            let axis = work.longest_axis();
            if work.widths()[axis] <= 0.0 {
                return None;
            }
            let mid = 0.5 * (work.lo[axis] + work.hi[axis]);
            let slice = &mut self.permutation[begin..end];
            // Stable partition: both sides keep their sorted panel order.
            let left: Vec<usize> = slice
                .iter()
                .copied()
                .filter(|&p| barycenters[p][axis] <= mid)
                .collect();
            if left.is_empty() {
                work.lo[axis] = mid;
                continue;
            }
            if left.len() == slice.len() {
                work.hi[axis] = mid;
                continue;
            }
            let right: Vec<usize> = slice
                .iter()
                .copied()
                .filter(|&p| barycenters[p][axis] > mid)
                .collect();
            let split_at = begin + left.len();
            slice[..left.len()].copy_from_slice(&left);
            slice[left.len()..].copy_from_slice(&right);

            let (box_l, box_r) = {
                let mut lo_side = work;
                let mut hi_side = work;
                lo_side.hi[axis] = mid;
                hi_side.lo[axis] = mid;
                (lo_side, hi_side)
            };
            let a = self.clusters.len();
            self.clusters.push(Cluster {
                level: level + 1,
                begin,
                end: split_at,
                raw_box: box_l,
                bbox: box_l,
                sons: None,
                parent: Some(id),
            });
            let b = self.clusters.len();
            self.clusters.push(Cluster {
                level: level + 1,
                begin: split_at,
                end,
                raw_box: box_r,
                bbox: box_r,
                sons: None,
                parent: Some(id),
            });
            self.clusters[id].sons = Some([a, b]);
            return Some([a, b]);
        }
        None
    }

    /// Regular mode: inflate every raw box by its level's largest panel
    /// overhang so that used boxes contain all owned vertices while staying
    /// congruent within a level. Tight mode: shrink to the exact vertex box.
    fn fit_used_boxes(&mut self, mesh: &SurfaceMesh) {
        match self.mode {
            TreeMode::Tight => {
                for c in &mut self.clusters {
                    c.bbox = cluster_vertex_box(mesh, &self.permutation[c.begin..c.end]);
                }
            }
            TreeMode::Regular => {
                let mut margins = vec![0.0f64; self.levels.len()];
                for c in &self.clusters {
                    let mut overhang = 0.0f64;
                    for &p in &self.permutation[c.begin..c.end] {
                        for v in mesh.panel(p) {
                            for axis in 0..3 {
                                overhang = overhang
                                    .max(c.raw_box.lo[axis] - v[axis])
                                    .max(v[axis] - c.raw_box.hi[axis]);
                            }
                        }
                    }
                    margins[c.level] = margins[c.level].max(overhang);
                }
                for c in &mut self.clusters {
                    c.bbox = c.raw_box.inflated(margins[c.level]);
                }
            }
        }
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn cluster(&self, id: usize) -> &Cluster {
        &self.clusters[id]
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Deepest level index (root = 0).
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, l: usize) -> &[usize] {
        &self.levels[l]
    }

    /// Largest used-box diameter on level `l`.
    pub fn delta(&self, l: usize) -> f64 {
        self.deltas[l]
    }

    pub fn mode(&self) -> TreeMode {
        self.mode
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// Panel ids owned by `id`, in sorted order.
    pub fn panels_of(&self, id: usize) -> &[usize] {
        let c = &self.clusters[id];
        &self.permutation[c.begin..c.end]
    }

    /// Position -> panel id map (leaf traversal order).
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Panel id -> position map.
    pub fn position_of_panel(&self, panel: usize) -> usize {
        self.positions[panel]
    }

    /// Ids of all leaves, in traversal order of the permutation.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.clusters.len())
            .filter(|&id| self.clusters[id].is_leaf())
            .collect();
        out.sort_by_key(|&id| self.clusters[id].begin);
        out
    }
}

fn cluster_vertex_box(mesh: &SurfaceMesh, panels: &[usize]) -> Aabb {
    Aabb::containing(panels.iter().flat_map(|&p| mesh.panel(p)))
        .expect("cluster owns at least one panel")
}

/// Structural measurements used to sanity-check a built tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeDiagnostics {
    pub depth: usize,
    pub num_clusters: usize,
    pub num_leaves: usize,
    pub min_leaf_size: usize,
    pub max_leaf_size: usize,
    /// Largest relative spread of used-box widths within a level (0 when
    /// every level is congruent; contraction at depth can make this grow).
    pub congruence_defect: f64,
    /// Largest used-box inflation margin over all levels (regular mode).
    pub max_margin: f64,
    /// Smallest and largest ratio `diam(son bbox) / diam(parent bbox)`.
    pub son_diameter_ratio: (f64, f64),
    /// True when every owned panel vertex lies in its cluster's used box.
    pub all_panels_contained: bool,
}

/// Measures the tree against the assumptions the far-field machinery makes.
pub fn check_tree_assumptions(tree: &ClusterTree, mesh: &SurfaceMesh) -> TreeDiagnostics {
    let mut num_leaves = 0;
    let mut min_leaf = usize::MAX;
    let mut max_leaf = 0;
    let mut contained = true;
    let mut ratio: (f64, f64) = (f64::INFINITY, 0.0);
    let mut max_margin = 0.0f64;

    for id in 0..tree.num_clusters() {
        let c = tree.cluster(id);
        if c.is_leaf() {
            num_leaves += 1;
            min_leaf = min_leaf.min(c.num_panels());
            max_leaf = max_leaf.max(c.num_panels());
        }
        for &p in tree.panels_of(id) {
            for v in mesh.panel(p) {
                if !c.bbox.contains(&v) {
                    contained = false;
                }
            }
        }
        if let Some(parent) = c.parent {
            let r = c.bbox.diameter() / tree.cluster(parent).bbox.diameter();
            ratio.0 = ratio.0.min(r);
            ratio.1 = ratio.1.max(r);
        }
        let m = (c.bbox.widths() - c.raw_box.widths()).max() / 2.0;
        max_margin = max_margin.max(m);
    }

    let mut defect = 0.0f64;
    for l in 0..=tree.depth() {
        for axis in 0..3 {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for &id in tree.level(l) {
                let w = tree.cluster(id).bbox.widths()[axis];
                lo = lo.min(w);
                hi = hi.max(w);
            }
            if hi > 0.0 {
                defect = defect.max((hi - lo) / hi);
            }
        }
    }

    TreeDiagnostics {
        depth: tree.depth(),
        num_clusters: tree.num_clusters(),
        num_leaves,
        min_leaf_size: min_leaf,
        max_leaf_size: max_leaf,
        congruence_defect: defect,
        max_margin,
        son_diameter_ratio: ratio,
        all_panels_contained: contained,
    }
}
