//! Admissibility and the near/far block partition of the cluster tree.
//!
//! A pair of cluster boxes is admissible for frequency `zeta` when, with
//! `dist` the exact box-box distance and `maxdiam` the larger box diagonal,
//!
//! ```text
//! maxdiam <= eta2 * dist                                        (size)
//! |Im zeta| * maxdiam^2 <= max(eta2, eta3 * Re zeta * dist) * dist   (oscillation)
//! ```
//!
//! both hold (touching boxes, `dist = 0`, are never admissible). The second
//! condition is what makes the partition frequency-dependent: purely
//! oscillatory frequencies must subdivide much deeper before blocks become
//! admissible, while a positive real part relaxes the test at large
//! distances because the kernel has already decayed there.
//!
//! The partition results from a synchronous descent from the root pair: the
//! recursion stops when either cluster is a leaf or the pair is admissible,
//! and otherwise visits all son pairs, so both sides of every block live on
//! the same level. The leaf test comes first: a pair touching a leaf stays
//! dense even when it would pass the admissibility test, so far blocks
//! (annotated with the level direction closest to the connecting line)
//! always pair two interior clusters, and every near block involves at
//! least one leaf. The alternative order — admissibility before the leaf
//! test — would move some leaf-level pairs into the far field without
//! changing the total block count.

use crate::clustering::ClusterTree;
use crate::directions::DirectionFamily;
use crate::error::{Error, Result};
use crate::geometry::{box_box_distance, Aabb};
use crate::kernel::{ComplexFrequency, OrderParams, OrderSchedule};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// The three admissibility parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdmissibilityParams {
    /// Direction resolution (larger = coarser direction sets).
    pub eta1: f64,
    /// Size-to-distance ratio bound.
    pub eta2: f64,
    /// Weight of the decay-assisted branch; must stay below 1.
    pub eta3: f64,
}

impl Default for AdmissibilityParams {
    fn default() -> Self {
        Self {
            eta1: 10.0,
            eta2: 2.0,
            eta3: 0.5,
        }
    }
}

impl AdmissibilityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta1 > 0.0 && self.eta2 > 0.0 && self.eta3 > 0.0 && self.eta3 < 1.0) {
            return Err(Error::InvalidParameter(
                "admissibility needs eta1, eta2 > 0 and 0 < eta3 < 1".into(),
            ));
        }
        Ok(())
    }
}

/// Box-pair admissibility test; also returns the box distance.
pub fn is_admissible(
    bt: &Aabb,
    bs: &Aabb,
    zeta: ComplexFrequency,
    params: &AdmissibilityParams,
) -> (bool, f64) {
    let dist = box_box_distance(bt, bs);
    if dist <= 0.0 {
        return (false, dist);
    }
    let maxdiam = bt.diameter().max(bs.diameter());
    if maxdiam > params.eta2 * dist {
        return (false, dist);
    }
    let lhs = zeta.im().abs() * maxdiam * maxdiam;
    let rhs = params.eta2.max(params.eta3 * zeta.re() * dist) * dist;
    (lhs <= rhs, dist)
}

/// Near blocks are stored densely, far blocks through the directional bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Near,
    Far,
}

/// One block of the partition; `t` and `s` are cluster ids of equal level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub t: usize,
    pub s: usize,
    pub level: usize,
    pub kind: BlockKind,
    /// Direction index within the level's set (far blocks only).
    pub dir: Option<usize>,
    /// Box distance (zero or positive; zero only for near blocks).
    pub dist: f64,
    /// Interpolation degree; -1 for near blocks and dropped far blocks.
    pub order: i32,
}

/// The complete near/far partition of `I x I`.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    blocks: Vec<Block>,
    num_near: usize,
    num_far: usize,
    depth: usize,
}

/// Builds the partition for one tree against itself.
pub fn build_partition(
    tree: &ClusterTree,
    directions: &DirectionFamily,
    zeta: ComplexFrequency,
    params: &AdmissibilityParams,
) -> Result<BlockPartition> {
    params.validate()?;
    let mut part = BlockPartition {
        blocks: Vec::new(),
        num_near: 0,
        num_far: 0,
        depth: tree.depth(),
    };
    let mut stack = vec![(tree.root(), tree.root(), 0usize)];
    while let Some((t, s, level)) = stack.pop() {
        let (ct, cs) = (tree.cluster(t), tree.cluster(s));
        debug_assert_eq!(ct.level, level);
        debug_assert_eq!(cs.level, level);
        // Leaf test before admissibility: a pair that cannot descend
        // further on both sides in lockstep stays dense.
        let (ts, ss) = match (ct.sons(), cs.sons()) {
            (Some(ts), Some(ss)) => (ts, ss),
            _ => {
                let dist = box_box_distance(&ct.bbox, &cs.bbox);
                part.push_near(t, s, level, dist);
                continue;
            }
        };
        let (ok, dist) = is_admissible(&ct.bbox, &cs.bbox, zeta, params);
        if ok {
            // Admissible interior pairs carry a directional expansion.
            let dir = directions.assign(level, &ct.bbox.center(), &cs.bbox.center())?;
            debug_assert!(direction_within_resolution(
                tree, directions, zeta, params, t, s, level, dir
            ));
            part.blocks.push(Block {
                t,
                s,
                level,
                kind: BlockKind::Far,
                dir: Some(dir),
                dist,
                order: -1,
            });
            part.num_far += 1;
            continue;
        }
        // Reverse iteration keeps the DFS emit order equal to the
        // natural son order (the stack pops last-first).
        for &tt in ts.iter().rev() {
            for &ssn in ss.iter().rev() {
                stack.push((tt, ssn, level + 1));
            }
        }
    }
    Ok(part)
}

/// Resolution check behind the direction assignment: the chosen direction
/// deviates from the connecting line by at most `eta1 / maxdiam` in angle
/// scaled by `|Im zeta|` (up to a factor 2 on single-direction levels).
#[allow(clippy::too_many_arguments)]
fn direction_within_resolution(
    tree: &ClusterTree,
    directions: &DirectionFamily,
    zeta: ComplexFrequency,
    params: &AdmissibilityParams,
    t: usize,
    s: usize,
    level: usize,
    dir: usize,
) -> bool {
    let (bt, bs) = (&tree.cluster(t).bbox, &tree.cluster(s).bbox);
    let line = (bt.center() - bs.center()).normalize();
    let c = directions.set(level).direction(dir);
    let maxdiam = bt.diameter().max(bs.diameter());
    let slack = if directions.set(level).is_single() {
        2.0
    } else {
        1.0
    };
    zeta.im().abs() * (line - c).norm() <= slack * params.eta1 / maxdiam * 1.000001
}

impl BlockPartition {
    fn push_near(&mut self, t: usize, s: usize, level: usize, dist: f64) {
        self.blocks.push(Block {
            t,
            s,
            level,
            kind: BlockKind::Near,
            dir: None,
            dist,
            order: -1,
        });
        self.num_near += 1;
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn near_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.kind == BlockKind::Near)
    }

    pub fn far_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.kind == BlockKind::Far)
    }

    pub fn num_near(&self) -> usize {
        self.num_near
    }

    pub fn num_far(&self) -> usize {
        self.num_far
    }

    /// Total block count (the partition cardinality).
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Deepest tree level (for sizing order schedules).
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `(level, dist)` of every far block, the input to order selection.
    pub fn far_level_dists(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.far_blocks().map(|b| (b.level, b.dist))
    }

    /// Stamps the per-level degrees onto the far blocks.
    pub fn apply_schedule(&mut self, schedule: &OrderSchedule) {
        for b in &mut self.blocks {
            if b.kind == BlockKind::Far {
                b.order = schedule.level_degree(b.level);
            }
        }
    }

    /// Stamps per-block orders for the variable-order regime: a far block
    /// keeps its level degree while its own distance-dependent budget is
    /// nonnegative and is dropped (order -1, contributes zero) otherwise.
    pub fn apply_variable(&mut self, schedule: &OrderSchedule, re_zeta: f64, params: &OrderParams) {
        for b in &mut self.blocks {
            if b.kind == BlockKind::Far {
                b.order = if params.block_degree(re_zeta, b.dist) >= 0 {
                    schedule.level_degree(b.level)
                } else {
                    -1
                };
            }
        }
    }

    /// Largest number of far partners any single row cluster has.
    pub fn max_far_partners(&self) -> usize {
        let mut counts = std::collections::HashMap::new();
        for b in self.far_blocks() {
            *counts.entry(b.t).or_insert(0usize) += 1;
        }
        counts.values().copied().max().unwrap_or(0)
    }
}

/// Verifies that the blocks tile the product index set exactly once.
/// Quadratic in memory; refuse sizes where the bitmap would be unreasonable.
pub fn check_tiling(partition: &BlockPartition, tree: &ClusterTree) -> Result<bool> {
    let n = tree.permutation().len();
    if n > 4096 {
        return Err(Error::DenseTooLarge { n, limit: 4096 });
    }
    let mut counts = vec![0u8; n * n];
    for b in partition.blocks() {
        let rt = tree.cluster(b.t).panel_range();
        let rs = tree.cluster(b.s).panel_range();
        for i in rt {
            for j in rs.clone() {
                let c = &mut counts[i * n + j];
                *c = c.saturating_add(1);
            }
        }
    }
    Ok(counts.iter().all(|&c| c == 1))
}

/// Blocks as CSV with the schema
/// `level,t_id,s_id,kind,order,dist,diam_t,diam_s`.
pub fn blocks_to_csv(partition: &BlockPartition, tree: &ClusterTree) -> String {
    let mut out = String::from("level,t_id,s_id,kind,order,dist,diam_t,diam_s\n");
    for b in partition.blocks() {
        let kind = match b.kind {
            BlockKind::Near => "near",
            BlockKind::Far => "far",
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            b.level,
            b.t,
            b.s,
            kind,
            b.order,
            b.dist,
            tree.cluster(b.t).bbox.diameter(),
            tree.cluster(b.s).bbox.diameter()
        )
        .expect("string write cannot fail");
    }
    out
}

/// Writes [`blocks_to_csv`] to a file.
pub fn write_blocks_csv(
    partition: &BlockPartition,
    tree: &ClusterTree,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, blocks_to_csv(partition, tree))?;
    Ok(())
}

/// Renders the partition as a binary PPM image: one pixel per index pair in
/// leaf traversal order, near blocks red, far blocks blue, block borders
/// black.
pub fn render_pattern(partition: &BlockPartition, tree: &ClusterTree) -> Result<Vec<u8>> {
    let n = tree.permutation().len();
    if n > 4096 {
        return Err(Error::DenseTooLarge { n, limit: 4096 });
    }
    let mut pixels = vec![0u8; 3 * n * n];
    for b in partition.blocks() {
        let rt = tree.cluster(b.t).panel_range();
        let rs = tree.cluster(b.s).panel_range();
        let fill: [u8; 3] = match b.kind {
            BlockKind::Near => [255, 0, 0],
            BlockKind::Far => [0, 0, 255],
        };
        for i in rt.clone() {
            for j in rs.clone() {
                let border = i == rt.start || i + 1 == rt.end || j == rs.start || j + 1 == rs.end;
                let color = if border { [0, 0, 0] } else { fill };
                pixels[3 * (i * n + j)..3 * (i * n + j) + 3].copy_from_slice(&color);
            }
        }
    }
    let mut out = format!("P6\n{n} {n}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}
