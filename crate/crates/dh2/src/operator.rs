//! The compressed operator: block-sparse nearfield, directional nested
//! cluster bases, coupling matrices, fast matvec and a dense reference.
//!
//! A far block `b = (t, s)` with direction `c` approximates its kernel
//! block by tensor Chebyshev interpolation of the modulated kernel,
//!
//! ```text
//! K[i, j] ≈ sum_{mu, nu} A_t[i, mu] * Gamma_b[mu, nu] * conj(A_s[j, nu]),
//! A_t[i, mu] = ∫_{panel i} exp(-i Im(zeta) <x, c>) L^t_mu(x) dS_x,
//! Gamma_b[mu, nu] = g_c(zeta, xi^t_mu - xi^s_nu),
//! ```
//!
//! so the blockwise rank is the grid size `(m+1)^3`. The moment matrices
//! `A_t` are only stored at leaves; interior clusters reach their sons
//! through polynomial transfer matrices decorated with plane-wave phases
//! `exp(-i Im(zeta) <xi_nu, c - c'>)`, where `c'` is the direction the son
//! level uses for `c`. That keeps the basis nested and the total storage
//! near-linear.
//!
//! The matvec runs the standard three phases: a forward transform gathers
//! `xhat = A_s^H x` up the tree, every far block multiplies by its coupling
//! matrix, and the backward transform (the adjoint of the forward one)
//! scatters `y += A_t yhat` down again. Near blocks multiply densely. The
//! adjoint matvec reuses both transforms and applies the conjugate
//! transpose of each coupling matrix with the block roles swapped.
//!
//! Coupling matrices are precomputed when their total size stays under a
//! configurable budget and evaluated on the fly otherwise (every entry is a
//! plain kernel evaluation, so nothing but time is lost).

use crate::chebyshev::{transfer_matrix, ChebyshevGrid, TransferMatrix};
use crate::clustering::{ClusterTree, TreeMode};
use crate::directions::DirectionFamily;
use crate::error::{Error, Result};
use crate::geometry::{panel_pair_integral, triangle_quadrature, SurfaceMesh};
use crate::kernel::{
    coupling_matrix, green_at_distance, select_orders, unit_phase, ComplexFrequency, OrderParams,
    OrderSchedule,
};
use crate::partition::{build_partition, AdmissibilityParams, BlockKind, BlockPartition};
use crate::Cplx;
use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// How the expansion degrees are chosen.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum OrderSelection {
    /// The same degree on every level; no far block is dropped.
    Fixed(usize),
    /// Distance-dependent per-level degrees; far blocks whose own budget
    /// is negative are dropped entirely (they contribute zero).
    Variable(OrderParams),
}

/// Everything [`DH2Operator::assemble`] needs besides mesh and frequency.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub tree_mode: TreeMode,
    pub leaf_size: usize,
    pub admissibility: AdmissibilityParams,
    /// Gauss points per coordinate for panel quadrature.
    pub quad_order: usize,
    pub orders: OrderSelection,
    /// Largest total coupling-matrix size (complex scalars) kept in memory;
    /// beyond it the matvec evaluates coupling entries on the fly.
    pub coupling_budget: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            tree_mode: TreeMode::Tight,
            leaf_size: 16,
            admissibility: AdmissibilityParams::default(),
            quad_order: 5,
            orders: OrderSelection::Fixed(4),
            coupling_budget: 1 << 26,
        }
    }
}

/// Transfer from one interior cluster to one of its sons: the polynomial
/// part is direction-independent, the phases are one vector per needed
/// parent direction.
struct SonTransfer {
    son: usize,
    poly: TransferMatrix,
    /// `phases[k][nu] = exp(-i Im(zeta) <xi^son_nu, c_k - c'_k>)`.
    phases: Vec<Vec<Cplx>>,
    /// Slot of `c'_k` in the son's needed-direction list.
    son_slots: Vec<usize>,
}

/// Directional nested cluster basis over one tree.
pub struct ClusterBasis {
    /// Needed direction indices per cluster, sorted (empty = inactive).
    needed: Vec<Vec<usize>>,
    /// Interpolation grid per active cluster.
    grids: Vec<Option<ChebyshevGrid>>,
    /// Leaf moment matrices, panels x rank, one per needed direction.
    leaf_moments: Vec<Vec<DMatrix<Cplx>>>,
    /// Son transfers of interior clusters.
    transfers: Vec<Vec<SonTransfer>>,
}

/// Per-(cluster, direction) coefficient vectors of a transform pass.
pub type Coefficients = Vec<Vec<DVector<Cplx>>>;

impl ClusterBasis {
    /// Builds the basis for every (cluster, direction) pair some surviving
    /// far block needs, directly at leaves and via transfers elsewhere.
    fn assemble(
        mesh: &SurfaceMesh,
        tree: &ClusterTree,
        directions: &DirectionFamily,
        partition: &BlockPartition,
        schedule: &OrderSchedule,
        zeta: ComplexFrequency,
        quad_order: usize,
    ) -> Result<Self> {
        let nc = tree.num_clusters();
        let mut needed: Vec<Vec<usize>> = vec![Vec::new(); nc];
        for b in partition.far_blocks().filter(|b| b.order >= 0) {
            let dir = b.dir.expect("far blocks carry a direction");
            needed[b.t].push(dir);
            needed[b.s].push(dir);
        }
        // Close downwards: sons serve their parents' directions through the
        // level map. Level order guarantees parents are final first.
        for l in 0..=tree.depth() {
            for &id in tree.level(l) {
                let mut dirs = std::mem::take(&mut needed[id]);
                dirs.sort_unstable();
                dirs.dedup();
                if let Some(sons) = tree.cluster(id).sons() {
                    for &c in &dirs {
                        let down = directions.son_direction(l, c);
                        for &son in &sons {
                            needed[son].push(down);
                        }
                    }
                }
                needed[id] = dirs;
            }
        }

        let grids: Vec<Option<ChebyshevGrid>> = (0..nc)
            .map(|id| {
                if needed[id].is_empty() {
                    return None;
                }
                let c = tree.cluster(id);
                let degree = schedule.level_degree(c.level);
                debug_assert!(degree >= 0, "active cluster on a degree -1 level");
                Some(ChebyshevGrid::new(c.bbox, degree.max(0) as usize))
            })
            .collect();

        // Leaf moments: tensor Gauss rule on each panel, sized for the
        // polynomial degree of the grid.
        let leaf_ids: Vec<usize> = (0..nc)
            .filter(|&id| tree.cluster(id).is_leaf() && !needed[id].is_empty())
            .collect();
        let computed: Vec<(usize, Vec<DMatrix<Cplx>>)> = leaf_ids
            .par_iter()
            .map(|&id| -> Result<(usize, Vec<DMatrix<Cplx>>)> {
                let grid = grids[id].as_ref().expect("active leaf has a grid");
                let level = tree.cluster(id).level;
                let q = quad_order.max(grid.degree() / 2 + 2);
                let rule = triangle_quadrature(q)?;
                let panels = tree.panels_of(id);
                // Quadrature points with weights and cached Lagrange values.
                let mut pts: Vec<(Vector3<f64>, f64, Vec<f64>)> = Vec::new();
                let mut offsets = Vec::with_capacity(panels.len() + 1);
                for &p in panels {
                    offsets.push(pts.len());
                    let tri = mesh.panel(p);
                    let gram = 2.0 * mesh.area(p);
                    for &(u, v, w) in &rule.points {
                        let x = tri[0] + (tri[1] - tri[0]) * u + (tri[2] - tri[1]) * v;
                        let basis = grid.basis_at(&x);
                        pts.push((x, w * gram, basis));
                    }
                }
                offsets.push(pts.len());
                let mats = needed[id]
                    .iter()
                    .map(|&dir| {
                        let c = directions.set(level).direction(dir);
                        let mut m = DMatrix::zeros(panels.len(), grid.len());
                        for (j, win) in offsets.windows(2).enumerate() {
                            for (x, w, basis) in &pts[win[0]..win[1]] {
                                let ph = unit_phase(-zeta.im() * x.dot(&c)) * *w;
                                for (mu, b) in basis.iter().enumerate() {
                                    m[(j, mu)] += ph * *b;
                                }
                            }
                        }
                        m
                    })
                    .collect();
                Ok((id, mats))
            })
            .collect::<Result<_>>()?;
        let mut leaf_moments: Vec<Vec<DMatrix<Cplx>>> = vec![Vec::new(); nc];
        for (id, mats) in computed {
            leaf_moments[id] = mats;
        }

        let interior: Vec<usize> = (0..nc)
            .filter(|&id| !tree.cluster(id).is_leaf() && !needed[id].is_empty())
            .collect();
        let built: Vec<(usize, Vec<SonTransfer>)> = interior
            .par_iter()
            .map(|&id| -> Result<(usize, Vec<SonTransfer>)> {
                let grid = grids[id].as_ref().expect("active cluster has a grid");
                let level = tree.cluster(id).level;
                let sons = tree.cluster(id).sons().expect("interior cluster");
                let mut out = Vec::with_capacity(2);
                for son in sons {
                    let son_grid = grids[son]
                        .as_ref()
                        .expect("sons of active clusters are active");
                    let poly = transfer_matrix(grid, son_grid)?;
                    let nodes = son_grid.nodes();
                    let mut phases = Vec::with_capacity(needed[id].len());
                    let mut son_slots = Vec::with_capacity(needed[id].len());
                    for &dir in &needed[id] {
                        let down = directions.son_direction(level, dir);
                        let c = directions.set(level).direction(dir);
                        let cd = directions.set(level + 1).direction(down);
                        let diff = c - cd;
                        phases.push(
                            nodes
                                .iter()
                                .map(|xi| unit_phase(-zeta.im() * xi.dot(&diff)))
                                .collect(),
                        );
                        son_slots.push(
                            needed[son]
                                .binary_search(&down)
                                .expect("son direction was propagated"),
                        );
                    }
                    out.push(SonTransfer {
                        son,
                        poly,
                        phases,
                        son_slots,
                    });
                }
                Ok((id, out))
            })
            .collect::<Result<_>>()?;
        let mut transfers: Vec<Vec<SonTransfer>> = (0..nc).map(|_| Vec::new()).collect();
        for (id, t) in built {
            transfers[id] = t;
        }

        Ok(Self {
            needed,
            grids,
            leaf_moments,
            transfers,
        })
    }

    /// Slot of direction `dir` in the needed list of `cluster`.
    fn slot(&self, cluster: usize, dir: usize) -> usize {
        self.needed[cluster]
            .binary_search(&dir)
            .expect("direction was recorded as needed")
    }

    /// Grid of an active cluster.
    pub fn grid(&self, cluster: usize) -> Option<&ChebyshevGrid> {
        self.grids[cluster].as_ref()
    }

    /// Zeroed coefficient storage shaped like the basis.
    fn zero_coefficients(&self) -> Coefficients {
        (0..self.needed.len())
            .map(|id| {
                let rank = self.grids[id].as_ref().map_or(0, ChebyshevGrid::len);
                self.needed[id]
                    .iter()
                    .map(|_| DVector::zeros(rank))
                    .collect()
            })
            .collect()
    }

    /// Forward transform: `xhat[t][k] = sum_j conj(A_t[j, mu]) x[j]`,
    /// computed at leaves and pushed up through the phased transfers.
    /// `x` lives in tree-permuted panel order.
    pub fn forward(&self, tree: &ClusterTree, x: &[Cplx]) -> Coefficients {
        let mut xhat = self.zero_coefficients();
        for l in (0..=tree.depth()).rev() {
            for &id in tree.level(l) {
                if self.needed[id].is_empty() {
                    continue;
                }
                if tree.cluster(id).is_leaf() {
                    let r = tree.cluster(id).panel_range();
                    let xv = DVector::from_column_slice(&x[r]);
                    for (k, m) in self.leaf_moments[id].iter().enumerate() {
                        xhat[id][k] = m.ad_mul(&xv);
                    }
                } else {
                    for st in &self.transfers[id] {
                        for k in 0..self.needed[id].len() {
                            let son_hat = &xhat[st.son][st.son_slots[k]];
                            let phased: Vec<Cplx> = son_hat
                                .iter()
                                .zip(&st.phases[k])
                                .map(|(v, p)| v * p.conj())
                                .collect();
                            let up = st.poly.apply(&phased);
                            for (mu, v) in up.into_iter().enumerate() {
                                xhat[id][k][mu] += v;
                            }
                        }
                    }
                }
            }
        }
        xhat
    }

    /// Backward transform, the adjoint of [`ClusterBasis::forward`]:
    /// scatters coefficient vectors down the tree and accumulates
    /// `y[j] += sum_mu A_t[j, mu] yhat[t][mu]` at leaves (`y` in
    /// tree-permuted panel order).
    pub fn backward(&self, tree: &ClusterTree, mut yhat: Coefficients, y: &mut [Cplx]) {
        for l in 0..=tree.depth() {
            for &id in tree.level(l) {
                if self.needed[id].is_empty() {
                    continue;
                }
                if tree.cluster(id).is_leaf() {
                    let r = tree.cluster(id).panel_range();
                    for (k, m) in self.leaf_moments[id].iter().enumerate() {
                        let add = m * &yhat[id][k];
                        for (dst, v) in y[r.clone()].iter_mut().zip(add.iter()) {
                            *dst += v;
                        }
                    }
                } else {
                    for st in &self.transfers[id] {
                        for k in 0..self.needed[id].len() {
                            let down = st.poly.apply_transpose(yhat[id][k].as_slice());
                            let dst = &mut yhat[st.son][st.son_slots[k]];
                            for (nu, v) in down.into_iter().enumerate() {
                                dst[nu] += v * st.phases[k][nu];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Complex scalars stored in leaf moments and transfer phases.
    fn storage_scalars(&self) -> usize {
        let leaves: usize = self
            .leaf_moments
            .iter()
            .flat_map(|mats| mats.iter().map(|m| m.len()))
            .sum();
        let phases: usize = self
            .transfers
            .iter()
            .flat_map(|ts| ts.iter().map(|t| t.phases.iter().map(Vec::len).sum::<usize>()))
            .sum();
        leaves + phases
    }
}

/// One dense near block in tree-permuted coordinates.
struct NearBlock {
    t: usize,
    s: usize,
    data: DMatrix<Cplx>,
}

/// A far block that survived order selection.
struct FarRef {
    t: usize,
    s: usize,
    level: usize,
    dir: usize,
    slot_t: usize,
    slot_s: usize,
}

/// The assembled directional H²-operator.
pub struct DH2Operator {
    n: usize,
    zeta: ComplexFrequency,
    config: OperatorConfig,
    tree: ClusterTree,
    directions: DirectionFamily,
    partition: BlockPartition,
    schedule: OrderSchedule,
    basis: ClusterBasis,
    near: Vec<NearBlock>,
    far: Vec<FarRef>,
    /// Precomputed coupling matrices (aligned with `far`), if under budget.
    coupling: Option<Vec<DMatrix<Cplx>>>,
}

impl DH2Operator {
    /// Builds tree, directions, partition, order schedule, bases, nearfield
    /// and (budget permitting) coupling matrices for one mesh and frequency.
    pub fn assemble(
        mesh: &SurfaceMesh,
        zeta: ComplexFrequency,
        config: &OperatorConfig,
    ) -> Result<Self> {
        config.admissibility.validate()?;
        let tree = ClusterTree::build(mesh, config.tree_mode, config.leaf_size)?;
        let deltas: Vec<f64> = (0..=tree.depth()).map(|l| tree.delta(l)).collect();
        let directions = DirectionFamily::build(&deltas, zeta.im(), config.admissibility.eta1)?;
        let mut partition = build_partition(&tree, &directions, zeta, &config.admissibility)?;
        let schedule = match &config.orders {
            OrderSelection::Fixed(m) => OrderSchedule::fixed(tree.depth(), *m),
            OrderSelection::Variable(p) => {
                select_orders(tree.depth(), partition.far_level_dists(), zeta.re(), p)
            }
        };
        match &config.orders {
            OrderSelection::Fixed(_) => partition.apply_schedule(&schedule),
            OrderSelection::Variable(p) => partition.apply_variable(&schedule, zeta.re(), p),
        }

        let basis = ClusterBasis::assemble(
            mesh,
            &tree,
            &directions,
            &partition,
            &schedule,
            zeta,
            config.quad_order,
        )?;

        let near = assemble_near_blocks(mesh, &tree, &partition, zeta, config.quad_order)?;

        let far: Vec<FarRef> = partition
            .far_blocks()
            .filter(|b| b.order >= 0)
            .map(|b| {
                let dir = b.dir.expect("far blocks carry a direction");
                FarRef {
                    t: b.t,
                    s: b.s,
                    level: b.level,
                    dir,
                    slot_t: basis.slot(b.t, dir),
                    slot_s: basis.slot(b.s, dir),
                }
            })
            .collect();

        let coupling_scalars: usize = far
            .iter()
            .map(|f| basis.grid(f.t).unwrap().len() * basis.grid(f.s).unwrap().len())
            .sum();
        let coupling = if coupling_scalars <= config.coupling_budget {
            Some(
                far.par_iter()
                    .map(|f| compute_coupling(&basis, &directions, zeta, f))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };

        Ok(Self {
            n: mesh.num_panels(),
            zeta,
            config: *config,
            tree,
            directions,
            partition,
            schedule,
            basis,
            near,
            far,
            coupling,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn zeta(&self) -> ComplexFrequency {
        self.zeta
    }

    pub fn config(&self) -> &OperatorConfig {
        &self.config
    }

    pub fn tree(&self) -> &ClusterTree {
        &self.tree
    }

    pub fn directions(&self) -> &DirectionFamily {
        &self.directions
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn schedule(&self) -> &OrderSchedule {
        &self.schedule
    }

    pub fn basis(&self) -> &ClusterBasis {
        &self.basis
    }

    /// Far blocks that kept an expansion (order >= 0).
    pub fn num_active_far(&self) -> usize {
        self.far.len()
    }

    fn check_len(&self, x: &[Cplx]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `y = K_tilde x` (panel order of the mesh).
    pub fn matvec(&self, x: &[Cplx]) -> Result<Vec<Cplx>> {
        self.check_len(x)?;
        let xp = self.permute(x);
        let mut yp = vec![Cplx::new(0.0, 0.0); self.n];
        self.near_apply(&xp, &mut yp, false);
        if !self.far.is_empty() {
            let xhat = self.basis.forward(&self.tree, &xp);
            let mut yhat = self.basis.zero_coefficients();
            self.couple(&xhat, &mut yhat, false)?;
            self.basis.backward(&self.tree, yhat, &mut yp);
        }
        Ok(self.unpermute(&yp))
    }

    /// `y = K_tilde^H x` (conjugate transpose).
    pub fn matvec_adjoint(&self, x: &[Cplx]) -> Result<Vec<Cplx>> {
        self.check_len(x)?;
        let xp = self.permute(x);
        let mut yp = vec![Cplx::new(0.0, 0.0); self.n];
        self.near_apply(&xp, &mut yp, true);
        if !self.far.is_empty() {
            let xhat = self.basis.forward(&self.tree, &xp);
            let mut yhat = self.basis.zero_coefficients();
            self.couple(&xhat, &mut yhat, true)?;
            self.basis.backward(&self.tree, yhat, &mut yp);
        }
        Ok(self.unpermute(&yp))
    }

    /// `y = K_near x`: the dense near half only.
    pub fn near_matvec(&self, x: &[Cplx]) -> Result<Vec<Cplx>> {
        self.check_len(x)?;
        let xp = self.permute(x);
        let mut yp = vec![Cplx::new(0.0, 0.0); self.n];
        self.near_apply(&xp, &mut yp, false);
        Ok(self.unpermute(&yp))
    }

    /// `y = K_near^H x`.
    pub fn near_matvec_adjoint(&self, x: &[Cplx]) -> Result<Vec<Cplx>> {
        self.check_len(x)?;
        let xp = self.permute(x);
        let mut yp = vec![Cplx::new(0.0, 0.0); self.n];
        self.near_apply(&xp, &mut yp, true);
        Ok(self.unpermute(&yp))
    }

    fn permute(&self, x: &[Cplx]) -> Vec<Cplx> {
        self.tree.permutation().iter().map(|&p| x[p]).collect()
    }

    fn unpermute(&self, y: &[Cplx]) -> Vec<Cplx> {
        let mut out = vec![Cplx::new(0.0, 0.0); y.len()];
        for (pos, &p) in self.tree.permutation().iter().enumerate() {
            out[p] = y[pos];
        }
        out
    }

    fn near_apply(&self, xp: &[Cplx], yp: &mut [Cplx], adjoint: bool) {
        for nb in &self.near {
            let rt = self.tree.cluster(nb.t).panel_range();
            let rs = self.tree.cluster(nb.s).panel_range();
            if adjoint {
                let xv = DVector::from_column_slice(&xp[rt]);
                let add = nb.data.ad_mul(&xv);
                for (dst, v) in yp[rs].iter_mut().zip(add.iter()) {
                    *dst += v;
                }
            } else {
                let xv = DVector::from_column_slice(&xp[rs]);
                let add = &nb.data * &xv;
                for (dst, v) in yp[rt].iter_mut().zip(add.iter()) {
                    *dst += v;
                }
            }
        }
    }

    /// Middle phase: multiply source coefficients by the coupling matrices.
    /// In adjoint mode every block applies `Gamma^H` with t and s swapped.
    fn couple(&self, xhat: &Coefficients, yhat: &mut Coefficients, adjoint: bool) -> Result<()> {
        match &self.coupling {
            Some(gammas) => {
                for (f, gamma) in self.far.iter().zip(gammas) {
                    if adjoint {
                        yhat[f.s][f.slot_s] += gamma.ad_mul(&xhat[f.t][f.slot_t]);
                    } else {
                        yhat[f.t][f.slot_t] += gamma * &xhat[f.s][f.slot_s];
                    }
                }
            }
            None => {
                let products: Vec<DVector<Cplx>> = self
                    .far
                    .par_iter()
                    .map(|f| -> Result<DVector<Cplx>> {
                        let gamma = compute_coupling(&self.basis, &self.directions, self.zeta, f)?;
                        Ok(if adjoint {
                            gamma.ad_mul(&xhat[f.t][f.slot_t])
                        } else {
                            &gamma * &xhat[f.s][f.slot_s]
                        })
                    })
                    .collect::<Result<_>>()?;
                for (f, add) in self.far.iter().zip(products) {
                    if adjoint {
                        yhat[f.s][f.slot_s] += add;
                    } else {
                        yhat[f.t][f.slot_t] += add;
                    }
                }
            }
        }
        Ok(())
    }

    /// Storage and structure counters, also broken down per level.
    pub fn stats(&self) -> OperatorStats {
        let depth = self.tree.depth();
        let mut per_level: Vec<LevelStats> = (0..=depth)
            .map(|l| LevelStats {
                level: l,
                degree: self.schedule.level_degree(l),
                directions: self.directions.set(l).len(),
                far_blocks: 0,
                near_blocks: 0,
                near_entries: 0,
                coupling_scalars: 0,
            })
            .collect();
        for b in self.partition.blocks() {
            let nt = self.tree.cluster(b.t).num_panels();
            let ns = self.tree.cluster(b.s).num_panels();
            match b.kind {
                BlockKind::Near => {
                    per_level[b.level].near_blocks += 1;
                    per_level[b.level].near_entries += nt * ns;
                }
                BlockKind::Far => per_level[b.level].far_blocks += 1,
            }
        }
        for f in &self.far {
            per_level[f.level].coupling_scalars +=
                self.basis.grid(f.t).unwrap().len() * self.basis.grid(f.s).unwrap().len();
        }
        let near_entries = per_level.iter().map(|l| l.near_entries).sum();
        let coupling_scalars = per_level.iter().map(|l| l.coupling_scalars).sum();
        OperatorStats {
            n: self.n,
            near_blocks: self.partition.num_near(),
            far_blocks: self.partition.num_far(),
            dropped_far_blocks: self.partition.num_far() - self.far.len(),
            near_entries,
            coupling_scalars,
            coupling_cached: self.coupling.is_some(),
            basis_scalars: self.basis.storage_scalars(),
            per_level,
        }
    }
}

/// Per-level slice of [`OperatorStats`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub degree: i32,
    pub directions: usize,
    pub far_blocks: usize,
    pub near_blocks: usize,
    pub near_entries: usize,
    pub coupling_scalars: usize,
}

/// Structure and storage accounting of an assembled operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorStats {
    pub n: usize,
    pub near_blocks: usize,
    pub far_blocks: usize,
    /// Far blocks whose budget was negative (they store and contribute
    /// nothing).
    pub dropped_far_blocks: usize,
    pub near_entries: usize,
    pub coupling_scalars: usize,
    pub coupling_cached: bool,
    /// Leaf moments plus transfer phases, in complex scalars.
    pub basis_scalars: usize,
    pub per_level: Vec<LevelStats>,
}

impl OperatorStats {
    /// Per-level breakdown as CSV.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("level,degree,directions,far_blocks,near_blocks,near_entries,coupling_scalars\n");
        for l in &self.per_level {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                l.level,
                l.degree,
                l.directions,
                l.far_blocks,
                l.near_blocks,
                l.near_entries,
                l.coupling_scalars
            )
            .expect("string write cannot fail");
        }
        out
    }
}

fn compute_coupling(
    basis: &ClusterBasis,
    directions: &DirectionFamily,
    zeta: ComplexFrequency,
    f: &FarRef,
) -> Result<DMatrix<Cplx>> {
    let c = directions.set(f.level).direction(f.dir);
    coupling_matrix(
        basis.grid(f.t).expect("far cluster is active"),
        basis.grid(f.s).expect("far cluster is active"),
        zeta,
        &c,
    )
}

/// Per-panel tensor quadrature points with the chart's metric factor folded
/// into the weights. Shared by near-field and dense assembly, so entries of
/// disjoint pairs cost one plain double loop and both paths agree exactly.
struct PanelQuad {
    pts: Vec<(Vector3<f64>, f64)>,
    per_panel: usize,
}

impl PanelQuad {
    fn build(mesh: &SurfaceMesh, q: usize) -> Result<Self> {
        let rule = triangle_quadrature(q)?;
        let per_panel = rule.points.len();
        let mut pts = Vec::with_capacity(per_panel * mesh.num_panels());
        for i in 0..mesh.num_panels() {
            let tri = mesh.panel(i);
            let gram = 2.0 * mesh.area(i);
            for &(u, v, w) in &rule.points {
                let x = tri[0] + (tri[1] - tri[0]) * u + (tri[2] - tri[1]) * v;
                pts.push((x, w * gram));
            }
        }
        Ok(Self { pts, per_panel })
    }

    fn panel(&self, i: usize) -> &[(Vector3<f64>, f64)] {
        &self.pts[i * self.per_panel..(i + 1) * self.per_panel]
    }
}

/// One Galerkin entry: product Gauss rule for disjoint panels, regularizing
/// transforms for touching ones.
fn galerkin_entry(
    mesh: &SurfaceMesh,
    quad: &PanelQuad,
    i: usize,
    j: usize,
    zeta: ComplexFrequency,
    quad_order: usize,
) -> Result<Cplx> {
    if mesh.panels_touch(i, j) {
        let ti = mesh.panel(i);
        let tj = mesh.panel(j);
        return panel_pair_integral(
            |x, y| green_at_distance(zeta, (y - x).norm()),
            &ti,
            &tj,
            quad_order,
        );
    }
    let mut acc = Cplx::new(0.0, 0.0);
    for (x, wx) in quad.panel(i) {
        for (y, wy) in quad.panel(j) {
            acc += green_at_distance(zeta, (y - x).norm()) * (wx * wy);
        }
    }
    Ok(acc)
}

/// Dense nearfield assembly: every near block entrywise by singularity-aware
/// panel-pair quadrature.
fn assemble_near_blocks(
    mesh: &SurfaceMesh,
    tree: &ClusterTree,
    partition: &BlockPartition,
    zeta: ComplexFrequency,
    quad_order: usize,
) -> Result<Vec<NearBlock>> {
    let quad = PanelQuad::build(mesh, quad_order)?;
    let blocks: Vec<(usize, usize)> = partition.near_blocks().map(|b| (b.t, b.s)).collect();
    blocks
        .par_iter()
        .map(|&(t, s)| -> Result<NearBlock> {
            let pt = tree.panels_of(t);
            let ps = tree.panels_of(s);
            let mut data = DMatrix::zeros(pt.len(), ps.len());
            for (i, &pi) in pt.iter().enumerate() {
                for (j, &pj) in ps.iter().enumerate() {
                    data[(i, j)] = galerkin_entry(mesh, &quad, pi, pj, zeta, quad_order)?;
                }
            }
            Ok(NearBlock { t, s, data })
        })
        .collect()
}

/// The full Galerkin matrix in mesh panel order; the oracle every
/// compressed result is measured against. Refuses `n > limit`.
pub fn assemble_dense(
    mesh: &SurfaceMesh,
    zeta: ComplexFrequency,
    quad_order: usize,
    limit: usize,
) -> Result<DMatrix<Cplx>> {
    let n = mesh.num_panels();
    if n > limit {
        return Err(Error::DenseTooLarge { n, limit });
    }
    let quad = PanelQuad::build(mesh, quad_order)?;
    let rows: Vec<Vec<Cplx>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<Cplx>> {
            (0..n)
                .map(|j| galerkin_entry(mesh, &quad, i, j, zeta, quad_order))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut k = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            k[(i, j)] = v;
        }
    }
    Ok(k)
}

/// Power-iteration estimate of the spectral norm of an implicitly given
/// matrix: `iters` rounds of `v <- normalize(A^H A v)` from a seeded random
/// start. Returns the norm estimate and the relative Rayleigh residual
/// `|A^H A v - lambda v| / lambda` of the final iterate.
pub fn spectral_norm_estimate(
    n: usize,
    apply: impl Fn(&DVector<Cplx>) -> DVector<Cplx>,
    apply_adjoint: impl Fn(&DVector<Cplx>) -> DVector<Cplx>,
    iters: usize,
    seed: u64,
) -> (f64, f64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| {
        Cplx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let norm = v.norm();
    if norm == 0.0 || n == 0 {
        return (0.0, 0.0);
    }
    v /= Cplx::from(norm);
    let mut lambda = 0.0f64;
    let mut residual = 0.0f64;
    for _ in 0..iters {
        let w = apply_adjoint(&apply(&v));
        lambda = v.dotc(&w).re.max(0.0);
        let wn = w.norm();
        if wn == 0.0 {
            return (0.0, 0.0);
        }
        residual = (&w - &v * Cplx::from(lambda)).norm() / lambda.max(f64::MIN_POSITIVE);
        v = w / Cplx::from(wn);
    }
    (lambda.sqrt(), residual)
}

/// Spectral-norm error of the compressed operator against a dense reference.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralError {
    /// `|K - K_tilde|_2` estimate.
    pub absolute: f64,
    /// `|K|_2` estimate (same iteration count and seed).
    pub reference: f64,
    /// `absolute / reference`.
    pub relative: f64,
    /// Rayleigh residual of the final error iterate (0 = fully converged).
    pub residual: f64,
}

/// Runs the two power iterations behind [`SpectralError`]. Deterministic
/// for a fixed seed; 30 iterations are enough for the experiment regime.
pub fn spectral_error(
    op: &DH2Operator,
    dense: &DMatrix<Cplx>,
    iters: usize,
    seed: u64,
) -> Result<SpectralError> {
    let n = op.n();
    if dense.nrows() != n || dense.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: dense.nrows(),
        });
    }
    let apply_e = |v: &DVector<Cplx>| -> DVector<Cplx> {
        let tilde = op.matvec(v.as_slice()).expect("length checked");
        dense * v - DVector::from_vec(tilde)
    };
    let apply_eh = |v: &DVector<Cplx>| -> DVector<Cplx> {
        let tilde = op.matvec_adjoint(v.as_slice()).expect("length checked");
        dense.ad_mul(v) - DVector::from_vec(tilde)
    };
    let (absolute, residual) = spectral_norm_estimate(n, apply_e, apply_eh, iters, seed);
    let (reference, _) = spectral_norm_estimate(
        n,
        |v| dense * v,
        |v| dense.ad_mul(v),
        iters,
        seed,
    );
    let relative = if reference > 0.0 {
        absolute / reference
    } else {
        0.0
    };
    Ok(SpectralError {
        absolute,
        reference,
        relative,
        residual,
    })
}

/// Smallest `Re zeta` beyond which every admissible block of any partition
/// of `mesh` drops its expansion (the compressed operator degenerates to
/// the nearfield). Bounds the admissible distances below by the smallest
/// panel diameter over `eta2`.
pub fn nearfield_only_threshold_for_mesh(
    mesh: &SurfaceMesh,
    admissibility: &AdmissibilityParams,
    orders: &OrderParams,
) -> f64 {
    let h_min = (0..mesh.num_panels())
        .map(|i| mesh.panel_diameter(i))
        .fold(f64::INFINITY, f64::min);
    crate::kernel::nearfield_only_threshold(orders, h_min, admissibility.eta2)
}
