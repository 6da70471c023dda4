//! Scripted parameter sweeps: block counts over mesh size, spectral error
//! over expansion order, block counts and errors over damping, and sparsity
//! pattern images. Each run returns flat rows and optionally writes a CSV,
//! images and a JSON manifest (config, library version, timings) into an
//! output directory.
//!
//! Everything is deterministic for a fixed `(config, seed)`; wall-clock
//! time only ever lands in the `runtime_s` column.
//!
//! Orders are counted in interpolation points per coordinate here and on
//! the command line (`m` points = polynomial degree `m - 1`), matching the
//! convention of the underlying method; `m = 0` in an order list requests
//! the no-expansion sanity row whose error is `|K_far| / |K|`.

use crate::clustering::{ClusterTree, TreeMode};
use crate::directions::DirectionFamily;
use crate::error::Result;
use crate::geometry::{build_sphere_mesh, SurfaceMesh};
use crate::kernel::ComplexFrequency;
use crate::operator::{
    assemble_dense, spectral_error, spectral_norm_estimate, DH2Operator, OperatorConfig,
    OrderSelection,
};
use crate::partition::{
    build_partition, render_pattern, AdmissibilityParams, BlockPartition,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

/// Which sweep to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentId {
    BlocksVsN,
    ConvergenceVsM,
    BlocksVsNu,
    ErrorVsNu,
    Pattern,
}

impl ExperimentId {
    /// File stem for CSV/manifest outputs.
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::BlocksVsN => "blocks_vs_n",
            ExperimentId::ConvergenceVsM => "convergence_vs_m",
            ExperimentId::BlocksVsNu => "blocks_vs_nu",
            ExperimentId::ErrorVsNu => "error_vs_nu",
            ExperimentId::Pattern => "pattern",
        }
    }
}

/// One sweep specification. `levels` are sphere refinements (`n = 8·4^k`);
/// the frequency rule is `alpha = sqrt(n/128)` throughout, with the real
/// part supplied by the sweep (`nus`) where applicable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub levels: Vec<u32>,
    /// Interpolation points per coordinate (0 = near-only sanity row).
    pub orders: Vec<usize>,
    /// Real parts for the damping sweeps.
    pub nus: Vec<f64>,
    pub quad_order: usize,
    pub admissibility: AdmissibilityParams,
    pub tree_mode: TreeMode,
    pub leaf_size: usize,
    pub seed: u64,
    /// Largest n assembled densely; larger rows are marked unattempted.
    pub dense_limit: usize,
    /// Largest n for partition-only sweeps.
    pub partition_limit: usize,
    /// Coupling matrices beyond this size (complex scalars) make a row
    /// impractical on a desk machine; such rows are marked skipped.
    pub coupling_budget: usize,
    /// Where CSV/PPM/JSON go; `None` returns rows without touching disk.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale defaults per experiment: partition-only sweeps go up to
    /// n = 32768, dense-oracle sweeps stop at n = 2048.
    pub fn desk_preset(experiment: ExperimentId) -> Self {
        let base = Self {
            experiment,
            levels: vec![3],
            orders: vec![],
            nus: vec![],
            quad_order: 5,
            admissibility: AdmissibilityParams::default(),
            tree_mode: TreeMode::Tight,
            leaf_size: 32,
            seed: 20240901,
            dense_limit: 2048,
            partition_limit: 32768,
            coupling_budget: 1 << 26,
            out_dir: None,
        };
        match experiment {
            ExperimentId::BlocksVsN => Self {
                levels: vec![4, 5, 6],
                ..base
            },
            ExperimentId::ConvergenceVsM => Self {
                levels: vec![3, 4],
                orders: vec![0, 2, 3, 4, 5, 6, 7, 8],
                leaf_size: 8,
                ..base
            },
            ExperimentId::BlocksVsNu => Self {
                levels: vec![5],
                nus: (0..=12).map(|k| 2.0 * k as f64).collect(),
                ..base
            },
            ExperimentId::ErrorVsNu => Self {
                levels: vec![4],
                orders: vec![4],
                nus: (0..=6).map(|k| 4.0 * k as f64).collect(),
                quad_order: 3,
                leaf_size: 16,
                ..base
            },
            ExperimentId::Pattern => Self {
                levels: vec![4],
                nus: vec![0.0, 1.0, 2.0, 3.0],
                ..base
            },
        }
    }
}

/// One measured sweep point. `order` is in points per coordinate (-1 where
/// no expansion is involved); `error` is NaN where nothing was measured.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub zeta_re: f64,
    pub zeta_im: f64,
    pub order: i32,
    pub num_blocks: usize,
    pub num_near: usize,
    pub num_far: usize,
    pub blocks_per_n: f64,
    pub error: f64,
    pub runtime_s: f64,
    pub note: String,
}

impl ExperimentRow {
    fn unattempted(n: usize, zeta: (f64, f64), note: &str) -> Self {
        Self {
            n,
            zeta_re: zeta.0,
            zeta_im: zeta.1,
            order: -1,
            num_blocks: 0,
            num_near: 0,
            num_far: 0,
            blocks_per_n: 0.0,
            error: f64::NAN,
            runtime_s: 0.0,
            note: note.to_string(),
        }
    }
}

/// Least-squares fit of block counts to `a + b/(nu + 1)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NuFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

/// One pattern image: the red (near) fraction of the matrix area and the
/// file it was rendered to (empty without an output directory).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternRow {
    pub ratio: f64,
    pub zeta_re: f64,
    pub zeta_im: f64,
    pub n: usize,
    pub red_fraction: f64,
    pub image: String,
}

pub fn n_for_level(level: u32) -> usize {
    8 * 4usize.pow(level)
}

pub fn alpha_for(n: usize) -> f64 {
    (n as f64 / 128.0).sqrt()
}

fn build_ingredients(
    mesh: &SurfaceMesh,
    zeta: ComplexFrequency,
    config: &ExperimentConfig,
) -> Result<(ClusterTree, DirectionFamily, BlockPartition)> {
    let tree = ClusterTree::build(mesh, config.tree_mode, config.leaf_size)?;
    let deltas: Vec<f64> = (0..=tree.depth()).map(|l| tree.delta(l)).collect();
    let directions = DirectionFamily::build(&deltas, zeta.im(), config.admissibility.eta1)?;
    let partition = build_partition(&tree, &directions, zeta, &config.admissibility)?;
    Ok((tree, directions, partition))
}

fn operator_config(config: &ExperimentConfig, points: usize) -> OperatorConfig {
    OperatorConfig {
        tree_mode: config.tree_mode,
        leaf_size: config.leaf_size,
        admissibility: config.admissibility,
        quad_order: config.quad_order,
        orders: OrderSelection::Fixed(points - 1),
        coupling_budget: config.coupling_budget,
    }
}

fn partition_row(
    n: usize,
    zeta: ComplexFrequency,
    partition: &BlockPartition,
    runtime_s: f64,
) -> ExperimentRow {
    ExperimentRow {
        n,
        zeta_re: zeta.re(),
        zeta_im: zeta.im(),
        order: -1,
        num_blocks: partition.num_blocks(),
        num_near: partition.num_near(),
        num_far: partition.num_far(),
        blocks_per_n: partition.num_blocks() as f64 / n as f64,
        error: f64::NAN,
        runtime_s,
        note: String::new(),
    }
}

/// Block counts for `zeta = alpha + alpha*i` versus `zeta = alpha*i` over
/// the configured mesh sizes (partition only, nothing dense).
pub fn run_blocks_vs_n(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let start = Instant::now();
    let mut rows = Vec::new();
    for &level in &config.levels {
        let n = n_for_level(level);
        let alpha = alpha_for(n);
        if n > config.partition_limit {
            for zeta in [(alpha, alpha), (0.0, alpha)] {
                rows.push(ExperimentRow::unattempted(
                    n,
                    zeta,
                    "unattempted: n exceeds partition limit",
                ));
            }
            continue;
        }
        let mesh = build_sphere_mesh(level)?;
        for (re, im) in [(alpha, alpha), (0.0, alpha)] {
            let zeta = ComplexFrequency::new(re, im)?;
            let t = Instant::now();
            let (_, _, partition) = build_ingredients(&mesh, zeta, config)?;
            rows.push(partition_row(n, zeta, &partition, t.elapsed().as_secs_f64()));
        }
    }
    write_outputs(config, &rows, start.elapsed().as_secs_f64())?;
    Ok(rows)
}

/// Relative spectral error against the dense oracle over expansion orders,
/// per mesh size. Order 0 rows measure the nearfield-only error
/// `|K_far| / |K|`; rows whose coupling storage would blow the budget are
/// marked skipped instead of thrashing the machine.
pub fn run_convergence_vs_m(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let start = Instant::now();
    let mut rows = Vec::new();
    for &level in &config.levels {
        let n = n_for_level(level);
        let alpha = alpha_for(n);
        let zeta = ComplexFrequency::new(alpha, alpha)?;
        if n > config.dense_limit {
            rows.push(ExperimentRow::unattempted(
                n,
                (alpha, alpha),
                "unattempted: n exceeds dense limit",
            ));
            continue;
        }
        let mesh = build_sphere_mesh(level)?;
        let dense = assemble_dense(&mesh, zeta, config.quad_order, config.dense_limit)?;
        let (_, _, partition) = build_ingredients(&mesh, zeta, config)?;
        let mut near_only: Option<DH2Operator> = None;
        for &points in &config.orders {
            let t = Instant::now();
            if points == 0 {
                // Nearfield-only sanity: the error is the far part itself.
                if near_only.is_none() {
                    near_only = Some(DH2Operator::assemble(
                        &mesh,
                        zeta,
                        &operator_config(config, 1),
                    )?);
                }
                let op = near_only.as_ref().expect("assembled above");
                let (abs, _) = spectral_norm_estimate(
                    n,
                    |v| &dense * v - DVector::from_vec(op.near_matvec(v.as_slice()).expect("len ok")),
                    |v| {
                        dense.ad_mul(v)
                            - DVector::from_vec(op.near_matvec_adjoint(v.as_slice()).expect("len ok"))
                    },
                    30,
                    config.seed,
                );
                let (reference, _) =
                    spectral_norm_estimate(n, |v| &dense * v, |v| dense.ad_mul(v), 30, config.seed);
                let mut row = partition_row(n, zeta, &partition, t.elapsed().as_secs_f64());
                row.order = 0;
                row.error = if reference > 0.0 { abs / reference } else { 0.0 };
                row.note = "near-only".to_string();
                rows.push(row);
                continue;
            }
            let rank = points.pow(3);
            let coupling_estimate = partition.num_far() * rank * rank;
            if coupling_estimate > config.coupling_budget {
                let mut row = ExperimentRow::unattempted(
                    n,
                    (alpha, alpha),
                    "skipped: coupling storage exceeds budget",
                );
                row.order = points as i32;
                rows.push(row);
                continue;
            }
            let op = DH2Operator::assemble(&mesh, zeta, &operator_config(config, points))?;
            let err = spectral_error(&op, &dense, 30, config.seed)?;
            let mut row = partition_row(n, zeta, op.partition(), t.elapsed().as_secs_f64());
            row.order = points as i32;
            row.error = err.relative;
            rows.push(row);
        }
    }
    write_outputs(config, &rows, start.elapsed().as_secs_f64())?;
    Ok(rows)
}

/// Block counts over the damping sweep `zeta = nu + alpha*i`, with the
/// least-squares fit `#P ≈ a + b/(nu+1)`.
pub fn run_blocks_vs_nu(config: &ExperimentConfig) -> Result<(Vec<ExperimentRow>, NuFit)> {
    let start = Instant::now();
    let level = *config.levels.first().expect("one level required");
    let n = n_for_level(level);
    let alpha = alpha_for(n);
    let mesh = build_sphere_mesh(level)?;
    let mut rows = Vec::new();
    for &nu in &config.nus {
        let zeta = ComplexFrequency::new(nu, alpha)?;
        let t = Instant::now();
        let (_, _, partition) = build_ingredients(&mesh, zeta, config)?;
        rows.push(partition_row(n, zeta, &partition, t.elapsed().as_secs_f64()));
    }
    let fit = fit_nu_curve(
        &rows
            .iter()
            .map(|r| (r.zeta_re, r.num_blocks as f64))
            .collect::<Vec<_>>(),
    );
    write_outputs(config, &rows, start.elapsed().as_secs_f64())?;
    if let Some(dir) = &config.out_dir {
        std::fs::write(
            dir.join("blocks_vs_nu_fit.json"),
            serde_json::to_string_pretty(&fit).expect("fit serializes"),
        )?;
    }
    Ok((rows, fit))
}

/// Relative spectral error over the damping sweep `zeta = nu + alpha*i`
/// for each configured order.
pub fn run_error_vs_nu(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let start = Instant::now();
    let level = *config.levels.first().expect("one level required");
    let n = n_for_level(level);
    let alpha = alpha_for(n);
    let mut rows = Vec::new();
    if n > config.dense_limit {
        rows.push(ExperimentRow::unattempted(
            n,
            (f64::NAN, alpha),
            "unattempted: n exceeds dense limit",
        ));
        write_outputs(config, &rows, start.elapsed().as_secs_f64())?;
        return Ok(rows);
    }
    let mesh = build_sphere_mesh(level)?;
    for &nu in &config.nus {
        let zeta = ComplexFrequency::new(nu, alpha)?;
        let dense = assemble_dense(&mesh, zeta, config.quad_order, config.dense_limit)?;
        for &points in &config.orders {
            if points == 0 {
                continue;
            }
            let t = Instant::now();
            let op = DH2Operator::assemble(&mesh, zeta, &operator_config(config, points))?;
            let err = spectral_error(&op, &dense, 30, config.seed)?;
            let mut row = partition_row(n, zeta, op.partition(), t.elapsed().as_secs_f64());
            row.order = points as i32;
            row.error = err.relative;
            rows.push(row);
        }
    }
    write_outputs(config, &rows, start.elapsed().as_secs_f64())?;
    Ok(rows)
}

/// Sparsity-pattern images for `Re/Im` ratios from `config.nus`
/// (`zeta = ratio*alpha + alpha*i`), plus the red (near) area fraction.
pub fn run_pattern(config: &ExperimentConfig) -> Result<Vec<PatternRow>> {
    let start = Instant::now();
    let level = *config.levels.first().expect("one level required");
    let n = n_for_level(level);
    let alpha = alpha_for(n);
    let mesh = build_sphere_mesh(level)?;
    let mut rows = Vec::new();
    let mut csv = String::from("ratio,zeta_re,zeta_im,n,red_fraction,image\n");
    for &ratio in &config.nus {
        let zeta = ComplexFrequency::new(ratio * alpha, alpha)?;
        let (tree, _, partition) = build_ingredients(&mesh, zeta, config)?;
        let red = near_area_fraction(&partition, &tree);
        let image = if let Some(dir) = &config.out_dir {
            let path = dir.join(format!("pattern_ratio{ratio}.ppm"));
            std::fs::create_dir_all(dir)?;
            std::fs::write(&path, render_pattern(&partition, &tree)?)?;
            path.display().to_string()
        } else {
            String::new()
        };
        writeln!(csv, "{ratio},{},{},{n},{red},{image}", zeta.re(), zeta.im())
            .expect("string write cannot fail");
        rows.push(PatternRow {
            ratio,
            zeta_re: zeta.re(),
            zeta_im: zeta.im(),
            n,
            red_fraction: red,
            image,
        });
    }
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("pattern.csv"), csv)?;
        write_manifest(config, rows.len(), start.elapsed().as_secs_f64())?;
    }
    Ok(rows)
}

/// Fraction of the matrix area covered by near blocks.
pub fn near_area_fraction(partition: &BlockPartition, tree: &ClusterTree) -> f64 {
    let n = tree.permutation().len() as f64;
    let near: f64 = partition
        .near_blocks()
        .map(|b| tree.cluster(b.t).num_panels() as f64 * tree.cluster(b.s).num_panels() as f64)
        .sum();
    near / (n * n)
}

fn fit_nu_curve(points: &[(f64, f64)]) -> NuFit {
    let m = points.len() as f64;
    let (mut su, mut suu, mut sy, mut suy) = (0.0, 0.0, 0.0, 0.0);
    for &(nu, y) in points {
        let u = 1.0 / (nu + 1.0);
        su += u;
        suu += u * u;
        sy += y;
        suy += u * y;
    }
    let det = m * suu - su * su;
    let a = (suu * sy - su * suy) / det;
    let b = (m * suy - su * sy) / det;
    let mean = sy / m;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for &(nu, y) in points {
        let fitted = a + b / (nu + 1.0);
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - mean) * (y - mean);
    }
    NuFit {
        a,
        b,
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
    }
}

/// CSV rendering of experiment rows (header + one line per row).
pub fn rows_to_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from(
        "n,zeta_re,zeta_im,order,blocks,near,far,blocks_per_n,error,runtime_s,note\n",
    );
    for r in rows {
        let error = if r.error.is_nan() {
            String::new()
        } else {
            format!("{:.6e}", r.error)
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6},{},{:.3},{}",
            r.n,
            r.zeta_re,
            r.zeta_im,
            r.order,
            r.num_blocks,
            r.num_near,
            r.num_far,
            r.blocks_per_n,
            error,
            r.runtime_s,
            r.note
        )
        .expect("string write cannot fail");
    }
    out
}

#[derive(Serialize)]
struct RunManifest<'a> {
    experiment: &'static str,
    library_version: &'static str,
    config: &'a ExperimentConfig,
    rows: usize,
    total_runtime_s: f64,
}

fn write_manifest(config: &ExperimentConfig, rows: usize, total_runtime_s: f64) -> Result<()> {
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
        let manifest = RunManifest {
            experiment: config.experiment.name(),
            library_version: env!("CARGO_PKG_VERSION"),
            config,
            rows,
            total_runtime_s,
        };
        std::fs::write(
            dir.join(format!("{}_manifest.json", config.experiment.name())),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
    }
    Ok(())
}

fn write_outputs(
    config: &ExperimentConfig,
    rows: &[ExperimentRow],
    total_runtime_s: f64,
) -> Result<()> {
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join(format!("{}.csv", config.experiment.name())),
            rows_to_csv(rows),
        )?;
        write_manifest(config, rows.len(), total_runtime_s)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Cplx;

    fn tiny_config(experiment: ExperimentId) -> ExperimentConfig {
        ExperimentConfig {
            levels: vec![3],
            leaf_size: 8,
            quad_order: 2,
            ..ExperimentConfig::desk_preset(experiment)
        }
    }

    #[test]
    fn blocks_vs_n_rows_and_determinism() {
        let mut config = tiny_config(ExperimentId::BlocksVsN);
        config.levels = vec![2, 3];
        let rows = run_blocks_vs_n(&config).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.num_blocks, r.num_near + r.num_far);
            assert!(r.num_blocks > 0);
            assert!((r.blocks_per_n - r.num_blocks as f64 / r.n as f64).abs() < 1e-12);
            assert!(r.error.is_nan());
        }
        // Complex and imaginary rows alternate per n; the imaginary case
        // never has fewer blocks.
        for pair in rows.chunks(2) {
            assert_eq!(pair[0].zeta_re, pair[0].zeta_im);
            assert_eq!(pair[1].zeta_re, 0.0);
            assert!(pair[1].num_blocks >= pair[0].num_blocks);
        }
        let again = run_blocks_vs_n(&config).unwrap();
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(a.num_blocks, b.num_blocks);
            assert_eq!(a.zeta_re, b.zeta_re);
        }
    }

    #[test]
    fn partition_limit_marks_unattempted() {
        let mut config = tiny_config(ExperimentId::BlocksVsN);
        config.levels = vec![2, 5];
        config.partition_limit = 512;
        let rows = run_blocks_vs_n(&config).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[2].note.contains("unattempted"));
        assert_eq!(rows[2].num_blocks, 0);
        assert!(rows[2].error.is_nan());
    }

    #[test]
    fn convergence_rows_decrease_and_near_only_matches_far_norm() {
        let mut config = tiny_config(ExperimentId::ConvergenceVsM);
        config.orders = vec![0, 2, 4];
        let rows = run_convergence_vs_m(&config).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].order, 0);
        assert!(rows[0].error > 0.0, "near-only error must be positive");
        // Error decreases with order (the order-0 row is the far norm and
        // dominates).
        assert!(rows[1].error < rows[0].error);
        assert!(rows[2].error < rows[1].error);
        // Independent check of the near-only row: scatter the stored near
        // entries out of the dense matrix and take the norm of what's left.
        let mesh = build_sphere_mesh(3).unwrap();
        let alpha = alpha_for(512);
        let zeta = ComplexFrequency::new(alpha, alpha).unwrap();
        let dense = assemble_dense(&mesh, zeta, config.quad_order, 4096).unwrap();
        let op = DH2Operator::assemble(&mesh, zeta, &operator_config(&config, 1)).unwrap();
        let mut far = dense.clone();
        let perm = op.tree().permutation().to_vec();
        for b in op.partition().near_blocks() {
            for pi in op.tree().cluster(b.t).panel_range() {
                for pj in op.tree().cluster(b.s).panel_range() {
                    far[(perm[pi], perm[pj])] = Cplx::new(0.0, 0.0);
                }
            }
        }
        let (far_norm, _) =
            spectral_norm_estimate(512, |v| &far * v, |v| far.ad_mul(v), 30, config.seed);
        let (k_norm, _) =
            spectral_norm_estimate(512, |v| &dense * v, |v| dense.ad_mul(v), 30, config.seed);
        let expected = far_norm / k_norm;
        assert!(
            (rows[0].error - expected).abs() <= 1e-4 * expected,
            "near-only row {} vs far-part norm {expected}",
            rows[0].error
        );
    }

    #[test]
    fn coupling_budget_skips_rows() {
        let mut config = tiny_config(ExperimentId::ConvergenceVsM);
        config.orders = vec![2, 6];
        config.coupling_budget = 1000;
        let rows = run_convergence_vs_m(&config).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].note.contains("skipped"));
        assert!(rows[1].note.contains("skipped"));
    }

    #[test]
    fn nu_sweep_fits_and_matches_blocks_experiment() {
        let mut config = tiny_config(ExperimentId::BlocksVsNu);
        config.nus = (0..=6).map(|k| 2.0 * k as f64).collect();
        let (rows, fit) = run_blocks_vs_nu(&config).unwrap();
        assert_eq!(rows.len(), 7);
        assert!(fit.a.is_finite() && fit.b.is_finite());
        assert!(fit.r_squared <= 1.0 + 1e-12);
        // nu = 0 equals the imaginary-frequency row of the block-count
        // experiment at the same n.
        let mut blocks_config = tiny_config(ExperimentId::BlocksVsN);
        blocks_config.levels = vec![3];
        let blocks_rows = run_blocks_vs_n(&blocks_config).unwrap();
        assert_eq!(rows[0].num_blocks, blocks_rows[1].num_blocks);
    }

    #[test]
    fn error_vs_nu_produces_finite_errors() {
        let mut config = tiny_config(ExperimentId::ErrorVsNu);
        config.orders = vec![3];
        config.nus = vec![0.0, 4.0];
        let rows = run_error_vs_nu(&config).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.error.is_finite());
            assert!(r.error >= 0.0);
            assert_eq!(r.order, 3);
        }
    }

    #[test]
    fn pattern_red_fraction_non_increasing() {
        let dir = std::env::temp_dir().join(format!("dh2-pattern-test-{}", std::process::id()));
        let mut config = tiny_config(ExperimentId::Pattern);
        config.nus = vec![0.0, 1.0, 2.0, 3.0];
        config.out_dir = Some(dir.clone());
        let rows = run_pattern(&config).unwrap();
        assert_eq!(rows.len(), 4);
        for pair in rows.windows(2) {
            assert!(
                pair[1].red_fraction <= pair[0].red_fraction + 1e-12,
                "red fraction grew from {} to {}",
                pair[0].red_fraction,
                pair[1].red_fraction
            );
        }
        assert!(rows[0].red_fraction > 0.0 && rows[0].red_fraction <= 1.0);
        // Image files exist and carry the binary-PPM magic.
        for r in &rows {
            let bytes = std::fs::read(&r.image).unwrap();
            assert!(bytes.starts_with(b"P6\n"));
        }
        assert!(dir.join("pattern.csv").exists());
        assert!(dir.join("pattern_manifest.json").exists());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_and_manifest_written() {
        let dir = std::env::temp_dir().join(format!("dh2-csv-test-{}", std::process::id()));
        let mut config = tiny_config(ExperimentId::BlocksVsN);
        config.out_dir = Some(dir.clone());
        let rows = run_blocks_vs_n(&config).unwrap();
        let csv = std::fs::read_to_string(dir.join("blocks_vs_n.csv")).unwrap();
        assert!(csv.starts_with("n,zeta_re,zeta_im,order,"));
        assert_eq!(csv.lines().count(), rows.len() + 1);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("blocks_vs_n_manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["experiment"], "blocks_vs_n");
        assert!(manifest["library_version"].is_string());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn nu_fit_recovers_exact_model() {
        // Synthetic data generated from the model itself fits perfectly.
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|k| {
                let nu = k as f64;
                (nu, 500.0 + 2000.0 / (nu + 1.0))
            })
            .collect();
        let fit = fit_nu_curve(&pts);
        assert!((fit.a - 500.0).abs() < 1e-6);
        assert!((fit.b - 2000.0).abs() < 1e-6);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }
}
