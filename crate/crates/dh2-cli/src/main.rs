//! Command line front end: mesh generation, block partitions, operator
//! assembly, matvec benchmarks and the scripted experiment sweeps.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dh2::clustering::{ClusterTree, TreeMode};
use dh2::directions::DirectionFamily;
use dh2::experiments::{
    self, ExperimentConfig, ExperimentId, ExperimentRow, NuFit, PatternRow,
};
use dh2::geometry::{build_sphere_mesh, mesh_metrics, write_mesh, SurfaceMesh};
use dh2::kernel::{ComplexFrequency, OrderParams};
use dh2::operator::{DH2Operator, OperatorConfig, OrderSelection};
use dh2::partition::{
    build_partition, render_pattern, write_blocks_csv, AdmissibilityParams, BlockPartition,
};
use dh2::Cplx;
use std::path::PathBuf;
use std::time::Instant;

const ORDER_CONVENTION: &str = "Order convention: --order m counts interpolation points per \
coordinate; the polynomial degree per axis is m-1. Frequencies are in reciprocal length units \
of the unit-sphere mesh.";

#[derive(Parser)]
#[command(
    name = "dh2",
    version,
    about = "Directional H2-matrix compression of the damped single-layer operator",
    after_help = ORDER_CONVENTION
)]
struct Cli {
    /// Assembly threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0, env = "DH2_THREADS")]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MeshArgs {
    /// Sphere refinement level; the mesh has 8*4^k panels.
    #[arg(long, default_value_t = 3, env = "DH2_REFINE")]
    refine: u32,
}

#[derive(Args)]
struct FreqArgs {
    /// Damping (real part of the frequency), >= 0.
    #[arg(long, default_value_t = 0.0, env = "DH2_ZETA_RE", allow_negative_numbers = true)]
    zeta_re: f64,
    /// Oscillation (imaginary part of the frequency).
    #[arg(long, default_value_t = 4.0, env = "DH2_ZETA_IM", allow_negative_numbers = true)]
    zeta_im: f64,
}

impl FreqArgs {
    fn zeta(&self) -> Result<ComplexFrequency> {
        Ok(ComplexFrequency::new(self.zeta_re, self.zeta_im)?)
    }
}

#[derive(Args)]
struct AdmissibilityArgs {
    /// Direction resolution parameter.
    #[arg(long, default_value_t = 10.0, env = "DH2_ETA1")]
    eta1: f64,
    /// Diameter-to-distance parameter.
    #[arg(long, default_value_t = 2.0, env = "DH2_ETA2")]
    eta2: f64,
    /// Damping trade-off parameter, in (0, 1).
    #[arg(long, default_value_t = 0.5, env = "DH2_ETA3")]
    eta3: f64,
}

impl AdmissibilityArgs {
    fn params(&self) -> Result<AdmissibilityParams> {
        let params = AdmissibilityParams {
            eta1: self.eta1,
            eta2: self.eta2,
            eta3: self.eta3,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Args)]
struct TreeArgs {
    /// Cluster box mode: tight vertex boxes or regular congruent boxes.
    #[arg(long, value_enum, default_value_t = TreeModeArg::Tight, env = "DH2_TREE_MODE")]
    tree_mode: TreeModeArg,
    /// Largest number of panels in a leaf cluster.
    #[arg(long, default_value_t = 16, env = "DH2_LEAF_SIZE")]
    leaf_size: usize,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TreeModeArg {
    Regular,
    Tight,
}

impl From<TreeModeArg> for TreeMode {
    fn from(v: TreeModeArg) -> Self {
        match v {
            TreeModeArg::Regular => TreeMode::Regular,
            TreeModeArg::Tight => TreeMode::Tight,
        }
    }
}

#[derive(Args)]
struct OrderArgs {
    /// Interpolation points per coordinate (polynomial degree = order - 1).
    #[arg(long, default_value_t = 5, env = "DH2_ORDER")]
    order: usize,
    /// Distance-adaptive per-level orders; far blocks whose budget runs out
    /// are dropped entirely.
    #[arg(long, env = "DH2_VARIABLE_ORDER")]
    variable_order: bool,
    /// Accuracy target for --variable-order.
    #[arg(long, default_value_t = 1e-4, env = "DH2_EPSILON")]
    epsilon: f64,
    /// Order-budget constant for --variable-order.
    #[arg(long, default_value_t = 2.0, env = "DH2_C0")]
    c0: f64,
    /// Damping-rate constant for --variable-order.
    #[arg(long, default_value_t = 1.0, env = "DH2_SIGMA_TILDE")]
    sigma_tilde: f64,
}

impl OrderArgs {
    fn selection(&self) -> Result<OrderSelection> {
        if self.variable_order {
            Ok(OrderSelection::Variable(OrderParams {
                c0: self.c0,
                sigma_tilde: self.sigma_tilde,
                epsilon: self.epsilon,
            }))
        } else {
            if self.order == 0 {
                bail!("--order must be at least 1 interpolation point");
            }
            Ok(OrderSelection::Fixed(self.order - 1))
        }
    }
}

#[derive(Args)]
struct QuadArgs {
    /// Gauss points per coordinate for panel quadrature.
    #[arg(long, default_value_t = 5, env = "DH2_QUAD_ORDER")]
    quad_order: usize,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory for CSV/PPM/JSON artifacts.
    #[arg(long, default_value = "out", env = "DH2_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Sphere refinement levels, comma separated.
    #[arg(long, value_delimiter = ',', env = "DH2_LEVELS")]
    levels: Option<Vec<u32>>,
    /// Orders (points per coordinate; 0 = near-only sanity row).
    #[arg(long, value_delimiter = ',', env = "DH2_ORDERS")]
    orders: Option<Vec<usize>>,
    /// Damping values for the nu sweeps.
    #[arg(long, value_delimiter = ',', env = "DH2_NUS")]
    nus: Option<Vec<f64>>,
    /// Largest n assembled densely.
    #[arg(long, env = "DH2_DENSE_LIMIT")]
    dense_limit: Option<usize>,
    /// Largest n for partition-only sweeps.
    #[arg(long, env = "DH2_PARTITION_LIMIT")]
    partition_limit: Option<usize>,
    /// Seed for the power-iteration start vectors.
    #[arg(long, default_value_t = 20240901, env = "DH2_SEED")]
    seed: u64,
}

impl ExperimentArgs {
    fn apply(
        &self,
        mut config: ExperimentConfig,
        tree: &TreeArgs,
        adm: &AdmissibilityArgs,
        quad: Option<&QuadArgs>,
        out: &OutArgs,
    ) -> Result<ExperimentConfig> {
        if let Some(levels) = &self.levels {
            config.levels = levels.clone();
        }
        if let Some(orders) = &self.orders {
            config.orders = orders.clone();
        }
        if let Some(nus) = &self.nus {
            config.nus = nus.clone();
        }
        if let Some(limit) = self.dense_limit {
            config.dense_limit = limit;
        }
        if let Some(limit) = self.partition_limit {
            config.partition_limit = limit;
        }
        config.tree_mode = tree.tree_mode.into();
        config.leaf_size = tree.leaf_size;
        config.admissibility = adm.params()?;
        if let Some(q) = quad {
            config.quad_order = q.quad_order;
        }
        config.seed = self.seed;
        config.out_dir = Some(out.out.clone());
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a triangulated sphere mesh and report its metrics.
    #[command(after_help = ORDER_CONVENTION)]
    Mesh {
        #[command(flatten)]
        mesh: MeshArgs,
        /// Write the mesh to this file (vertex/panel text format).
        #[arg(long, env = "DH2_MESH_OUT")]
        out: Option<PathBuf>,
    },
    /// Build the near/far block partition and write the block list CSV.
    #[command(after_help = ORDER_CONVENTION)]
    Partition {
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        freq: FreqArgs,
        #[command(flatten)]
        adm: AdmissibilityArgs,
        #[command(flatten)]
        tree: TreeArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Assemble the compressed operator and report structure and storage.
    #[command(after_help = ORDER_CONVENTION)]
    Assemble {
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        freq: FreqArgs,
        #[command(flatten)]
        adm: AdmissibilityArgs,
        #[command(flatten)]
        tree: TreeArgs,
        #[command(flatten)]
        order: OrderArgs,
        #[command(flatten)]
        quad: QuadArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Assemble, then time repeated matvecs on a seeded random vector.
    #[command(after_help = ORDER_CONVENTION)]
    MatvecBench {
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        freq: FreqArgs,
        #[command(flatten)]
        adm: AdmissibilityArgs,
        #[command(flatten)]
        tree: TreeArgs,
        #[command(flatten)]
        order: OrderArgs,
        #[command(flatten)]
        quad: QuadArgs,
        /// Number of timed matvecs.
        #[arg(long, default_value_t = 5, env = "DH2_REPS")]
        reps: usize,
        /// Seed for the input vector.
        #[arg(long, default_value_t = 20240901, env = "DH2_SEED")]
        seed: u64,
    },
    /// Block counts versus mesh size (complex vs imaginary frequency).
    #[command(after_help = ORDER_CONVENTION)]
    ExpBlocks {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        adm: AdmissibilityArgs,
        #[command(flatten)]
        tree: ExpTreeArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Spectral error versus expansion order against the dense oracle.
    #[command(after_help = ORDER_CONVENTION)]
    ExpConv {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        adm: AdmissibilityArgs,
        #[command(flatten)]
        tree: ExpTreeArgs,
        #[command(flatten)]
        quad: QuadArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Block counts versus damping, with the a + b/(nu+1) fit.
    #[command(after_help = ORDER_CONVENTION)]
    ExpNuBlocks {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        adm: AdmissibilityArgs,
        #[command(flatten)]
        tree: ExpTreeArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Spectral error versus damping.
    #[command(after_help = ORDER_CONVENTION)]
    ExpNuError {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        adm: AdmissibilityArgs,
        #[command(flatten)]
        tree: ExpTreeArgs,
        #[command(flatten)]
        quad: QuadArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Render block-partition sparsity patterns as PPM images.
    #[command(after_help = ORDER_CONVENTION)]
    Pattern {
        #[command(flatten)]
        mesh: MeshArgs,
        /// Oscillation (imaginary part of the frequency).
        #[arg(long, default_value_t = 4.0, env = "DH2_ZETA_IM", allow_negative_numbers = true)]
        zeta_im: f64,
        /// Damping; when given, renders exactly one image instead of the
        /// four-ratio sweep.
        #[arg(long, env = "DH2_ZETA_RE", allow_negative_numbers = true)]
        zeta_re: Option<f64>,
        #[command(flatten)]
        adm: AdmissibilityArgs,
        #[command(flatten)]
        tree: TreeArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

/// Tree flags for experiment subcommands (different defaults: the sweeps
/// default to the tight-box, leaf-32 preset).
#[derive(Args)]
struct ExpTreeArgs {
    /// Cluster box mode.
    #[arg(long, value_enum, default_value_t = TreeModeArg::Tight, env = "DH2_TREE_MODE")]
    tree_mode: TreeModeArg,
    /// Largest number of panels in a leaf cluster.
    #[arg(long, env = "DH2_LEAF_SIZE")]
    leaf_size: Option<usize>,
}

impl ExpTreeArgs {
    fn to_tree(&self, preset_leaf: usize) -> TreeArgs {
        TreeArgs {
            tree_mode: self.tree_mode,
            leaf_size: self.leaf_size.unwrap_or(preset_leaf),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not size the thread pool: {e}");
            std::process::exit(1);
        }
    }
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Mesh { mesh, out } => cmd_mesh(&mesh, out.as_deref()),
        Command::Partition {
            mesh,
            freq,
            adm,
            tree,
            out,
        } => cmd_partition(&mesh, &freq, &adm, &tree, &out),
        Command::Assemble {
            mesh,
            freq,
            adm,
            tree,
            order,
            quad,
            out,
        } => cmd_assemble(&mesh, &freq, &adm, &tree, &order, &quad, &out),
        Command::MatvecBench {
            mesh,
            freq,
            adm,
            tree,
            order,
            quad,
            reps,
            seed,
        } => cmd_matvec_bench(&mesh, &freq, &adm, &tree, &order, &quad, reps, seed),
        Command::ExpBlocks {
            exp,
            adm,
            tree,
            out,
        } => {
            let preset = ExperimentConfig::desk_preset(ExperimentId::BlocksVsN);
            let leaf = preset.leaf_size;
            let config = exp.apply(preset, &tree.to_tree(leaf), &adm, None, &out)?;
            let rows = experiments::run_blocks_vs_n(&config)?;
            print_rows(&rows);
            Ok(())
        }
        Command::ExpConv {
            exp,
            adm,
            tree,
            quad,
            out,
        } => {
            let preset = ExperimentConfig::desk_preset(ExperimentId::ConvergenceVsM);
            let leaf = preset.leaf_size;
            let config = exp.apply(preset, &tree.to_tree(leaf), &adm, Some(&quad), &out)?;
            let rows = experiments::run_convergence_vs_m(&config)?;
            print_rows(&rows);
            Ok(())
        }
        Command::ExpNuBlocks {
            exp,
            adm,
            tree,
            out,
        } => {
            let preset = ExperimentConfig::desk_preset(ExperimentId::BlocksVsNu);
            let leaf = preset.leaf_size;
            let config = exp.apply(preset, &tree.to_tree(leaf), &adm, None, &out)?;
            let (rows, fit) = experiments::run_blocks_vs_nu(&config)?;
            print_rows(&rows);
            print_fit(&fit);
            Ok(())
        }
        Command::ExpNuError {
            exp,
            adm,
            tree,
            quad,
            out,
        } => {
            let preset = ExperimentConfig::desk_preset(ExperimentId::ErrorVsNu);
            let leaf = preset.leaf_size;
            let config = exp.apply(preset, &tree.to_tree(leaf), &adm, Some(&quad), &out)?;
            let rows = experiments::run_error_vs_nu(&config)?;
            print_rows(&rows);
            Ok(())
        }
        Command::Pattern {
            mesh,
            zeta_im,
            zeta_re,
            adm,
            tree,
            out,
        } => cmd_pattern(&mesh, zeta_im, zeta_re, &adm, &tree, &out),
    }
}

fn cmd_mesh(mesh_args: &MeshArgs, out: Option<&std::path::Path>) -> Result<()> {
    let mesh = build_sphere_mesh(mesh_args.refine)?;
    let metrics = mesh_metrics(&mesh)?;
    println!("panels: {}", mesh.num_panels());
    println!("vertices: {}", mesh.num_vertices());
    println!("area: {:.6}", mesh.total_area());
    println!("h_g: {:.6}", metrics.h_g);
    if let Some(path) = out {
        write_mesh(&mesh, path).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote: {}", path.display());
    }
    Ok(())
}

fn build_ingredients(
    mesh: &SurfaceMesh,
    zeta: ComplexFrequency,
    adm: &AdmissibilityParams,
    tree_args: &TreeArgs,
) -> Result<(ClusterTree, BlockPartition)> {
    let tree = ClusterTree::build(mesh, tree_args.tree_mode.into(), tree_args.leaf_size)?;
    let deltas: Vec<f64> = (0..=tree.depth()).map(|l| tree.delta(l)).collect();
    let directions = DirectionFamily::build(&deltas, zeta.im(), adm.eta1)?;
    let partition = build_partition(&tree, &directions, zeta, adm)?;
    Ok((tree, partition))
}

fn cmd_partition(
    mesh_args: &MeshArgs,
    freq: &FreqArgs,
    adm: &AdmissibilityArgs,
    tree_args: &TreeArgs,
    out: &OutArgs,
) -> Result<()> {
    let mesh = build_sphere_mesh(mesh_args.refine)?;
    let zeta = freq.zeta()?;
    let params = adm.params()?;
    let t = Instant::now();
    let (tree, partition) = build_ingredients(&mesh, zeta, &params, tree_args)?;
    let n = mesh.num_panels();
    println!("n: {n}");
    println!("blocks: {}", partition.num_blocks());
    println!("near: {}", partition.num_near());
    println!("far: {}", partition.num_far());
    println!("blocks_per_n: {:.4}", partition.num_blocks() as f64 / n as f64);
    println!("build_s: {:.3}", t.elapsed().as_secs_f64());
    std::fs::create_dir_all(&out.out)?;
    let path = out.out.join("blocks.csv");
    write_blocks_csv(&partition, &tree, &path)?;
    println!("wrote: {}", path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_assemble(
    mesh_args: &MeshArgs,
    freq: &FreqArgs,
    adm: &AdmissibilityArgs,
    tree_args: &TreeArgs,
    order: &OrderArgs,
    quad: &QuadArgs,
    out: &OutArgs,
) -> Result<()> {
    let mesh = build_sphere_mesh(mesh_args.refine)?;
    let zeta = freq.zeta()?;
    let config = OperatorConfig {
        tree_mode: tree_args.tree_mode.into(),
        leaf_size: tree_args.leaf_size,
        admissibility: adm.params()?,
        quad_order: quad.quad_order,
        orders: order.selection()?,
        ..OperatorConfig::default()
    };
    let t = Instant::now();
    let op = DH2Operator::assemble(&mesh, zeta, &config)?;
    let assemble_s = t.elapsed().as_secs_f64();
    let stats = op.stats();
    println!("n: {}", stats.n);
    println!("near_blocks: {}", stats.near_blocks);
    println!("far_blocks: {}", stats.far_blocks);
    println!("dropped_far_blocks: {}", stats.dropped_far_blocks);
    println!("near_entries: {}", stats.near_entries);
    println!("coupling_scalars: {}", stats.coupling_scalars);
    println!("coupling_cached: {}", stats.coupling_cached);
    println!("basis_scalars: {}", stats.basis_scalars);
    println!("assemble_s: {assemble_s:.3}");
    std::fs::create_dir_all(&out.out)?;
    let csv_path = out.out.join("operator_stats.csv");
    std::fs::write(&csv_path, stats.to_csv())?;
    let json_path = out.out.join("operator_stats.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&stats)?)?;
    println!("wrote: {}", csv_path.display());
    println!("wrote: {}", json_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_matvec_bench(
    mesh_args: &MeshArgs,
    freq: &FreqArgs,
    adm: &AdmissibilityArgs,
    tree_args: &TreeArgs,
    order: &OrderArgs,
    quad: &QuadArgs,
    reps: usize,
    seed: u64,
) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mesh = build_sphere_mesh(mesh_args.refine)?;
    let zeta = freq.zeta()?;
    let config = OperatorConfig {
        tree_mode: tree_args.tree_mode.into(),
        leaf_size: tree_args.leaf_size,
        admissibility: adm.params()?,
        quad_order: quad.quad_order,
        orders: order.selection()?,
        ..OperatorConfig::default()
    };
    let t = Instant::now();
    let op = DH2Operator::assemble(&mesh, zeta, &config)?;
    println!("assemble_s: {:.3}", t.elapsed().as_secs_f64());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Cplx> = (0..op.n())
        .map(|_| Cplx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut checksum = 0.0;
    let t = Instant::now();
    for _ in 0..reps.max(1) {
        let y = op.matvec(&x)?;
        checksum = y.iter().map(|v| v.norm()).sum::<f64>();
    }
    let per = t.elapsed().as_secs_f64() / reps.max(1) as f64;
    println!("matvec_s: {per:.6}");
    println!("checksum: {checksum:.12e}");
    Ok(())
}

fn cmd_pattern(
    mesh_args: &MeshArgs,
    zeta_im: f64,
    zeta_re: Option<f64>,
    adm: &AdmissibilityArgs,
    tree_args: &TreeArgs,
    out: &OutArgs,
) -> Result<()> {
    let params = adm.params()?;
    match zeta_re {
        Some(re) => {
            let mesh = build_sphere_mesh(mesh_args.refine)?;
            let zeta = ComplexFrequency::new(re, zeta_im)?;
            let (tree, partition) = build_ingredients(&mesh, zeta, &params, tree_args)?;
            std::fs::create_dir_all(&out.out)?;
            let path = out.out.join("pattern.ppm");
            std::fs::write(&path, render_pattern(&partition, &tree)?)?;
            println!(
                "near_fraction: {:.4}",
                experiments::near_area_fraction(&partition, &tree)
            );
            println!("wrote: {}", path.display());
        }
        None => {
            let mut config = ExperimentConfig::desk_preset(ExperimentId::Pattern);
            config.levels = vec![mesh_args.refine];
            config.tree_mode = tree_args.tree_mode.into();
            config.leaf_size = tree_args.leaf_size;
            config.admissibility = params;
            config.out_dir = Some(out.out.clone());
            let rows = experiments::run_pattern(&config)?;
            print_pattern_rows(&rows);
        }
    }
    Ok(())
}

fn print_rows(rows: &[ExperimentRow]) {
    println!("n,zeta_re,zeta_im,order,blocks,near,far,blocks_per_n,error,runtime_s,note");
    for r in rows {
        let error = if r.error.is_nan() {
            String::new()
        } else {
            format!("{:.6e}", r.error)
        };
        println!(
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
        );
    }
}

fn print_fit(fit: &NuFit) {
    println!("fit_a: {:.3}", fit.a);
    println!("fit_b: {:.3}", fit.b);
    println!("fit_r_squared: {:.6}", fit.r_squared);
}

fn print_pattern_rows(rows: &[PatternRow]) {
    println!("ratio,zeta_re,zeta_im,n,red_fraction,image");
    for r in rows {
        println!(
            "{},{},{},{},{:.6},{}",
            r.ratio, r.zeta_re, r.zeta_im, r.n, r.red_fraction, r.image
        );
    }
}
