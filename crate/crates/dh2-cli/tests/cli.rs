//! End-to-end smoke tests of the `dh2` binary: exit codes, help text,
//! printed counts and the files each subcommand writes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dh2"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dh2")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dh2-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn mesh_refine0_reports_octahedron() {
    let out = run(&["mesh", "--refine", "0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("panels: 8"), "{text}");
    assert!(text.contains("vertices: 6"), "{text}");
}

#[test]
fn mesh_honors_env_override() {
    let out = bin()
        .args(["mesh"])
        .env("DH2_REFINE", "0")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("panels: 8"));
}

#[test]
fn partition_prints_counts_and_is_deterministic() {
    let dir_a = temp_dir("part-a");
    let dir_b = temp_dir("part-b");
    let args = |dir: &Path| {
        vec![
            "partition".to_string(),
            "--refine".into(),
            "2".into(),
            "--zeta-re".into(),
            "4".into(),
            "--zeta-im".into(),
            "4".into(),
            "--out".into(),
            dir.display().to_string(),
        ]
    };
    let out = bin().args(args(&dir_a)).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    for key in ["n: 128", "blocks: ", "near: ", "far: ", "blocks_per_n: "] {
        assert!(text.contains(key), "missing {key:?} in {text}");
    }
    let out_b = bin().args(args(&dir_b)).output().unwrap();
    assert!(out_b.status.success());
    let csv_a = std::fs::read(dir_a.join("blocks.csv")).unwrap();
    let csv_b = std::fs::read(dir_b.join("blocks.csv")).unwrap();
    assert!(!csv_a.is_empty());
    assert_eq!(csv_a, csv_b);
    let _ = std::fs::remove_dir_all(&dir_a);
    let _ = std::fs::remove_dir_all(&dir_b);
}

#[test]
fn assemble_writes_stats() {
    let dir = temp_dir("assemble");
    let out = run(&[
        "assemble",
        "--refine",
        "1",
        "--zeta-re",
        "1",
        "--zeta-im",
        "2",
        "--order",
        "3",
        "--quad-order",
        "2",
        "--leaf-size",
        "8",
        "--out",
        &dir.display().to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("n: 32"), "{text}");
    assert!(text.contains("near_blocks: "), "{text}");
    let csv = std::fs::read_to_string(dir.join("operator_stats.csv")).unwrap();
    assert!(csv.starts_with("level,"));
    assert!(dir.join("operator_stats.json").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn matvec_bench_reports_timing_and_checksum() {
    let out = run(&[
        "matvec-bench",
        "--refine",
        "1",
        "--zeta-im",
        "2",
        "--order",
        "2",
        "--quad-order",
        "2",
        "--reps",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("matvec_s: "), "{text}");
    assert!(text.contains("checksum: "), "{text}");
}

#[test]
fn pattern_with_explicit_damping_writes_single_p6_image() {
    let dir = temp_dir("pattern");
    let out = run(&[
        "pattern",
        "--refine",
        "2",
        "--zeta-im",
        "8",
        "--zeta-re",
        "0",
        "--out",
        &dir.display().to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ppm = std::fs::read(dir.join("pattern.ppm")).unwrap();
    assert_eq!(&ppm[..2], b"P6");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn exp_blocks_writes_csv_and_manifest() {
    let dir = temp_dir("exp-blocks");
    let out = run(&[
        "exp-blocks",
        "--levels",
        "2",
        "--out",
        &dir.display().to_string(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("n,zeta_re,zeta_im,order,blocks"), "{text}");
    assert!(dir.join("blocks_vs_n.csv").exists());
    assert!(dir.join("blocks_vs_n_manifest.json").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn every_subcommand_help_documents_the_order_convention() {
    for sub in [
        "mesh",
        "partition",
        "assemble",
        "matvec-bench",
        "exp-blocks",
        "exp-conv",
        "exp-nu-blocks",
        "exp-nu-error",
        "pattern",
    ] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help failed");
        let text = stdout(&out);
        assert!(
            text.contains("points per coordinate"),
            "{sub} --help misses the order convention: {text}"
        );
    }
    let out = run(&["--help"]);
    assert!(out.status.success());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["mesh", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn invalid_frequency_is_a_runtime_error() {
    let out = run(&["partition", "--refine", "0", "--zeta-re", "-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
