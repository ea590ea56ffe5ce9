use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn spinv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinv")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn out_flag(dir: &Path) -> String {
    format!("--out={}", dir.display())
}

/// Settings small enough for a run to take well under a second.
const TINY_TOY: &[&str] = &["--toy-n-train=200", "--toy-n-eval=100", "--toy-code-dim=12", "--max-iter=50"];
const TINY_VIDEO: &[&str] = &[
    "--n-train=20",
    "--code-dim=8",
    "--inv-dim=3",
    "--n-images=2",
    "--image-size=40",
    "--window=8",
    "--max-iter=40",
    "--pooling-epochs=2",
];

fn run_in(dir: &Path, cmd: &str, base: &[&str], extra: &[&str]) -> Output {
    let out = out_flag(dir);
    let mut args = vec![cmd, out.as_str()];
    args.extend_from_slice(base);
    args.extend_from_slice(extra);
    spinv(&args)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn help_lists_every_key_with_its_default() {
    let out = spinv(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["seed", "alpha", "beta", "code_dim", "inv_dim", "mask_ratio", "beta_sweep", "threads"] {
        assert!(text.contains(&format!("  {key} ")), "missing {key}");
    }
    assert!(text.contains("[default: 0.5; published setting]"));
    assert!(text.contains("[default: 100; desk-scale choice]"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&spinv(&["toy", "--no-such-key=1"])), 2);
    assert_eq!(code(&run_in(dir.path(), "toy", &["--alpha=abc"], &[])), 2);
    assert_eq!(code(&run_in(dir.path(), "toy", &["--threads=0"], &[])), 2);
    assert_eq!(code(&run_in(dir.path(), "toy", &["--mode=joint"], &[])), 2);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 1\nsparsity = 2\n").unwrap();
    let out = run_in(dir.path(), "toy", &[&format!("--config={}", cfg.display())], &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sparsity"));
}

#[test]
fn untrained_toy_model_fails_acceptance() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), "toy", TINY_TOY, &["--epochs=0"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let purity = fs::read_to_string(dir.path().join("purity.csv")).unwrap();
    assert!(purity.starts_with("unit,frequency,active,orientation,purity\n"));
    assert!(dir.path().join("grouping.csv").exists());
    assert!(fs::read(dir.path().join("filters.pgm")).unwrap().starts_with(b"P5"));
}

#[test]
fn toy_runs_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let ra = run_in(a.path(), "toy", TINY_TOY, &["--seed=3", "--mode=unified"]);
    let rb = run_in(b.path(), "toy", TINY_TOY, &["--seed=3", "--mode=unified"]);
    assert_eq!(code(&ra), code(&rb));
    assert_ne!(code(&ra), 2, "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(read_dir_sorted(a.path()), read_dir_sorted(b.path()));
}

#[test]
fn config_file_and_flags_combine() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = a.path().join("run.cfg");
    fs::write(&cfg, "# line world\nseed = 5\ntoy_n_eval = 100 # short\nepochs = 0\n").unwrap();
    let from_file = run_in(a.path(), "toy", TINY_TOY, &[&format!("--config={}", cfg.display())]);
    let from_flags = run_in(b.path(), "toy", TINY_TOY, &["--seed=5", "--epochs=0"]);
    assert_eq!(code(&from_file), 1);
    assert_eq!(code(&from_flags), 1);
    assert_eq!(
        fs::read(a.path().join("purity.csv")).unwrap(),
        fs::read(b.path().join("purity.csv")).unwrap()
    );
}

#[test]
fn training_resumes_where_it_stopped() {
    let dir = TempDir::new().unwrap();
    let full = dir.path().join("full");
    let part = dir.path().join("part");
    let resumed = dir.path().join("resumed");
    for mode in ["--mode=split", "--mode=unified"] {
        assert_eq!(code(&run_in(&full, "train", TINY_VIDEO, &[mode])), 0);
        assert_eq!(code(&run_in(&part, "train", TINY_VIDEO, &[mode, "--max-steps=7"])), 0);
        let model = format!("--resume={}", part.join("model.bin").display());
        let out = run_in(&resumed, "train", TINY_VIDEO, &[mode, &model]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let (a, b) = (fs::read(full.join("model.bin")).unwrap(), fs::read(resumed.join("model.bin")).unwrap());
        assert!(a == b, "{mode}: resumed model differs from an uninterrupted run");
        assert_ne!(a, fs::read(part.join("model.bin")).unwrap());
    }
}

#[test]
fn responses_of_no_units_give_header_only_tables() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_in(dir.path(), "train", TINY_VIDEO, &[])), 0);
    let out = run_in(dir.path(), "responses", TINY_VIDEO, &["--units=none"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read_to_string(dir.path().join("responses.csv")).unwrap(),
        "kind,unit,b,theta,response\n"
    );
    assert_eq!(fs::read_to_string(dir.path().join("widths.csv")).unwrap(), "kind,unit,width\n");
}

#[test]
fn responses_write_maps_and_summary() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_in(dir.path(), "train", TINY_VIDEO, &[])), 0);
    let grid = ["--units=0,2", "--b-steps=5", "--theta-steps=4", "--beta-sweep=0.5,0.1"];
    let out = run_in(dir.path(), "responses", TINY_VIDEO, &grid);
    assert_ne!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let maps = fs::read_to_string(dir.path().join("responses.csv")).unwrap();
    // Two simple and two invariant units, 5 × 4 grid points each.
    assert_eq!(maps.lines().count(), 1 + 4 * 20);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    let sweep = fs::read_to_string(dir.path().join("beta_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn bad_model_files_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let missing = run_in(dir.path(), "responses", &[], &["--model=/nonexistent/model.bin"]);
    assert_eq!(code(&missing), 2);
    let corrupt = dir.path().join("corrupt.bin");
    fs::write(&corrupt, b"not a model").unwrap();
    let out = run_in(dir.path(), "responses", &[], &[&format!("--model={}", corrupt.display())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt.bin"));
}

#[test]
fn inpainting_rejects_hiding_every_pixel_and_half_specified_models() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_in(dir.path(), "inpaint", TINY_TOY, &["--mask-ratio=1.0"])), 2);
    let model = format!("--one-layer-model={}", dir.path().join("m.bin").display());
    assert_eq!(code(&run_in(dir.path(), "inpaint", TINY_TOY, &[&model])), 2);
}

#[test]
fn inpainting_writes_per_patch_and_summary_tables() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), "inpaint", TINY_TOY, &["--n-patches=10"]);
    assert_ne!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = fs::read_to_string(dir.path().join("inpaint.csv")).unwrap();
    assert_eq!(rows.lines().count(), 11);
    assert!(dir.path().join("inpaint_summary.csv").exists());
}

#[test]
fn small_benchmark_passes() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), "bench", &["--instances=4", "--iterations=60", "--descent-pairs=20"], &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let rates = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 1 + 8);
    let descent = fs::read_to_string(dir.path().join("descent.csv")).unwrap();
    assert_eq!(descent.lines().count(), 1 + 40);
    assert!(dir.path().join("monotone.csv").exists());
}
