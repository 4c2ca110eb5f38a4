use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dwfs::io::{read_grid, write_grid};
use dwfs::PhaseGrid;
use ndarray::Array2;
use tempfile::TempDir;

fn dwfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwfs")).args(args).env_remove("DWFS_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key} = "))).unwrap_or_else(|| panic!("no {key} in\n{text}")).parse().unwrap()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

/// Small, weak, noise-free case: every neighbour difference is below pi.
fn simulate_smooth(dir: &TempDir) {
    let o = dwfs(&["simulate", "--output", &p(dir, ""), "--n", "32", "--r0", "40", "--noise", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_is_deterministic_and_noise_grows_range() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        assert_eq!(code(&dwfs(&["simulate", "--output", &p(d, ""), "--n", "64", "--seed", "3", "--count", "2"])), 0);
    }
    for f in ["seed3_truth.pgrid", "seed3_wrapped.pgrid", "seed3_noisy.pgrid", "seed4_noisy.pgrid", "manifest.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let noisy = read_grid(&a.path().join("seed3_noisy.pgrid")).unwrap();
    let peak = noisy.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(peak > std::f64::consts::PI, "peak {peak}");
}

#[test]
fn pe_on_congruent_input_recovers_truth() {
    let d = TempDir::new().unwrap();
    simulate_smooth(&d);
    let o = dwfs(&["unwrap", "--input", &p(&d, "seed0_wrapped.pgrid"), "--output", &p(&d, "r.pgrid"), "--truth", &p(&d, "seed0_truth.pgrid"), "--method", "pe"]);
    assert_eq!(code(&o), 0);
    assert!(value(&stdout(&o), "rel_error") < 1e-6);
    assert!(d.path().join("r.pgrid.report.txt").exists());
}

#[test]
fn unwrap_outputs_are_deterministic() {
    let d = TempDir::new().unwrap();
    simulate_smooth(&d);
    for out in ["a.pgrid", "b.pgrid"] {
        let o = dwfs(&["unwrap", "--input", &p(&d, "seed0_wrapped.pgrid"), "--output", &p(&d, out), "--truth", &p(&d, "seed0_truth.pgrid"), "--method", "sh", "--n-sub", "4"]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(fs::read(d.path().join("a.pgrid")).unwrap(), fs::read(d.path().join("b.pgrid")).unwrap());
    assert_eq!(fs::read(d.path().join("a.pgrid.report.txt")).unwrap(), fs::read(d.path().join("b.pgrid.report.txt")).unwrap());
}

#[test]
fn flags_override_config_file() {
    let d = TempDir::new().unwrap();
    simulate_smooth(&d);
    fs::write(d.path().join("run.cfg"), "# sh run\nmethod = sh\nn_sub = 8\n").unwrap();
    let input = p(&d, "seed0_wrapped.pgrid");
    assert_eq!(code(&dwfs(&["unwrap", "--config", &p(&d, "run.cfg"), "--n-sub", "4", "--input", &input, "--output", &p(&d, "cfg.pgrid")])), 0);
    assert_eq!(code(&dwfs(&["unwrap", "--method", "sh", "--n-sub", "4", "--input", &input, "--output", &p(&d, "flag.pgrid")])), 0);
    assert_eq!(fs::read(d.path().join("cfg.pgrid")).unwrap(), fs::read(d.path().join("flag.pgrid")).unwrap());
}

#[test]
fn usage_errors_exit_1() {
    let d = TempDir::new().unwrap();
    simulate_smooth(&d);
    let input = p(&d, "seed0_wrapped.pgrid");
    let out = p(&d, "r.pgrid");
    let sh = dwfs(&["unwrap", "--input", &input, "--output", &out, "--method", "sh", "--n-sub", "5"]);
    assert_eq!(code(&sh), 1);
    assert!(String::from_utf8_lossy(&sh.stderr).contains("n_sub"));
    assert_eq!(code(&dwfs(&["unwrap", "--input", &input, "--output", &out, "--method", "tie"])), 1);
    assert_eq!(code(&dwfs(&["unwrap", "--input", &input, "--output", &out, "--tol", "small"])), 1);
    assert_eq!(code(&dwfs(&["unwrap", "--input", &input])), 1);
    fs::write(d.path().join("bad.cfg"), "colour = red\n").unwrap();
    assert_eq!(code(&dwfs(&["unwrap", "--input", &input, "--output", &out, "--config", &p(&d, "bad.cfg")])), 1);
    assert_eq!(code(&dwfs(&["compare", "--seeds", "0"])), 1);
    assert_eq!(code(&dwfs(&["frobnicate"])), 1);
    assert_eq!(code(&dwfs(&["--help"])), 0);
}

#[test]
fn io_errors_exit_2() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&dwfs(&["unwrap", "--input", &p(&d, "missing.pgrid"), "--output", &p(&d, "r.pgrid")])), 2);
    fs::write(d.path().join("junk.pgrid"), b"not a grid").unwrap();
    assert_eq!(code(&dwfs(&["wrap", "--input", &p(&d, "junk.pgrid"), "--output", &p(&d, "w.pgrid")])), 2);
    assert_eq!(code(&dwfs(&["compare", "--method", "pe", "--data", &p(&d, "nowhere"), "--seeds", "0"])), 2);
}

#[test]
fn numerical_errors_exit_3() {
    let d = TempDir::new().unwrap();
    let flat = PhaseGrid::full(Array2::from_elem((16, 16), 1.0)).unwrap();
    write_grid(&d.path().join("flat.pgrid"), &flat).unwrap();
    let o = dwfs(&["evaluate", "--input", &p(&d, "flat.pgrid"), "--truth", &p(&d, "flat.pgrid")]);
    assert_eq!(code(&o), 3);
}

#[test]
fn compare_matches_unwrap_and_evaluate() {
    let d = TempDir::new().unwrap();
    simulate_smooth(&d);
    let o = dwfs(&["compare", "--data", &p(&d, ""), "--seeds", "0", "--method", "mrp,tie", "--output", &p(&d, "table.tsv")]);
    assert_eq!(code(&o), 0);
    let table = stdout(&o);
    assert_eq!(fs::read_to_string(d.path().join("table.tsv")).unwrap(), table);
    assert!(table.lines().any(|l| l.starts_with("tie\texternal")));
    let row: Vec<&str> = table.lines().find(|l| l.starts_with("mrp\t")).unwrap().split('\t').collect();
    let u = dwfs(&["unwrap", "--input", &p(&d, "seed0_noisy.pgrid"), "--output", &p(&d, "m.pgrid"), "--method", "mrp"]);
    assert_eq!(code(&u), 0);
    let e = dwfs(&["evaluate", "--input", &p(&d, "m.pgrid"), "--truth", &p(&d, "seed0_truth.pgrid")]);
    assert_eq!(row[2], format!("{:.4}", value(&stdout(&e), "rel_error")));
}

#[test]
fn compare_runs_in_memory_with_thread_cap() {
    let o = Command::new(env!("CARGO_BIN_EXE_dwfs"))
        .args(["compare", "--n", "32", "--r0", "6", "--seeds", "0,1", "--method", "columnwise", "--method", "pe"])
        .env("DWFS_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let t = stdout(&o);
    assert!(t.lines().any(|l| l.starts_with("columnwise\t2\t")) && t.lines().any(|l| l.starts_with("pe\t2\t")));
    let bad = Command::new(env!("CARGO_BIN_EXE_dwfs")).args(["compare", "--method", "pe"]).env("DWFS_THREADS", "zero").output().unwrap();
    assert_eq!(code(&bad), 1);
}

#[test]
fn wrap_and_png_export() {
    let d = TempDir::new().unwrap();
    simulate_smooth(&d);
    let o = dwfs(&["wrap", "--input", &p(&d, "seed0_truth.pgrid"), "--output", &p(&d, "w.pgrid"), "--png", &p(&d, "w.png")]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(d.path().join("w.pgrid")).unwrap(), fs::read(d.path().join("seed0_wrapped.pgrid")).unwrap());
    assert_eq!(&fs::read(d.path().join("w.png")).unwrap()[..8], b"\x89PNG\r\n\x1a\n");
    let side = fs::read_to_string(Path::new(&p(&d, "w.txt"))).unwrap();
    assert!(side.contains("min = ") && side.contains("max = "));
}
