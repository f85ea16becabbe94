use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn enn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = enn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL_TOY: &str = "
[ensemble]
size = 20
[enrml]
max_iterations = 15
[toy]
grid_points = 50
";

#[test]
fn toy_without_data_plots_the_prior_band() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[toy]\nn = 0\ngrid_points = 40\n[ensemble]\nsize = 30\n",
    );
    let out = tmp.path().join("out");
    run_ok(&[
        "toy",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let band = fs::read_to_string(out.join("band.csv")).unwrap();
    assert_eq!(band.lines().count(), 41);
    let history = fs::read_to_string(out.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1, "header only");
    assert_eq!(report(&out)["iterations"], 0);
}

#[test]
fn toy_writes_every_artifact() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TOY);
    let out = tmp.path().join("out");
    run_ok(&[
        "toy",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    for name in [
        "band.csv",
        "loss_history.csv",
        "weight_trace.csv",
        "training_points.csv",
        "report.json",
        "resolved_config.toml",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let r = report(&out);
    assert_eq!(r["weight_count"], 301);
    assert_eq!(r["ensemble_size"], 20);
    let header = fs::read_to_string(out.join("loss_history.csv")).unwrap();
    assert!(header.starts_with("iteration,accepted,lambda,sd_mean,sd_std,train_mae,test_mae"));
}

#[test]
fn runs_are_byte_identical_for_fixed_seeds() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TOY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&[
        "toy",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    run_ok(&[
        "toy",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--threads",
        "3",
    ]);
    for name in [
        "band.csv",
        "loss_history.csv",
        "weight_trace.csv",
        "training_points.csv",
    ] {
        let left = fs::read(a.join(name)).unwrap();
        let right = fs::read(b.join(name)).unwrap();
        assert!(left == right, "{name} differs between runs");
    }
    // the output directory is the only line allowed to differ
    let strip = |dir: &Path| -> String {
        fs::read_to_string(dir.join("resolved_config.toml"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("output_dir"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn seed_overrides_change_the_run_and_are_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TOY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&[
        "toy",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    run_ok(&[
        "toy",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--seed-ensemble",
        "77",
    ]);
    assert_ne!(
        fs::read(a.join("band.csv")).unwrap(),
        fs::read(b.join("band.csv")).unwrap()
    );
    assert_eq!(report(&b)["seeds"]["ensemble"], 77);
    let resolved = fs::read_to_string(b.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("ensemble = 77"));
}

#[test]
fn sanity_run_with_custom_architecture() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[network]\nhidden = [4, 4]\n[ensemble]\nsize = 20\n[enrml]\nmax_iterations = 10\n[sanity]\ninput_dim = 3\nn_train = 20\nn_test = 10\n",
    );
    let out = tmp.path().join("out");
    run_ok(&[
        "sanity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let r = report(&out);
    assert_eq!(r["weight_count"], 41);
    assert_eq!(r["n_train"], 20);
    assert_eq!(r["n_test"], 10);
    let scatter = fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 11);
}

#[test]
fn fixture_check_passes_on_the_bundled_example() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    run_ok(&["fixture-check", "--out", out.to_str().unwrap()]);
    let r = report(&out);
    assert_eq!(r["weight_count"], 16);
    let checks = r["fixture_checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["passed"] == true));
    assert!(out.join("m2_replayed.csv").is_file());
}

#[test]
fn tampered_fixture_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let fixtures = tmp.path().join("fixtures");
    fs::create_dir(&fixtures).unwrap();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures");
    for entry in fs::read_dir(&src).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), fixtures.join(entry.file_name())).unwrap();
    }
    let m1 = fixtures.join("m1.csv");
    let mut text = fs::read_to_string(&m1).unwrap();
    text = text.replacen('1', "2", 1);
    fs::write(&m1, text).unwrap();
    let cfg = write_config(tmp.path(), "[fixture]\ndir = \"fixtures\"\n");
    let out = enn(&[
        "fixture-check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_csv(dir: &Path) {
    let rows: Vec<String> = (0..12)
        .map(|i| {
            let x = i as f64 / 4.0 - 1.5;
            format!("{x} {:.6}", x * x - 0.5)
        })
        .collect();
    fs::write(dir.join("pts.txt"), rows.join("\n") + "\n").unwrap();
}

#[test]
fn train_on_a_whitespace_table() {
    let tmp = TempDir::new().unwrap();
    small_csv(tmp.path());
    let cfg = write_config(
        tmp.path(),
        "[network]\nhidden = [5]\n[ensemble]\nsize = 10\nobs_std = 0.05\n[enrml]\nmax_iterations = 20\n\
         [data]\npath = \"pts.txt\"\ninput_cols = [0]\ntarget_cols = [1]\ndelimiter = \"whitespace\"\n",
    );
    let out = tmp.path().join("out");
    run_ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let r = report(&out);
    assert_eq!(r["n_train"], 9);
    assert_eq!(r["n_test"], 3);
    assert_eq!(r["weight_count"], 16);
    assert!(out.join("band.csv").is_file());
    assert!(out.join("scatter.csv").is_file());
}

#[test]
fn impossible_split_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    small_csv(tmp.path());
    let cfg = write_config(
        tmp.path(),
        "[data]\npath = \"pts.txt\"\ninput_cols = [0]\ntarget_cols = [1]\ndelimiter = \"whitespace\"\ntrain_count = 50\n",
    );
    let out = enn(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[data]\npath = \"nope.csv\"\ninput_cols = [0]\ntarget_cols = [1]\n",
    );
    let out = enn(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_config_names_the_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[ensemble]\nsize = 10\nobs_std = = 3\n");
    let out = enn(&["toy", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn zero_threads_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = enn(&[
        "toy",
        "--threads",
        "0",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
