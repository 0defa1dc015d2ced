use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cgmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgmc"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_SWEEP: &str = "[lattice]\nn_sites = 32\n[coarse]\nq = 4\n[chain]\nbeta = 1.0\nburnin = 50\nsamples = 200\nthinning = 1\nseed = 9\n\
                           [sweep]\nh_min = -0.5\nh_max = 0.5\nn_points = 3\nschemes = micro,cg0,cg2\n";

#[test]
fn sweep_output_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL_SWEEP);
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let run = cgmc(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(
            run.status.success(),
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
        assert!(String::from_utf8_lossy(&run.stderr).contains("cg0 loop area"));
        outputs.push(fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(
        text.starts_with("# schema_version"),
        "{}",
        &text[..40.min(text.len())]
    );
    // 3 schemes × 2 branches × 3 fields
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 18);
}

#[test]
fn seed_flag_changes_the_chain() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL_SWEEP);
    let a = cgmc(&["sweep", "--config", &cfg]);
    let b = cgmc(&["sweep", "--config", &cfg, "--seed", "10"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[lattice]\nn_sites = 30\n[coarse]\nq = 4\n");
    let run = cgmc(&["sweep", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("error"));
    let cfg = write_config(dir.path(), "[lattice]\nsites = 32\n");
    let run = cgmc(&["bench", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("line 2"));
}

#[test]
fn unknown_suite_exits_with_one() {
    assert_eq!(cgmc(&["verify", "nonsense"]).status.code(), Some(1));
}

#[test]
fn passing_suite_exits_with_zero() {
    let run = cgmc(&["verify", "moments", "kadanoff"]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stdout)
    );
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.starts_with("suite,check,value,condition,status"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",pass")));
}

#[test]
fn bench_reports_every_scheme() {
    let run = cgmc(&["bench"]);
    assert!(run.status.success());
    let text = String::from_utf8(run.stdout).unwrap();
    let schemes: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(schemes, ["micro", "cg0", "cg2"]);
}

#[test]
fn entropy_and_a_posteriori_agree_on_a_small_instance() {
    let cfg = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/small_linear.cfg"
    );
    let run = cgmc(&["entropy", "--config", cfg]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = String::from_utf8(run.stdout).unwrap();
    let r: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(6).unwrap().parse().unwrap())
        .collect();
    assert!(r[1] < r[0], "{r:?}");

    let run = cgmc(&["aposteriori", "--config", cfg]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = String::from_utf8(run.stdout).unwrap();
    let rows: Vec<Vec<String>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 3, "{text}");
    let mc: f64 = rows[0][1].parse().unwrap();
    let se: f64 = rows[0][2].parse().unwrap();
    let exact: f64 = rows[1][1].parse().unwrap();
    assert_eq!(rows[1][0], "exact_a_posteriori");
    assert!((mc - exact).abs() <= 4.0 * se, "{text}");
}
