use std::path::Path;
use std::process::{Command, Output};

use convexo_cli::commands::{compare, envelope, reach};
use convexo_cli::config::Field;
use convexo_cli::{corpus, RunConfig};

fn convexo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convexo"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const INTEGRATOR: &str = r#"
[problem]
phi = ["u1"]
f = "x1^2"
x0 = [0.0]
horizon = 1.0
u_lower = [-1.0]
u_upper = [1.0]

[numerics]
step = 0.05
switches = 1
"#;

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(convexo(&["example", "ex9"], d).status.code(), Some(2));
    assert_eq!(convexo(&["reach", "--config", "missing.toml"], d).status.code(), Some(2));
    let bad = write(d, "bad.toml", "[problem]\nphi = [\"x1 +\"]\nf = \"0\"\nx0 = [0.0]\nhorizon = 1.0\n");
    assert_eq!(convexo(&["reach", "--config", &bad], d).status.code(), Some(2));
    let garbage = write(d, "garbage.toml", "this is not toml");
    assert_eq!(convexo(&["compare", "--config", &garbage], d).status.code(), Some(2));
    let good = write(d, "good.toml", INTEGRATOR);
    assert_eq!(convexo(&["solve", "--config", &good, "--step", "-1"], d).status.code(), Some(2));
    assert_eq!(convexo(&["solve", "--config", &good, "--bogus"], d).status.code(), Some(2));
    assert_eq!(convexo(&["envelope", "--config", &good, "--field", "phi7"], d).status.code(), Some(2));

    let empty = write(
        d,
        "empty.toml",
        &format!("{INTEGRATOR}\n[envelope]\nfield = \"f\"\naxes = [{{ lo = -1.0, hi = 1.0, count = 5 }}, {{ lo = -1.0, hi = 1.0, count = 5 }}]\nmask = \"-1\"\n"),
    );
    let out = convexo(&["envelope", "--config", &empty], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no grid node"));

    let ok = convexo(&["solve", "--config", &good, "--out", "solved"], d);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(d.join("solved/solve.json").exists());

    let threads = Command::new(env!("CARGO_BIN_EXE_convexo"))
        .args(["solve", "--config", &good])
        .current_dir(d)
        .env("CONVEXO_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn example_prints_a_verdict_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = convexo(&["example", "ex4", "--out", "ex4"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("verdict") && text.contains("PASS"), "{text}");
    for f in ["report.json", "trajectory_original.csv", "control_sys1.csv", "compare.gp"] {
        assert!(tmp.path().join("ex4").join(f).exists(), "{f}");
    }
}

#[test]
fn json_outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = corpus::load("ex5").unwrap();
    compare(&cfg, &tmp.path().join("a")).unwrap();
    compare(&cfg, &tmp.path().join("b")).unwrap();
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("report.json")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn json_config_mirror_and_format() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = corpus::load("ex2").unwrap();
    let path = write(d, "ex2.json", &cfg.to_json());
    assert_eq!(RunConfig::load(Path::new(&path)).unwrap(), cfg);
    let out = convexo(&["reach", "--config", &path, "--format", "json", "--out", "r"], d);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let points: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r/cloud.json")).unwrap()).unwrap();
    assert_eq!(points.as_array().unwrap().len(), 1001);
    assert!(!d.join("r/reach.gp").exists());
}

#[test]
fn convex_field_is_its_own_envelope() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::from_toml(INTEGRATOR).unwrap();
    cfg.problem.f = "x1^2 + (u1 - 0.2)^2 + exp(x1)".into();
    let out = envelope(&cfg, Some(Field::Cost), tmp.path()).unwrap();
    assert!(out.values.masked_count() > 0);
    for i in out.values.masked_indices() {
        assert!((out.lce.values()[i] - out.values.values()[i]).abs() <= 1e-9);
    }
    assert!(tmp.path().join("f_lce.csv").exists() && tmp.path().join("f_conjugate.csv").exists());
}

#[test]
fn stationary_system_gives_a_point_cloud() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::from_toml(INTEGRATOR).unwrap();
    cfg.problem.phi = vec!["0".into()];
    cfg.problem.x0 = vec![0.25];
    let out = reach(&cfg, tmp.path()).unwrap();
    assert!(out.cloud.points.iter().all(|p| p.x == [0.25]));
    assert_eq!(out.cloud.x_extent(), vec![(0.25, 0.25)]);
}

#[test]
fn blow_up_is_flagged_in_the_support_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = corpus::load("ex3").unwrap();
    reach(&cfg, tmp.path()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("support.json")).unwrap()).unwrap();
    assert_eq!(v["unbounded"], serde_json::Value::Bool(true));
}
