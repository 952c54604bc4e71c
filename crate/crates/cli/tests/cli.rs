use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bubbleflow"));
    c.current_dir(dir).env_remove("BUBBLEFLOW_OUT");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn geometry_prints_the_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["geometry", "--r", "1", "--gamma", "1.0471975512"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("kappa = (-1.000000, 0.000000, 1.000000)"), "{out}");
    assert!(out.contains("l = (2.094395, 0.866025, 2.094395)"), "{out}");
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn invalid_values_exit_3_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (args, key) in [
        (vec!["geometry", "--r", "-1"], "bubble.r"),
        (vec!["geometry", "--gamma", "3"], "bubble.gamma"),
        (vec!["flow", "--dt", "0"], "flow.dt"),
        (vec!["flow", "--set", "perturb.kind=null7"], "perturb.kind"),
        (vec!["spectrum", "--n", "many"], "grid.n"),
        (vec!["geometry", "--set", "bubble.radius=2"], "bubble.radius"),
    ] {
        let o = run(dir.path(), &args);
        assert_eq!(o.status.code(), Some(3), "{args:?}");
        assert!(stderr(&o).contains(key), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_file_is_read_and_cli_wins() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.txt"), "# bubble\nbubble.r = 2  # doubled\nbubble.gamma = 1.2\n").unwrap();
    let out = stdout(&run(dir.path(), &["geometry"]));
    assert!(out.contains("kappa = (-0.500000"), "{out}");
    let out = stdout(&run(dir.path(), &["geometry", "--r", "1"]));
    assert!(out.contains("kappa = (-1.000000"), "{out}");
    fs::write(dir.path().join("bad.txt"), "grid.n = 8\n").unwrap();
    let o = run(dir.path(), &["spectrum", "--config", "bad.txt"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("grid.n"));
}

#[test]
fn env_var_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(dir.path()).args(["nullspace", "--n", "32"]).env("BUBBLEFLOW_OUT", "elsewhere").output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("elsewhere/nullspace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 32);
    assert!(dir.path().join("elsewhere/null_residuals.csv").is_file());
    // an explicit flag still wins over the environment
    let o = bin(dir.path()).args(["nullspace", "--n", "32", "--out", "mine"]).env("BUBBLEFLOW_OUT", "elsewhere").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("mine/nullspace.csv").is_file());
}

#[test]
fn spectrum_writes_modes_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["spectrum", "--n", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("out/modes.csv")).unwrap();
    assert!(csv.starts_with("index,re,im,is_null,c1,c2,c3\n"));
    assert_eq!(csv.matches(",true,").count(), 5);
}

#[test]
fn verify_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "--gamma-points", "25", "--n", "128"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains(" 0 failed"));
    let signs = fs::read_to_string(dir.path().join("out/signs.csv")).unwrap();
    assert_eq!(signs.lines().count(), 1 + 25 * 19);
    assert!(!signs.contains(",false"));
}

#[test]
fn equilibrium_flow_is_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["flow", "--amplitude", "0", "--T", "0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    for name in ["length", "a1", "a2"] {
        let v = column(&trace, name);
        assert_eq!(v.len(), 201);
        assert!(v.iter().all(|x| (x - v[0]).abs() <= 1e-12 * v[0].abs()), "{name} moved");
    }
}

#[test]
fn flow_output_is_deterministic_and_renders() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["flow", "--n", "64", "--T", "0.05", "--seed", "3", "--snapshots", "25"];
    let mut traces = Vec::new();
    for out in ["a", "b"] {
        let o = run(dir.path(), &[&args[..], &["--out", out]].concat());
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        traces.push(fs::read(dir.path().join(out).join("trace.csv")).unwrap());
        traces.push(fs::read(dir.path().join(out).join("snapshots.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[2]);
    assert_eq!(traces[1], traces[3]);

    let o = run(dir.path(), &["report", "--out", "a"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for step in [0, 25, 50] {
        let svg = fs::read_to_string(dir.path().join(format!("a/curves_{step}.svg"))).unwrap();
        assert_eq!(svg.matches("<path").count(), 3);
    }
    let o = run(dir.path(), &["report", "--out", "missing"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("out.dir"));
}

#[test]
fn failed_checks_exit_1_with_a_table() {
    // 32 nodes per arc under-resolve the flow; the length then rises by ~1e-6
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["flow", "--n", "32", "--T", "0.05", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("length_violation") && l.ends_with("FAIL")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("area_error") && l.ends_with("PASS")), "{out}");
}
