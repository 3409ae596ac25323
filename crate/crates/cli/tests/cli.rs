use std::path::PathBuf;
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn run(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ecsw"));
    cmd.args(args).env_remove("ECSW_SEED");
    if let Some(s) = seed {
        cmd.env("ECSW_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn bundled() -> String {
    config("lorentz_n4_sin.json").to_str().unwrap().to_string()
}

fn value_of(stdout: &str, key: &str) -> f64 {
    let line = stdout
        .lines()
        .find(|l| l.starts_with(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{stdout}"));
    line.split(" = ").nth(1).unwrap().trim().parse().unwrap()
}

#[test]
fn curvature_at_quarter_period() {
    let out = run(
        &["curvature", "--config", &bundled(), "--point", "pi/2,0,0,0"],
        None,
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!((value_of(&text, "ricci[t,t]") + 2.0).abs() < 1e-12);
    assert!(value_of(&text, "scalar").abs() < 1e-12);
}

#[test]
fn s_line_geodesic_keeps_t_constant() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("g.csv");
    let out = run(
        &[
            "geodesic",
            "--config",
            &bundled(),
            "--x0",
            "0.7,0,0.2,-0.1",
            "--v0",
            "0,1,0,0",
            "--span",
            "0,2",
            "--step",
            "1e-2",
            "--out",
            csv.to_str().unwrap(),
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,tau,t,s,v1,v2,g_xdot_xdot,g_xdot_ds"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 201);
    for r in &rows {
        assert_eq!(r[2], 0.7);
    }
    assert!((rows[200][3] - 2.0).abs() < 1e-12);
}

#[test]
fn oracle_table_within_tolerance() {
    let out = run(&["oracle", "--config", &bundled()], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let worst: f64 = text
        .lines()
        .last()
        .unwrap()
        .rsplit(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(worst < 1e-6);
}

#[test]
fn olszak_and_charforms_print() {
    let out = run(
        &[
            "olszak",
            "--config",
            &bundled(),
            "--point",
            "0.3,0.1,0.2,-0.4",
        ],
        None,
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("dim_D = 1\n"), "{text}");
    assert!(
        text.contains("A row 1: [0.0000000000000000e0, -1.0000000000000000e0]"),
        "{text}"
    );

    let out = run(
        &[
            "charforms",
            "--config",
            &bundled(),
            "--point",
            "0.3,0.1,0.2,-0.4",
        ],
        None,
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(value_of(&text, "euler").abs() < 1e-8);
    assert!(value_of(&text, "generating_1").abs() < 1e-8);
}

#[test]
fn seed_override_reaches_report() {
    let tight = config("tight_tolerance.json");
    let a = run(&["verify", "--config", tight.to_str().unwrap()], Some("77"));
    let b = run(&["verify", "--config", tight.to_str().unwrap()], None);
    let ra: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let rb: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(ra["config"]["seed"], 77);
    assert_eq!(rb["config"]["seed"], 1);

    let bad = run(
        &["verify", "--config", tight.to_str().unwrap()],
        Some("seven"),
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bad_inputs_are_config_errors() {
    let missing = run(&["verify", "--config", "/nonexistent/config.json"], None);
    assert_eq!(missing.status.code(), Some(2));
    let short = run(
        &["curvature", "--config", &bundled(), "--point", "1,2"],
        None,
    );
    assert_eq!(short.status.code(), Some(2));
    let junk = run(
        &["curvature", "--config", &bundled(), "--point", "1,x,0,0"],
        None,
    );
    assert_eq!(junk.status.code(), Some(2));
    let big_step = run(
        &[
            "geodesic",
            "--config",
            &bundled(),
            "--v0",
            "1,0,0,0",
            "--step",
            "0.5",
        ],
        None,
    );
    assert_eq!(big_step.status.code(), Some(2));
}

#[test]
fn overflow_is_numerical_abort() {
    let cfg = config("exponential_overflow.json");
    let out = run(&["verify", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["summary"]["numerical_abort"], true);
    assert!(report["records"][0]["residual"].is_null());
}
