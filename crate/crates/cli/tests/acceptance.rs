//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use nalgebra::DMatrix;

use ecsw::suite::{run_suite, SuiteConfig, VerificationReport};
use ecsw::{FibreMetric, RoterSpec, ScalarProfile};

const SEED: u64 = 20240611;

fn specs() -> Vec<(String, RoterSpec)> {
    let fibres: [(usize, Vec<f64>, Vec<f64>); 3] = [
        (4, vec![1.0, 1.0], vec![1.0, -1.0]),
        (5, vec![1.0, 1.0, 1.0], vec![1.0, -0.4, -0.6]),
        (6, vec![-1.0, 1.0, 1.0, 1.0], vec![0.7, -1.0, 0.5, -0.2]),
    ];
    let profiles = [
        ("sin", ScalarProfile::sin()),
        (
            "t3_minus_t",
            ScalarProfile::polynomial(&[0.0, -1.0, 0.0, 1.0]),
        ),
    ];
    let mut out = Vec::new();
    for (n, inner, a) in &fibres {
        for (fname, f) in &profiles {
            let spec = RoterSpec::new(
                *n,
                FibreMetric::diagonal(inner).unwrap(),
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(a.clone())),
                f.clone(),
            )
            .unwrap();
            out.push((format!("n={n} f={fname}"), spec));
        }
    }
    out
}

struct Outcome {
    ok: bool,
    detail: String,
}

/// Runs `checks` on every spec and collects failures.
fn run_checks(checks: &[&str], sample_count: usize) -> Outcome {
    let mut failures = Vec::new();
    let mut worst = Vec::new();
    for (label, spec) in specs() {
        let mut config = SuiteConfig::new(spec, sample_count, SEED);
        config.checks = checks.iter().map(|s| s.to_string()).collect();
        match run_suite(&config) {
            Ok(report) => collect(&label, &report, &mut failures, &mut worst),
            Err(e) => failures.push(format!("{label}: {e}")),
        }
    }
    Outcome {
        ok: failures.is_empty(),
        detail: if failures.is_empty() {
            summarize(&worst)
        } else {
            failures.join("; ")
        },
    }
}

fn collect(
    label: &str,
    report: &VerificationReport,
    failures: &mut Vec<String>,
    worst: &mut Vec<(String, f64, String)>,
) {
    for r in &report.records {
        if !r.passed {
            failures.push(format!(
                "{label}: {} residual {:e} vs {:e} ({:?})",
                r.name, r.residual, r.tolerance, r.note
            ));
        }
        let cmp = serde_json::to_value(r.comparison)
            .unwrap()
            .as_str()
            .unwrap()
            .to_string();
        match worst.iter_mut().find(|(n, _, _)| *n == r.name) {
            Some(entry) => {
                let replace = if cmp == "gt" {
                    r.residual < entry.1
                } else {
                    r.residual > entry.1
                };
                if replace {
                    entry.1 = r.residual;
                }
            }
            None => worst.push((r.name.clone(), r.residual, cmp)),
        }
    }
}

fn summarize(worst: &[(String, f64, String)]) -> String {
    worst
        .iter()
        .map(|(n, x, c)| {
            let op = match c.as_str() {
                "gt" => "min",
                _ => "max",
            };
            format!("{n} {op} {x:.2e}")
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn with_runtime(limit_s: f64, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= limit_s {
        out.ok = false;
    }
    out.detail = format!("{} [{elapsed:.1} s, limit {limit_s} s]", out.detail);
    out
}

fn roter_identities() -> Outcome {
    with_runtime(30.0, || {
        run_checks(
            &[
                "lemma_2_1_scalar",
                "ricci_roter_form",
                "lemma_2_1_a",
                "weyl_parallel",
                "weyl_nonzero",
                "not_locally_symmetric",
                "lemma_2_1_b",
            ],
            100,
        )
    })
}

fn olszak() -> Outcome {
    run_checks(
        &[
            "lemma_2_2_i_dimension",
            "olszak_basis_angle",
            "lemma_2_2_i_null",
            "christoffel_s_exact",
            "lemma_2_2_i_parallel",
            "lemma_2_2_ii_inclusion_chain",
            "lemma_2_2_iii",
        ],
        100,
    )
}

fn charforms() -> Outcome {
    run_checks(
        &[
            "lemma_3_1_common_kernel",
            "lemma_3_2_euler",
            "lemma_3_2_generating",
            "euler_nontrivial_guard",
            "generating_nontrivial_guard",
        ],
        20,
    )
}

fn recovery() -> Outcome {
    run_checks(&["lemma_7_1_iv_recover_a", "phi_norm_constant"], 20)
}

fn isometry() -> Outcome {
    run_checks(&["lemma_7_1_iii", "group_associativity"], 20)
}

fn dynamics() -> Outcome {
    with_runtime(120.0, || {
        run_checks(
            &[
                "geodesic_conservation",
                "remark_6_4_t_affine",
                "geodesic_richardson",
                "e_ode_residual",
                "e_ode_wronskian",
                "e_ode_dimension",
                "lemma_6_2_xtt",
                "lemma_6_2_xtt_intermediate",
                "lemma_6_2_q_constant",
            ],
            20,
        )
    })
}

fn oracles() -> Outcome {
    run_checks(
        &[
            "jet_fd_oracle",
            "const_curvature_scalar",
            "const_curvature_weyl",
            "brute_force_oracles",
        ],
        50,
    )
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn ecsw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecsw"))
        .args(args)
        .env_remove("ECSW_SEED")
        .output()
        .expect("binary runs")
}

fn verify(config: &str, report: &Path) -> Output {
    let cfg = configs_dir().join(config);
    ecsw(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ])
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    let o1 = verify("lorentz_n4_sin.json", &r1);
    let o2 = verify("lorentz_n4_sin.json", &r2);
    for o in [&o1, &o2] {
        if o.status.code() != Some(0) {
            problems.push(format!("bundled config exit {:?}", o.status.code()));
        }
    }
    let b1 = std::fs::read(&r1).unwrap_or_default();
    let b2 = std::fs::read(&r2).unwrap_or_default();
    if b1.is_empty() || b1 != b2 {
        problems.push("reports differ between runs".into());
    }

    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../schemas/report.schema.json")).expect("schema parses");
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let mut passing = 0;
    match serde_json::from_slice::<serde_json::Value>(&b1) {
        Ok(report) => {
            for e in validator.iter_errors(&report) {
                problems.push(format!("schema: {e} at {}", e.instance_path));
            }
            passing = report["records"]
                .as_array()
                .map_or(0, |r| r.iter().filter(|x| x["passed"] == true).count());
            if passing < 12 {
                problems.push(format!("only {passing} passing checks"));
            }
        }
        Err(e) => problems.push(format!("report does not parse: {e}")),
    }

    for (config, code, needle) in [
        ("invalid_a_not_traceless.json", 2, Some("traceless")),
        ("tight_tolerance.json", 1, None),
        ("exponential_overflow.json", 3, None),
    ] {
        let o = verify(config, &dir.path().join("neg.json"));
        if o.status.code() != Some(code) {
            problems.push(format!(
                "{config}: exit {:?}, expected {code}",
                o.status.code()
            ));
        }
        if let Some(word) = needle {
            if !String::from_utf8_lossy(&o.stderr).contains(word) {
                problems.push(format!("{config}: message does not name `{word}`"));
            }
        }
    }
    Outcome {
        ok: problems.is_empty(),
        detail: if problems.is_empty() {
            format!(
                "{} identical bytes, {passing} passing checks, schema valid, exit codes 0/2/1/3",
                b1.len()
            )
        } else {
            problems.join("; ")
        },
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 roter identities", roter_identities),
        ("2 olszak distribution", olszak),
        ("3 characteristic forms", charforms),
        ("4 A recovery", recovery),
        ("5 isometry action", isometry),
        ("6 dynamics", dynamics),
        ("7 oracles", oracles),
        ("8 determinism and exit codes", determinism),
    ];
    let mut all = true;
    for (name, run) in criteria {
        let out = run();
        all &= out.ok;
        println!(
            "{} {name}: {}",
            if out.ok { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if !all {
        std::process::exit(1);
    }
}
