//! CLI acceptance: every command run twice with the same inputs and seed
//! produces byte-identical stdout and artifacts (criterion 11), plus exit
//! code and output sanity checks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unmeasure"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}

struct Fixtures {
    dir: tempfile::TempDir,
    dist: PathBuf,
    die: PathBuf,
    die_constraints: PathBuf,
    matrix: PathBuf,
}

fn fixtures() -> Fixtures {
    let dir = tempfile::tempdir().unwrap();
    let dist = dir.path().join("dist.json");
    write(
        &dist,
        r#"{"dims":1,"cutoffs":[2],"probs":[0.25,0.5,0.25],"tail_mass":0.0}"#,
    );
    let die = dir.path().join("die.json");
    write(
        &die,
        r#"{"weights":[0.16666666666666666,0.16666666666666666,0.16666666666666666,0.16666666666666666,0.16666666666666666,0.16666666666666666]}"#,
    );
    let die_constraints = dir.path().join("die_constraints.json");
    write(
        &die_constraints,
        r#"{"equalities":[{"g":[1.0,2.0,3.0,4.0,5.0,6.0],"target":4.5}],"inequalities":[],"probability":true}"#,
    );
    let matrix = dir.path().join("payoffs.csv");
    write(&matrix, "1,-2\n-2,1\n");
    Fixtures {
        dir,
        dist,
        die,
        die_constraints,
        matrix,
    }
}

#[test]
fn criterion_11_byte_identical_reruns() {
    let fx = fixtures();
    let out_path = |name: &str| fx.dir.path().join(name);
    let s = |p: &PathBuf| p.to_str().unwrap().to_string();

    let cases: Vec<(&str, Vec<String>, Option<PathBuf>)> = vec![
        (
            "divergence",
            vec![
                "divergence".into(),
                "--p".into(),
                r#"{"weights":[2]}"#.into(),
                "--q".into(),
                r#"{"weights":[1]}"#.into(),
                "--out".into(),
                s(&out_path("div.json")),
            ],
            Some(out_path("div.json")),
        ),
        (
            "thin",
            vec![
                "thin".into(),
                "--dist".into(),
                s(&fx.dist),
                "--alpha".into(),
                "0.4".into(),
                "--out".into(),
                s(&out_path("thin.json")),
            ],
            Some(out_path("thin.json")),
        ),
        (
            "thin-law",
            vec![
                "thin-law".into(),
                "--bernoulli".into(),
                "0.5,0.5".into(),
                "--n-list".into(),
                "1,2,4,8".into(),
                "--out".into(),
                s(&out_path("thinlaw.csv")),
            ],
            Some(out_path("thinlaw.csv")),
        ),
        (
            "gof-classical",
            vec![
                "gof-classical".into(),
                "--n".into(),
                "20".into(),
                "--out".into(),
                s(&out_path("fig1.csv")),
            ],
            Some(out_path("fig1.csv")),
        ),
        (
            "gof-poisson",
            vec![
                "gof-poisson".into(),
                "--intensity".into(),
                "20".into(),
                "--out".into(),
                s(&out_path("fig2.csv")),
            ],
            Some(out_path("fig2.csv")),
        ),
        (
            "project",
            vec![
                "project".into(),
                "--q".into(),
                s(&fx.die),
                "--constraints".into(),
                s(&fx.die_constraints),
                "--spec".into(),
                "kl".into(),
                "--out".into(),
                s(&out_path("proj.json")),
            ],
            Some(out_path("proj.json")),
        ),
        (
            "altmin",
            vec![
                "altmin".into(),
                "--q".into(),
                s(&fx.die),
                "--constraints".into(),
                s(&fx.die_constraints),
                "--variant".into(),
                "orthogonalized".into(),
                "--out".into(),
                s(&out_path("trace.csv")),
            ],
            Some(out_path("trace.csv")),
        ),
        (
            "ineq-scan",
            vec![
                "ineq-scan".into(),
                "--base".into(),
                "poisson".into(),
                "--lambda".into(),
                "1".into(),
                "--degree".into(),
                "1".into(),
                "--samples".into(),
                "2000".into(),
                "--seed".into(),
                "1".into(),
                "--out".into(),
                s(&out_path("scan.json")),
            ],
            Some(out_path("scan.json")),
        ),
        (
            "dutchbook",
            vec![
                "dutchbook".into(),
                "--matrix".into(),
                s(&fx.matrix),
                "--out".into(),
                s(&out_path("cert.json")),
            ],
            Some(out_path("cert.json")),
        ),
        (
            "mach-zehnder",
            vec![
                "mach-zehnder".into(),
                "--intensity".into(),
                "10".into(),
                "--scenario".into(),
                "blocked".into(),
                "--out".into(),
                s(&out_path("mz.csv")),
            ],
            Some(out_path("mz.csv")),
        ),
    ];

    for (name, args, artifact) in cases {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = run_ok(&argv);
        let first_artifact = artifact.as_ref().map(|p| fs::read(p).unwrap());
        let second = run_ok(&argv);
        let second_artifact = artifact.as_ref().map(|p| fs::read(p).unwrap());
        assert_eq!(
            first.stdout, second.stdout,
            "{name}: stdout differs between reruns"
        );
        assert_eq!(
            first_artifact, second_artifact,
            "{name}: artifact differs between reruns"
        );
    }
    println!("criterion 11 (CLI determinism): PASS");
}

#[test]
fn divergence_matches_the_series_value() {
    let out = run_ok(&[
        "divergence",
        "--p",
        r#"{"weights":[2]}"#,
        "--q",
        r#"{"weights":[1]}"#,
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let value = v["value"].as_f64().unwrap();
    assert!((value - 0.386_294_361_119_890_6).abs() < 1e-12);
    assert_eq!(v["command"], "divergence");
    assert!(v["seed"].is_u64());

    // an infinite divergence is reported as the string "inf"
    let out = run_ok(&[
        "divergence",
        "--p",
        r#"{"weights":[1.0,1.0]}"#,
        "--q",
        r#"{"weights":[1.0,0.0]}"#,
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["value"], "inf");
}

#[test]
fn staircase_csv_has_the_declared_header() {
    let fx = fixtures();
    let out = fx.dir.path().join("fig1.csv");
    run_ok(&["gof-classical", "--n", "20", "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "g2,cdf_left,cdf_right,chi2_cdf");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0.00000000000e0");
    assert_eq!(text.lines().count(), 12); // header + 11 paired atoms
}

#[test]
fn poissonized_gap_beats_classical_via_the_cli() {
    let fx = fixtures();
    let f1 = fx.dir.path().join("f1.csv");
    let f2 = fx.dir.path().join("f2.csv");
    let classical = run_ok(&["gof-classical", "--n", "20", "--out", f1.to_str().unwrap()]);
    let poisson = run_ok(&[
        "gof-poisson",
        "--intensity",
        "20",
        "--out",
        f2.to_str().unwrap(),
    ]);
    let c: serde_json::Value = serde_json::from_slice(&classical.stdout).unwrap();
    let p: serde_json::Value = serde_json::from_slice(&poisson.stdout).unwrap();
    assert!(p["gap"].as_f64().unwrap() < c["gap"].as_f64().unwrap());
}

#[test]
fn blocked_interferometer_reports_zero_divergence() {
    let fx = fixtures();
    let out = fx.dir.path().join("mz.csv");
    let res = run_ok(&[
        "mach-zehnder",
        "--intensity",
        "10",
        "--scenario",
        "blocked",
        "--out",
        out.to_str().unwrap(),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["total_intensity"], 20.0);
    assert_eq!(v["divergence_at_expected_observation"], 0.0);
    assert_eq!(v["expected_observation"], serde_json::json!([10, 10]));

    // unblocked: all photons at one detector, strong evidence against
    // symmetry
    let res = run_ok(&[
        "mach-zehnder",
        "--intensity",
        "10",
        "--scenario",
        "unblocked",
        "--out",
        out.to_str().unwrap(),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let d = v["divergence_at_expected_observation"].as_f64().unwrap();
    assert!((d - 20.0 * std::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn seed_env_fallback_is_used() {
    let fx = fixtures();
    let out = fx.dir.path().join("scan.json");
    let res = bin()
        .args([
            "ineq-scan",
            "--base",
            "poisson",
            "--lambda",
            "1",
            "--samples",
            "500",
            "--out",
            out.to_str().unwrap(),
        ])
        .env("UNMEASURE_SEED", "77")
        .output()
        .unwrap();
    assert!(res.status.success());
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["seed"], 77);
    let artifact: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(artifact["report"]["seed"], 77);
}

#[test]
fn exit_codes_follow_the_contract() {
    // usage error: unknown flag
    let out = bin().args(["divergence", "--nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // domain error: deletion factor outside [0, 1]
    let fx = fixtures();
    let out_path = fx.dir.path().join("t.json");
    let out = bin()
        .args([
            "thin",
            "--dist",
            fx.dist.to_str().unwrap(),
            "--alpha",
            "1.5",
            "--out",
            out_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "domain");
    assert!(err["error"].as_str().unwrap().contains("deletion factor"));
}
