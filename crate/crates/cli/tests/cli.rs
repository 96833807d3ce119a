use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::process::{Command, Output};

const TREE: &str =
    r#"{"kind":"metric_tree","edges":[[0,1,1.0],[1,2,2.0],[1,3,1.5],[0,4,1.0],[4,5,1.0],[4,6,2.0],[0,7,1.0]]}"#;

fn morselab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morselab"))
        .args(args)
        .output()
        .expect("run morselab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = morselab(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    o
}

fn digest(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    h.finish()
}

#[test]
fn repro_rows_match_closed_form() {
    let o = ok(&["repro-example", "--n-max", "3"]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,D_alpha,D_f_alpha,cr_before,cr_after"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for (i, r) in rows.iter().enumerate() {
        let n = (i + 1) as f64;
        let after = (4.0 * n * n + 1.0).sqrt();
        assert_eq!(r[0], n);
        assert_eq!(r[1], 1.0);
        assert!((r[2] - after).abs() < 1e-12);
        assert!((r[3] - 1.0).abs() < 1e-12);
        assert!(r[4] >= 2.0 * n - 1.0);
    }
    assert!((rows[2][2] - 37f64.sqrt()).abs() < 1e-12);
    assert!((rows[0][2] - 5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn repro_rejects_zero() {
    assert_eq!(morselab(&["repro-example", "--n-max", "0"]).status.code(), Some(2));
}

#[test]
fn contracting_exact_is_plane_distance() {
    let o = ok(&[
        "contracting",
        "--geodesic",
        r#"{"from":{"ideal":{"m":0,"n":0}},"to":{"ideal":{"m":3,"n":4}}}"#,
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["D"].as_f64().unwrap() - 5.0).abs() < 1e-12);
    assert_eq!(v["mode"]["kind"], "exact");
}

#[test]
fn contracting_sampled_on_tree_is_zero() {
    let o = ok(&[
        "--space",
        TREE,
        "contracting",
        "--mode",
        "sampled",
        "--samples",
        "500",
        "--geodesic",
        r#"{"from":{"ideal":{"leaf":2}},"to":{"ideal":{"leaf":6}}}"#,
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["D"].as_f64().unwrap() < 1e-6);
}

#[test]
fn malformed_geodesic_reports_position() {
    let o = morselab(&[
        "contracting",
        "--geodesic",
        r#"{"from": {"ideal": {"m": 0, "n": 0}}, "to": }"#,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1, column 45"), "{}", stderr(&o));
}

#[test]
fn two_stable_probe_finds_swap_witness() {
    let o = ok(&["probe", "two_stable", "--map", "paper_swap", "--D", "2"]);
    let err = stderr(&o);
    assert!(err.contains("violation"), "{err}");
    assert!(err.contains("(r_{-8,-2}, r_{-8,0}) -> (r_{-8,-2}, r_{8,0})"), "{err}");
    assert!(stdout(&o).starts_with("d_in,d_out,a,b,fa,fb\n"));
}

#[test]
fn quasi_mobius_identity_envelope() {
    let o = ok(&["probe", "quasi_mobius", "--samples", "500"]);
    assert!(stderr(&o).contains("envelope = identity"));
    assert!(stdout(&o).starts_with("cr_in,cr_out,p0,p1,p2,p3\n"));
}

#[test]
fn quasi_mobius_translation_slope() {
    let o = ok(&[
        "probe",
        "quasi_mobius",
        "--samples",
        "500",
        "--format",
        "json",
        "--map",
        r#"{"kind":"translation","dx":3,"dy":-2}"#,
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for step in v["envelope"].as_array().unwrap() {
        let (t, p) = (step[0].as_f64().unwrap(), step[1].as_f64().unwrap());
        assert!(p <= (1.0 + 1e-9) * t + 1e-9, "psi({t}) = {p}");
    }
}

#[test]
fn outputs_are_deterministic() {
    for args in [
        &["probe", "quasi_mobius", "--samples", "300", "--seed", "5"][..],
        &[
            "probe",
            "two_stable",
            "--map",
            "paper_swap",
            "--samples",
            "2000",
            "--seed",
            "5",
        ][..],
        &["--space", TREE, "extend", "--seed", "5", "--format", "json"][..],
    ] {
        let a = ok(args);
        let b = ok(args);
        assert_eq!(digest(&a.stdout), digest(&b.stdout), "{args:?}");
    }
}

#[test]
fn extend_writes_evaluation_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ext.csv");
    let svg = dir.path().join("ext.svg");
    let o = ok(&[
        "extend",
        "--window",
        "2",
        "--samples",
        "60",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_str(&stderr(&o)).unwrap();
    assert!(report["qi"]["lambda_hat"].as_f64().unwrap() <= 1.2);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x_chart,x_coords,h_chart,h_coords,pi_diameter,triangle_count\n"));
    assert!(text.lines().count() > 50);
    ok(&["plot", csv.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn extend_refuses_non_two_stable_map() {
    let o = morselab(&["extend", "--map", "paper_swap"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("violation"));
}

#[test]
fn cloud_outside_stratum_is_hypothesis_failure() {
    let o = morselab(&["cloud", "--triangle", "[[0,0],[3,0],[0,2]]", "--D", "2"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn plot_errors() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cloud.csv");
    ok(&[
        "cloud",
        "--triangle",
        "[[0,0],[1,0],[0,1]]",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let path = csv.to_str().unwrap();
    assert!(stdout(&ok(&["plot", path, "--style", "points"])).contains("<circle"));
    let missing = morselab(&["plot", path, "--style", "arrows"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("h_chart"));
    assert_eq!(morselab(&["plot", path, "--style", "fancy"]).status.code(), Some(2));
}

#[test]
fn tables_persist_under_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_morselab"))
        .args(["--space", TREE, "tables"])
        .env("MORSELAB_TABLES", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let tables: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(tables.as_array().unwrap().len(), 6);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 6);
}

#[test]
fn empty_boundary_is_reported() {
    let o = morselab(&["--space", "euclidean_plane", "probe", "two_stable"]);
    assert_eq!(o.status.code(), Some(3));
}
