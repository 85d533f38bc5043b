use std::path::PathBuf;
use std::process::Command;

use etgeom::report::Status;
use etgeom_cli::{load_scenario, parse_scenario, run_scenario, InputError, RunOptions, RunReport};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn etgeom(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_etgeom")).args(args).output().unwrap()
}

#[test]
fn gaussian_passes_with_exit_zero() {
    let path = data("gaussian3.toml");
    let out = etgeom(&["run", path.to_str().unwrap(), "--points", "6"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn wrong_lambda_fails_the_residual() {
    let path = data("wrong_lambda.toml");
    let out = etgeom(&["run", path.to_str().unwrap(), "--points", "6", "--json", "-"]);
    assert_eq!(out.status.code(), Some(1));
    let report: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.get("structure_residual").unwrap().status, Status::Fail);
    // identities of the metric itself are unaffected
    assert_eq!(report.get("first_bianchi").unwrap().status, Status::Pass);
}

#[test]
fn malformed_metric_is_an_input_error() {
    let path = data("malformed_metric.toml");
    let out = etgeom(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 8"), "{err}");
    match load_scenario(&path) {
        Err(InputError::Syntax { line: 8, column: 16, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn schema_errors_carry_lines() {
    let src = "corpus = \"gaussian3\"\n\n[tolerances]\nnot_a_check = 1e-3\n";
    match parse_scenario(src) {
        Err(InputError::Schema { line: 4, key, .. }) => assert_eq!(key, "not_a_check"),
        other => panic!("{other:?}"),
    }
    let out = etgeom(&["run", "/nonexistent.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corpus_names_are_stable() {
    let out = etgeom(&["list"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(
        names,
        [
            "alpha0_warp_cubic",
            "alpha0_warp_cubic_mu",
            "alpha0_warp_exp",
            "alpha0_warp_exp_mu",
            "beta0_warp3",
            "beta0_warp4",
            "cylinder3",
            "cylinder4",
            "flat3",
            "flat4",
            "flat4_degenerate",
            "gaussian3",
            "gaussian4",
            "hyperbolic3",
            "quasi_einstein_hyperbolic3",
            "rho_einstein_gaussian3",
            "ricci_almost_sphere4",
            "sphere3",
            "sphere4",
            "sphere4_degenerate",
            "yamabe_flat3",
            "yamabe_quasi_hyperbolic3",
        ]
    );
    assert!(text.contains("Ricci soliton"));
    assert!(text.contains("conformally Einstein"));
}

#[test]
fn json_round_trip_is_byte_identical() {
    let sc = load_scenario(&data("gaussian3.toml")).unwrap();
    let r = run_scenario(&sc, &RunOptions { points: Some(4), ..Default::default() }).unwrap();
    let a = serde_json::to_string_pretty(&r).unwrap();
    let back: RunReport = serde_json::from_str(&a).unwrap();
    assert_eq!(back, r);
    assert_eq!(serde_json::to_string_pretty(&back).unwrap(), a);
}

#[test]
fn same_seed_same_report() {
    let sc = parse_scenario("corpus = \"cylinder3\"").unwrap();
    let opts = RunOptions {
        points: Some(5),
        seed: Some(11),
        ..Default::default()
    };
    let a = run_scenario(&sc, &opts).unwrap().without_timing();
    let b = run_scenario(&sc, &opts).unwrap().without_timing();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = run_scenario(&sc, &RunOptions { seed: Some(12), ..opts }).unwrap().without_timing();
    assert_ne!(a, c);
}

#[test]
fn report_is_sorted_with_tolerance_table() {
    let sc = parse_scenario("corpus = \"sphere4_degenerate\"").unwrap();
    let r = run_scenario(&sc, &RunOptions { points: Some(3), ..Default::default() }).unwrap();
    let names: Vec<&str> = r.checks.iter().map(|c| c.name.as_str()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert_eq!(r.tolerances.len(), r.checks.len());
    assert_eq!(r.version, env!("CARGO_PKG_VERSION"));
    for c in &r.checks {
        // pass iff max <= tolerance for asserted checks
        if let Some(m) = c.max {
            assert_eq!(c.status == Status::Pass, m <= c.tolerance && c.message.as_deref().map_or(true, |s| !s.contains("error")));
        }
    }
}

#[test]
fn check_filter_and_tolerance_scale() {
    let sc = load_scenario(&data("wrong_lambda.toml")).unwrap();
    let only = RunOptions {
        points: Some(4),
        checks: Some(vec!["schur".into(), "d_skew".into()]),
        ..Default::default()
    };
    let r = run_scenario(&sc, &only).unwrap();
    let names: Vec<&str> = r.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["d_skew", "schur"]);
    assert_eq!(r.exit_code(), 0);
    let loose = RunOptions {
        points: Some(4),
        checks: Some(vec!["structure_residual".into()]),
        tol_scale: 1e9,
        ..Default::default()
    };
    assert_eq!(run_scenario(&sc, &loose).unwrap().exit_code(), 0);
    let bad = RunOptions {
        checks: Some(vec!["nope".into()]),
        ..Default::default()
    };
    assert!(run_scenario(&sc, &bad).is_err());
}

#[test]
fn every_corpus_entry_runs_clean() {
    for e in etgeom::constructions::corpus() {
        let sc = parse_scenario(&format!("corpus = \"{}\"", e.name)).unwrap();
        let r = run_scenario(&sc, &RunOptions { points: Some(4), ..Default::default() }).unwrap();
        assert_eq!(r.exit_code(), 0, "{}:\n{}", e.name, r.to_text());
    }
}

#[test]
fn scenario_directory_runs_clean() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let sc = load_scenario(&path).unwrap();
        let r = run_scenario(&sc, &RunOptions { points: Some(4), ..Default::default() }).unwrap();
        assert_eq!(r.exit_code(), 0, "{}:\n{}", path.display(), r.to_text());
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn spectral_subcommands() {
    let out = etgeom(&["spectral", "lambda1", "--radius", "1", "--dim", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let l = v["lambda1"].as_f64().unwrap();
    assert!((l - std::f64::consts::PI.powi(2)).abs() < 1e-3);

    let out = etgeom(&["spectral", "chi", "--v", "exp(2*r)", "--r", "1,2"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for x in v["chi"].as_array().unwrap() {
        assert!((x.as_f64().unwrap() - 1.0).abs() < 1e-8);
    }

    let out = etgeom(&["spectral", "divergence", "--q=-1", "--v", "r^2", "--r0", "1", "--r-max", "1000"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "diverging");
    assert!(v["note"].as_str().unwrap().contains("not a proof"));

    let out = etgeom(&["spectral", "chi", "--v", "r^", "--r", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
