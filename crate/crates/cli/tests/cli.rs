use std::fs;
use std::path::Path;
use std::process::Command;

use hodge_bands_cli::{run_bands, run_converge, run_limit, RunConfig, Sigma};

const BIN: &str = env!("CARGO_BIN_EXE_hodge-bands");

fn minimal(out: &Path) -> String {
    format!(
        r#"
degrees = [0]
eps_list = [0.1]
L = 3.141592653589793
l_out = 1.0
lambda_max = 10.0
output = "{}"

[sigma]
kind = "torus"
sides = [6.283185307179586]
"#,
        out.display()
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn minimal_config_gives_at_least_three_bands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &minimal(&dir.path().join("out")));
    let st = Command::new(BIN).arg("bands").arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let bands = dir.path().join("out/bands.csv");
    let header = fs::read_to_string(&bands).unwrap();
    assert!(header.starts_with("p,eps,k,lambda_min,lambda_max,mult,provenance\n"));
    assert!(csv_rows(&bands).len() >= 3);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert!(summary["results"]["gaps"][0]["gap_count"].as_u64().unwrap() >= 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::from_toml(&minimal(&dir.path().join("a")), &[]).unwrap();
    run_bands(&cfg).unwrap();
    cfg.output = dir.path().join("b");
    run_bands(&cfg).unwrap();
    for f in ["bands.csv", "gaps.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn missing_sigma_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = minimal(&dir.path().join("out"))
        .replace("kind = \"torus\"\nsides = [6.283185307179586]", "kind = \"file\"\npath = \"nowhere/sigma.json\"");
    let cfg = write_config(dir.path(), &text);
    let out = Command::new(BIN).arg("bands").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere/sigma.json"));
}

#[test]
fn invalid_fields_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &minimal(&dir.path().join("out")));
    for set in ["eps_list=[0.1, 1.5]", "lambda_max=-1", "bogus=3", "degrees=[5]"] {
        let out = Command::new(BIN).args(["limit", cfg.to_str().unwrap(), "--set", set]).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "override {set}");
    }
    let out = Command::new(BIN).args(["limit", cfg.to_str().unwrap(), "--set", "eps_list=[0.1, 1.5]"]).output().unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps_list[1]"));
}

#[test]
fn overrides_reach_nested_fields() {
    let text = minimal(Path::new("out"));
    let sets = ["lambda_max=5".to_string(), "tolerances.oracle_n=400".to_string(), "degrees=[0, 2]".to_string()];
    let cfg = RunConfig::from_toml(&text, &sets).unwrap();
    assert_eq!(cfg.lambda_max, 5.0);
    assert_eq!(cfg.tolerances.oracle_n, 400);
    assert_eq!(cfg.degrees, vec![0, 2]);
}

#[test]
fn config_round_trips() {
    let cfg = RunConfig::from_toml(&minimal(Path::new("out")), &[]).unwrap();
    let back = RunConfig::from_toml(&cfg.to_toml(), &[]).unwrap();
    assert_eq!(cfg, back);
    assert_eq!(back.sigma, Sigma::Torus { sides: vec![2.0 * std::f64::consts::PI] });
}

#[test]
fn limit_lists_dirichlet_points_and_is_dual() {
    let dir = tempfile::tempdir().unwrap();
    let sets = ["degrees=[0, 2]".to_string()];
    let cfg = RunConfig::from_toml(&minimal(&dir.path().join("out")), &sets).unwrap();
    let summary = run_limit(&cfg).unwrap();
    assert_eq!(summary["results"]["degrees"][0]["case_tag"], "friedrichs");
    let rows = csv_rows(&dir.path().join("out/limit.csv"));
    let of = |p: &str| -> Vec<(String, String, String)> {
        rows.iter().filter(|r| r[0] == p).map(|r| (r[1].clone(), r[2].clone(), r[3].clone())).collect()
    };
    let dir0: Vec<f64> = of("0").iter().filter(|r| r.2 == "dirichlet").map(|r| r.0.parse().unwrap()).collect();
    assert_eq!(dir0.len(), 3);
    for (x, k) in dir0.iter().zip([1.0, 4.0, 9.0]) {
        assert!((x - k).abs() < 1e-12);
    }
    assert_eq!(of("0"), of("2"));
}

#[test]
fn convergence_widths_are_positive_and_verdict_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let sets = ["eps_list=[0.2, 0.1]".to_string(), "lambda_max=3".to_string()];
    let cfg = RunConfig::from_toml(&minimal(&dir.path().join("out")), &sets).unwrap();
    let summary = run_converge(&cfg).unwrap();
    let rows = csv_rows(&dir.path().join("out/convergence.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() >= 0.0));
    let p0 = &summary["results"]["degrees"][0];
    let last = p0["steps"].as_array().unwrap().last().unwrap();
    let flags = last["unmatched_bands"].as_u64().unwrap() + last["unmatched_points"].as_u64().unwrap();
    assert_eq!(p0["verdict"] == "all matched", flags == 0);
}

#[test]
fn selfcheck_passes_and_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &minimal(&dir.path().join("out")));
    let out = Command::new(BIN).arg("selfcheck").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.contains(" pass ")).count(), 8);
}
