use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ogboost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ogboost"))
        .args(args)
        .env_remove("OGBOOST_OUT")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn single_stage_hull_booster_matches_bare_learner() {
    let dir = tempfile::tempdir().unwrap();
    let o = ogboost(&[
        "run",
        "--algo",
        "ch",
        "--stages",
        "1",
        "--base",
        "ogd",
        "--loss",
        "squared",
        "--synthetic",
        "planted",
        "--rounds",
        "2000",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(
        s["booster"]["total"],
        s["baselines"]["base_learner_zero_anchored"]["total"]
    );
}

#[test]
fn auto_eta_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let o = ogboost(&[
        "run",
        "--algo",
        "span",
        "--eta",
        "auto",
        "--stages",
        "16",
        "--synthetic",
        "planted",
        "--rounds",
        "500",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success());
    let s = json(&dir.path().join("summary.json"));
    let eta = s["eta"].as_f64().unwrap();
    assert!((eta - 16f64.ln() / 16.0).abs() < 1e-12);
    assert!((eta - 0.1733).abs() < 1e-4);
}

#[test]
fn invalid_eta_cites_range_and_lists_everything() {
    let o = ogboost(&[
        "run",
        "--synthetic",
        "planted",
        "--stages",
        "4",
        "--eta",
        "2",
        "--split",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("[1/N, 1]"), "{err}");
    assert!(err.contains("--split"), "{err}");
}

#[test]
fn unparseable_flag_is_a_config_error() {
    let o = ogboost(&["run", "--synthetic", "planted", "--loss", "hinge"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    let o = ogboost(&[
        "run",
        "--data",
        "/nonexistent/stream.svm",
        "--out",
        "/tmp/ogboost-never",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn assert_bounds_needs_a_measurable_setup() {
    let o = ogboost(&["run", "--synthetic", "planted", "--base", "ogd", "--assert-bounds"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hedge-pool"));
}

#[test]
fn asserted_bounds_pass_on_planted_streams() {
    for algo in ["span", "ch"] {
        let dir = tempfile::tempdir().unwrap();
        let o = ogboost(&[
            "run",
            "--algo",
            algo,
            "--stages",
            "8",
            "--base",
            "hedge-pool",
            "--synthetic",
            "planted",
            "--rounds",
            "3000",
            "--assert-bounds",
            "--out",
            &out_arg(dir.path()),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{algo}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let s = json(&dir.path().join("summary.json"));
        let b = &s["bounds"][0];
        assert_eq!(b["pass"], true);
        assert!(b["measured"].as_f64().unwrap() <= b["bound"].as_f64().unwrap());
    }
}

#[test]
fn echoed_config_reproduces_the_trace() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = ogboost(&[
        "run",
        "--synthetic",
        "planted",
        "--base",
        "stump",
        "--stages",
        "6",
        "--seed",
        "3",
        "--rounds",
        "1500",
        "--out",
        &out_arg(a.path()),
    ]);
    assert!(o.status.success());
    let summary = a.path().join("summary.json");
    let o = ogboost(&[
        "run",
        "--config",
        summary.to_str().unwrap(),
        "--out",
        &out_arg(b.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ta = fs::read_to_string(a.path().join("run.tsv")).unwrap();
    let tb = fs::read_to_string(b.path().join("run.tsv")).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(ta.lines().next(), Some("round\ttest_loss\tcum_loss\tcum_regret"));
    assert_eq!(ta.lines().count(), 1501);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ogboost"))
        .args(["run", "--synthetic", "planted", "--rounds", "100"])
        .env("OGBOOST_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn csv_dataset_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("label,a,b\n");
    for t in 0..300 {
        let a = (t as f64 * 0.37).sin();
        let b = (t as f64 * 0.11).cos();
        text.push_str(&format!("{},{a},{b}\n", 3.0 * a - b + 10.0));
    }
    fs::write(&data, text).unwrap();
    let out = dir.path().join("out");
    let o = ogboost(&[
        "run",
        "--data",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--base",
        "ogd",
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["rounds"], 300);
    assert_eq!(s["regret_reference"], "base_learner");
}

#[test]
fn grid_two_by_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = ogboost(&[
        "grid",
        "--synthetic",
        "planted",
        "--rounds",
        "1000",
        "--learning-rates",
        "0.5,1",
        "--stages-grid",
        "2,4",
        "--workers",
        "2",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = json(&dir.path().join("grid.json"));
    assert_eq!(g["children"].as_array().unwrap().len(), 4);
    let sel = g["selected"].as_u64().unwrap() as usize;
    let tune: Vec<f64> = g["children"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["tune_loss"].as_f64().unwrap())
        .collect();
    assert!(tune.iter().all(|t| *t >= tune[sel]));
    assert!(g["rule"].as_str().unwrap().contains("tune"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("selection rule"));
    let tsv = fs::read_to_string(dir.path().join("grid.tsv")).unwrap();
    assert_eq!(tsv.lines().filter(|l| l.ends_with("true")).count(), 1);
}

#[test]
fn batch_compare_bound_columns_match_formulas() {
    let dir = tempfile::tempdir().unwrap();
    let o = ogboost(&[
        "batch-compare",
        "--stages",
        "60",
        "--eta",
        "0.1",
        "--planted-norm",
        "2",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success());
    let tsv = fs::read_to_string(dir.path().join("batch.tsv")).unwrap();
    let mut lines = tsv.lines();
    assert_eq!(
        lines.next(),
        Some("stage\ts_i\tdelta_zy\tbound_additive\tdelta_gated\tbound_shrinkage\tsigma")
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split('\t').take(6).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 61);
    let (w, beta, eta, s0) = (2.0f64, 1.0, 0.1, 1.0);
    let d0 = rows[0][2];
    for (i, r) in rows.iter().enumerate() {
        let si = s0 + eta * i as f64;
        assert!((r[1] - si).abs() < 1e-9);
        let sj = |j: usize| s0 + eta * j as f64;
        let add = (s0 + w) / (si + w) * d0
            + (1..=i)
                .map(|j| (sj(j) + w) / (si + w) * beta / 2.0 * eta * eta)
                .sum::<f64>();
        let shr = (-(si - s0) / w).exp() * d0
            + (1..=i)
                .map(|j| (-(si - sj(j)) / w).exp() * beta / 2.0 * eta * eta * (sj(j) * sj(j) + 1.0))
                .sum::<f64>();
        assert!((r[3] - add).abs() <= 1e-9 * add.max(1.0), "row {i}: {} vs {add}", r[3]);
        assert!((r[5] - shr).abs() <= 1e-9 * shr.max(1.0), "row {i}: {} vs {shr}", r[5]);
        assert!(r[2] <= r[3] + 1e-12 && r[4] <= r[5] + 1e-12);
    }
}

#[test]
fn lower_bound_reports_regret_and_reference() {
    let dir = tempfile::tempdir().unwrap();
    let o = ogboost(&[
        "lower-bound",
        "--stages",
        "4",
        "--scale-c",
        "0.02",
        "--seeds",
        "3",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("lower_bound.json"));
    assert_eq!(s["pool_size"], 200);
    assert_eq!(s["rounds"], 2400);
    assert!((s["reference_ct_over_n"].as_f64().unwrap() - 0.02 * 2400.0 / 4.0).abs() < 1e-9);
    assert_eq!(s["runs"].as_array().unwrap().len(), 3);
    for r in s["runs"].as_array().unwrap() {
        let (b, u, g) = (
            r["booster_loss"].as_f64().unwrap(),
            r["uniform_loss"].as_f64().unwrap(),
            r["regret"].as_f64().unwrap(),
        );
        assert!((b - u - g).abs() < 1e-9);
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("cT/N"));
}

#[test]
fn lower_bound_rejects_short_streams() {
    let o = ogboost(&[
        "lower-bound",
        "--stages",
        "2",
        "--scale-c",
        "0.02",
        "--rounds",
        "100",
        "--out",
        "/tmp/ogboost-never",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("12M"));
}
