use std::path::Path;
use std::process::{Command, Output};

use adbench::metrics::{nemenyi_cd, Alpha};

fn adbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adbench"))
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = adbench(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn count(dir: &Path) -> usize {
    std::fs::read_dir(dir).map(|d| d.count()).unwrap_or(0)
}

fn first_record(dir: &Path) -> String {
    let mut paths: Vec<_> = std::fs::read_dir(dir.join("records")).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    std::fs::read_to_string(&paths[0]).unwrap()
}

#[test]
fn run_writes_one_record_per_config_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let o = out.to_str().unwrap();
    let args = [
        "run", "--dataset", "blobs", "--detector", "knn", "--n-configs", "5", "--seeds", "3", "--output-dir", o,
    ];
    let stdout = ok(&args);
    assert!(stdout.starts_with("15 records"), "{stdout}");
    assert_eq!(count(&out.join("records")), 15);

    // re-running reuses every record
    let before = first_record(&out);
    ok(&args);
    assert_eq!(count(&out.join("records")), 15);
    assert_eq!(before, first_record(&out));

    let sel = ok(&["select", "--results", o, "--protocol", "max"]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sel.trim()).unwrap()).unwrap();
    assert_eq!(v["selections"].as_array().unwrap().len(), 1);
}

#[test]
fn rank_table_and_cd_diagram_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().join("r");
    let o = o.to_str().unwrap();
    ok(&[
        "run", "--dataset", "blobs", "--dataset", "two_moons", "--dataset", "ring", "--detector", "knn", "--detector",
        "hbos", "--detector", "lof", "--n-configs", "3", "--seeds", "3", "--output-dir", o,
    ]);
    let csv_path = ok(&["rank", "--results", o, "--protocol", "mean"]);
    let csv = std::fs::read_to_string(csv_path.trim()).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "{csv}");
    assert_eq!(lines[0].split(',').count(), 4);
    let ranks: Vec<f64> = lines[4].split(',').skip(1).map(|x| x.parse().unwrap()).collect();
    // three methods: ranks always sum to 1 + 2 + 3
    assert!((ranks.iter().sum::<f64>() - 6.0).abs() < 1e-5);

    let svg_path = ok(&["cd-diagram", "--results", o, "--protocol", "mean", "--alpha", "0.05"]);
    let svg = std::fs::read_to_string(svg_path.trim()).unwrap();
    let cd = nemenyi_cd(3, 3, Alpha::from_value(0.05).unwrap()).unwrap();
    assert!(svg.contains(&format!("CD = {cd:.2}")), "{svg}");
    for m in ["knn", "hbos", "lof"] {
        assert!(svg.contains(m));
    }

    let curve = ok(&["curve", "--results", o, "--protocol", "max"]);
    let curve = std::fs::read_to_string(curve.trim()).unwrap();
    assert!(curve.lines().count() > 1);

    let report = ok(&["report", "--results", o]);
    assert!(report.contains("summary.json"));
}

#[test]
fn ensemble_needs_kept_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().join("r");
    let o = o.to_str().unwrap();
    ok(&["run", "--detector", "knn", "--n-configs", "4", "--seeds", "2", "--output-dir", o]);
    assert!(!adbench(&["ensemble", "--results", o, "--k", "1"]).status.success());

    let o2 = tmp.path().join("r2");
    let o2 = o2.to_str().unwrap();
    ok(&["run", "--detector", "knn", "--n-configs", "4", "--seeds", "2", "--keep-scores", "--output-dir", o2]);
    let path = ok(&["ensemble", "--results", o2, "--k", "1"]);
    let csv = std::fs::read_to_string(path.trim()).unwrap();
    // a one-member ensemble is its own best member
    assert!(csv.contains("knn,1,2,0.000000,0.000000,0.000000"), "{csv}");
}

#[test]
fn gen_data_writes_a_loadable_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("moons.csv");
    ok(&["gen-data", "--kind", "two_moons", "--n-normal", "40", "--n-anomaly", "7", "--out", p.to_str().unwrap()]);
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 48);
    let o = tmp.path().join("r");
    let stdout = ok(&[
        "run", "--dataset", p.to_str().unwrap(), "--n-configs", "2", "--seeds", "1", "--output-dir",
        o.to_str().unwrap(),
    ]);
    assert!(stdout.starts_with("2 records"), "{stdout}");
}

#[test]
fn bad_input_fails_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"datasets": ["blobs"], "n_confgs": 3}"#).unwrap();
    let out = adbench(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_confgs"));

    let out = adbench(&["run", "--detector", "bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = adbench(&["rank", "--results", tmp.path().join("nothing").to_str().unwrap()]);
    assert!(!out.status.success());
}
