use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn catsift(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catsift"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn catsift")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn rp_audit_on_demo_flags_the_planted_count() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(&["gen-demo", "-o", "d"], dir.path()));
    ok(&catsift(
        &["audit", "-c", "d/catsift.toml", "--method", "rp"],
        dir.path(),
    ));
    let manifest = json(&dir.path().join("d/manifest.json"));
    let summary = json(&dir.path().join("d/report/summary.json"));
    let planted = manifest["planted"].as_array().unwrap().len();
    assert_eq!(summary["methods"][0]["method"], "rp");
    assert_eq!(
        summary["methods"][0]["flagged_count"].as_u64().unwrap() as usize,
        planted
    );
    assert!(summary["k"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["config"]["method"], "rp");
    assert!(!dir.path().join("d/report/hull_report.jsonl").exists());
}

#[test]
fn every_report_embeds_the_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(&["gen-demo", "-o", "d"], dir.path()));
    ok(&catsift(&["audit", "-c", "d/catsift.toml"], dir.path()));
    let report = dir.path().join("d/report");
    for stem in ["rp_report", "hull_report", "hnsw_report"] {
        let text = fs::read_to_string(report.join(format!("{stem}.jsonl"))).unwrap();
        let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(header["config"]["category_id"], "demo-films", "{stem}");
    }
    let hist = fs::read_to_string(report.join("histogram.csv")).unwrap();
    let mut lines = hist.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next().unwrap(), "series,bin_low,bin_high,count");
    assert!(json(&report.join("summary.json"))["config"].is_object());
}

#[test]
fn csv_output() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(&["gen-demo", "-o", "d"], dir.path()));
    ok(&catsift(
        &[
            "audit",
            "-c",
            "d/catsift.toml",
            "--format",
            "csv",
            "--method",
            "rp",
            "-o",
            "csv",
        ],
        dir.path(),
    ));
    let text = fs::read_to_string(dir.path().join("csv/rp_report.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config:"));
    assert_eq!(
        lines.next().unwrap(),
        "article_id,title,d_ea,rp_percent,keywords"
    );
    assert_eq!(lines.count(), 10);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(&["gen-demo", "-o", "d"], dir.path()));
    ok(&catsift(
        &[
            "audit",
            "-c",
            "d/catsift.toml",
            "--method",
            "rp",
            "--threshold",
            "99.5",
            "-o",
            "t",
        ],
        dir.path(),
    ));
    let summary = json(&dir.path().join("t/summary.json"));
    assert_eq!(summary["config"]["rp_threshold_percent"], 99.5);
    let flagged = summary["methods"][0]["flagged_count"].as_u64().unwrap();
    assert!(flagged < 10);
}

#[test]
fn missing_corpus_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = catsift(
        &[
            "audit",
            "--corpus",
            "no/such/corpus.jsonl",
            "--category",
            "x",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("no/such/corpus.jsonl"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn invalid_threshold_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(&["gen-demo", "-o", "d"], dir.path()));
    let out = catsift(
        &["audit", "-c", "d/catsift.toml", "--threshold", "0"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("rp_threshold_percent"));
}

#[test]
fn unknown_category_fails() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(&["gen-demo", "-o", "d"], dir.path()));
    let out = catsift(
        &["audit", "-c", "d/catsift.toml", "--category", "nope"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nope"));
}

#[test]
fn stability_fraction_zero_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(&["gen-demo", "-o", "d"], dir.path()));
    let out = catsift(
        &["stability", "-c", "d/catsift.toml", "--fraction", "0"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("fraction"));
}

#[test]
fn stability_full_fraction_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(&["gen-demo", "-o", "d"], dir.path()));
    ok(&catsift(
        &["stability", "-c", "d/catsift.toml", "--fraction", "1"],
        dir.path(),
    ));
    let r = json(&dir.path().join("d/report/stability.json"));
    assert_eq!(r["result"]["mean_shift"], 0.0);
    assert_eq!(r["result"]["std_shift"], 0.0);
}

#[test]
fn cohesion_on_bundled_fixture_improves() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(
        &["gen-demo", "--kind", "cohesion", "-o", "c"],
        dir.path(),
    ));
    ok(&catsift(&["cohesion", "-c", "c/catsift.toml"], dir.path()));
    let r = json(&dir.path().join("c/report/cohesion.json"));
    let e = &r["experiment"];
    assert!(e["score_augmented"].as_f64().unwrap() >= e["score_base"].as_f64().unwrap());
    assert_eq!(e["n_hierarchical"], 6);
}

#[test]
fn cohesion_with_empty_map_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(
        &["gen-demo", "--kind", "cohesion", "-o", "c"],
        dir.path(),
    ));
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    ok(&catsift(
        &[
            "cohesion",
            "-c",
            "c/catsift.toml",
            "--subcategories",
            "empty.jsonl",
        ],
        dir.path(),
    ));
    let e = &json(&dir.path().join("c/report/cohesion.json"))["experiment"];
    assert_eq!(e["score_base"], e["score_augmented"]);
    assert_eq!(e["relative_change"], 0.0);
}

#[test]
fn malformed_subcategory_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(
        &["gen-demo", "--kind", "cohesion", "-o", "c"],
        dir.path(),
    ));
    fs::write(
        dir.path().join("bad.jsonl"),
        "{\"subcategory_id\":\"s\",\"member_article_ids\":[\"c0-000\"]}\n{not json\n",
    )
    .unwrap();
    let out = catsift(
        &[
            "cohesion",
            "-c",
            "c/catsift.toml",
            "--subcategories",
            "bad.jsonl",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("bad.jsonl"), "{err}");
}

#[test]
fn cohesion_with_kmeans_labels() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(
        &["gen-demo", "--kind", "cohesion", "-o", "c"],
        dir.path(),
    ));
    fs::write(
        dir.path().join("plain.toml"),
        "corpus_path = \"c/corpus.jsonl\"\noutput_dir = \"k\"\n",
    )
    .unwrap();
    ok(&catsift(
        &["cohesion", "-c", "plain.toml", "--clusters", "2"],
        dir.path(),
    ));
    let r = json(&dir.path().join("k/cohesion.json"));
    assert_eq!(r["label_source"], "kmeans");
    assert_eq!(r["cluster_sizes"], serde_json::json!([60, 60]));
}

#[test]
fn compare_rp_is_a_distance_prefix() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(&["gen-demo", "-o", "d"], dir.path()));
    ok(&catsift(&["compare", "-c", "d/catsift.toml"], dir.path()));
    let r = json(&dir.path().join("d/report/compare.json"));
    let rp = &r["methods"][0];
    assert_eq!(rp["method"], "rp");
    assert_eq!(rp["is_distance_prefix"], true);
    assert_eq!(rp["blindness_pairs_count"], 0);
}

#[test]
fn projection_file_and_sampling() {
    let dir = tempfile::tempdir().unwrap();
    ok(&catsift(&["gen-demo", "-o", "d"], dir.path()));
    let corpus = catsift_core::corpus::load_corpus(dir.path().join("d/corpus.jsonl")).unwrap();
    let points = catsift_core::geometry::project_pca(&corpus).unwrap();
    catsift_core::geometry::save_projection(&points, dir.path().join("proj.jsonl")).unwrap();

    ok(&catsift(
        &[
            "audit",
            "-c",
            "d/catsift.toml",
            "--method",
            "hull",
            "--projection-file",
            "proj.jsonl",
            "-o",
            "f",
        ],
        dir.path(),
    ));
    ok(&catsift(
        &[
            "audit",
            "-c",
            "d/catsift.toml",
            "--method",
            "hull",
            "-o",
            "p",
        ],
        dir.path(),
    ));
    let body = |p: &str| {
        fs::read_to_string(dir.path().join(p))
            .unwrap()
            .lines()
            .skip(1)
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(body("f/hull_report.jsonl"), body("p/hull_report.jsonl"));

    ok(&catsift(
        &[
            "audit",
            "-c",
            "d/catsift.toml",
            "--projection-file",
            "proj.jsonl",
            "--sample-size",
            "100",
            "-o",
            "s",
        ],
        dir.path(),
    ));
    let s = json(&dir.path().join("s/summary.json"));
    assert_eq!(s["articles"], 160);
    assert_eq!(s["members"], 60);
}
