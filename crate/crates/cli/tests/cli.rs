//! End-to-end runs of the boxtau binary: output schemas, determinism and
//! exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn boxtau(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxtau"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

/// Deterministic pseudo-random CSV with independent columns; a seeded LCG
/// keeps the tests self-contained.
fn write_independent_csv(path: &Path, n: usize, seed: u64) {
    let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut text = String::from("X1,X2,X3\n");
    for _ in 0..n {
        text.push_str(&format!("{},{},{}\n", next(), next(), next()));
    }
    std::fs::write(path, text).unwrap();
}

fn two_boxes(path: &Path) {
    std::fs::write(
        path,
        r#"[{"column": "X3", "upper": 0.5},
            {"column": "X3", "lower": 0.5, "lower_open": true}]"#,
    )
    .unwrap();
}

#[test]
fn test_subcommand_on_independent_data_keeps_large_p_values() {
    let dir = tempfile::tempdir().unwrap();
    write_independent_csv(&dir.path().join("data.csv"), 300, 11);
    two_boxes(&dir.path().join("boxes.json"));
    let out = boxtau(
        &[
            "test",
            "--input", "data.csv",
            "--roles", "X1:cond,X2:cond,X3:conditioning",
            "--boxes", "boxes.json",
            "--B", "400",
            "--seed", "5",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let results = parsed["results"].as_array().unwrap();
    assert_eq!(results.len(), 5);
    for r in results {
        let p = r["p_value"].as_f64().unwrap();
        assert!(p >= 0.01, "method {} rejected independent data: p = {p}", r["method"]);
    }
    assert_eq!(parsed["version"], "0.1.0");
    assert!(parsed["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn degenerate_box_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    write_independent_csv(&dir.path().join("data.csv"), 100, 3);
    // second box is far outside the data range: 0 members
    std::fs::write(
        dir.path().join("boxes.json"),
        r#"[{"column": "X3", "upper": 0.9}, {"column": "X3", "lower": 5.0}]"#,
    )
    .unwrap();
    let out = boxtau(
        &[
            "test",
            "--input", "data.csv",
            "--roles", "X1:cond,X2:cond,X3:conditioning",
            "--boxes", "boxes.json",
            "--method", "wald",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["exit_code"], 2);
}

#[test]
fn five_categorical_year_boxes_give_df_twelve() {
    let dir = tempfile::tempdir().unwrap();
    // p = 3 conditioned columns, one categorical year column with 5 levels
    let mut text = String::from("PN,PO,IM,Year\n");
    let mut state = 99u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..600 {
        let year = 2006 + (i % 5);
        text.push_str(&format!("{},{},{},{year}\n", next(), next(), next()));
    }
    std::fs::write(dir.path().join("ins.csv"), text).unwrap();
    std::fs::write(
        dir.path().join("years.json"),
        r#"[{"column": "Year", "codes": [2006]},
            {"column": "Year", "codes": [2007]},
            {"column": "Year", "codes": [2008]},
            {"column": "Year", "codes": [2009]},
            {"column": "Year", "codes": [2010]}]"#,
    )
    .unwrap();
    let out = boxtau(
        &[
            "test",
            "--input", "ins.csv",
            "--roles", "PN:cond,PO:cond,IM:cond,Year:conditioning",
            "--boxes", "years.json",
            "--method", "wald",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["results"][0]["df"], 12);
    assert_eq!(parsed["results"][0]["m"], 5);
    assert_eq!(parsed["results"][0]["p"], 3);
}

#[test]
fn seeded_tree_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_independent_csv(&dir.path().join("data.csv"), 400, 21);
    for run in ["a", "b"] {
        let out = boxtau(
            &[
                "tree",
                "--input", "data.csv",
                "--roles", "X1:cond,X2:cond,X3:conditioning",
                "--min-cut", "0.1",
                "--min-size", "0.1",
                "--B", "100",
                "--seed", "9",
                "--out", run,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let dot_a = std::fs::read(dir.path().join("a.tree.dot")).unwrap();
    let dot_b = std::fs::read(dir.path().join("b.tree.dot")).unwrap();
    assert_eq!(dot_a, dot_b);
    let json_a = std::fs::read(dir.path().join("a.tree.json")).unwrap();
    let json_b = std::fs::read(dir.path().join("b.tree.json")).unwrap();
    assert_eq!(json_a, json_b);
}

#[test]
fn split_fraction_one_builds_tree_and_skips_test() {
    let dir = tempfile::tempdir().unwrap();
    write_independent_csv(&dir.path().join("data.csv"), 200, 31);
    let out = boxtau(
        &[
            "tree",
            "--input", "data.csv",
            "--roles", "X1:cond,X2:cond,X3:conditioning",
            "--split-fraction", "1.0",
            "--seed", "2",
            "--out", "full",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let warning = String::from_utf8_lossy(&out.stderr);
    assert!(warning.contains("split fraction 1.0"), "stderr: {warning}");
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("full.test.json")).unwrap())
            .unwrap();
    assert_eq!(parsed["n_build"], 200);
    assert!(parsed["test_skipped"].is_string());
    assert_eq!(parsed["results"].as_array().unwrap().len(), 0);
}

#[test]
fn conditional_bootstrap_without_coverage_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    write_independent_csv(&dir.path().join("data.csv"), 150, 41);
    // boxes leave a hole in the middle: some observations uncovered
    std::fs::write(
        dir.path().join("boxes.json"),
        r#"{"disjoint": true, "boxes": [
            {"column": "X3", "upper": 0.2},
            {"column": "X3", "lower": 0.8}]}"#,
    )
    .unwrap();
    let out = boxtau(
        &[
            "test",
            "--input", "data.csv",
            "--roles", "X1:cond,X2:cond,X3:conditioning",
            "--boxes", "boxes.json",
            "--method", "boot-inf-conditional",
            "--B", "50",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn simulate_writes_csv_and_json_reports() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("scen.json"),
        r#"{
            "scenario": {"tag": "gauss_level", "m": 2, "p": 2, "n": 150, "r": 8, "seed": 4, "b": 60},
            "methods": ["wald", "boot_inf_classical"],
            "sweep": {"param": "m", "values": [2, 3]}
        }"#,
    )
    .unwrap();
    let out = boxtau(
        &["simulate", "--input", "scen.json", "--out", "rep"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("rep.csv")).unwrap();
    assert!(csv.starts_with("method,m=2,m=3"));
    assert_eq!(csv.lines().count(), 3);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    assert_eq!(json["reports"].as_array().unwrap().len(), 2);
    for entry in json["reports"].as_array().unwrap() {
        for rate in entry["report"]["rejection_rates"].as_array().unwrap() {
            let rate = rate.as_f64().unwrap();
            assert!((0.0..=1.0).contains(&rate));
        }
    }
}

#[test]
fn verify_counterexamples_prints_claims() {
    let dir = tempfile::tempdir().unwrap();
    let out = boxtau(
        &["verify-counterexamples", "--n", "4000", "--seed", "3", "--out", "ce.json"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("WARN")).count() >= 9);
    assert!(!text.contains("FAIL"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ce.json")).unwrap()).unwrap();
    assert_eq!(json["n"], 4000);
}
