use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_slogan-audit"));
    c.env_remove("OPENAI_API_KEY");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synthetic_generate_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for run_name in ["one", "two"] {
        let out = dir.path().join(run_name);
        let o = run(&["generate", "--backend", "synthetic", "--seed", "7", "--n-per-group", "3", "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        bodies.push(std::fs::read(out.join("corpus.jsonl")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(String::from_utf8_lossy(&bodies[0]).lines().count(), 51);
}

#[test]
fn analyze_bias_ks_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let corpus = fixture("corpus_1700.jsonl");

    let o = run(&["analyze", "--corpus", s(&corpus), "--out", s(out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("counts.json").is_file());

    let o = run(&["bias", "--out", s(out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("individuals who have a PhD"));
    let csv = std::fs::read_to_string(out.join("bias_table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 16 * 4);
    assert!(csv.starts_with("demographic_category,"));

    let o = run(&["ks", "--out", s(out), "--alpha", "0.05"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ks = std::fs::read_to_string(out.join("ks_results.csv")).unwrap();
    assert_eq!(ks.lines().count(), 1 + 64);
    assert!(ks.lines().next().unwrap().ends_with(",significant"));
    assert!(out.join("cdf_export.json").is_file());
}

fn pct_column_sums(csv: &str) -> std::collections::HashMap<(String, String), f64> {
    let mut sums = std::collections::HashMap::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        *sums.entry((f[0].to_string(), f[2].to_string())).or_insert(0.0) += f[6].parse::<f64>().unwrap();
    }
    sums
}

#[test]
fn per_category_scope_sums_within_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("corpus_1700.jsonl");
    let per = dir.path().join("per");
    let all = dir.path().join("all");
    for (out, scope) in [(&per, "per_category"), (&all, "all")] {
        let o = run(&["audit", "--corpus", s(&corpus), "--out", s(out), "--denominator-scope", scope]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    // Percentages are rounded to 2 decimals, so block sums land within a few
    // hundredths of 100.
    for ((block, cat), sum) in pct_column_sums(&std::fs::read_to_string(per.join("bias_table.csv")).unwrap()) {
        assert!((sum - 100.0).abs() < 0.05, "{block}/{cat}: {sum}");
    }
    let all_sums = pct_column_sums(&std::fs::read_to_string(all.join("bias_table.csv")).unwrap());
    let mut by_cat = std::collections::HashMap::new();
    for ((_, cat), v) in all_sums {
        *by_cat.entry(cat).or_insert(0.0) += v;
    }
    for (cat, sum) in by_cat {
        // The baseline row is not reported but shares the denominator.
        assert!(sum < 100.0 && sum > 80.0, "{cat}: {sum}");
    }
}

#[test]
fn audit_writes_report_with_digests() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["audit", "--backend", "synthetic", "--seed", "3", "--n-per-group", "5", "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_slogans"], 85);
    assert_eq!(report["corpus_digest"].as_str().unwrap().len(), 64);
    assert_eq!(report["config"]["seed"], 3);
}

#[test]
fn config_file_with_cli_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("audit.json");
    std::fs::write(
        &cfg,
        r#"{"n_per_group": 2, "seed": 1, "generation": {"backend": {"kind": "synthetic"}}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = run(&["generate", "--config", s(&cfg), "--n-per-group", "4", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let n = std::fs::read_to_string(out.join("corpus.jsonl")).unwrap().lines().count();
    assert_eq!(n, 17 * 4);
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        r#"{"group_id":"martian","index":0,"prompt":"p","text":"t","model":"m","created_at":"2024-01-01T00:00:00Z"}"#,
    )
    .unwrap();
    let o = run(&["audit", "--corpus", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("martian"));

    let cfg = dir.path().join("typo.json");
    std::fs::write(&cfg, r#"{"n_per_grop": 3}"#).unwrap();
    assert_eq!(run(&["audit", "--config", s(&cfg)]).status.code(), Some(2));

    let o = run(&["audit", "--backend", "synthetic", "--baseline", "nobody", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["generate", "--backend", "http", "--model", "m", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("OPENAI_API_KEY"));

    let o = run(&["generate", "--backend", "http", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_target_group_is_an_analysis_error() {
    let dir = tempfile::tempdir().unwrap();
    let only = dir.path().join("only.jsonl");
    std::fs::write(
        &only,
        r#"{"group_id":"general","index":0,"prompt":"p","text":"Save","model":"m","created_at":"2024-01-01T00:00:00Z"}"#,
    )
    .unwrap();
    let o = run(&["audit", "--corpus", s(&only), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn lexicon_show_lists_categories() {
    let o = run(&["lexicon", "show"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Empowerment [empowerment] (34 terms)"));
    assert!(text.contains("Demographic-specific [demographic_specific] (51 terms)"));

    let o = run(&["lexicon", "show", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["financial"].as_array().unwrap().len(), 31);
}
