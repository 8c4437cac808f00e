use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pgtune"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn pgtune")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    jsonschema::validator_for(&s).unwrap()
}

fn check(schema_name: &str, v: &Value) {
    let val = schema(schema_name);
    let errors: Vec<String> = val.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}");
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn small_data(dir: &Path) {
    ok(
        dir,
        &[
            "gen-data", "--dataset", "base.fvecs", "--queries", "q.fvecs", "--n", "1500", "--n-queries", "60",
            "--dim", "8", "--seed", "3",
        ],
    );
    ok(dir, &["ground-truth", "--dataset", "base.fvecs", "--queries", "q.fvecs", "--k", "10", "--out", "gt.ivecs"]);
    assert!(dir.join("gt.ivecs").is_file() && dir.join("gt.dist.fvecs").is_file());
}

#[test]
fn build_multi_then_eval_pipeline() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    small_data(d);
    let params = r#"[{"L":40,"M":12,"alpha":1.0},{"L":40,"M":12,"alpha":1.2},{"kind":"vamana","L":60,"M":16,"alpha":1.2}]"#;
    let summary: Value = serde_json::from_str(&ok(
        d,
        &["build-multi", "--dataset", "base.fvecs", "--index", "vamana", "--params", params, "--out", "multi"],
    ))
    .unwrap();
    check("batch_summary.schema.json", &summary);
    let report = read_json(&d.join("multi/report.json"));
    check("build_multi_report.schema.json", &report);
    for r in report["reports"].as_array().unwrap() {
        check("build_report.schema.json", r);
    }
    for i in 0..3 {
        let g = format!("multi/graph_{i}.pgi");
        check("graph_meta.schema.json", &read_json(&d.join(format!("{g}.json"))));
        let args = [
            "eval", "--dataset", "base.fvecs", "--queries", "q.fvecs", "--graph", &g, "--truth", "gt.ivecs",
            "--ef-grid", "10,20,40",
        ];
        let a: Value = serde_json::from_str(&ok(d, &args)).unwrap();
        let b: Value = serde_json::from_str(&ok(d, &args)).unwrap();
        check("eval_report.schema.json", &a);
        let recalls = |v: &Value| -> Vec<f64> {
            v["rows"].as_array().unwrap().iter().map(|r| r["recall"].as_f64().unwrap()).collect()
        };
        assert_eq!(recalls(&a), recalls(&b));
    }
    ok(
        d,
        &[
            "eval", "--dataset", "base.fvecs", "--queries", "q.fvecs", "--graph", "multi/graph_0.pgi", "--out",
            "e.json", "--csv", "e.csv",
        ],
    );
    let csv = std::fs::read_to_string(d.join("e.csv")).unwrap();
    assert!(csv.starts_with("ef,recall,qps,dist_per_query"));
    check("eval_report.schema.json", &read_json(&d.join("e.json")));
}

#[test]
fn single_build_writes_graph_and_sidecar() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    small_data(d);
    let r: Value = serde_json::from_str(&ok(
        d,
        &["build", "--dataset", "base.fvecs", "--index", "nsg", "--params", r#"{"K":16,"L":40,"M":16}"#, "--out", "g.pgi"],
    ))
    .unwrap();
    check("build_report.schema.json", &r);
    check("graph_meta.schema.json", &read_json(&d.join("g.pgi.json")));
}

#[test]
fn tune_log_has_one_record_per_observation() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    small_data(d);
    ok(
        d,
        &[
            "tune", "--dataset", "base.fvecs", "--queries", "q.fvecs", "--truth", "gt.ivecs", "--index", "hnsw",
            "--budget", "20", "--batch-size", "10", "--qps-mode", "proxy", "--pool-size", "128", "--out", "t",
        ],
    );
    let log = std::fs::read_to_string(d.join("t/log.jsonl")).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 20);
    for l in &lines {
        check("tune_log_record.schema.json", l);
    }
    let report = read_json(&d.join("t/report.json"));
    check("tune_report.schema.json", &report);
    assert_eq!(report["observations"], 20);
}

#[test]
fn repetition_report_validates() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    small_data(d);
    ok(
        d,
        &[
            "repetition-report", "--dataset", "base.fvecs", "--index", "hnsw", "--params",
            r#"[{"M":8,"efc":40},{"M":10,"efc":50}]"#, "--exact-pairs", "--ablation", "--out", "rep.json",
        ],
    );
    let r = read_json(&d.join("rep.json"));
    check("repetition_report.schema.json", &r);
    assert!(r["rdc"].as_f64().unwrap() < 1.0);
    assert!(r["shared_pair_ratio"].as_f64().is_some());
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    small_data(d);
    let code = |args: &[&str]| run(d, args).status.code();
    assert_eq!(code(&["build", "--bogus"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    let build = |params: &str| -> Option<i32> {
        code(&["build", "--dataset", "base.fvecs", "--index", "hnsw", "--params", params, "--out", "g.pgi"])
    };
    assert_eq!(build(r#"{"M":12,"#), Some(2));
    assert_eq!(build(r#"{"M":12,"efc":40,"extra":1}"#), Some(2));
    assert_eq!(build(r#"{"M":12,"efc":4}"#), Some(2));
    assert_eq!(build(r#"[{"M":12,"efc":40}]"#), Some(2));
    assert_eq!(
        code(&["build", "--dataset", "missing.fvecs", "--index", "hnsw", "--params", r#"{"M":8,"efc":40}"#, "--out", "g.pgi"]),
        Some(2)
    );
    assert_eq!(
        code(&["tune", "--dataset", "base.fvecs", "--queries", "q.fvecs", "--index", "hnsw", "--budget", "5", "--batch-size", "10", "--out", "t"]),
        Some(2)
    );
    // a file that exists but is not a graph
    std::fs::write(d.join("junk.pgi"), b"not a graph").unwrap();
    assert_eq!(
        code(&["eval", "--dataset", "base.fvecs", "--queries", "q.fvecs", "--graph", "junk.pgi"]),
        Some(1)
    );
    // dimension mismatch between graph and dataset surfaces at run time
    ok(d, &["gen-data", "--dataset", "other.fvecs", "--n", "1500", "--dim", "4"]);
    ok(d, &["build", "--dataset", "base.fvecs", "--index", "hnsw", "--params", r#"{"M":8,"efc":40}"#, "--out", "g.pgi"]);
    assert_eq!(
        code(&["eval", "--dataset", "other.fvecs", "--queries", "q.fvecs", "--graph", "g.pgi"]),
        Some(1)
    );
}
