use std::process::{Command, Output};

use axum::body::{to_bytes, Body};
use axum::http::Request;
use tower::ServiceExt;
use vlaperf::catalog::Catalog;

fn vlaperf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlaperf")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

async fn post(uri: &str, body: &str) -> String {
    let req = Request::post(uri).body(Body::from(body.to_string())).unwrap();
    let resp = vlaperf::service::router(Catalog::bundled()).oneshot(req).await.unwrap();
    String::from_utf8(to_bytes(resp.into_body(), 1 << 20).await.unwrap().to_vec()).unwrap()
}

#[tokio::test]
async fn rank_doc_is_byte_identical_to_the_service() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        r#"{"model": "pi0"}"#,
        r#"{"model": "pi0", "policy": {"mode": "cost_priority"}}"#,
        r#"{"model": "pi0", "constraint": {"required_hz": 2}, "policy": {"mode": "ce", "weights": {"cost": 2}}}"#,
    ] {
        let path = dir.path().join("req.json");
        std::fs::write(&path, body).unwrap();
        let out = vlaperf(&["--format", "doc", "rank", "--request", path.to_str().unwrap()]);
        assert!(out.status.success());
        assert_eq!(stdout(&out), post("/api/rank", body).await);
    }
    // flags build the same request
    let out = vlaperf(&["rank", "--model", "pi0", "--policy", "energy", "--format", "doc"]);
    assert_eq!(stdout(&out), post("/api/rank", r#"{"model": "pi0", "policy": {"mode": "energy_priority"}}"#).await);
}

#[test]
fn exit_codes() {
    assert_eq!(vlaperf(&["rank", "--model", "pi0"]).status.code(), Some(0));
    assert_eq!(vlaperf(&["rank", "--model", "pi0", "--hz", "-1"]).status.code(), Some(1));
    assert_eq!(vlaperf(&["rank", "--model", "nope"]).status.code(), Some(1));
    assert_eq!(vlaperf(&["rank"]).status.code(), Some(1));
    assert_eq!(vlaperf(&["--format", "yaml", "rank", "--model", "pi0"]).status.code(), Some(1));
    let none = vlaperf(&["rank", "--model", "pi0", "--hz", "50"]);
    assert_eq!(none.status.code(), Some(2));
    assert!(stdout(&none).contains("no feasible pair"));
    assert_eq!(vlaperf(&["--help"]).status.code(), Some(0));
}

#[test]
fn roofline_table() {
    let out = stdout(&vlaperf(&["roofline", "--hw", "4090", "--model", "pi0"]));
    assert!(out.contains("ridge 330.00"), "{out}");
    assert!(out.contains("memory-bound"));
}

#[test]
fn simulate_writes_events() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("ev.csv");
    let out = vlaperf(&[
        "--format", "doc", "simulate", "--model", "pi0", "--hw", "Orin", "--schedule", "fused",
        "--events", events.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["schedule"]["kind"], "fused");
    let log = vlaperf::events::EventLog::read_csv(std::fs::File::open(&events).unwrap(), "ev.csv").unwrap();
    assert!(!log.is_empty());
    assert_eq!(vlaperf(&["simulate", "--model", "pi0", "--hw", "Orin", "--schedule", "warp"]).status.code(), Some(1));
}

#[test]
fn dpcache_and_fuse_reports() {
    let out = vlaperf(&["--format", "doc", "--seed", "1", "dpcache", "--repeats", "1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["l1_rel_series"].as_array().unwrap().len(), 99);
    assert_eq!(v["computed_steps"].as_u64().unwrap() + v["skipped_steps"].as_u64().unwrap(), 100);

    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = vlaperf(&[
        "--format", "doc", "fuse", "--cycles", "3", "--backbone-ms", "0", "--trace", trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["ordering_safe"], true);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("cycle,worker,phase,start_us,end_us,staleness\n"));
    assert_eq!(vlaperf(&["fuse", "--stale-steps", "11"]).status.code(), Some(1));
}

#[test]
fn ingest_power_and_custom_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    std::fs::write(&csv, "t_s,power_w\n0,100\n10,100\n").unwrap();
    let out = vlaperf(&["--format", "doc", "ingest-power", csv.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["energy_kj"], 1.0);
    std::fs::write(&csv, "t_s,power_w\n10,100\n0,100\n").unwrap();
    let out = vlaperf(&["ingest-power", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":3:"));

    let cat_dir = dir.path().join("cat");
    Catalog::bundled().write_dir(&cat_dir).unwrap();
    let a = vlaperf(&["--catalog", cat_dir.to_str().unwrap(), "rank", "--model", "pi0"]);
    let b = vlaperf(&["rank", "--model", "pi0"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(vlaperf(&["--catalog", "/nonexistent", "rank", "--model", "pi0"]).status.code(), Some(1));
}
