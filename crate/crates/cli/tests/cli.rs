use std::path::Path;
use std::process::{Command, Output};

fn mpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpo")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = mpo(&["generate", "--topology", "supernode", "--n", "500", "--seed", "1", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |d: &Path| std::fs::read(d.join("supernode_edges.txt")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert!(!read(&a).is_empty());
}

#[test]
fn check_flags_an_overloaded_node() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = mpo(&["generate", "--topology", "mpo", "--n", "200", "--seed", "3", "--out", path(out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let snap = out.join("mpo_snapshot.json");
    assert_eq!(mpo(&["check", path(&snap)]).status.code(), Some(0));

    // Wire one normal node to d + 5 others.
    let text = std::fs::read_to_string(&snap).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let d = v["d"].as_u64().unwrap();
    let keys: Vec<u64> = v["nodes"].as_array().unwrap().iter().map(|n| n["key"].as_u64().unwrap()).collect();
    let hub = keys[0];
    let edges = v["edges"].as_array_mut().unwrap();
    for &k in keys.iter().rev().take(d as usize + 5) {
        edges.push(serde_json::json!([hub.min(k), hub.max(k)]));
    }
    let bad = out.join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let o = mpo(&["check", path(&bad)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = mpo(&["run", "--config", "/nonexistent/exp.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exp.toml"));
}

#[test]
fn unknown_flag_prints_usage() {
    let o = mpo(&["run", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn run_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "n = 120\nseeds = [4]\nn_queries = 50\nttls = [1, 2]\nchurn_fractions = [0.0, 0.5]\n\
         mpo_d = 4\nrtpl_omega = 8.0\nsupernode_sp_links = 3\nsqrt_d_max = 20\nsqrt_warmup_queries = 200\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = mpo(&["run", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fig8 = std::fs::read_to_string(out.join("fig8_disturbance.csv")).unwrap();
    assert_eq!(fig8.lines().count(), 121);

    let again = dir.path().join("again");
    let o = mpo(&["report", path(&out.join("report.json")), "--out", path(&again)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["fig4_degrees.csv", "fig5_success.csv", "fig9_churn.csv"] {
        assert_eq!(
            std::fs::read(out.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}
