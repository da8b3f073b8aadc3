use std::path::Path;
use std::process::{Command, Output};

fn duopoly(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duopoly"))
        .args(args)
        .env_remove("DUOPOLY_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn equilibrium_prints_logit_values() {
    let o = duopoly(&["equilibrium", "--market", "logit"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    for (key, want) in [
        ("nash_price", 1.473),
        ("monopoly_price", 1.925),
        ("nash_profit", 0.223),
        ("monopoly_profit", 0.337),
    ] {
        let got = v[key].as_f64().unwrap();
        assert!((got - want).abs() < 1e-3, "{key}: {got}");
    }
    let o = duopoly(&["equilibrium", "--market", "edgeworth", "--format", "csv"]);
    assert_eq!(stdout(&o).lines().nth(1), Some("edgeworth,0,0.5,0,0.125"));
    let o = duopoly(&["equilibrium", "--set", "market.substitutability=0.5"]);
    assert!(json(&o)["nash_price"].as_f64().unwrap() > 1.473);
}

#[test]
fn usage_errors_exit_one() {
    let o = duopoly(&["run", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    let o = duopoly(&["run"]);
    assert_eq!(o.status.code(), Some(1));
    let o = duopoly(&["batch", "--algorithm", "tql", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--no-such-flag"));
    assert!(o.stdout.is_empty());
    let o = duopoly(&["run", "--algorithm", "tql", "--steps", "10"]);
    assert_eq!(o.status.code(), Some(1));
    let o = duopoly(&["run", "--algorithm", "tql", "--set", "tql.bogus=1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = duopoly(&["tune", "--algorithm", "tql", "--market", "standard"]);
    assert_eq!(o.status.code(), Some(1));
    let o = duopoly(&["report", "/definitely/not/here"]);
    assert_eq!(o.status.code(), Some(1));
    let o = duopoly(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("replicate"));
}

#[test]
fn invalid_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, "{\"algorithm\": \"nope\"}").unwrap();
    let o = duopoly(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

fn digest(dir: &Path, args: &[&str]) -> String {
    let mut all = vec!["run", "--out", dir.to_str().unwrap()];
    all.extend_from_slice(args);
    let o = duopoly(&all);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    json(&o)["trace_digest"].as_str().unwrap().to_string()
}

#[test]
fn run_from_config_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("experiment.json");
    std::fs::write(
        &cfg,
        r#"{"market": {"variant": "standard"}, "algorithm": "tql", "steps": 12000, "seeds": [5]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let d1 = digest(&out, &["--config", cfg.to_str().unwrap()]);
    let d2 = digest(
        &dir.path().join("out2"),
        &["--config", cfg.to_str().unwrap(), "--seed", "5"],
    );
    assert_eq!(d1, d2);
    let d3 = digest(
        &dir.path().join("out3"),
        &["--config", cfg.to_str().unwrap(), "--seed", "6"],
    );
    assert_ne!(d1, d3);

    let trace = std::fs::read_to_string(out.join("runs/seed_5.trace.csv")).unwrap();
    assert!(trace.starts_with("# config_hash="));
    assert_eq!(trace.lines().nth(1), Some("t,p0,p1,d0,d1,r0,r1"));

    let o = duopoly(&["report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["runs"][0]["matches"], serde_json::Value::Bool(true));
    let stored: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("runs/seed_5.result.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(v["runs"][0]["recomputed"], stored["classification"]);
}

#[test]
fn batch_digests_ignore_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = Command::new(env!("CARGO_BIN_EXE_duopoly"))
            .args([
                "batch",
                "--algorithm",
                "tql",
                "--steps",
                "10000",
                "--seeds",
                "4",
                "--format",
                "csv",
            ])
            .args(["--out", out.to_str().unwrap()])
            .env("DUOPOLY_WORKERS", workers)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        let digests: Vec<String> = stdout(&o)
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().to_string())
            .collect();
        assert_eq!(digests.len(), 4);
        assert!(out.join("summary.json").is_file());
        assert!(out.join("heatmap_log.csv").is_file());
        digests
    };
    assert_eq!(run("1", "a"), run("8", "b"));
}

#[test]
fn tune_reports_every_grid_point() {
    let o = duopoly(&[
        "tune",
        "--algorithm",
        "tql",
        "--steps",
        "12000",
        "--alphas",
        "0.1,0.2",
        "--gammas",
        "0",
        "--repetitions",
        "2",
        "--workers",
        "2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v = json(&o);
    assert_eq!(v.as_array().unwrap().len(), 2);
}
