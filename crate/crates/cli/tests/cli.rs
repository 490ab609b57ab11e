use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn higt(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_higt"))
        .args(args)
        .output()
        .expect("spawn higt");
    assert!(
        out.status.success(),
        "higt {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a small simulated instance into `dir/data`.
fn simulated(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("sim.json");
    std::fs::write(
        &cfg,
        r#"{"n": 80, "j": 60, "k": 4, "nonzero_count": 12, "seed": 5}"#,
    )
    .unwrap();
    let data = dir.join("data");
    higt(&["simulate", "--config", p(&cfg), "--out", p(&data)]);
    data
}

#[test]
fn simulate_writes_all_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    for f in ["x.csv", "y.csv", "groups.txt", "btrue.csv", "meta.json"] {
        assert!(data.join(f).exists(), "{f} missing");
    }
    let x = std::fs::read_to_string(data.join("x.csv")).unwrap();
    assert!(x.starts_with("# rows=60 cols=80\n"));
    let b = std::fs::read_to_string(data.join("btrue.csv")).unwrap();
    assert!(b.starts_with("# rows=4 cols=60\n"));
    let groups = std::fs::read_to_string(data.join("groups.txt")).unwrap();
    assert!(groups.lines().any(|l| l.starts_with("g 1 : 1,")));
    assert!(groups.lines().any(|l| l.starts_with("h ")));
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["true_nonzeros"], 12);
    assert_eq!(meta["config"]["nonzero_value"], 3.0);

    // Same seed, same bytes.
    let again = dir.path().join("again");
    higt(&[
        "simulate",
        "--config",
        p(&dir.path().join("sim.json")),
        "--out",
        p(&again),
    ]);
    for f in ["x.csv", "y.csv", "groups.txt", "btrue.csv"] {
        assert_eq!(
            std::fs::read(data.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap()
        );
    }
}

#[test]
fn screen_reports_counts_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let (x, y, g) = (
        data.join("x.csv"),
        data.join("y.csv"),
        data.join("groups.txt"),
    );
    let base = [
        "screen",
        "--x",
        p(&x),
        "--y",
        p(&y),
        "--groups",
        p(&g),
        "--lambda-units",
        "per-sample",
        "--block-inputs",
        "2",
        "--block-outputs",
        "2",
    ];
    let run = |lam: &str, safe: bool| {
        let mut args = base.to_vec();
        args.extend(["--lambda1", lam, "--lambda2", lam, "--lambda3", lam]);
        if safe {
            args.push("--safe");
        }
        json(&higt(&args))
    };
    let low = run("0.0", false);
    let high = run("0.9", true);
    for key in [
        "survivor_group_counts",
        "survivor_coefficient_count",
        "nodes_visited",
        "nodes_skipped",
        "wall_time_ms",
    ] {
        assert!(low.get(key).is_some(), "missing {key}");
    }
    assert_eq!(low["survivor_coefficient_count"], 240);
    assert_eq!(high["survivor_coefficient_count"], 0);
    assert!(high["nodes_skipped"].as_u64().unwrap() > 0);
    assert_eq!(
        high["survivor_group_counts"]["penalty_groups"].as_u64(),
        Some(0)
    );
    assert!(high["audit"]["violations"].as_array().unwrap().is_empty());
    assert!(low.get("audit").is_none());
}

#[test]
fn fit_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let cfg = dir.path().join("fit.json");
    std::fs::write(&cfg, r#"{"solver": {"rel_obj_tol": 1e-10}}"#).unwrap();
    let prefix = dir.path().join("out/run");
    higt(&[
        "fit",
        "--x",
        p(&data.join("x.csv")),
        "--y",
        p(&data.join("y.csv")),
        "--groups",
        p(&data.join("groups.txt")),
        "--lambda1",
        "0.1",
        "--lambda2",
        "0.1",
        "--lambda3",
        "0.1",
        "--lambda-units",
        "per-sample",
        "--config",
        p(&cfg),
        "--out",
        p(&prefix),
    ]);
    let beta = dir.path().join("out/run.beta.csv");
    let result: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/run.result.json")).unwrap(),
    )
    .unwrap();
    assert!(std::fs::read_to_string(&beta)
        .unwrap()
        .starts_with("# rows=4 cols=60\n"));
    assert_eq!(result["solver"]["rel_obj_tol"], 1e-10);
    assert_eq!(result["lambda"]["lambda1"], 8.0);
    let trace: Vec<f64> = result["objective_trace"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert_eq!(
        trace.len(),
        result["iterations"].as_u64().unwrap() as usize + 1
    );
    for key in ["screen_time_ms", "solve_time_ms", "converged", "survivor"] {
        assert!(result.get(key).is_some(), "missing {key}");
    }

    let score = json(&higt(&[
        "eval",
        "--est",
        p(&beta),
        "--truth",
        p(&data.join("btrue.csv")),
        "--threshold",
        "1e-6",
    ]));
    let (tp, fp, fn_) = (
        score["true_positives"].as_f64().unwrap(),
        score["false_positives"].as_f64().unwrap(),
        score["false_negatives"].as_f64().unwrap(),
    );
    assert_eq!(tp + fn_, 12.0);
    let f1 = score["f1"].as_f64().unwrap();
    assert!((f1 - 2.0 * tp / (2.0 * tp + fp + fn_)).abs() < 1e-12);

    // Self-evaluation is perfect.
    let same = json(&higt(&["eval", "--est", p(&beta), "--truth", p(&beta)]));
    assert_eq!(same["f1"], 1.0);
}

#[test]
fn bench_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(
        &grid,
        r#"{"values": [0.05, 0.2], "replicates": 2, "jobs": 1,
            "fixed": {"n": 40, "j": 50, "k": 3, "nonzero_count": 6}}"#,
    )
    .unwrap();
    let out = dir.path().join("report.csv");
    let stdout = higt(&["bench", "--grid", p(&grid), "--out", p(&out)]);
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, higt_bench::SUMMARY_COLUMNS);
    assert_eq!(lines.count(), 4);
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.starts_with("| lambda |"));
    assert_eq!(String::from_utf8(stdout.stdout).unwrap(), md);
    assert!(dir.path().join("report.records.csv").exists());
}

#[test]
fn tree_dump_lists_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let groups = dir.path().join("groups.txt");
    std::fs::write(&groups, "g 1 : 1,2,3\ng 2 : 3,4\nh 1 : 1,2\nh 2 : 2,3\n").unwrap();
    let out = higt(&["tree", "dump", "--groups", p(&groups)]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // Root, one internal node, four leaves.
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("root"));
    assert!(lines[1]
        .trim_start()
        .starts_with("internal g=[1,2] h=[1,2]"));
    assert_eq!(
        lines
            .iter()
            .filter(|l| l.trim_start().starts_with("leaf"))
            .count(),
        4
    );
    assert!(lines[2].contains("coefficients=6"));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    std::fs::write(&x, "# rows=2 cols=3\n1,2,3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_higt"))
        .args([
            "fit",
            "--x",
            p(&x),
            "--y",
            p(&x),
            "--groups",
            p(&x),
            "--out",
            "unused",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).contains("panicked"));
}
