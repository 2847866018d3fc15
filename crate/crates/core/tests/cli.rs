use std::process::Command;

fn caltrace() -> Command {
    Command::new(env!("CARGO_BIN_EXE_caltrace"))
}

#[test]
fn bench_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("depth.csv");
    let status = caltrace()
        .args([
            "bench",
            "--experiment",
            "depth",
            "--levels",
            "2,4",
            "--iterations",
            "5",
            "--warmup",
            "1",
        ])
        .args(["--mode", "both", "--seed", "9", "--no-assert", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("model,experiment,levels,branches,conflict_size,trial,eval_time_ns")
    );
    assert_eq!(lines.count(), 2 * 2 * 5);

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("depth.manifest.json")).unwrap(),
    )
    .unwrap();
    for key in ["os", "cpu_model", "memory_bytes"] {
        assert!(manifest["hardware"].get(key).is_some(), "missing {key}");
    }
    assert_eq!(manifest["spec"]["seed"], 9);
    assert_eq!(manifest["spec"]["warmup"], 1);

    let summary = caltrace().arg("summarize").arg(&out).output().unwrap();
    assert!(summary.status.success());
    let text = String::from_utf8(summary.stdout).unwrap();
    assert!(text.contains("speedup levels=4"), "{text}");
}

#[test]
fn conflict_sweep_accepts_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let run = caltrace()
        .args([
            "bench",
            "--experiment",
            "conflict",
            "--sizes",
            "1..9:4",
            "--iterations",
            "2",
            "--warmup",
            "0",
        ])
        .args(["--no-assert", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let sizes: std::collections::BTreeSet<String> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().to_string())
        .collect();
    assert_eq!(sizes.into_iter().collect::<Vec<_>>(), ["1", "5", "9"]);
}

#[test]
fn service_transport_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let run = caltrace()
        .args([
            "bench",
            "--experiment",
            "branching",
            "--levels",
            "3",
            "--branches",
            "1,2",
        ])
        .args([
            "--iterations",
            "3",
            "--warmup",
            "1",
            "--transport",
            "service",
            "--no-assert",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(
        std::fs::read_to_string(&out).unwrap().lines().count(),
        1 + 2 * 2 * 3
    );
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let run = caltrace()
        .args(["bench", "--experiment", "depth", "--levels", "0", "--out"])
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(1));
    let run = caltrace()
        .args(["summarize", "/nonexistent.csv"])
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn gen_writes_a_replayable_fixture_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fixture.json");
    let run = caltrace()
        .args([
            "gen",
            "--levels",
            "4",
            "--branches",
            "2",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["params", "seed", "prng", "universe", "devices", "reports"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["reports"].as_array().unwrap().len(), 1 + 2 + 4 + 8);
    let fixture = caltrace::conflict::Fixture::read_json(&out).unwrap();
    assert_eq!(fixture.into_store().unwrap().report_count(), 15);
}
