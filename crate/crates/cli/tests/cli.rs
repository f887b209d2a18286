use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use conemap_core::pipeline::RunConfig;
use conemap_core::TrackDefinition;
use tempfile::TempDir;

fn conemap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conemap")).args(args).output().expect("spawn conemap")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Runs the fast 12 m/s preset into `dir/name`.
fn quick_run(dir: &TempDir, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.path().join(name);
    let mut args = vec!["run", "--config", "fsg-like-12ms", "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = conemap(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        assert!(conemap(&["generate", "--seed", "7", "--out", s(p)]).status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let track: TrackDefinition = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert!((200.0..=300.0).contains(&track.total_length));
}

#[test]
fn generate_rejects_zero_width() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"kind": "circle", "radius_m": 10, "width_m": 0, "cone_spacing_m": 3}"#).unwrap();
    let out = dir.path().join("t.json");
    let o = conemap(&["generate", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("width"));
    assert!(!out.exists());
}

#[test]
fn noise_free_run_has_zero_rmse() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("nf");
    assert_eq!(conemap(&["run", "--config", "noise-free", "--out", s(&out)]).status.code(), Some(0));
    let report = json(&out.join("report.json"));
    assert!(report["map"]["rmse_m"].as_f64().unwrap() < 1e-9);
    assert_eq!(report["map"]["unmatched_estimated"], 0);
    assert_eq!(report["map"]["unmatched_truth"], 0);
    assert_eq!(json(&out.join("status.json"))["completed_lap"], true);
}

#[test]
fn run_writes_self_describing_artifacts() {
    let dir = TempDir::new().unwrap();
    let out = quick_run(&dir, "r", &["--seed", "3"]);
    for f in [
        "config.json",
        "track.json",
        "snapshots.ndjson",
        "planner.ndjson",
        "graph.json",
        "map.json",
        "map_dead_reckoned.json",
        "report.json",
        "report_summary.csv",
        "report_histograms.csv",
        "timing.json",
        "status.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let config = json(&out.join("config.json"));
    assert_eq!(config["seed"], 3);
    assert!(config["planner"]["prior"]["w_prior"].is_number());
    assert!(config["global_map"]["solver"].is_object());

    // The dumped config reproduces the run on its own.
    let again = dir.path().join("again");
    let o = conemap(&["run", "--config", s(&out.join("config.json")), "--out", s(&again)]);
    assert_eq!(o.status.code(), Some(0));
    let reloaded: RunConfig = serde_json::from_value(config).unwrap();
    assert_eq!(reloaded.seed, 3);
    for f in ["config.json", "snapshots.ndjson", "planner.ndjson", "graph.json", "map.json", "report.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn replay_reproduces_and_compares() {
    let dir = TempDir::new().unwrap();
    let run = quick_run(&dir, "r", &["--verbose-candidates"]);
    let log = run.join("snapshots.ndjson");

    let same = dir.path().join("same");
    assert_eq!(conemap(&["replay", s(&log), "--out", s(&same)]).status.code(), Some(0));
    for f in ["planner.ndjson", "graph.json", "map.json", "report.json"] {
        assert_eq!(fs::read(run.join(f)).unwrap(), fs::read(same.join(f)).unwrap(), "{f} differs");
    }

    let w = json(&run.join("config.json"))["planner"]["prior"]["w_prior"].as_f64().unwrap();
    let doubled = dir.path().join("doubled");
    let o = conemap(&[
        "replay",
        s(&log),
        "--w-prior",
        &(2.0 * w).to_string(),
        "--baseline",
        s(&run.join("planner.ndjson")),
        "--out",
        s(&doubled),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let diffs = json(&doubled.join("selection_diffs.json"));
    let diffs = diffs.as_array().unwrap();
    assert!(!diffs.is_empty());
    assert!(diffs.iter().all(|d| !d["candidate_deltas"].as_array().unwrap().is_empty()));
}

#[test]
fn truncated_log_gives_partial_outputs() {
    let dir = TempDir::new().unwrap();
    let run = quick_run(&dir, "r", &[]);
    let full = fs::read_to_string(run.join("snapshots.ndjson")).unwrap();
    let lines: Vec<&str> = full.lines().collect();
    let cut = lines[..20].join("\n") + "\n" + &lines[20][..lines[20].len() / 2];
    let log = dir.path().join("cut.ndjson");
    fs::write(&log, cut).unwrap();

    let out = dir.path().join("partial");
    let o = conemap(&["replay", s(&log), "--config", "fsg-like-12ms", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncated"));
    let planner = fs::read_to_string(out.join("planner.ndjson")).unwrap();
    assert_eq!(planner.lines().count(), 1 + 19);
}

#[test]
fn replay_rejects_other_schemas() {
    let dir = TempDir::new().unwrap();
    let run = quick_run(&dir, "r", &[]);
    let out = dir.path().join("x");
    let o = conemap(&["replay", s(&run.join("planner.ndjson")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    assert_eq!(conemap(&["run", "--config", "no-such-preset", "--out", s(&out)]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"planner": {"p_floor": 0}}"#).unwrap();
    assert_eq!(conemap(&["run", "--config", s(&bad), "--out", s(&out)]).status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    let o = conemap(&["run", "--track", s(&missing), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn camera_failure_completes_degraded_lap() {
    let dir = TempDir::new().unwrap();
    let schedule = dir.path().join("schedule.json");
    fs::write(&schedule, r#"[{"time_s": 10, "pipeline": "camera", "alive": false}]"#).unwrap();
    let out = dir.path().join("r");
    let o = conemap(&[
        "run",
        "--config",
        "degraded-5ms",
        "--mode-schedule",
        s(&schedule),
        "--closed-loop",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out.join("status.json"))["completed_lap"], true);
}

#[test]
fn eval_matches_run_report() {
    let dir = TempDir::new().unwrap();
    let run = quick_run(&dir, "r", &[]);
    let out = dir.path().join("eval");
    let o = conemap(&[
        "eval",
        "--track",
        s(&run.join("track.json")),
        "--map",
        s(&run.join("map.json")),
        "--dead-reckoned-map",
        s(&run.join("map_dead_reckoned.json")),
        "--planner-log",
        s(&run.join("planner.ndjson")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(run.join("report.json")).unwrap(), fs::read(out.join("report.json")).unwrap());
}
