use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value as Json;
use vecagree_core::sim::{init_sim, run_to_completion, write_trace_jsonl, CrashSpec, RandomConfig, RandomScheduler};
use vecagree_core::{ProcessId, Value};

fn vecagree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vecagree")).args(args).env_remove("VECAGREE_OUT_DIR").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("process exited normally")
}

fn read_json(p: &Path) -> Json {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn explore_clean_campaign_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = vecagree(&[
        "explore",
        "--n",
        "5",
        "--inputs",
        "11001",
        "--runs",
        "1000",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out);
    assert_eq!(report["runs"], 1000);
    assert!(report["violations"].as_array().unwrap().is_empty());
    let manifest = read_json(&dir.path().join("report.json.manifest.json"));
    assert_eq!(manifest["command"], "explore");
    assert_eq!(manifest["seeds"], serde_json::json!([7]));
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn explore_is_reproducible() {
    let a = vecagree(&["explore", "--inputs", "10110", "--runs", "50", "--seed", "3", "--crash", "sweep"]);
    let b = vecagree(&["explore", "--inputs", "10110", "--runs", "50", "--seed", "3", "--crash", "sweep"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&vecagree(&["explore", "--inputs", "1100", "--n", "5"])), 2);
    assert_eq!(code(&vecagree(&["explore", "--inputs", "11001", "--crash", "sometimes"])), 2);
    assert_eq!(code(&vecagree(&["explore", "--inputs", "11001", "--n", "4"])), 2);
    assert_eq!(code(&vecagree(&["sweep", "--tie", "2"])), 2);
    assert_eq!(code(&vecagree(&["frobnicate"])), 2);
}

#[test]
fn out_dir_env_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vecagree"))
        .args(["scenarios", "--filter", "no-crash", "--tail-seeds", "1", "--out", "s.json"])
        .env("VECAGREE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("s.json").exists());
    assert!(dir.path().join("s.json.manifest.json").exists());
}

#[test]
fn manifest_flag_prints_to_stderr() {
    let o = vecagree(&["scenarios", "--filter", "a", "--tail-seeds", "0", "--manifest"]);
    assert_eq!(code(&o), 0);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("\"result_digest\""), "{err}");
    let report: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["runs"].as_u64().unwrap() >= 1);
}

#[test]
fn exhaustive_budget_exceeded_exits_one() {
    let o = vecagree(&["exhaustive", "--window", "2", "--crash", "none", "--budget", "500"]);
    assert_eq!(code(&o), 1);
    let report: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["placements"][0]["complete"], false);
}

#[test]
fn exhaustive_window_one_has_one_terminal_per_placement() {
    let o = vecagree(&["exhaustive", "--window", "1"]);
    assert_eq!(code(&o), 0);
    let report: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["terminals"], 26);
}

#[test]
fn sweep_smoke_partition_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = vecagree(&["sweep", "--smoke-f1", "0", "--workers", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "row,count");
    assert_eq!(lines[1], "Combinations with 4 Faulty Links = 20C16,4845");
    assert_eq!(lines[2], "Configurations Explored = 20C16 x 20C16,4845");
    assert_eq!(lines.len(), 7);
    let manifest = read_json(&dir.path().join("t.csv.manifest.json"));
    assert_eq!(manifest["params"]["smoke_f1"], 0);
}

#[test]
fn sweep_rejects_out_of_range_partition() {
    assert_eq!(code(&vecagree(&["sweep", "--smoke-f1", "4845"])), 2);
}

#[test]
fn sweep_checkpoint_resume_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("cp.json");
    let cp = cp.to_str().unwrap();
    let first = vecagree(&["sweep", "--checkpoint", cp]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let stored = read_json(Path::new(cp));
    assert_eq!(stored["tally"]["total"], 4845u64 * 4845);

    let resumed = vecagree(&["sweep", "--checkpoint", cp, "--resume"]);
    assert_eq!(code(&resumed), 0);
    assert_eq!(first.stdout, resumed.stdout);

    let other = vecagree(&["sweep", "--inputs", "11100", "--checkpoint", cp, "--resume"]);
    assert_eq!(code(&other), 2, "{}", String::from_utf8_lossy(&other.stderr));

    std::fs::write(cp, "{\"format\": \"vecagree-sweep-checkpoint\", \"version\"").unwrap();
    assert_eq!(code(&vecagree(&["sweep", "--checkpoint", cp, "--resume"])), 3);
}

#[test]
fn profile_reports_nearest_when_target_is_unreachable() {
    let o = vecagree(&["profile", "--target", "134,209"]);
    assert_eq!(code(&o), 0);
    let r: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["matches"].as_array().unwrap().is_empty());
    assert_eq!(r["nearest"].as_array().unwrap().len(), 32);
    assert_eq!(r["profile"]["total"], 4845u64 * 4845);
    assert_eq!(code(&vecagree(&["profile", "--target", "134"])), 2);
}

#[test]
fn reduce_unanimity_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"P1": ["1","1",null,"0","1"], "P2": ["1","1",null,"0","1"]}"#).unwrap();
    assert_eq!(code(&vecagree(&["reduce", "--decisions", good.to_str().unwrap()])), 0);

    let split = dir.path().join("split.json");
    std::fs::write(&split, r#"{"decisions": [["1","1",null,"0","0"], ["1","1","0","0","0"], null]}"#).unwrap();
    let o = vecagree(&["reduce", "--decisions", split.to_str().unwrap(), "--tie", "1"]);
    assert_eq!(code(&o), 1);
    let r: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["bits"]["1"], true);
    assert_eq!(r["bits"]["2"], false);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"P1\": [\"1\", ").unwrap();
    assert_eq!(code(&vecagree(&["reduce", "--decisions", bad.to_str().unwrap()])), 3);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&vecagree(&["reduce", "--decisions", missing.to_str().unwrap()])), 3);
}

#[test]
fn replay_of_exported_trace_passes() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("run.jsonl");
    let inputs = Value::parse_bits("11001").unwrap();
    let crash = CrashSpec::at(ProcessId::from_slot(1), 2);
    let mut sim = init_sim(5, &inputs, crash, 0).unwrap();
    let mut sched = RandomScheduler::new(RandomConfig::with_seed(11), 5);
    run_to_completion(&mut sim, &mut sched).unwrap();
    write_trace_jsonl(sim.trace(), std::fs::File::create(&trace).unwrap()).unwrap();

    let t = trace.to_str().unwrap();
    let o = vecagree(&["replay", "--inputs", "11001", "--crash", "P2@2", "--trace", t]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["violations"].as_array().unwrap().is_empty());

    let out = dir.path().join("replayed.json");
    let o = vecagree(&["replay", "--inputs", "11001", "--crash", "P2@2", "--trace", t, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&vecagree(&["reduce", "--decisions", out.to_str().unwrap()])), 0);

    let wrong = vecagree(&["replay", "--inputs", "11001", "--crash", "none", "--trace", t]);
    assert_ne!(code(&wrong), 0);
}
