use std::fs;
use std::path::Path;

use fedsched::task_model::validate_task_set;
use fedsched::{ExactTime, TaskSet};
use fedsched_cli::{run, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK};
use serde_json::Value;

struct Outcome {
    code: u8,
    stdout: String,
    stderr: String,
}

fn fedsched(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("fedsched").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn generate_into(dir: &Path, m: &str, n: &str, k: &str) -> String {
    let path = dir.join(format!("ce_{m}_{n}_{k}.json")).display().to_string();
    let o = fedsched(&["generate", "--M", m, "--N", n, "--K", k, "-o", &path]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.is_empty());
    path
}

#[test]
fn generate_round_trips_through_the_parser() {
    let o = fedsched(&["generate", "--M", "10", "--N", "10", "--K", "2"]);
    assert_eq!(o.code, EXIT_OK);
    let ts = TaskSet::from_json(&o.stdout).unwrap();
    assert_eq!(ts.len(), 10);
    assert!(validate_task_set(&ts).is_valid());
    assert_eq!(ts.tasks[9].wcet_total, ExactTime::from(2560));
    assert_eq!(ts.tasks[9].deadline, ExactTime::from(512));
    assert_eq!(TaskSet::from_json(&ts.to_json()).unwrap(), ts);

    let dir = tempfile::tempdir().unwrap();
    let path = generate_into(dir.path(), "10", "10", "2");
    assert_eq!(TaskSet::from_json(&fs::read_to_string(path).unwrap()).unwrap(), ts);
}

#[test]
fn validate_reports_valid_and_invalid_sets() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_into(dir.path(), "3", "3", "2");
    let o = fedsched(&["validate", "-i", &path]);
    assert_eq!(o.code, EXIT_OK);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["valid"], true);

    let cyclic = r#"{"name":"c","tasks":[{"id":1,"wcet":"2","deadline":"4","period":null,
        "subtasks":[{"id":1,"wcet":"1"},{"id":2,"wcet":"1"}],"edges":[[1,2],[2,1]]}]}"#;
    let bad = dir.path().join("cyclic.json");
    fs::write(&bad, cyclic).unwrap();
    let o = fedsched(&["validate", "-i", bad.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_INFEASIBLE);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["valid"], false);
    assert_eq!(v["violations"][0]["kind"], "cycle");
}

#[test]
fn federate_prints_the_demand_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_into(dir.path(), "10", "10", "2");
    let o = fedsched(&["federate", "-i", &path, "--speed", "4999/1000", "--processors", "10"]);
    assert_eq!(o.code, EXIT_INFEASIBLE, "{}", o.stderr);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "infeasible");
    assert_eq!(v["reason"], "heavy_overflow");
    assert_eq!(v["heavy_demand_lower_bound"], "21");
    assert!(o.stderr.contains("21"));

    let o = fedsched(&["federate", "-i", &path, "--speed", "10", "--processors", "10"]);
    assert_eq!(o.code, EXIT_OK);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "feasible");
}

#[test]
fn analyze_canonical_partition_is_feasible_at_unit_speed() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_into(dir.path(), "10", "10", "2");
    let o = fedsched(&["analyze", "-i", &path, "--speed", "1", "--processors", "10"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "feasible");
    let procs = v["processors"].as_array().unwrap();
    assert_eq!(procs.len(), 10);
    // demand meets supply exactly at every deadline
    for row in procs[0]["demand"].as_array().unwrap() {
        assert_eq!(row["demand"], row["supply"]);
    }

    let o = fedsched(&["analyze", "-i", &path, "--speed", "999/1000", "--processors", "10"]);
    assert_eq!(o.code, EXIT_INFEASIBLE);
}

#[test]
fn simulate_emits_csv_and_miss_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_into(dir.path(), "2", "2", "2");
    let o = fedsched(&["simulate", "-i", &path, "--speed", "1", "--processors", "2"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let mut lines = o.stdout.lines();
    assert_eq!(lines.next(), Some("processor,task,subtask,start,end"));
    assert!(o.stdout.contains("1,1,1,0,1\n"));
    assert!(o.stdout.contains("# misses: 0"));

    let o = fedsched(&["simulate", "-i", &path, "--speed", "1/2", "--processors", "2"]);
    assert_eq!(o.code, EXIT_INFEASIBLE);
    assert!(o.stdout.contains("miss,1,0,1,2"));
}

#[test]
fn sweep_rows_respect_the_bound() {
    let o = fedsched(&["sweep", "--grid", "2,2,2;3,2,3", "--precision", "1/256"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let lines: Vec<_> = o.stdout.lines().collect();
    assert_eq!(lines[0], "M,N,K,theorem_bound,s_star_lo,s_star_hi,optimal_feasible_at_1");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,2,2,1,"));
    assert!(lines[1].ends_with(",true"));
}

#[test]
fn input_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = fedsched(&["validate", "-i", missing.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_ERROR);
    assert_eq!(o.stderr.lines().count(), 1);

    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"name":"x","tasks":[{"id":1,"wcet":"1","deadline":"1.5","period":null,"subtasks":[{"id":1,"wcet":"1"}]}]}"#,
    )
    .unwrap();
    let o = fedsched(&["federate", "-i", bad.to_str().unwrap(), "--speed", "1", "--processors", "2"]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.stderr.contains("tasks[0].deadline"), "{}", o.stderr);
    assert_eq!(o.stderr.lines().count(), 1);

    let o = fedsched(&["analyze", "-i", bad.to_str().unwrap(), "--speed", "1.5", "--processors", "2"]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.stderr.contains("--speed"));

    let o = fedsched(&["generate", "--M", "1", "--N", "3", "--K", "2"]);
    assert_eq!(o.code, EXIT_ERROR);

    let path = generate_into(dir.path(), "3", "2", "2");
    let o = fedsched(&["analyze", "-i", &path, "--speed", "1", "--processors", "2"]);
    assert_eq!(o.code, EXIT_ERROR, "subtask count differs from processor count");

    let o = fedsched(&["sweep", "--grid", "2,2", "--precision", "1/8"]);
    assert_eq!(o.code, EXIT_ERROR);
    let o = fedsched(&["frobnicate"]);
    assert_eq!(o.code, EXIT_ERROR);
}
