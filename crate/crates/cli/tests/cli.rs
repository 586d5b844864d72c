//! Scenario loading, task runs and the binary's exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

use hooploop::scenario::Reason;
use hooploop::{load_scenario, run_tasks, run_tasks_with_threads, Report, Scenario, ScenarioError};
use hooploop_core::hoops::HoopError;

const EXAMPLE: &str = include_str!("../../../docs/example_scenario.json");

fn graph_with(loops: &str, tasks: &str) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "graph": {{
    "vertices": ["v0", "v1"],
    "edges": [
      {{"id": "e1", "source": "v0", "target": "v1"}},
      {{"id": "e2", "source": "v1", "target": "v0"}}
    ],
    "basepoint": "v0"
  }},
  "loops": {{{loops}}},
  "functions": {{"one": {{"kind": "wilson", "loops": [], "terms": [{{"coeff": 1.0, "powers": []}}]}}}},
  "tasks": [{tasks}]
}}"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn validation(text: &str) -> (String, Reason) {
    match Scenario::from_json(text, None) {
        Err(ScenarioError::Validation { entity, reason }) => (entity, reason),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn minimal_file_has_one_edge() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "s.json",
        r#"{"schema_version": 1,
            "graph": {"vertices": ["v"], "edges": [{"id": "e1", "source": "v", "target": "v"}], "basepoint": "v"},
            "loops": {"a": "e1"}}"#,
    );
    let s = load_scenario(&p).unwrap();
    assert_eq!(s.n_edges(), 1);
    assert_eq!(s.graph.format_word(&s.loops["a"]), "e1");
}

#[test]
fn unknown_edge_names_the_loop() {
    let (entity, reason) = validation(&graph_with(r#""good": "e1 e2", "bad": "e1 e7""#, ""));
    assert_eq!(entity, "loop `bad`");
    assert_eq!(reason, Reason::Hoop(HoopError::UnknownEdge("e7".into())));
}

#[test]
fn open_word_is_not_closed() {
    let (entity, reason) = validation(&graph_with(r#""half": "e1""#, ""));
    assert_eq!(entity, "loop `half`");
    assert_eq!(reason, Reason::Hoop(HoopError::NotClosed));
}

#[test]
fn dangling_references_are_rejected() {
    let (entity, reason) =
        validation(&graph_with("", r#"{"kind": "integrate", "name": "t", "function": "missing"}"#));
    assert_eq!(entity, "task `t`");
    assert_eq!(reason, Reason::Unresolved { what: "function", name: "missing".into() });
    let (entity, _) = validation(&graph_with(
        "",
        r#"{"kind": "sup-norm", "name": "x", "function": "one"}, {"kind": "sup-norm", "name": "x", "function": "one"}"#,
    ));
    assert_eq!(entity, "task `x`");
}

#[test]
fn unknown_field_is_a_parse_error() {
    let text = graph_with("", r#"{"kind": "integrate", "name": "t", "function": "one", "samples": 5}"#);
    assert!(matches!(Scenario::from_json(&text, None), Err(ScenarioError::Parse { .. })));
}

#[test]
fn integrating_one_is_exact() {
    let s = Scenario::from_json(&graph_with("", r#"{"kind": "integrate", "name": "t", "function": "one"}"#), None).unwrap();
    let r = &run_tasks(&s).results[0];
    assert_eq!((r.estimate_re, r.estimate_im, r.stderr), (Some(1.0), Some(0.0), Some(0.0)));
    assert!(r.pass);
}

#[test]
fn empty_task_list() {
    let s = Scenario::from_json(&graph_with("", ""), None).unwrap();
    let report = run_tasks(&s);
    assert!(report.results.is_empty());
    assert_eq!(report.exit_code(), 0);
}

#[test]
fn mandelstam_task_at_full_size() {
    let s = Scenario::from_json(
        &graph_with("", r#"{"kind": "mandelstam-check", "name": "m", "n_samples": 10000, "seed": 1}"#),
        None,
    )
    .unwrap();
    let r = &run_tasks(&s).results[0];
    assert!(r.pass, "{r:?}");
    assert!(r.max_dev.unwrap() < 1e-12);
}

#[test]
fn example_scenario_passes() {
    let s = Scenario::from_json(EXAMPLE, None).unwrap();
    let report = run_tasks(&s);
    for r in &report.results {
        assert!(r.pass, "{r:?}");
    }
    assert_eq!(report.results.len(), s.tasks().len());
}

#[test]
fn thread_count_does_not_change_results() {
    let s = Scenario::from_json(EXAMPLE, None).unwrap();
    let one = run_tasks_with_threads(&s, Some(1)).unwrap();
    let four = run_tasks_with_threads(&s, Some(4)).unwrap();
    assert_eq!(one, four);
}

fn run_bin(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hooploop"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("HOOPLOOP_THREADS", t),
        None => cmd.env_remove("HOOPLOOP_THREADS"),
    };
    cmd.output().unwrap()
}

#[test]
fn binary_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.json", EXAMPLE);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let out = run_bin(&["run", "--scenario", scenario.to_str().unwrap(), "--out", a.to_str().unwrap()], Some("1"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run_bin(&["run", "--scenario", scenario.to_str().unwrap(), "--out", b.to_str().unwrap(), "--threads", "3"], None);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let report: Report = serde_json::from_slice(&std::fs::read(&a).unwrap()).unwrap();
    assert!(report.all_pass);
}

#[test]
fn seed_override_changes_sampled_values() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.json", EXAMPLE);
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = run_bin(&["run", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed], None);
        assert_eq!(o.status.code(), Some(0));
        serde_json::from_slice::<Report>(&std::fs::read(out).unwrap()).unwrap()
    };
    let (a, b, c) = (run("1", "a.json"), run("2", "b.json"), run("1", "c.json"));
    assert_eq!(a, c);
    let est = |r: &Report| r.results.iter().find(|t| t.task == "wilson-poly").unwrap().estimate_re;
    assert_ne!(est(&a), est(&b));
}

#[test]
fn csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.json", EXAMPLE);
    let out = dir.path().join("r.csv");
    let o = run_bin(
        &["run", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "csv"],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("task,estimate_re,estimate_im,stderr,max_dev,pass"));
    assert_eq!(lines.count(), Scenario::from_json(EXAMPLE, None).unwrap().tasks().len());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let out = out.to_str().unwrap();

    let empty = write(dir.path(), "empty.json", &graph_with("", ""));
    assert_eq!(run_bin(&["run", "--scenario", empty.to_str().unwrap(), "--out", out], None).status.code(), Some(0));

    // zero sigmas cannot absorb Monte-Carlo noise
    let failing = write(
        dir.path(),
        "fail.json",
        &graph_with(
            r#""a": "e1 e2""#,
            r#"{"kind": "integrate", "name": "t", "function": "w", "sigmas": 0.0}"#,
        )
        .replace(
            r#""functions": {"#,
            r#""functions": {"w": {"kind": "wilson", "loops": ["a"], "terms": [{"coeff": 1.0, "powers": [2]}]}, "#,
        ),
    );
    let o = run_bin(&["run", "--scenario", failing.to_str().unwrap(), "--out", out], None);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Report = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    assert!(!report.all_pass);

    let broken = write(dir.path(), "broken.json", &graph_with(r#""x": "e9""#, ""));
    let o = run_bin(&["run", "--scenario", broken.to_str().unwrap(), "--out", out], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("loop `x`"));
    assert_eq!(run_bin(&["validate", "--scenario", broken.to_str().unwrap()], None).status.code(), Some(2));
    assert_eq!(run_bin(&["validate", "--scenario", empty.to_str().unwrap()], None).status.code(), Some(0));
    let garbled = write(dir.path(), "garbled.json", "{\n  \"schema_version\": 1,\n  ]");
    let o = run_bin(&["validate", "--scenario", garbled.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}
