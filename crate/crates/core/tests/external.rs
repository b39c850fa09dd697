//! Wire-protocol tests against small `sh` stub children.

use std::path::Path;
use std::time::{Duration, Instant};

use bilevel_bo::objective::{ExternalObjective, ObjectiveError, format_request};
use bilevel_bo::{
    Configuration, Objective, ObjectiveSpec, SearchSpace, StudyConfig, StudyError, TrialStatus, run_study,
};

const HANDSHAKE: &str = r#"printf '{"protocol": "bilevel-bo/1"}\n'"#;

/// Extracts the request id with sed; every stub answers through this.
const READ_ID: &str = r#"id=$(printf '%s' "$line" | sed 's/^{"id": \([0-9]*\),.*/\1/')"#;

fn stub(body: &str) -> Vec<String> {
    vec!["sh".into(), "-c".into(), format!("{HANDSHAKE}\n{body}")]
}

fn echo_stub(log: Option<&Path>) -> Vec<String> {
    let record = log.map_or(String::new(), |p| format!("printf '%s\\n' \"$line\" >> '{}'", p.display()));
    stub(&format!(
        r#"while IFS= read -r line; do
  {record}
  {READ_ID}
  printf '{{"id": %s, "status": "ok", "train_loss": 0.125, "val_metric": 0.8125, "aux": {{"epochs_run": 3}}}}\n' "$id"
done"#
    ))
}

fn objective(command: Vec<String>, timeout: Duration) -> ExternalObjective {
    ExternalObjective::new(command, SearchSpace::fine_tuning_default(), timeout)
}

fn config() -> Configuration {
    Configuration::new().with("learning_rate", 2.5e-6).with("batch_size", 32i64).with("weight_decay", 0.05)
}

#[test]
fn echo_child_numbers_come_back_exactly() {
    let mut obj = objective(echo_stub(None), Duration::from_secs(10));
    for _ in 0..3 {
        let e = obj.evaluate(&config()).unwrap();
        assert_eq!((e.train_loss, e.val_metric), (0.125, 0.8125));
        assert_eq!(e.aux.get("epochs_run"), Some(&3.0));
    }
}

#[test]
fn child_receives_bit_exact_request_lines() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("requests.log");
    let mut obj = objective(echo_stub(Some(&log)), Duration::from_secs(10));
    let other = config().with("batch_size", 8i64);
    obj.evaluate(&config()).unwrap();
    obj.evaluate(&other).unwrap();
    drop(obj);
    let space = SearchSpace::fine_tuning_default();
    let expected = format_request(1, &space, &config()) + &format_request(2, &space, &other);
    assert_eq!(std::fs::read_to_string(&log).unwrap(), expected);
    assert!(expected.starts_with(
        "{\"id\": 1, \"params\": {\"learning_rate\": 2.5e-6, \"batch_size\": 32, \"weight_decay\": 0.05}}\n"
    ));
}

#[test]
fn reported_errors_keep_the_child() {
    let dir = tempfile::tempdir().unwrap();
    let starts = dir.path().join("starts");
    let mut command = stub(&format!(
        r#"while IFS= read -r line; do
  {READ_ID}
  printf '{{"id": %s, "status": "error", "message": "diverged"}}\n' "$id"
done"#
    ));
    command[2] = format!("echo started >> '{}'\n{}", starts.display(), command[2]);
    let mut obj = objective(command, Duration::from_secs(10));
    for _ in 0..3 {
        let err = obj.evaluate(&config()).unwrap_err();
        assert!(matches!(err, ObjectiveError::Reported(ref m) if m == "diverged"), "{err}");
    }
    assert_eq!(std::fs::read_to_string(&starts).unwrap().lines().count(), 1);
}

#[test]
fn timeout_kills_and_respawns() {
    let dir = tempfile::tempdir().unwrap();
    let starts = dir.path().join("starts");
    // Stalls on the first request of each process, answers the rest.
    let mut command = stub(&format!(
        r#"n=0
while IFS= read -r line; do
  n=$((n + 1))
  if [ "$n" -eq 1 ] && [ "$(wc -l < '{starts}')" -eq 1 ]; then sleep 30; fi
  {READ_ID}
  printf '{{"id": %s, "status": "ok", "train_loss": 1, "val_metric": 2}}\n' "$id"
done"#,
        starts = starts.display()
    ));
    command[2] = format!("echo started >> '{}'\n{}", starts.display(), command[2]);
    let mut obj = objective(command, Duration::from_millis(500));
    let start = Instant::now();
    let err = obj.evaluate(&config()).unwrap_err();
    assert!(matches!(err, ObjectiveError::Timeout(_)), "{err}");
    assert!(start.elapsed() < Duration::from_secs(10));
    let e = obj.evaluate(&config()).unwrap();
    assert_eq!((e.train_loss, e.val_metric), (1.0, 2.0));
    assert_eq!(std::fs::read_to_string(&starts).unwrap().lines().count(), 2);
}

#[test]
fn nonzero_exit_is_reported() {
    let mut obj = objective(stub("read -r line\nexit 3"), Duration::from_secs(10));
    let err = obj.evaluate(&config()).unwrap_err();
    assert!(matches!(err, ObjectiveError::ChildExit(_)), "{err}");
}

#[test]
fn protocol_violations() {
    let bad_handshake = vec!["sh".into(), "-c".into(), r#"printf '{"protocol": "other/9"}\n'; cat"#.into()];
    let err = objective(bad_handshake, Duration::from_secs(10)).evaluate(&config()).unwrap_err();
    assert!(matches!(err, ObjectiveError::Protocol(_)), "{err}");

    let wrong_id = stub(
        r#"while IFS= read -r line; do printf '{"id": 99, "status": "ok", "train_loss": 1, "val_metric": 1}\n'; done"#,
    );
    let err = objective(wrong_id, Duration::from_secs(10)).evaluate(&config()).unwrap_err();
    assert!(matches!(err, ObjectiveError::Protocol(ref m) if m.contains("99")), "{err}");

    let garbage = stub("while IFS= read -r line; do echo 'not json'; done");
    let err = objective(garbage, Duration::from_secs(10)).evaluate(&config()).unwrap_err();
    assert!(matches!(err, ObjectiveError::Protocol(_)), "{err}");
}

#[test]
fn missing_executable_is_a_spawn_error() {
    let mut obj = objective(vec!["/nonexistent/objective".into()], Duration::from_secs(1));
    assert!(matches!(obj.evaluate(&config()), Err(ObjectiveError::Spawn(_))));
}

#[test]
fn bilevel_study_over_the_wire() {
    let spec = ObjectiveSpec::External { command: echo_stub(None), timeout: 10.0 };
    let space = SearchSpace::fine_tuning_default();
    let mut obj = spec.instantiate(&space, 0).unwrap();
    let cfg = StudyConfig {
        outer_budget: 3,
        inner_budget: 2,
        init_outer: 2,
        init_inner: 1,
        candidates: 32,
        ..Default::default()
    };
    let study = run_study(&mut obj, &space, &cfg).unwrap();
    assert_eq!(study.trials.len(), 6);
    assert!(study.trials.iter().all(|t| t.status == TrialStatus::Ok && t.val_metric == 0.8125 && t.wall_time >= 0.0));
}

#[test]
fn failing_child_fails_the_study_with_its_log() {
    let spec = ObjectiveSpec::External { command: stub("read -r line\nexit 1"), timeout: 10.0 };
    let space = SearchSpace::fine_tuning_default();
    let mut obj = spec.instantiate(&space, 0).unwrap();
    let cfg = StudyConfig {
        outer_budget: 2,
        inner_budget: 2,
        init_outer: 1,
        init_inner: 1,
        candidates: 8,
        ..Default::default()
    };
    match run_study(&mut obj, &space, &cfg) {
        Err(StudyError::NoSuccessfulTrials { trials }) => {
            assert_eq!(trials.len(), 4);
            assert!(trials.iter().all(|t| t.status == TrialStatus::Failed && t.message.is_some()));
        }
        other => panic!("expected a study failure, got {other:?}"),
    }
}
