use std::process::{Command, Output};

fn trmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trmt")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn regular_count() {
    let o = trmt(&["oracle", "--regular-count", "5"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "24");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(trmt(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(trmt(&["sample", "--N", "5"]).status.code(), Some(2));
}

#[test]
fn invalid_input_is_reported_as_json() {
    let o = trmt(&["sample", "--ensemble", "rite", "--N", "4"]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"].is_string() && err["message"].is_string());
}

#[test]
fn sample_emits_one_json_state_per_line() {
    let o = trmt(&["sample", "--ensemble", "rite", "--N", "7", "--count", "3", "--seed", "4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["n"], 7);
    }
    assert_eq!(text, stdout(&trmt(&["sample", "--ensemble", "rite", "--N", "7", "--count", "3", "--seed", "4"])));
}

#[test]
fn identity_agrees() {
    let o = trmt(&["identity", "--N", "7", "--n", "3", "--trials", "5"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["max_discrepancy"].as_f64().unwrap() < 1e-8);
}

#[test]
fn traces_reuse_a_calibration_file() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal.json");
    let cal_s = cal.to_str().unwrap();
    let o = trmt(&["calibrate", "--ensemble", "ite", "--N", "9", "--budget", "1000", "--out", cal_s]);
    assert!(o.status.success());
    let o = trmt(&["traces", "--ensemble", "ite", "--N", "9", "--count", "4", "--calibration", cal_s]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sample,Y_2,Y_3"));
    assert_eq!(lines.count(), 4);
    // A table built for another N is refused.
    let o = trmt(&["traces", "--ensemble", "ite", "--N", "11", "--count", "1", "--calibration", cal_s]);
    assert_eq!(o.status.code(), Some(1));
}
