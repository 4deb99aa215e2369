use std::path::Path;
use std::process::Command;

fn salescast(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_salescast")).args(args).output().expect("binary runs")
}

#[test]
fn synth_writes_panel_and_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let o = salescast(&["synth", "--seed", "42", "--stores", "3", "--days", "400", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let panel = std::fs::read_to_string(out.join("panel.csv")).unwrap();
    let mut per_store = std::collections::BTreeMap::new();
    for line in panel.lines().skip(1) {
        *per_store.entry(line.split(',').next().unwrap().to_string()).or_insert(0) += 1;
    }
    assert_eq!(per_store.len(), 3);
    assert!(per_store.values().all(|&n| n <= 400));
    for f in ["config.txt", "run.log", "report.json", "report.csv", "figures/log_sales.svg"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let snapshot = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(snapshot.starts_with("command=synth\n"));
    assert!(snapshot.contains("stores=3\n") && snapshot.contains("seed=42\n"));
}

#[test]
fn unknown_command_and_bad_flag_fail_with_usage() {
    let o = salescast(&["frobnicate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = salescast(&["synth", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn runtime_error_exits_nonzero_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let o = salescast(&["ingest", "--input", "/nonexistent/sales.csv", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn backtest_reports_three_methods_and_leaves_input_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = tmp.path().join("synth");
    assert!(salescast(&["synth", "--stores", "2", "--days", "300", "--out", synth.to_str().unwrap()]).status.success());
    let input = synth.join("panel.csv");
    let before = std::fs::read(&input).unwrap();
    let out = tmp.path().join("bt");
    let o = salescast(&[
        "backtest",
        "--input",
        input.to_str().unwrap(),
        "--store",
        "2",
        "--methods",
        "arima,gbt,blend",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&input).unwrap(), before);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let methods = report["reports"][0]["methods"].as_object().unwrap();
    assert_eq!(methods.keys().collect::<Vec<_>>(), ["arima", "blend", "gbt_iid"]);
    assert!(methods.values().all(|m| m["rmse"].as_f64().is_some_and(|r| r > 0.0)));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with('#'));
    assert_eq!(csv.lines().nth(1), Some("store,method,framing,rmse"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn command_line_overrides_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.txt");
    std::fs::write(&cfg, "command=synth\nstores=4\ndays=60\ndeterministic=true\n").unwrap();
    let out = tmp.path().join("o");
    let o = salescast(&["--config", cfg.to_str().unwrap(), "--stores", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let snapshot = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(snapshot.contains("stores=2\n") && snapshot.contains("days=60\n"));
    let log = std::fs::read_to_string(out.join("run.log")).unwrap();
    assert!(!log.chars().next().unwrap().is_ascii_digit(), "deterministic log has no timestamps");
}

#[test]
fn default_output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_salescast"))
        .args(["synth", "--days", "30", "--stores", "1", "--deterministic"])
        .env("SALESCAST_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(Path::new(&tmp.path().join("synth/panel.csv")).exists());
}
