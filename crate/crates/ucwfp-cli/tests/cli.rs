//! End-to-end checks of the shipped binary: exit codes, output files,
//! determinism, and schema conformance of everything it reads and writes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ucwfp"))
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn run_scenario(name: &str, out: &Path) -> Output {
    bin()
        .args(["run"])
        .arg(scenario_dir().join(name))
        .env("UCWFP_OUT", out)
        .output()
        .unwrap()
}

#[test]
fn clean_run_exits_zero_and_writes_all_three_files() {
    let out = tempfile::tempdir().unwrap();
    let output = run_scenario("contraction-euclidean.json", out.path());
    assert_eq!(output.status.code(), Some(0));
    for suffix in ["trace.csv", "summary.json", "verdicts.json"] {
        let path = out.path().join(format!("contraction-euclidean.{suffix}"));
        assert!(path.exists(), "missing {suffix}");
    }
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("row_fejer"));
    assert!(stdout.contains("exit=0"));
}

#[test]
fn budget_stop_exits_three() {
    let out = tempfile::tempdir().unwrap();
    let config = out.path().join("short.json");
    fs::write(
        &config,
        r#"{
            "space": {"model": "euclidean", "n": 2, "R": 1.0},
            "map": {"map": "rotation", "theta": 1.5707963267948966},
            "start": [1.0, 0.0],
            "stop": {"maxRows": 5}
        }"#,
    )
    .unwrap();
    let output = bin()
        .args(["run"])
        .arg(&config)
        .env("UCWFP_OUT", out.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("short.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["stopReason"], "maxRows");
    assert_eq!(summary["rows"], 5);
    assert_eq!(summary["exitCode"], 3);
}

#[test]
fn malformed_config_exits_one_with_a_json_diagnostic() {
    let out = tempfile::tempdir().unwrap();
    let config = out.path().join("bad.json");
    fs::write(&config, r#"{"space": {"model": "dodecahedron"}}"#).unwrap();
    let output = bin().args(["run"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    let diag: serde_json::Value = serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert_eq!(diag["error"]["kind"], "config");
}

#[test]
fn absurd_monitor_tolerance_exits_two() {
    // The honest engine cannot beat a 1e-18 demand on the link inequality's
    // 1-ulp equality case, so this run must fail its audit.
    let out = tempfile::tempdir().unwrap();
    let config = out.path().join("strict.json");
    fs::write(
        &config,
        r#"{
            "space": {"model": "euclidean", "n": 2, "R": 1.0},
            "map": {"map": "contraction", "target": [0.3, -0.2], "rate": 0.5},
            "start": [-0.8, 0.4],
            "monitors": {"overrides": {"x_residual_link": 1e-18}}
        }"#,
    )
    .unwrap();
    let output = bin()
        .args(["run"])
        .arg(&config)
        .env("UCWFP_OUT", out.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let verdicts: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("strict.verdicts.json")).unwrap())
            .unwrap();
    let tripped = verdicts["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|v| v["monitor"] == "x_residual_link")
        .unwrap();
    assert_eq!(tripped["pass"], false);
}

#[test]
fn reruns_are_byte_identical() {
    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    assert_eq!(run_scenario("rotation.json", out1.path()).status.code(), Some(0));
    assert_eq!(run_scenario("rotation.json", out2.path()).status.code(), Some(0));
    for suffix in ["trace.csv", "summary.json", "verdicts.json"] {
        let a = fs::read(out1.path().join(format!("rotation.{suffix}"))).unwrap();
        let b = fs::read(out2.path().join(format!("rotation.{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix} differs between reruns");
    }
}

#[test]
fn suite_aggregates_and_propagates_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    fs::copy(
        scenario_dir().join("treefold.json"),
        dir.path().join("treefold.json"),
    )
    .unwrap();
    fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    let output = bin()
        .args(["suite"])
        .arg(dir.path())
        .env("UCWFP_OUT", out.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("suite.json")).unwrap()).unwrap();
    assert_eq!(report["scenarios"]["treefold"]["exitCode"], 0);
    assert_eq!(report["scenarios"]["broken"]["exitCode"], 1);
    assert_eq!(
        report["scenarios"]["treefold"]["keyMetrics"]["monitorsPass"],
        true
    );
}

#[test]
fn empty_suite_directory_reports_nothing_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin().args(["suite"]).arg(dir.path()).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("suite.json")).unwrap()).unwrap();
    assert!(report["scenarios"].as_object().unwrap().is_empty());
}

#[test]
fn config_dir_is_used_when_no_env_override() {
    let out = tempfile::tempdir().unwrap();
    let config = out.path().join("here.json");
    fs::write(
        &config,
        format!(
            r#"{{
                "space": {{"model": "star-tree", "k": 3, "L": 1.0}},
                "map": {{"map": "treefold", "rate": 0.5, "shift": 1}},
                "start": {{"leg": 1, "offset": 0.8}},
                "output": {{"dir": "{}"}}
            }}"#,
            out.path().join("sub").display()
        ),
    )
    .unwrap();
    let output = bin().args(["run"]).arg(&config).env_remove("UCWFP_OUT").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(out.path().join("sub").join("here.summary.json").exists());
}

#[test]
fn axioms_subcommand_reports_and_exits_zero() {
    let out = tempfile::tempdir().unwrap();
    let config = out.path().join("space.json");
    fs::write(&config, r#"{"model": "euclidean", "n": 2, "R": 1.0}"#).unwrap();
    let output = bin().args(["axioms"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8(output.stdout).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn verify_map_subcommand_reports_and_exits_zero() {
    let out = tempfile::tempdir().unwrap();
    let space = out.path().join("space.json");
    let map = out.path().join("map.json");
    fs::write(&space, r#"{"model": "sparse-l2"}"#).unwrap();
    fs::write(&map, r#"{"map": "goebelkirk"}"#).unwrap();
    let output = bin().args(["verify-map"]).arg(&space).arg(&map).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8(output.stdout).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["declaredFixedPointsFixed"], true);
}

fn compiled_schema(name: &str) -> jsonschema::Validator {
    let text = fs::read_to_string(schema_dir().join(name)).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

#[test]
fn bundled_scenarios_conform_to_the_config_schema() {
    let validator = compiled_schema("experiment-config.schema.json");
    let mut seen = 0;
    for entry in fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&ucwfp_cli::strip_json_comments(&text)).unwrap();
        let errors: Vec<String> = validator
            .iter_errors(&value)
            .map(|e| format!("{}: {e}", path.display()))
            .collect();
        assert!(errors.is_empty(), "{errors:?}");
        seen += 1;
    }
    assert_eq!(seen, 8);
}

#[test]
fn outputs_conform_to_their_schemas() {
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["suite"])
        .arg(scenario_dir())
        .env("UCWFP_OUT", out.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "suite failed");
    let summary_schema = compiled_schema("summary.schema.json");
    let verdict_schema = compiled_schema("verdicts.schema.json");
    let suite_schema = compiled_schema("suite.schema.json");
    let mut summaries = 0;
    for entry in fs::read_dir(out.path()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let check = |validator: &jsonschema::Validator| {
            let value: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
            let errors: Vec<String> =
                validator.iter_errors(&value).map(|e| format!("{name}: {e}")).collect();
            assert!(errors.is_empty(), "{errors:?}");
        };
        if name.ends_with(".summary.json") {
            check(&summary_schema);
            summaries += 1;
        } else if name.ends_with(".verdicts.json") {
            check(&verdict_schema);
        } else if name == "suite.json" {
            check(&suite_schema);
        }
    }
    assert_eq!(summaries, 8);
}
