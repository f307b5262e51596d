//! Batch front end: parse a scenario config, build the space, map, and
//! averaging operator, drive the run with its monitors, and leave a trace
//! CSV plus summary and verdict JSON behind. Everything is deterministic
//! for a given config and seed; reruns produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::json;

use ucwfp::diagnostics::{
    all_pass, check_trajectory, render_table, MonitorSet, Verdict, MONITOR_NAMES,
};
use ucwfp::geometry::{Point, SpaceModel};
use ucwfp::iteration::{
    extract_pk, run_with_policy, ComparePolicy, StepGuard, StopReason, StopRule, Trajectory,
};
use ucwfp::mappings::{make_map, verify_asymptotic_bound, MapConfig};
use ucwfp::soperator::{SMode, SOperator};
use ucwfp::spaces::{make_space, point_from_json, sample_point, SpaceConfig};
use ucwfp::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MONITOR: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// Strip // line comments and /* */ block comments outside string literals.
pub fn strip_json_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut in_string = false;
    let mut escaped = false;
    while i < bytes.len() {
        let c = bytes[i];
        if in_string {
            out.push(c as char);
            if escaped {
                escaped = false;
            } else if c == b'\\' {
                escaped = true;
            } else if c == b'"' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        match c {
            b'"' => {
                in_string = true;
                out.push('"');
                i += 1;
            }
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'*' => {
                i += 2;
                while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
            }
            _ => {
                out.push(c as char);
                i += 1;
            }
        }
    }
    out
}

/// Starting point: a literal in the space's wire format, or a seed to draw
/// one from the space's sampler.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StartSpec {
    Sampled {
        #[serde(rename = "sampleSeed")]
        sample_seed: u64,
    },
    Literal(serde_json::Value),
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// Names to evaluate; everything when absent.
    pub enabled: Option<Vec<String>>,
    pub tol: Option<f64>,
    pub overrides: BTreeMap<String, f64>,
    pub window: Option<usize>,
    /// Run the hard per-step checks during the iteration (on by default
    /// whenever the map declares fixed points).
    pub per_step: Option<bool>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct RawStop {
    pub max_rows: Option<usize>,
    pub residual_tol: Option<f64>,
    pub gap_tol: Option<f64>,
    pub gap_window: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    pub map: MapConfig,
    pub start: StartSpec,
    #[serde(default)]
    pub s_mode: Option<SMode>,
    #[serde(default)]
    pub stop: RawStop,
    #[serde(default)]
    pub monitors: MonitorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub compare: Option<ComparePolicy>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let stripped = strip_json_comments(&text);
        serde_json::from_str(&stripped)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The stop rule with the documented defaults filled in: budget 10^5
    /// rows, and a residual threshold of 1e-8 times the diameter bound
    /// whenever the config does not set one.
    pub fn stop_rule(&self, space: &SpaceModel) -> StopRule {
        let defaults = StopRule::default();
        StopRule {
            max_rows: self.stop.max_rows.unwrap_or(defaults.max_rows),
            residual_tol: Some(
                self.stop
                    .residual_tol
                    .unwrap_or(1e-8 * space.diameter_bound()),
            ),
            gap_tol: self.stop.gap_tol,
            gap_window: self.stop.gap_window.unwrap_or(defaults.gap_window),
        }
    }
}

/// Everything one scenario run produced.
pub struct Outcome {
    pub exit: i32,
    pub scenario: String,
    pub summary: Option<serde_json::Value>,
}

fn exit_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_MONITOR,
    }
}

fn emit_error(scenario: &str, err: &Error) {
    let kind = match err {
        Error::Config(_) => "config",
        Error::MonitorFailure { .. } => "monitor",
        _ => "contract",
    };
    let bundle = match err {
        Error::MonitorFailure { bundle, .. } => bundle.clone(),
        _ => serde_json::Value::Null,
    };
    eprintln!(
        "{}",
        json!({"error": {"scenario": scenario, "kind": kind, "message": err.to_string(), "bundle": bundle}})
    );
}

fn scenario_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into())
}

/// Output directory precedence: UCWFP_OUT, then the config, then the
/// current directory.
fn resolve_outdir(config: &ExperimentConfig) -> PathBuf {
    if let Ok(dir) = std::env::var("UCWFP_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    config
        .output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."))
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_trace(
    path: &Path,
    traj: &Trajectory,
    fixed: &[Point],
) -> Result<()> {
    let space = traj.space();
    let mut csv = String::new();
    csv.push_str("j,m,case,dYPrev,residual");
    for i in 1..=fixed.len() {
        csv.push_str(&format!(",dFix{i}"));
    }
    csv.push('\n');
    let rows = traj.rows();
    for (j, row) in rows.iter().enumerate() {
        let d_prev = if j == 0 {
            String::new()
        } else {
            fmt_float(space.dist(&row.y, &rows[j - 1].y)?)
        };
        let residual = row.residual.map(fmt_float).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{}",
            j + 1,
            row.m,
            row.case.wire(),
            d_prev,
            residual
        ));
        for p in fixed {
            csv.push_str(&format!(",{}", fmt_float(space.dist(&row.y, p)?)));
        }
        csv.push('\n');
    }
    fs::write(path, csv).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialization: {e}")))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

struct RunProducts {
    traj: Trajectory,
    verdicts: Vec<Verdict>,
    op: SOperator,
}

fn execute(config: &ExperimentConfig) -> Result<RunProducts> {
    let space = Arc::new(make_space(&config.space)?);
    let map = Arc::new(make_map(space.clone(), &config.map)?);
    let mode = config.s_mode.unwrap_or(SMode::General);
    let op = SOperator::new(map, mode)?;
    let start = match &config.start {
        StartSpec::Sampled { sample_seed } => sample_point(&space, *sample_seed),
        StartSpec::Literal(value) => point_from_json(&space, value)?,
    };
    let stop = config.stop_rule(&space);
    let monitors = build_monitor_set(config, &op, &stop)?;
    let per_step = config
        .monitors
        .per_step
        .unwrap_or(!monitors.known_fixed_points.is_empty());
    let guard = per_step.then(|| StepGuard {
        known_fixed_points: monitors.known_fixed_points.clone(),
        tol: monitors.tol,
    });
    let policy = config.compare.unwrap_or_default();
    let traj = run_with_policy(&op, &start, &stop, guard.as_ref(), policy)?;
    let verdicts = check_trajectory(&traj, &monitors)?;
    Ok(RunProducts { traj, verdicts, op })
}

fn build_monitor_set(
    config: &ExperimentConfig,
    op: &SOperator,
    stop: &StopRule,
) -> Result<MonitorSet> {
    let mut monitors = MonitorSet::standard(op, stop.residual_tol);
    if let Some(enabled) = &config.monitors.enabled {
        monitors.enabled = enabled.clone();
    }
    if let Some(tol) = config.monitors.tol {
        monitors.tol = tol;
    }
    monitors.overrides = config.monitors.overrides.clone();
    if let Some(window) = config.monitors.window {
        monitors.window = window;
    }
    Ok(monitors)
}

fn summarize(
    scenario: &str,
    config: &ExperimentConfig,
    products: &RunProducts,
    exit: i32,
) -> Result<serde_json::Value> {
    let traj = &products.traj;
    let ex = extract_pk(traj)?;
    let rows = traj.rows();
    let pk_json: Vec<serde_json::Value> = ex
        .pk
        .iter()
        .enumerate()
        .map(|(idx, &row)| {
            json!({"k": idx + 1, "row": row + 1, "provisional": idx >= ex.confirmed})
        })
        .collect();
    let stop_reason = match traj.stop_reason() {
        Some(StopReason::MaxRows) => "maxRows",
        Some(StopReason::Residual) => "residual",
        Some(StopReason::Gap) => "gap",
        None => "none",
    };
    Ok(json!({
        "scenario": scenario,
        "space": traj.space().name(),
        "map": products.op.map().name(),
        "sMode": config.s_mode.unwrap_or(SMode::General),
        "stopReason": stop_reason,
        "rows": rows.len(),
        "finalY": rows.last().expect("nonempty").y.to_json(),
        "finalResidual": rows.iter().rev().find_map(|r| r.residual),
        "nearTies": traj.near_ties_total(),
        "pk": pk_json,
        "confirmed": ex.confirmed,
        "monitorsPass": all_pass(&products.verdicts),
        "exitCode": exit,
    }))
}

/// Run one scenario config: outputs land next to it (or in UCWFP_OUT), the
/// verdict table goes to stdout, and the exit code encodes the outcome.
pub fn run_experiment(path: &Path) -> Outcome {
    let scenario = scenario_name(path);
    let config = match ExperimentConfig::from_path(path) {
        Ok(c) => c,
        Err(e) => {
            emit_error(&scenario, &e);
            return Outcome {
                exit: exit_for(&e),
                scenario,
                summary: None,
            };
        }
    };
    let products = match execute(&config) {
        Ok(p) => p,
        Err(e) => {
            emit_error(&scenario, &e);
            return Outcome {
                exit: exit_for(&e),
                scenario,
                summary: None,
            };
        }
    };
    let monitors_ok = all_pass(&products.verdicts);
    let stopped_at_budget = products.traj.stop_reason() == Some(StopReason::MaxRows);
    let exit = if !monitors_ok {
        EXIT_MONITOR
    } else if stopped_at_budget {
        EXIT_BUDGET
    } else {
        EXIT_OK
    };
    let result: Result<serde_json::Value> = (|| {
        let outdir = resolve_outdir(&config);
        fs::create_dir_all(&outdir)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", outdir.display())))?;
        let fixed = products.op.map().known_fixed_points().to_vec();
        write_trace(&outdir.join(format!("{scenario}.trace.csv")), &products.traj, &fixed)?;
        let summary = summarize(&scenario, &config, &products, exit)?;
        write_json(&outdir.join(format!("{scenario}.summary.json")), &summary)?;
        let verdicts = json!({
            "scenario": scenario,
            "verdicts": products.verdicts,
        });
        write_json(&outdir.join(format!("{scenario}.verdicts.json")), &verdicts)?;
        Ok(summary)
    })();
    match result {
        Ok(summary) => {
            print!("{}", render_table(&products.verdicts));
            println!(
                "{scenario}: rows={} stop={} exit={exit}",
                products.traj.rows().len(),
                summary["stopReason"].as_str().unwrap_or("none"),
            );
            Outcome {
                exit,
                scenario,
                summary: Some(summary),
            }
        }
        Err(e) => {
            emit_error(&scenario, &e);
            Outcome {
                exit: exit_for(&e),
                scenario,
                summary: None,
            }
        }
    }
}

/// Run every *.json in the directory (sorted by name), write an aggregate
/// report, and fail if any scenario failed.
pub fn run_suite(dir: &Path) -> i32 {
    let entries = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) => {
            emit_error("suite", &Error::Config(format!("cannot read {}: {e}", dir.display())));
            return EXIT_CONFIG;
        }
    };
    let mut configs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    configs.sort();
    let mut scenarios = serde_json::Map::new();
    let mut worst = EXIT_OK;
    for config in &configs {
        let outcome = run_experiment(config);
        let key_metrics = outcome
            .summary
            .as_ref()
            .map(|s| {
                json!({
                    "rows": s["rows"],
                    "stopReason": s["stopReason"],
                    "finalResidual": s["finalResidual"],
                    "monitorsPass": s["monitorsPass"],
                })
            })
            .unwrap_or(serde_json::Value::Null);
        scenarios.insert(
            outcome.scenario.clone(),
            json!({"exitCode": outcome.exit, "keyMetrics": key_metrics}),
        );
        if outcome.exit != EXIT_OK {
            worst = worst.max(outcome.exit);
        }
    }
    let report = json!({"scenarios": scenarios});
    let outdir = std::env::var("UCWFP_OUT")
        .ok()
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| dir.to_path_buf());
    if fs::create_dir_all(&outdir).is_err()
        || write_json(&outdir.join("suite.json"), &report).is_err()
    {
        emit_error("suite", &Error::Config("cannot write the aggregate report".into()));
        return EXIT_CONFIG;
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    worst
}

/// Space-only checks: the four-point inequality family, the identity
/// family, uniform convexity, and the midpoint drop property.
pub fn run_axioms(path: &Path) -> i32 {
    let inner = || -> Result<bool> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: SpaceConfig = serde_json::from_str(&strip_json_comments(&text))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let space = make_space(&config)?;
        let tol = match &space {
            SpaceModel::Hyperboloid(_) => 1e-7,
            _ => 1e-9,
        };
        let report = ucwfp::geometry::axioms::check_axioms(&space, 10_000, 0, tol);
        let u_check = ucwfp::geometry::axioms::check_u_property(&space, 10_000, 1, 1e-9);
        let pass = report.pass && u_check.pass;
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "axioms": report,
                "uProperty": u_check,
                "pass": pass,
            }))
            .expect("report serializes")
        );
        Ok(pass)
    };
    match inner() {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_MONITOR,
        Err(e) => {
            emit_error("axioms", &e);
            exit_for(&e)
        }
    }
}

/// Map-only checks: the declared asymptotic bound on sampled pairs, the
/// declared fixed points actually being fixed, and image membership.
pub fn run_verify_map(space_path: &Path, map_path: &Path) -> i32 {
    let inner = || -> Result<bool> {
        let read = |p: &Path| -> Result<String> {
            fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
        };
        let space_config: SpaceConfig =
            serde_json::from_str(&strip_json_comments(&read(space_path)?))
                .map_err(|e| Error::Config(format!("{}: {e}", space_path.display())))?;
        let map_config: MapConfig = serde_json::from_str(&strip_json_comments(&read(map_path)?))
            .map_err(|e| Error::Config(format!("{}: {e}", map_path.display())))?;
        let space = Arc::new(make_space(&space_config)?);
        let map = make_map(space.clone(), &map_config)?;
        let bound = verify_asymptotic_bound(&map, 20, 1000, 0, 1e-9)?;
        let mut fixed_ok = true;
        let mut worst_fixed: f64 = 0.0;
        for p in map.known_fixed_points() {
            let moved = space.dist(&map.apply(p)?, p)?;
            worst_fixed = worst_fixed.max(moved);
            if moved > space.tol() {
                fixed_ok = false;
            }
        }
        let mut membership_ok = true;
        for seed in 0..200u64 {
            let x = sample_point(&space, seed);
            if !space.contains(&map.apply(&x)?) {
                membership_ok = false;
                break;
            }
        }
        let pass = bound.pass && fixed_ok && membership_ok;
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "map": map.name(),
                "asymptoticBound": bound,
                "declaredFixedPointsFixed": fixed_ok,
                "worstFixedPointMotion": worst_fixed,
                "imagesStayInSpace": membership_ok,
                "pass": pass,
            }))
            .expect("report serializes")
        );
        Ok(pass)
    };
    match inner() {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_MONITOR,
        Err(e) => {
            emit_error("verify-map", &e);
            exit_for(&e)
        }
    }
}

/// Names usable in a config's monitors.enabled list.
pub fn monitor_names() -> &'static [&'static str] {
    &MONITOR_NAMES
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_are_stripped_outside_strings() {
        let text = r#"{
  // leading comment
  "a": "url://not-a-comment", /* block */ "b": 2,
  "c": "escaped \" // still in string"
}"#;
        let stripped = strip_json_comments(text);
        let v: serde_json::Value = serde_json::from_str(&stripped).unwrap();
        assert_eq!(v["a"], "url://not-a-comment");
        assert_eq!(v["b"], 2);
        assert_eq!(v["c"], "escaped \" // still in string");
    }

    #[test]
    fn unterminated_block_comment_consumes_the_tail() {
        let stripped = strip_json_comments("{\"a\": 1} /* trailing");
        let v: serde_json::Value = serde_json::from_str(&stripped).unwrap();
        assert_eq!(v["a"], 1);
    }

    #[test]
    fn start_spec_distinguishes_seed_from_literals() {
        let sampled: StartSpec = serde_json::from_str(r#"{"sampleSeed": 7}"#).unwrap();
        assert!(matches!(sampled, StartSpec::Sampled { sample_seed: 7 }));
        let tree: StartSpec = serde_json::from_str(r#"{"leg": 1, "offset": 0.8}"#).unwrap();
        assert!(matches!(tree, StartSpec::Literal(_)));
        let arr: StartSpec = serde_json::from_str("[1.0, 0.0]").unwrap();
        assert!(matches!(arr, StartSpec::Literal(_)));
    }

    #[test]
    fn stop_rule_defaults_fill_in() {
        let config: ExperimentConfig = serde_json::from_str(
            r#"{
                "space": {"model": "euclidean", "n": 2, "R": 1.0},
                "map": {"map": "rotation", "theta": 0.5},
                "start": [0.5, 0.0]
            }"#,
        )
        .unwrap();
        let space = make_space(&config.space).unwrap();
        let stop = config.stop_rule(&space);
        assert_eq!(stop.max_rows, 100_000);
        assert_eq!(stop.residual_tol, Some(1e-8 * 2.0));
        assert_eq!(stop.gap_tol, None);
    }
}
