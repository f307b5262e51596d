//! Cross-module runs through the public API only: build a space and a map,
//! drive the construction to its stop, audit the record, and replay it.

use std::sync::Arc;

use ucwfp::diagnostics::{all_pass, check_trajectory, compare_with_replay, MonitorSet};
use ucwfp::iteration::{run, StopReason, StopRule};
use ucwfp::mappings::{make_map, MapConfig};
use ucwfp::soperator::{SMode, SOperator};
use ucwfp::spaces::{make_space, point_from_json, SpaceConfig};
use ucwfp::Point;

fn op(space: SpaceConfig, map: MapConfig) -> SOperator {
    let space = Arc::new(make_space(&space).unwrap());
    let map = Arc::new(make_map(space, &map).unwrap());
    SOperator::new(map, SMode::General).unwrap()
}

fn residual_stop(op: &SOperator) -> StopRule {
    StopRule {
        residual_tol: Some(1e-8 * op.space().diameter_bound()),
        ..StopRule::default()
    }
}

#[test]
fn rotation_runs_audits_and_replays_clean() {
    let op = op(
        SpaceConfig::euclidean(2, 1.0),
        MapConfig::rotation(std::f64::consts::FRAC_PI_2),
    );
    let start = Point::Euclidean(vec![1.0, 0.0]);
    let stop = residual_stop(&op);
    let traj = run(&op, &start, &stop, None).unwrap();
    assert_eq!(traj.stop_reason(), Some(StopReason::Residual));
    let verdicts = check_trajectory(&traj, &MonitorSet::standard(&op, stop.residual_tol)).unwrap();
    assert!(all_pass(&verdicts));
    assert!(compare_with_replay(&op, &traj).unwrap().is_none());
    let final_residual = traj.rows().last().unwrap().residual.unwrap();
    assert!(final_residual <= 2e-8);
}

#[test]
fn curved_model_runs_audits_and_replays_clean() {
    let op = op(
        SpaceConfig::hyperboloid(1.0),
        MapConfig::contraction(serde_json::json!([1.0, 0.0, 0.0]), 0.4),
    );
    let space = op.space().clone();
    let start =
        point_from_json(&space, &serde_json::json!([std::f64::consts::SQRT_2, 1.0, 0.0])).unwrap();
    let stop = residual_stop(&op);
    let traj = run(&op, &start, &stop, None).unwrap();
    assert_eq!(traj.stop_reason(), Some(StopReason::Residual));
    let verdicts = check_trajectory(&traj, &MonitorSet::standard(&op, stop.residual_tol)).unwrap();
    assert!(all_pass(&verdicts));
    assert!(compare_with_replay(&op, &traj).unwrap().is_none());
}

#[test]
fn budget_capped_sparse_run_still_audits_clean() {
    let op = op(SpaceConfig::sparse(), MapConfig::goebelkirk());
    let start = Point::Sparse([(1u32, 1.0f64)].into_iter().collect());
    let stop = StopRule {
        max_rows: 60,
        residual_tol: Some(1e-8 * op.space().diameter_bound()),
        ..StopRule::default()
    };
    let traj = run(&op, &start, &stop, None).unwrap();
    assert_eq!(traj.stop_reason(), Some(StopReason::MaxRows));
    assert_eq!(traj.rows().len(), 60);
    let verdicts = check_trajectory(&traj, &MonitorSet::standard(&op, stop.residual_tol)).unwrap();
    assert!(all_pass(&verdicts));
    assert!(compare_with_replay(&op, &traj).unwrap().is_none());
}
