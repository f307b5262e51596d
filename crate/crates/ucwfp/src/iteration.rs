//! The row construction that turns the averaging operator into a strongly
//! convergent sequence. Each row refines the previous one: either the scan
//! finds an interior entry whose successor gap has collapsed while the next
//! midpoint would overshoot its predecessor gap (truncate there), or the row
//! simply grows by one midpoint at the tail. The tails y_j of the rows form
//! the output sequence.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{Point, SpaceModel};
use crate::soperator::SOperator;

/// How the scan measures the reach of the midpoint toward S(tail).
///
/// The distance from z to midpoint(z, w) equals d(z, w)/2 up to rounding;
/// either expression is a faithful reading, but the engine and any replay
/// must use the same one or branch choices can differ in the last ulp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum MidpointForm {
    #[default]
    HalfDistance,
    ExplicitMidpoint,
}

/// Branch-comparison policy shared by the engine and the replay oracle.
/// Comparisons are raw IEEE orderings; the optional band only counts
/// near-ties for the audit trail and never changes a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ComparePolicy {
    #[serde(default)]
    pub near_tie_band: Option<f64>,
    #[serde(default)]
    pub scan_form: MidpointForm,
}

/// How a row was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    /// The starting singleton row.
    Init,
    /// Truncating step: the first `keep` entries survive (keep >= 2) and the
    /// appended midpoint lands at position keep + 1.
    I { keep: usize },
    /// Extending step: the whole previous row survives.
    II,
}

impl CaseTag {
    /// Fixed wire spelling used in traces and reports.
    pub fn wire(&self) -> String {
        match self {
            CaseTag::Init => "init".into(),
            CaseTag::I { keep } => format!("I:{keep}"),
            CaseTag::II => "II".into(),
        }
    }
}

/// One row of the construction, stored without its interior entries: the
/// tail y, the entry the appended midpoint was based on, and the cached
/// S(tail) from the step that consumed this row. Interior entries are only
/// live in the engine's current row; every monitored pair is reachable
/// through (anchor, y).
#[derive(Debug, Clone)]
pub struct RowRecord {
    pub m: usize,
    pub case: CaseTag,
    pub y: Point,
    /// The entry preceding y in this row; None only for the first row.
    pub anchor: Option<Point>,
    /// S(y) for this row, filled when the loop computed it (every row except
    /// a final row reached by the budget rule).
    pub s_of_tail: Option<Point>,
    /// d(y, S y), same availability as `s_of_tail`.
    pub residual: Option<f64>,
    /// Near-tie comparisons logged while this row was being formed.
    pub near_ties: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct StopRule {
    /// Stop once the trajectory holds this many rows (checked after each
    /// step, so the count includes the starting row).
    pub max_rows: usize,
    /// Stop before a step when d(y, S y) falls to this level.
    pub residual_tol: Option<f64>,
    /// Stop when the last `gap_window` consecutive extracted-pair gaps
    /// d(x_k, x_{k+1}) all fall to this level.
    pub gap_tol: Option<f64>,
    pub gap_window: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_rows: 100_000,
            residual_tol: None,
            gap_tol: None,
            gap_window: 5,
        }
    }
}

impl StopRule {
    /// Default stopping for a space: residual at 1e-8 times the diameter
    /// bound, budget 10^5 rows.
    pub fn default_for(space: &SpaceModel) -> Self {
        StopRule {
            residual_tol: Some(1e-8 * space.diameter_bound()),
            ..StopRule::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_rows < 1 {
            return Err(Error::Config("maxRows must be at least 1".into()));
        }
        for (name, v) in [("residualTol", self.residual_tol), ("gapTol", self.gap_tol)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!(
                        "{name} must be positive and finite, got {v}"
                    )));
                }
            }
        }
        if self.gap_tol.is_some() && self.gap_window < 1 {
            return Err(Error::Config("gapWindow must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum StopReason {
    MaxRows,
    Residual,
    Gap,
}

/// Per-step hard checks: the appended midpoint must not move away from any
/// declared fixed point, and a wide enough new gap must buy the guaranteed
/// drop. A violation aborts the run, since it falsifies an unconditional
/// consequence of the construction.
#[derive(Debug, Clone)]
pub struct StepGuard {
    pub known_fixed_points: Vec<Point>,
    pub tol: f64,
}

impl StepGuard {
    pub fn new(known_fixed_points: Vec<Point>) -> Self {
        StepGuard {
            known_fixed_points,
            tol: 1e-10,
        }
    }
}

/// Scale grid used by the drop and gap-count monitors: b/2^t for t = 1..=12,
/// descending. Each monitored pair is tested at the largest grid value its
/// gap clears, which implies the bound at every smaller grid value.
pub fn eps_grid(b: f64) -> [f64; 12] {
    let mut grid = [0.0; 12];
    for (t, slot) in grid.iter_mut().enumerate() {
        *slot = b * (-(t as f64) - 1.0).exp2();
    }
    grid
}

#[derive(Debug)]
pub struct Trajectory {
    space: Arc<SpaceModel>,
    policy: ComparePolicy,
    rows: Vec<RowRecord>,
    /// Full entry list of the newest row; older rows keep only RowRecord.
    cur: Vec<Point>,
    stop: Option<StopReason>,
    near_ties_total: u64,
}

impl Trajectory {
    pub fn init(space: Arc<SpaceModel>, start: Point, policy: ComparePolicy) -> Result<Self> {
        if !space.contains(&start) {
            return Err(Error::Config(format!(
                "starting point {} is not a member of the {} model",
                start.to_json(),
                space.name()
            )));
        }
        if let Some(band) = policy.near_tie_band {
            if !(band >= 0.0 && band.is_finite()) {
                return Err(Error::Config(format!(
                    "nearTieBand must be nonnegative and finite, got {band}"
                )));
            }
        }
        Ok(Trajectory {
            space,
            policy,
            rows: vec![RowRecord {
                m: 1,
                case: CaseTag::Init,
                y: start.clone(),
                anchor: None,
                s_of_tail: None,
                residual: None,
                near_ties: 0,
            }],
            cur: vec![start],
            stop: None,
            near_ties_total: 0,
        })
    }

    pub fn space(&self) -> &Arc<SpaceModel> {
        &self.space
    }

    pub fn policy(&self) -> &ComparePolicy {
        &self.policy
    }

    pub fn rows(&self) -> &[RowRecord] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [RowRecord] {
        &mut self.rows
    }

    /// Tail of row j (0-based).
    pub fn y(&self, j: usize) -> &Point {
        &self.rows[j].y
    }

    /// Entries of the newest row.
    pub fn current_row(&self) -> &[Point] {
        &self.cur
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    pub fn near_ties_total(&self) -> u64 {
        self.near_ties_total
    }

    /// One construction step with w = S(tail of the newest row): scan the
    /// interior entries in order; at the first entry whose successor gap is
    /// below its predecessor gap while midpoint(entry, w) would land at
    /// least the predecessor gap away, truncate after it; otherwise keep the
    /// whole row. Either way append midpoint(base, w).
    fn advance(&mut self, w: &Point) -> Result<()> {
        let m = self.cur.len();
        let mut ties: u32 = 0;
        let mut chosen: Option<usize> = None;
        for idx in 1..m.saturating_sub(1) {
            let prev_gap = self.space.dist(&self.cur[idx], &self.cur[idx - 1])?;
            let next_gap = self.space.dist(&self.cur[idx], &self.cur[idx + 1])?;
            let mid_reach = match self.policy.scan_form {
                MidpointForm::HalfDistance => self.space.dist(&self.cur[idx], w)? / 2.0,
                MidpointForm::ExplicitMidpoint => {
                    let mid = self.space.midpoint(&self.cur[idx], w)?;
                    self.space.dist(&self.cur[idx], &mid)?
                }
            };
            if let Some(band) = self.policy.near_tie_band {
                if (next_gap - prev_gap).abs() <= band {
                    ties += 1;
                }
                if (mid_reach - prev_gap).abs() <= band {
                    ties += 1;
                }
            }
            if next_gap < prev_gap && mid_reach >= prev_gap {
                chosen = Some(idx);
                break;
            }
        }
        let (case, anchor) = match chosen {
            Some(idx) => {
                self.cur.truncate(idx + 1);
                (CaseTag::I { keep: idx + 1 }, self.cur[idx].clone())
            }
            None => (CaseTag::II, self.cur[m - 1].clone()),
        };
        let appended = self.space.midpoint(&anchor, w)?;
        self.cur.push(appended.clone());
        self.near_ties_total += u64::from(ties);
        self.rows.push(RowRecord {
            m: self.cur.len(),
            case,
            y: appended,
            anchor: Some(anchor),
            s_of_tail: None,
            residual: None,
            near_ties: ties,
        });
        Ok(())
    }
}

fn check_step(space: &SpaceModel, row_index: usize, row: &RowRecord, guard: &StepGuard) -> Result<()> {
    let anchor = row.anchor.as_ref().expect("stepped rows carry an anchor");
    let b = space.diameter_bound();
    let gap = space.dist(anchor, &row.y)?;
    let eps = eps_grid(b).into_iter().find(|&e| e <= gap);
    for p in &guard.known_fixed_points {
        let before = space.dist(anchor, p)?;
        let after = space.dist(&row.y, p)?;
        if after > before + guard.tol {
            let bundle = json!({
                "monitor": "step_fejer",
                "row": row_index + 1,
                "fixedPoint": p.to_json(),
                "before": before,
                "after": after,
            });
            return Err(Error::MonitorFailure {
                summary: format!(
                    "appended midpoint moved away from a fixed point at row {} ({} > {})",
                    row_index + 1,
                    after,
                    before
                ),
                bundle,
            });
        }
        if let Some(eps) = eps {
            let required = space.modulus().u(b, eps / b) * b;
            if before - after < required - guard.tol {
                let bundle = json!({
                    "monitor": "step_drop",
                    "row": row_index + 1,
                    "fixedPoint": p.to_json(),
                    "gap": gap,
                    "eps": eps,
                    "drop": before - after,
                    "required": required,
                });
                return Err(Error::MonitorFailure {
                    summary: format!(
                        "a gap of {} at row {} bought a drop of only {} (needs {})",
                        gap,
                        row_index + 1,
                        before - after,
                        required
                    ),
                    bundle,
                });
            }
        }
    }
    Ok(())
}

/// Drive the construction from `start` until a stop rule fires. The guard,
/// when present, runs its hard checks after every step and aborts the run on
/// a violation.
pub fn run(
    op: &SOperator,
    start: &Point,
    stop: &StopRule,
    guard: Option<&StepGuard>,
) -> Result<Trajectory> {
    stop.validate()?;
    let space = op.space().clone();
    let mut traj = Trajectory::init(space.clone(), start.clone(), ComparePolicy::default())?;
    run_loop(op, &mut traj, stop, guard)?;
    Ok(traj)
}

/// As `run`, with an explicit comparison policy.
pub fn run_with_policy(
    op: &SOperator,
    start: &Point,
    stop: &StopRule,
    guard: Option<&StepGuard>,
    policy: ComparePolicy,
) -> Result<Trajectory> {
    stop.validate()?;
    let space = op.space().clone();
    let mut traj = Trajectory::init(space.clone(), start.clone(), policy)?;
    run_loop(op, &mut traj, stop, guard)?;
    Ok(traj)
}

fn run_loop(
    op: &SOperator,
    traj: &mut Trajectory,
    stop: &StopRule,
    guard: Option<&StepGuard>,
) -> Result<()> {
    loop {
        let j = traj.rows.len() - 1;
        let tail = traj.rows[j].y.clone();
        let w = op.apply(&tail)?;
        let residual = traj.space.dist(&tail, &w)?;
        traj.rows[j].s_of_tail = Some(w.clone());
        traj.rows[j].residual = Some(residual);
        if let Some(tol) = stop.residual_tol {
            if residual <= tol {
                traj.stop = Some(StopReason::Residual);
                return Ok(());
            }
        }
        if let Some(gap_tol) = stop.gap_tol {
            let ex = extract_pk(traj)?;
            if ex.xk.len() > stop.gap_window {
                let tail_gaps_small = (ex.xk.len() - stop.gap_window..ex.xk.len() - 1)
                    .map(|k| traj.space.dist(&ex.xk[k], &ex.xk[k + 1]))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .all(|g| g <= gap_tol);
                if tail_gaps_small {
                    traj.stop = Some(StopReason::Gap);
                    return Ok(());
                }
            }
        }
        traj.advance(&w)?;
        if let Some(g) = guard {
            let new_index = traj.rows.len() - 1;
            check_step(&traj.space, new_index, &traj.rows[new_index], g)?;
        }
        if traj.rows.len() >= stop.max_rows.max(2) {
            traj.stop = Some(StopReason::MaxRows);
            return Ok(());
        }
    }
}

/// The subsequence of rows at which each length value appeared for the last
/// recorded time, together with a certified prefix.
#[derive(Debug, Clone)]
pub struct Extraction {
    /// pk[k-1] is the 0-based row index of x_k; strictly increasing.
    pub pk: Vec<usize>,
    /// xk[k-1] = tail of row pk[k-1].
    pub xk: Vec<Point>,
    /// Length of the prefix certified final: later rows provably cannot
    /// rewrite those entries. The remainder could still move if the run
    /// continued past the recorded horizon.
    pub confirmed: usize,
}

impl Extraction {
    pub fn provisional_tail(&self) -> usize {
        self.pk.len() - self.confirmed
    }
}

/// Extract the distinguished subsequence from a finished record.
///
/// Candidates: the last row index where each length k appears, taken for
/// k = 1, 2, ... while strictly increasing. Certification: entry 1 is never
/// rewritten and entry 2 only at row 2, so k <= 2 is always final. For
/// k >= 3 the entry value can be rewritten exactly once, by a truncating
/// step whose scan requires d(x_{k-1}, current entry k) < d(x_{k-1}, x_{k-2})
/// on the raw comparison path. A second in-horizon occurrence of length k
/// therefore settles the value permanently, and a single occurrence is
/// settled when that strict inequality is impossible, i.e. when
/// d(x_{k-1}, x_k) >= d(x_{k-1}, x_{k-2}) under the same arithmetic the scan
/// uses.
pub fn extract_pk(traj: &Trajectory) -> Result<Extraction> {
    let rows = traj.rows();
    let mut last_occ: std::collections::BTreeMap<usize, usize> = Default::default();
    for (j, row) in rows.iter().enumerate() {
        last_occ.insert(row.m, j);
    }
    let mut pk: Vec<usize> = Vec::new();
    let mut xk: Vec<Point> = Vec::new();
    for k in 1.. {
        match last_occ.get(&k) {
            Some(&j) if pk.last().is_none_or(|&prev| j > prev) => {
                pk.push(j);
                xk.push(rows[j].y.clone());
            }
            _ => break,
        }
    }
    let mut confirmed = 0;
    for k in 1..=pk.len() {
        let settled = if k <= 2 {
            true
        } else if confirmed < k - 1 {
            false
        } else {
            let after_prev = &rows[pk[k - 2] + 1..];
            let occurrences = after_prev.iter().filter(|r| r.m == k).count();
            match occurrences {
                1 => {
                    let reach = traj.space.dist(&xk[k - 2], &xk[k - 1])?;
                    let blockade = traj.space.dist(&xk[k - 2], &xk[k - 3])?;
                    reach >= blockade
                }
                2 => true,
                // Anything else contradicts the construction; the structural
                // monitor reports it, and nothing past it gets certified.
                _ => false,
            }
        };
        if settled {
            confirmed = k;
        } else {
            break;
        }
    }
    Ok(Extraction { pk, xk, confirmed })
}
