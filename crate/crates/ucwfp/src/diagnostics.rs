//! Post-hoc audit of a recorded trajectory. Every convergence guarantee the
//! row construction carries is rechecked numerically against the record, and
//! a deliberately slow independent replay recomputes the whole run for
//! branch-by-branch comparison.
//!
//! Monitors that mirror a finite inequality are hard: a violation beyond
//! tolerance is a failed verdict. Limit statements are audited through their
//! finite surrogates (count bounds, stop-time residuals, window statistics);
//! each verdict's `anchor` states the exact inequality that was checked.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{Point, SpaceModel};
use crate::iteration::{
    eps_grid, extract_pk, CaseTag, ComparePolicy, Extraction, MidpointForm, StopReason, Trajectory,
};
use crate::soperator::SOperator;

pub const MONITOR_NAMES: [&str; 18] = [
    "row_shape",
    "pk_structure",
    "row_fejer",
    "row_drop",
    "x_drop",
    "envelope",
    "gap_count_bound",
    "stabilization",
    "spread_x",
    "spread_tail_s",
    "spread_sx",
    "spread_y",
    "x_residual_link",
    "x_cauchy_window",
    "y_cauchy_window",
    "x_residual_decay",
    "y_residual_decay",
    "y_limit",
];

/// Which monitors to evaluate and with what tolerances.
#[derive(Debug, Clone)]
pub struct MonitorSet {
    /// Subset of `MONITOR_NAMES`; evaluation order is roster order.
    pub enabled: Vec<String>,
    /// Default slack for the hard inequalities.
    pub tol: f64,
    /// Per-monitor tolerance overrides.
    pub overrides: BTreeMap<String, f64>,
    /// Coincidence scale for the stabilization premise.
    pub fix_tol: f64,
    pub known_fixed_points: Vec<Point>,
    /// The residual threshold the run was stopped against, if any; the decay
    /// monitors check the final residual against it.
    pub residual_tol: Option<f64>,
    /// Window width for the Cauchy diagnostics.
    pub window: usize,
}

impl MonitorSet {
    /// Everything enabled, tolerances at their defaults, fixed points and
    /// the fixed-point threshold taken from the operator.
    pub fn standard(op: &SOperator, residual_tol: Option<f64>) -> Self {
        MonitorSet {
            enabled: MONITOR_NAMES.iter().map(|s| s.to_string()).collect(),
            tol: 1e-10,
            overrides: BTreeMap::new(),
            fix_tol: op.fix_tol(),
            known_fixed_points: op.map().known_fixed_points().to_vec(),
            residual_tol,
            window: 20,
        }
    }

    fn tol_for(&self, monitor: &str) -> f64 {
        self.overrides.get(monitor).copied().unwrap_or(self.tol)
    }

    fn validate(&self) -> Result<()> {
        for name in &self.enabled {
            if !MONITOR_NAMES.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown monitor name: {name}")));
            }
        }
        for (name, tol) in self.overrides.iter().chain(Some((&"tol".to_string(), &self.tol))) {
            if !(*tol > 0.0 && tol.is_finite()) {
                return Err(Error::Config(format!(
                    "monitor tolerance for {name} must be positive and finite, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one monitor over one trajectory. `margin` is the worst signed
/// slack observed: nonnegative is comfortable, anything below -tol fails.
/// Structural checks carry no margin. A failed verdict always has a witness.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Verdict {
    pub monitor: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    pub checked: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<serde_json::Value>,
    pub anchor: String,
}

pub fn all_pass(verdicts: &[Verdict]) -> bool {
    verdicts.iter().all(|v| v.pass)
}

/// One line per verdict: status, name, margin, anchor.
pub fn render_table(verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        let status = if v.pass { "pass" } else { "FAIL" };
        let margin = v
            .margin
            .map(|m| format!("{m:>13.3e}"))
            .unwrap_or_else(|| format!("{:>13}", "-"));
        out.push_str(&format!(
            "{status}  {name:<18} {margin}  {anchor}\n",
            name = v.monitor,
            anchor = v.anchor
        ));
    }
    out
}

/// Worst-margin accumulator: tracks the minimum slack and the witness that
/// produced it.
struct Worst {
    margin: f64,
    witness: Option<serde_json::Value>,
    checked: u64,
}

impl Worst {
    fn new() -> Self {
        Worst {
            margin: f64::INFINITY,
            witness: None,
            checked: 0,
        }
    }

    fn observe(&mut self, margin: f64, witness: impl FnOnce() -> serde_json::Value) {
        self.checked += 1;
        if margin < self.margin {
            self.margin = margin;
            self.witness = Some(witness());
        }
    }

    fn verdict(self, monitor: &str, tol: f64, anchor: &str) -> Verdict {
        let pass = self.checked == 0 || self.margin >= -tol;
        Verdict {
            monitor: monitor.into(),
            pass,
            margin: (self.checked > 0).then_some(self.margin),
            checked: self.checked,
            witness: if pass { None } else { self.witness },
            anchor: anchor.into(),
        }
    }
}

fn structural(monitor: &str, checked: u64, problem: Option<serde_json::Value>, anchor: &str) -> Verdict {
    Verdict {
        monitor: monitor.into(),
        pass: problem.is_none(),
        margin: None,
        checked,
        witness: problem,
        anchor: anchor.into(),
    }
}

/// Evaluate the enabled monitors over a finished record. Pure function of
/// the trajectory: cached tails, anchors, and residuals are the inputs, no
/// operator evaluations happen here.
pub fn check_trajectory(traj: &Trajectory, monitors: &MonitorSet) -> Result<Vec<Verdict>> {
    monitors.validate()?;
    let ex = extract_pk(traj)?;
    let mut out = Vec::new();
    for name in MONITOR_NAMES {
        if !monitors.enabled.iter().any(|n| n == name) {
            continue;
        }
        let tol = monitors.tol_for(name);
        let v = match name {
            "row_shape" => row_shape(traj),
            "pk_structure" => pk_structure(traj, &ex),
            "row_fejer" => row_fejer(traj, monitors, tol)?,
            "row_drop" => row_drop(traj, monitors, tol)?,
            "x_drop" => x_drop(traj, &ex, monitors, tol)?,
            "envelope" => envelope(traj, &ex, monitors, tol)?,
            "gap_count_bound" => gap_count_bound(traj, &ex)?,
            "stabilization" => stabilization(traj, &ex, monitors, tol)?,
            "spread_x" => spread(traj, &ex, tol, SpreadTarget::X)?,
            "spread_tail_s" => spread(traj, &ex, tol, SpreadTarget::TailS)?,
            "spread_sx" => spread(traj, &ex, tol, SpreadTarget::SX)?,
            "spread_y" => spread(traj, &ex, tol, SpreadTarget::Y)?,
            "x_residual_link" => x_residual_link(traj, &ex, tol)?,
            "x_cauchy_window" => cauchy_window(traj, &ex, monitors, WindowOver::X)?,
            "y_cauchy_window" => cauchy_window(traj, &ex, monitors, WindowOver::Y)?,
            "x_residual_decay" => residual_decay(traj, monitors, true),
            "y_residual_decay" => residual_decay(traj, monitors, false),
            "y_limit" => y_limit(traj, &ex, monitors, tol)?,
            _ => unreachable!("roster covers all names"),
        };
        out.push(v);
    }
    Ok(out)
}

fn row_shape(traj: &Trajectory) -> Verdict {
    const ANCHOR: &str =
        "m_1 = 1; case II: m_{j+1} = m_j + 1; case I at i: 2 <= i <= m_j - 1 and m_{j+1} = i + 1";
    let rows = traj.rows();
    let mut problem = None;
    let flag = |j: usize, what: &str| Some(json!({"row": j + 1, "problem": what}));
    for (j, row) in rows.iter().enumerate() {
        let bad = if j == 0 {
            if row.m != 1 || row.case != CaseTag::Init || row.anchor.is_some() {
                flag(j, "first row must be the init singleton")
            } else {
                None
            }
        } else {
            let prev_m = rows[j - 1].m;
            match row.case {
                CaseTag::Init => flag(j, "init tag after the first row"),
                CaseTag::II if row.m != prev_m + 1 => flag(j, "case II must extend by one"),
                CaseTag::I { keep } if !(2..=prev_m.saturating_sub(1)).contains(&keep) => {
                    flag(j, "case I index outside the scan range")
                }
                CaseTag::I { keep } if row.m != keep + 1 => {
                    flag(j, "case I length must be the kept prefix plus one")
                }
                _ if row.anchor.is_none() => flag(j, "stepped row lacks its anchor"),
                _ if j >= 2 && row.m < 3 => flag(j, "rows past the second must have length >= 3"),
                _ => None,
            }
        };
        if bad.is_some() {
            problem = bad;
            break;
        }
    }
    if problem.is_none() {
        let cur = traj.current_row();
        let last = rows.last().expect("nonempty");
        if cur.len() != last.m || cur.last() != Some(&last.y) {
            problem = Some(json!({"problem": "live row disagrees with the last record"}));
        }
    }
    structural("row_shape", rows.len() as u64, problem, ANCHOR)
}

fn pk_structure(traj: &Trajectory, ex: &Extraction) -> Verdict {
    const ANCHOR: &str =
        "m at p_k is k; p_k strictly increasing; no row after p_k has length <= k";
    let rows = traj.rows();
    let mut checked = 0u64;
    let mut problem = None;
    'scan: {
        if ex.pk.is_empty() || ex.pk[0] != 0 {
            problem = Some(json!({"problem": "first extracted row must be the start"}));
            break 'scan;
        }
        if rows.len() >= 2 && (ex.pk.len() < 2 || ex.pk[1] != 1) {
            problem = Some(json!({"problem": "second extracted row must be row 2"}));
            break 'scan;
        }
        for (idx, &p) in ex.pk.iter().enumerate() {
            let k = idx + 1;
            checked += 1;
            if rows[p].m != k {
                problem = Some(json!({"k": k, "row": p + 1, "problem": "length mismatch at p_k"}));
                break 'scan;
            }
            if idx > 0 {
                let prev = ex.pk[idx - 1];
                if p <= prev {
                    problem = Some(json!({"k": k, "problem": "p_k not increasing"}));
                    break 'scan;
                }
                if rows[prev + 1].m != k {
                    problem = Some(json!({
                        "k": k,
                        "row": prev + 2,
                        "problem": "row after p_{k-1} must have length k"
                    }));
                    break 'scan;
                }
                let occurrences = rows[prev + 1..].iter().filter(|r| r.m == k).count();
                if !(1..=2).contains(&occurrences) {
                    problem = Some(json!({
                        "k": k,
                        "occurrences": occurrences,
                        "problem": "length k must recur once or twice after p_{k-1}"
                    }));
                    break 'scan;
                }
            }
            if let Some(bad) = rows[p + 1..].iter().position(|r| r.m <= k) {
                problem = Some(json!({
                    "k": k,
                    "row": p + 2 + bad,
                    "problem": "row after p_k with length <= k"
                }));
                break 'scan;
            }
        }
    }
    structural("pk_structure", checked, problem, ANCHOR)
}

/// Every consecutive pair of every recorded row was appended as some row's
/// (anchor, tail) pair, and entries never mutate afterward, so auditing the
/// recorded (anchor, y) pairs covers all row-interior pairs. The live final
/// row is also walked directly.
fn row_pairs(traj: &Trajectory) -> Vec<(usize, Point, Point)> {
    let mut pairs = Vec::new();
    for (j, row) in traj.rows().iter().enumerate() {
        if let Some(anchor) = &row.anchor {
            pairs.push((j, anchor.clone(), row.y.clone()));
        }
    }
    let cur = traj.current_row();
    let j = traj.rows().len() - 1;
    for i in 1..cur.len() {
        pairs.push((j, cur[i - 1].clone(), cur[i].clone()));
    }
    pairs
}

fn row_fejer(traj: &Trajectory, monitors: &MonitorSet, tol: f64) -> Result<Verdict> {
    const ANCHOR: &str = "d(z_{i+1}, p) <= d(z_i, p) for every declared fixed point p";
    let space = traj.space();
    let mut worst = Worst::new();
    for (j, a, y) in row_pairs(traj) {
        for p in &monitors.known_fixed_points {
            let before = space.dist(&a, p)?;
            let after = space.dist(&y, p)?;
            worst.observe(before - after, || {
                json!({"row": j + 1, "fixedPoint": p.to_json(), "before": before, "after": after})
            });
        }
    }
    Ok(worst.verdict("row_fejer", tol, ANCHOR))
}

fn drop_requirement(space: &SpaceModel, gap: f64) -> Option<(f64, f64)> {
    let b = space.diameter_bound();
    let eps = eps_grid(b).into_iter().find(|&e| e <= gap)?;
    Some((eps, space.modulus().u(b, eps / b) * b))
}

fn row_drop(traj: &Trajectory, monitors: &MonitorSet, tol: f64) -> Result<Verdict> {
    const ANCHOR: &str =
        "d(z_i, z_{i+1}) >= eps  =>  d(z_i, p) - d(z_{i+1}, p) >= u(b, eps/b) * b";
    let space = traj.space();
    let mut worst = Worst::new();
    for (j, a, y) in row_pairs(traj) {
        let gap = space.dist(&a, &y)?;
        let Some((eps, required)) = drop_requirement(space, gap) else {
            continue;
        };
        for p in &monitors.known_fixed_points {
            let drop = space.dist(&a, p)? - space.dist(&y, p)?;
            worst.observe(drop - required, || {
                json!({
                    "row": j + 1,
                    "fixedPoint": p.to_json(),
                    "gap": gap,
                    "eps": eps,
                    "drop": drop,
                    "required": required
                })
            });
        }
    }
    Ok(worst.verdict("row_drop", tol, ANCHOR))
}

fn x_drop(traj: &Trajectory, ex: &Extraction, monitors: &MonitorSet, tol: f64) -> Result<Verdict> {
    const ANCHOR: &str =
        "d(x_k, x_{k+1}) >= eps  =>  d(x_k, p) - d(x_{k+1}, p) >= u(b, eps/b) * b";
    let space = traj.space();
    let mut worst = Worst::new();
    for k in 0..ex.xk.len().saturating_sub(1) {
        let gap = space.dist(&ex.xk[k], &ex.xk[k + 1])?;
        let Some((eps, required)) = drop_requirement(space, gap) else {
            continue;
        };
        for p in &monitors.known_fixed_points {
            let drop = space.dist(&ex.xk[k], p)? - space.dist(&ex.xk[k + 1], p)?;
            worst.observe(drop - required, || {
                json!({
                    "k": k + 1,
                    "fixedPoint": p.to_json(),
                    "gap": gap,
                    "eps": eps,
                    "drop": drop,
                    "required": required
                })
            });
        }
    }
    Ok(worst.verdict("x_drop", tol, ANCHOR))
}

fn envelope(traj: &Trajectory, ex: &Extraction, monitors: &MonitorSet, tol: f64) -> Result<Verdict> {
    const ANCHOR: &str = "n >= p_k  =>  d(y_n, p) <= d(x_k, p)";
    let space = traj.space();
    let rows = traj.rows();
    let mut worst = Worst::new();
    for p in &monitors.known_fixed_points {
        let dy: Vec<f64> = rows
            .iter()
            .map(|r| space.dist(&r.y, p))
            .collect::<Result<_>>()?;
        // suffix_max[n] = max over rows n.. of d(y, p)
        let mut suffix_max = dy.clone();
        for n in (0..suffix_max.len().saturating_sub(1)).rev() {
            suffix_max[n] = suffix_max[n].max(suffix_max[n + 1]);
        }
        for (idx, &pkk) in ex.pk.iter().enumerate() {
            let bound = space.dist(&ex.xk[idx], p)?;
            worst.observe(bound - suffix_max[pkk], || {
                json!({
                    "k": idx + 1,
                    "fixedPoint": p.to_json(),
                    "bound": bound,
                    "worstTail": suffix_max[pkk]
                })
            });
        }
    }
    Ok(worst.verdict("envelope", tol, ANCHOR))
}

fn gap_count_bound(traj: &Trajectory, ex: &Extraction) -> Result<Verdict> {
    const ANCHOR: &str = "#{k : d(x_k, x_{k+1}) >= eps} <= ceil((b + 1) / (u(b, eps/b) * b))";
    let space = traj.space();
    let b = space.diameter_bound();
    let gaps: Vec<f64> = (0..ex.xk.len().saturating_sub(1))
        .map(|k| space.dist(&ex.xk[k], &ex.xk[k + 1]))
        .collect::<Result<_>>()?;
    let mut worst = Worst::new();
    for eps in eps_grid(b) {
        let count = gaps.iter().filter(|&&g| g >= eps).count();
        let per_step = space.modulus().u(b, eps / b) * b;
        let bound = ((b + 1.0) / per_step).ceil();
        worst.observe(bound - count as f64, || {
            json!({"eps": eps, "count": count, "bound": bound})
        });
    }
    // Integer counts against an integer bound: no slack needed.
    Ok(worst.verdict("gap_count_bound", 0.0, ANCHOR))
}

fn stabilization(
    traj: &Trajectory,
    ex: &Extraction,
    monitors: &MonitorSet,
    tol: f64,
) -> Result<Verdict> {
    const ANCHOR: &str =
        "x_n = x_{n+1} = x_{n+2}  =>  y_j = x_n for every later recorded row";
    let space = traj.space();
    let rows = traj.rows();
    let mut worst = Worst::new();
    for n in 0..ex.xk.len().saturating_sub(2) {
        let d01 = space.dist(&ex.xk[n], &ex.xk[n + 1])?;
        let d12 = space.dist(&ex.xk[n + 1], &ex.xk[n + 2])?;
        if d01 > monitors.fix_tol || d12 > monitors.fix_tol {
            continue;
        }
        for (j, row) in rows.iter().enumerate().skip(ex.pk[n + 2]) {
            let dev = space.dist(&row.y, &ex.xk[n])?;
            worst.observe(-dev, || {
                json!({"n": n + 1, "row": j + 1, "deviation": dev})
            });
        }
    }
    Ok(worst.verdict("stabilization", tol, ANCHOR))
}

enum SpreadTarget {
    X,
    TailS,
    SX,
    Y,
}

/// The family of reach bounds triggered by a contracting pattern at x_n:
/// once d(x_n, x_{n+1}) < d(x_n, x_{n-1}), everything the construction
/// produces from p_{n+1} on stays within twice the blocked gap of x_n.
fn spread(traj: &Trajectory, ex: &Extraction, tol: f64, target: SpreadTarget) -> Result<Verdict> {
    let (monitor, anchor): (&str, &str) = match target {
        SpreadTarget::X => (
            "spread_x",
            "d(x_n, x_{n+1}) < d(x_n, x_{n-1})  =>  d(x_n, x_q) <= 2 d(x_n, x_{n-1}) for q >= n",
        ),
        SpreadTarget::TailS => (
            "spread_tail_s",
            "d(x_n, x_{n+1}) < d(x_n, x_{n-1})  =>  d(x_n, S y_u) <= 2 d(x_n, x_{n-1}) for stepped u >= p_{n+1}",
        ),
        SpreadTarget::SX => (
            "spread_sx",
            "d(x_n, x_{n+1}) < d(x_n, x_{n-1})  =>  d(x_n, S x_q) <= 2 d(x_n, x_{n-1}) for stepped p_q, q >= n+1",
        ),
        SpreadTarget::Y => (
            "spread_y",
            "d(x_n, x_{n+1}) < d(x_n, x_{n-1})  =>  d(x_n, y_u) <= 2 d(x_n, x_{n-1}) for u >= p_{n+1}",
        ),
    };
    let space = traj.space();
    let rows = traj.rows();
    // The bounds on S-values are established by the scan of the step that
    // consumed the row, so the stop row's cached S (computed for the
    // residual check, never scanned against) is out of scope.
    let stepped = rows.len() - 1;
    let mut worst = Worst::new();
    // 1-based n from 2: needs x_{n-1} and x_{n+1}.
    for n in 1..ex.xk.len().saturating_sub(1) {
        let ahead = space.dist(&ex.xk[n], &ex.xk[n + 1])?;
        let behind = space.dist(&ex.xk[n], &ex.xk[n - 1])?;
        // Raw strict comparison, exactly as the premise is written.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(ahead < behind) {
            continue;
        }
        let cap = 2.0 * behind;
        let mut observe = |dist: f64, witness: serde_json::Value| {
            worst.observe(cap - dist, || witness);
        };
        match target {
            SpreadTarget::X => {
                for q in n..ex.xk.len() {
                    let d = space.dist(&ex.xk[n], &ex.xk[q])?;
                    observe(d, json!({"n": n + 1, "q": q + 1, "dist": d, "cap": cap}));
                }
            }
            SpreadTarget::SX => {
                for q in n + 1..ex.xk.len() {
                    if ex.pk[q] >= stepped {
                        continue;
                    }
                    let Some(s) = rows[ex.pk[q]].s_of_tail.as_ref() else {
                        continue;
                    };
                    let d = space.dist(&ex.xk[n], s)?;
                    observe(d, json!({"n": n + 1, "q": q + 1, "dist": d, "cap": cap}));
                }
            }
            SpreadTarget::TailS => {
                for (u, row) in rows.iter().enumerate().skip(ex.pk[n + 1]).take_while(|(u, _)| *u < stepped) {
                    let Some(s) = row.s_of_tail.as_ref() else {
                        continue;
                    };
                    let d = space.dist(&ex.xk[n], s)?;
                    observe(d, json!({"n": n + 1, "row": u + 1, "dist": d, "cap": cap}));
                }
            }
            SpreadTarget::Y => {
                for (u, row) in rows.iter().enumerate().skip(ex.pk[n + 1]) {
                    let d = space.dist(&ex.xk[n], &row.y)?;
                    observe(d, json!({"n": n + 1, "row": u + 1, "dist": d, "cap": cap}));
                }
            }
        }
    }
    Ok(worst.verdict(monitor, tol, anchor))
}

fn x_residual_link(traj: &Trajectory, ex: &Extraction, tol: f64) -> Result<Verdict> {
    const ANCHOR: &str = "2 d(x_k, x_{k+1}) >= d(x_k, S x_k)";
    let space = traj.space();
    let rows = traj.rows();
    let mut worst = Worst::new();
    for k in 0..ex.xk.len().saturating_sub(1) {
        let Some(residual) = rows[ex.pk[k]].residual else {
            continue;
        };
        let gap = space.dist(&ex.xk[k], &ex.xk[k + 1])?;
        worst.observe(2.0 * gap - residual, || {
            json!({"k": k + 1, "gap": gap, "residual": residual})
        });
    }
    Ok(worst.verdict("x_residual_link", tol, ANCHOR))
}

enum WindowOver {
    X,
    Y,
}

/// Reported diagnostic: the max pairwise distance over the last W points,
/// which must shrink (weakly) as the window shrinks. The nesting makes the
/// monotonicity structural; the value itself is the useful output.
fn cauchy_window(
    traj: &Trajectory,
    ex: &Extraction,
    monitors: &MonitorSet,
    over: WindowOver,
) -> Result<Verdict> {
    let (monitor, anchor, points): (&str, &str, Vec<&Point>) = match over {
        WindowOver::X => (
            "x_cauchy_window",
            "max pairwise d over the last W extracted x, nonincreasing as W shrinks",
            ex.xk.iter().collect(),
        ),
        WindowOver::Y => (
            "y_cauchy_window",
            "max pairwise d over the last W tails y, nonincreasing as W shrinks",
            traj.rows().iter().map(|r| &r.y).collect(),
        ),
    };
    let space = traj.space();
    let w = monitors.window.min(points.len());
    let tail = &points[points.len() - w..];
    let mut spreads = Vec::with_capacity(w);
    let mut ok = true;
    let mut prev = f64::INFINITY;
    for width in (1..=w).rev() {
        let slice = &tail[w - width..];
        let mut max_d: f64 = 0.0;
        for i in 0..slice.len() {
            for j in i + 1..slice.len() {
                max_d = max_d.max(space.dist(slice[i], slice[j])?);
            }
        }
        if max_d > prev {
            ok = false;
        }
        prev = max_d;
        spreads.push(max_d);
    }
    Ok(Verdict {
        monitor: monitor.into(),
        pass: ok,
        margin: None,
        checked: w as u64,
        witness: Some(json!({"window": w, "spreadByShrinkingWindow": spreads})),
        anchor: anchor.into(),
    })
}

fn residual_decay(traj: &Trajectory, monitors: &MonitorSet, over_x: bool) -> Verdict {
    let (monitor, anchor) = if over_x {
        (
            "x_residual_decay",
            "stop = residual  =>  d(x_K, S x_K) <= residualTol at the final extracted row",
        )
    } else {
        (
            "y_residual_decay",
            "stop = residual  =>  d(y_J, S y_J) <= residualTol at the final row",
        )
    };
    // The final row is the last occurrence of its own length, so the final
    // extracted x IS the final tail; both monitors read the same cell and
    // differ only in what they claim about it.
    let final_residual = traj.rows().last().and_then(|r| r.residual);
    let hard = traj.stop_reason() == Some(StopReason::Residual);
    let (pass, margin) = match (hard, monitors.residual_tol, final_residual) {
        (true, Some(tol), Some(res)) => (res <= tol, Some(tol - res)),
        (true, _, _) => (false, None),
        (false, ..) => (true, None),
    };
    Verdict {
        monitor: monitor.into(),
        pass,
        margin,
        checked: 1,
        witness: Some(json!({
            "stopReason": traj.stop_reason().map(|r| format!("{r:?}")),
            "finalResidual": final_residual,
        })),
        anchor: anchor.into(),
    }
}

fn y_limit(traj: &Trajectory, ex: &Extraction, monitors: &MonitorSet, tol: f64) -> Result<Verdict> {
    const ANCHOR: &str =
        "n >= p_k  =>  d(y_n, p*) <= d(x_k, p*) for p* the nearest declared fixed point";
    let space = traj.space();
    let rows = traj.rows();
    let final_y = &rows.last().expect("nonempty").y;
    // Self-consistency envelope toward the final iterate: informative only,
    // since the final iterate is not a certified fixed point.
    let mut self_worst = f64::INFINITY;
    {
        let dy: Vec<f64> = rows
            .iter()
            .map(|r| space.dist(&r.y, final_y))
            .collect::<Result<_>>()?;
        let mut suffix_max = dy.clone();
        for n in (0..suffix_max.len().saturating_sub(1)).rev() {
            suffix_max[n] = suffix_max[n].max(suffix_max[n + 1]);
        }
        for (idx, &pkk) in ex.pk.iter().enumerate() {
            self_worst = self_worst.min(dy[pkk] - suffix_max[pkk]);
            let _ = idx;
        }
    }
    let mut nearest: Option<(&Point, f64)> = None;
    for p in &monitors.known_fixed_points {
        let d = space.dist(final_y, p)?;
        if nearest.is_none_or(|(_, best)| d < best) {
            nearest = Some((p, d));
        }
    }
    let Some((p_star, final_dist)) = nearest else {
        return Ok(Verdict {
            monitor: "y_limit".into(),
            pass: true,
            margin: None,
            checked: ex.pk.len() as u64,
            witness: Some(json!({
                "selfEnvelopeWorst": finite_or_null(self_worst),
                "declaredFixedPoints": 0,
            })),
            anchor: ANCHOR.into(),
        });
    };
    let mut worst = Worst::new();
    let dy: Vec<f64> = rows
        .iter()
        .map(|r| space.dist(&r.y, p_star))
        .collect::<Result<_>>()?;
    let mut suffix_max = dy.clone();
    for n in (0..suffix_max.len().saturating_sub(1)).rev() {
        suffix_max[n] = suffix_max[n].max(suffix_max[n + 1]);
    }
    for (idx, &pkk) in ex.pk.iter().enumerate() {
        let bound = space.dist(&ex.xk[idx], p_star)?;
        worst.observe(bound - suffix_max[pkk], || {
            json!({"k": idx + 1, "bound": bound, "worstTail": suffix_max[pkk]})
        });
    }
    let mut v = worst.verdict("y_limit", tol, ANCHOR);
    let report = json!({
        "finalDistanceToNearestFixedPoint": final_dist,
        "nearestFixedPoint": p_star.to_json(),
        "selfEnvelopeWorst": finite_or_null(self_worst),
    });
    v.witness = match v.witness.take() {
        Some(w) => Some(json!({"violation": w, "report": report})),
        None => Some(report),
    };
    Ok(v)
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

/// Replay of a recorded run by an independent, deliberately naive
/// implementation of the same construction: full rows, every distance
/// recomputed from scratch, nothing shared with the engine except the space
/// primitives, the operator, and the comparison policy.
#[derive(Debug)]
pub struct Replay {
    pub rows: Vec<Vec<Point>>,
    pub cases: Vec<CaseTag>,
}

/// One naive row step: every distance recomputed from scratch over the full
/// row, 1-based scan index i over [2, m-1].
fn replay_step(op: &SOperator, policy: ComparePolicy, row: &[Point]) -> Result<(Vec<Point>, CaseTag)> {
    let space = op.space();
    let m = row.len();
    let w = op.apply(&row[m - 1])?;
    let mut found: Option<usize> = None;
    for i in 2..=m.saturating_sub(1) {
        let to_next = space.dist(&row[i - 1], &row[i])?;
        let to_prev = space.dist(&row[i - 1], &row[i - 2])?;
        let reach = match policy.scan_form {
            MidpointForm::HalfDistance => space.dist(&row[i - 1], &w)? / 2.0,
            MidpointForm::ExplicitMidpoint => {
                let mid = space.midpoint(&row[i - 1], &w)?;
                space.dist(&row[i - 1], &mid)?
            }
        };
        if to_next < to_prev && reach >= to_prev {
            found = Some(i);
            break;
        }
    }
    match found {
        Some(i) => {
            let mut next: Vec<Point> = row[..i].to_vec();
            next.push(space.midpoint(&row[i - 1], &w)?);
            Ok((next, CaseTag::I { keep: i }))
        }
        None => {
            let mut next = row.to_vec();
            next.push(space.midpoint(&row[m - 1], &w)?);
            Ok((next, CaseTag::II))
        }
    }
}

pub fn replay_oracle(
    op: &SOperator,
    start: &Point,
    rows: usize,
    policy: ComparePolicy,
) -> Result<Replay> {
    if rows > 1000 {
        return Err(Error::Config(format!(
            "the replay oracle is capped at 1000 rows, asked for {rows}"
        )));
    }
    let mut all_rows: Vec<Vec<Point>> = vec![vec![start.clone()]];
    let mut cases = vec![CaseTag::Init];
    while all_rows.len() < rows {
        let (next_row, case) = replay_step(op, policy, all_rows.last().expect("nonempty"))?;
        all_rows.push(next_row);
        cases.push(case);
    }
    Ok(Replay { rows: all_rows, cases })
}

/// First disagreement between a recorded trajectory and its replay.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Divergence {
    /// 1-based row where the records first disagree.
    pub row: usize,
    pub field: String,
    pub engine: String,
    pub oracle: String,
}

/// Replay the run the trajectory records and compare row by row: case tags,
/// lengths, and tails must agree. Tails compare exactly on flat models and
/// within 1e-12 on the curved one. The replay streams with the comparison,
/// holding one row at a time, so the cap is on rows, not memory.
pub fn compare_with_replay(op: &SOperator, traj: &Trajectory) -> Result<Option<Divergence>> {
    let rows = traj.rows();
    if rows.len() > 1000 {
        return Err(Error::Config(format!(
            "the replay oracle is capped at 1000 rows, asked for {}",
            rows.len()
        )));
    }
    let policy = *traj.policy();
    let space = traj.space();
    let curved = matches!(**space, SpaceModel::Hyperboloid(_));
    let mut oracle_row: Vec<Point> = vec![rows[0].y.clone()];
    let mut oracle_case = CaseTag::Init;
    for (j, row) in rows.iter().enumerate() {
        if j > 0 {
            let (next, case) = replay_step(op, policy, &oracle_row)?;
            oracle_row = next;
            oracle_case = case;
        }
        if row.case != oracle_case {
            return Ok(Some(Divergence {
                row: j + 1,
                field: "case".into(),
                engine: row.case.wire(),
                oracle: oracle_case.wire(),
            }));
        }
        if row.m != oracle_row.len() {
            return Ok(Some(Divergence {
                row: j + 1,
                field: "m".into(),
                engine: row.m.to_string(),
                oracle: oracle_row.len().to_string(),
            }));
        }
        let oracle_y = oracle_row.last().expect("rows are nonempty");
        let agree = if curved {
            space.dist(&row.y, oracle_y)? <= 1e-12
        } else {
            row.y == *oracle_y
        };
        if !agree {
            return Ok(Some(Divergence {
                row: j + 1,
                field: "y".into(),
                engine: format!("{}", row.y.to_json()),
                oracle: format!("{}", oracle_y.to_json()),
            }));
        }
    }
    Ok(None)
}
