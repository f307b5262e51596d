//! The averaging operator derived from an asymptotically nonexpansive map:
//! near a fixed point it is the identity, otherwise it returns the midpoint
//! of x and a carefully chosen iterate T^m x. The exponent m is picked so
//! that the operator moves at least a fixed fraction of d(x, Tx) while
//! staying quasi-nonexpansive toward every fixed point.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, SpaceModel};
use crate::geometry::axioms::AxiomCheck;
use crate::mappings::AsymptoticMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SMode {
    /// Full construction: threshold, exponent search, midpoint.
    General,
    /// S := T, valid only for maps declared nonexpansive (k identically 0).
    NonexpansiveShortcut,
}

/// Which branch produced S x, with the search data for the midpoint branch.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase", rename_all_fields = "camelCase", tag = "branch")]
pub enum SDecision {
    /// d(x, Tx) <= fixTol, so S x = x.
    FixedPoint { dx_tx: f64 },
    /// Shortcut mode: S x = T x.
    Shortcut { dx_tx: f64 },
    /// S x = midpoint(T^m x, x).
    Midpoint {
        n: usize,
        m: usize,
        threshold: f64,
        dx_tx: f64,
    },
}

#[derive(Debug, Clone)]
pub struct SOperator {
    space: Arc<SpaceModel>,
    map: Arc<AsymptoticMap>,
    fix_tol: f64,
    mode: SMode,
}

impl SOperator {
    /// Default fixed-point band: 1e-12 * diameter bound. Below this residual
    /// the exact test "Tx = x" is taken to hold, which keeps `threshold`
    /// strictly positive on the other branch.
    pub fn new(map: Arc<AsymptoticMap>, mode: SMode) -> Result<Self> {
        let fix_tol = 1e-12 * map.space().diameter_bound();
        Self::with_fix_tol(map, mode, fix_tol)
    }

    pub fn with_fix_tol(map: Arc<AsymptoticMap>, mode: SMode, fix_tol: f64) -> Result<Self> {
        if !(fix_tol > 0.0 && fix_tol.is_finite()) {
            return Err(Error::Config(format!(
                "fixed-point tolerance must be positive and finite, got {fix_tol}"
            )));
        }
        if mode == SMode::NonexpansiveShortcut && !map.is_nonexpansive() {
            return Err(Error::Config(format!(
                "shortcut mode requires a nonexpansive map, but '{}' declares k1 = {}",
                map.name(),
                map.k(1)
            )));
        }
        Ok(SOperator {
            space: map.space().clone(),
            map,
            fix_tol,
            mode,
        })
    }

    pub fn space(&self) -> &Arc<SpaceModel> {
        &self.space
    }

    pub fn map(&self) -> &Arc<AsymptoticMap> {
        &self.map
    }

    pub fn fix_tol(&self) -> f64 {
        self.fix_tol
    }

    pub fn mode(&self) -> SMode {
        self.mode
    }

    /// The bound both k_n and k_{n+1} must clear:
    /// min(d(x,Tx)/(2b), 2 eta(b, d(x,Tx)/(2b))). Positive whenever
    /// d(x,Tx) > 0.
    pub fn threshold(&self, dx_tx: f64) -> f64 {
        debug_assert!(dx_tx > 0.0);
        let b = self.space.diameter_bound();
        let eps = dx_tx / (2.0 * b);
        eps.min(2.0 * self.space.modulus().eval(b, eps))
    }

    /// Minimal n >= 1 with k_n <= tau and k_{n+1} <= tau. The declared
    /// witness bounds the scan, so a map whose witness lies must fail here
    /// rather than loop.
    pub fn find_n(&self, tau: f64) -> Result<usize> {
        // Also rejects NaN.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(tau > 0.0) {
            return Err(Error::NumericalContradiction(format!(
                "exponent threshold must be positive, got {tau}"
            )));
        }
        let witness = self.map.k_witness(tau)?;
        for n in 1..=witness + 1 {
            if self.map.k(n) <= tau && self.map.k(n + 1) <= tau {
                return Ok(n);
            }
        }
        Err(Error::MapContract(format!(
            "map '{}' declares witness {witness} for {tau}, but its k-sequence stays above it",
            self.map.name()
        )))
    }

    /// Minimal m in {n, n+1} with d(T^m x, x) >= d(Tx,x)/(2 + k1); one of the
    /// two always qualifies for a contract-satisfying map. Returns m together
    /// with T^m x. A band of 1e-12 * b absorbs rounding when both raw
    /// comparisons fail at the margin.
    pub fn find_m(&self, x: &Point, n: usize, dx_tx: f64) -> Result<(usize, Point)> {
        let bound = dx_tx / (2.0 + self.map.k(1));
        let tn = self.map.power(n, x)?;
        let dn = self.space.dist(&tn, x)?;
        if dn >= bound {
            return Ok((n, tn));
        }
        let tn1 = self.map.apply(&tn)?;
        let dn1 = self.space.dist(&tn1, x)?;
        if dn1 >= bound {
            return Ok((n + 1, tn1));
        }
        let slack = 1e-12 * self.space.diameter_bound();
        if dn >= bound - slack {
            return Ok((n, tn));
        }
        if dn1 >= bound - slack {
            return Ok((n + 1, tn1));
        }
        Err(Error::NumericalContradiction(format!(
            "neither d(T^{n} x, x) = {dn} nor d(T^{} x, x) = {dn1} reaches {bound}; \
             the declared k-sequence of '{}' cannot be honest",
            n + 1,
            self.map.name()
        )))
    }

    pub fn apply(&self, x: &Point) -> Result<Point> {
        Ok(self.apply_traced(x)?.0)
    }

    /// As `apply`, returning which branch fired and the search data.
    pub fn apply_traced(&self, x: &Point) -> Result<(Point, SDecision)> {
        let tx = self.map.apply(x)?;
        let dx_tx = self.space.dist(x, &tx)?;
        if dx_tx <= self.fix_tol {
            return Ok((x.clone(), SDecision::FixedPoint { dx_tx }));
        }
        if self.mode == SMode::NonexpansiveShortcut {
            return Ok((tx, SDecision::Shortcut { dx_tx }));
        }
        let threshold = self.threshold(dx_tx);
        let n = self.find_n(threshold)?;
        let (m, tmx) = self.find_m(x, n, dx_tx)?;
        let sx = self.space.midpoint(&tmx, x)?;
        Ok((
            sx,
            SDecision::Midpoint {
                n,
                m,
                threshold,
                dx_tx,
            },
        ))
    }

    /// Sampled verification of the operator's contract: the displacement
    /// lower bound, the residual equivalence linking d(x,Tx) and d(x,Sx),
    /// quasi-nonexpansiveness toward declared fixed points, and exactness at
    /// those points.
    pub fn check_properties(&self, trials: u64, seed: u64, tol: f64) -> Result<SReport> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k1 = self.map.k(1);
        // d(Sx,x) >= dx_tx / (2(2+k1)); inverted, a tiny d(Sx,x) certifies a
        // proportionally tiny residual, giving a two-sided surrogate for
        // Fix(T) = Fix(S).
        let factor = 1.0 / (2.0 * (2.0 + k1));
        let mut displacement = Acc::new("displacement-lower-bound");
        let mut equivalence = Acc::new("residual-equivalence");
        let mut quasi = Acc::new("quasi-nonexpansiveness");
        for trial in 0..trials {
            let x = self.space.sample(&mut rng);
            let (sx, decision) = self.apply_traced(&x)?;
            let dx_sx = self.space.dist(&x, &sx)?;
            let dx_tx = match decision {
                SDecision::FixedPoint { dx_tx }
                | SDecision::Shortcut { dx_tx }
                | SDecision::Midpoint { dx_tx, .. } => dx_tx,
            };
            if dx_tx > self.fix_tol {
                displacement.observe(trial, factor * dx_tx - dx_sx, &x);
            }
            let violation = if dx_tx <= self.fix_tol {
                // Fixed-point branch must return x itself.
                dx_sx
            } else if dx_sx <= self.fix_tol * factor {
                // Small S-residual must certify a small T-residual.
                dx_tx - self.fix_tol
            } else {
                f64::NEG_INFINITY
            };
            equivalence.observe(trial, violation, &x);
            for p in self.map.known_fixed_points() {
                let before = self.space.dist(&x, p)?;
                let after = self.space.dist(&sx, p)?;
                quasi.observe(trial, after - before, &x);
            }
        }
        let mut checks = vec![
            displacement.finish(tol),
            equivalence.finish(tol),
            quasi.finish(tol),
        ];
        let mut fixed = Acc::new("declared-points-fixed");
        for (i, p) in self.map.known_fixed_points().iter().enumerate() {
            let sp = self.apply(p)?;
            fixed.observe(i as u64, self.space.dist(&sp, p)?, p);
        }
        checks.push(fixed.finish(0.0));
        let pass = checks.iter().all(|c| c.pass);
        Ok(SReport {
            map: self.map.name().to_string(),
            trials,
            seed,
            checks,
            pass,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SReport {
    pub map: String,
    pub trials: u64,
    pub seed: u64,
    pub checks: Vec<AxiomCheck>,
    pub pass: bool,
}

struct Acc {
    name: &'static str,
    trials: u64,
    max_violation: f64,
    worst: Option<serde_json::Value>,
}

impl Acc {
    fn new(name: &'static str) -> Self {
        Acc {
            name,
            trials: 0,
            max_violation: f64::NEG_INFINITY,
            worst: None,
        }
    }

    fn observe(&mut self, trial: u64, violation: f64, x: &Point) {
        self.trials += 1;
        if violation > self.max_violation || self.worst.is_none() {
            self.max_violation = violation;
            self.worst = Some(serde_json::json!({"trial": trial, "x": x.to_json()}));
        }
    }

    fn finish(self, tol: f64) -> AxiomCheck {
        AxiomCheck {
            axiom: self.name.into(),
            trials: self.trials,
            max_violation: (self.trials > 0).then_some(self.max_violation),
            worst_seed_inputs: self.worst,
            pass: self.trials == 0 || self.max_violation <= tol,
        }
    }
}
