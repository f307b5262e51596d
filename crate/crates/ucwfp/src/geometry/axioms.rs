//! Sampled verification of the space contract: the four convexity axioms of
//! the combination operator, the five endpoint/segment identities, uniform
//! convexity, and the midpoint drop inequality driven by the u coefficient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::geometry::{Point, SpaceModel};

/// Outcome of one sampled axiom: worst signed violation over all admissible
/// trials (negative values mean margin to spare) and the inputs that achieved
/// it.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AxiomCheck {
    pub axiom: String,
    /// Number of trials that satisfied the axiom's premise.
    pub trials: u64,
    pub max_violation: Option<f64>,
    pub worst_seed_inputs: Option<serde_json::Value>,
    pub pass: bool,
}

/// Full axiom sweep for one space model.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AxiomReport {
    pub space: String,
    pub requested_trials: u64,
    pub seed: u64,
    pub tol: f64,
    pub checks: Vec<AxiomCheck>,
    pub pass: bool,
}

impl AxiomReport {
    pub fn check(&self, axiom: &str) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| c.axiom == axiom)
    }
}

struct Acc {
    axiom: &'static str,
    trials: u64,
    max_violation: f64,
    worst: Option<serde_json::Value>,
}

impl Acc {
    fn new(axiom: &'static str) -> Self {
        Acc {
            axiom,
            trials: 0,
            max_violation: f64::NEG_INFINITY,
            worst: Some(serde_json::Value::Null),
        }
    }

    fn observe(&mut self, violation: f64, witness: impl FnOnce() -> serde_json::Value) {
        self.trials += 1;
        if violation > self.max_violation {
            self.max_violation = violation;
            self.worst = Some(witness());
        }
    }

    fn finish(self, tol: f64) -> AxiomCheck {
        let seen = self.trials > 0;
        AxiomCheck {
            axiom: self.axiom.to_string(),
            trials: self.trials,
            max_violation: seen.then_some(self.max_violation),
            worst_seed_inputs: if seen { self.worst } else { None },
            pass: !seen || self.max_violation <= tol,
        }
    }
}

fn d(space: &SpaceModel, x: &Point, y: &Point) -> f64 {
    space.dist(x, y).expect("axiom sampler keeps points in one space")
}

fn comb(space: &SpaceModel, x: &Point, y: &Point, lambda: f64) -> Point {
    space
        .combine(x, y, lambda)
        .expect("axiom sampler keeps points and lambda admissible")
}

/// Run `trials` seeded random trials of every axiom; violations are reported,
/// never thrown.
pub fn check_axioms(space: &SpaceModel, trials: u64, seed: u64, tol: f64) -> AxiomReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w1 = Acc::new("w1");
    let mut w2 = Acc::new("w2");
    let mut w3 = Acc::new("w3");
    let mut w4 = Acc::new("w4");
    let mut endpoint_left = Acc::new("endpoint-left");
    let mut endpoint_right = Acc::new("endpoint-right");
    let mut degenerate = Acc::new("degenerate-segment");
    let mut dist_left = Acc::new("distance-from-left");
    let mut dist_right = Acc::new("distance-from-right");
    let mut convexity = Acc::new("uniform-convexity");

    for trial in 0..trials {
        let x = space.sample(&mut rng);
        let y = space.sample(&mut rng);
        let z = space.sample(&mut rng);
        let w = space.sample(&mut rng);
        let lambda: f64 = rng.gen_range(0.0..=1.0);
        let mu: f64 = rng.gen_range(0.0..=1.0);

        let witness = |extra: serde_json::Value| {
            let mut base = json!({
                "trial": trial,
                "x": x.to_json(),
                "y": y.to_json(),
                "lambda": lambda,
            });
            if let (Some(b), Some(e)) = (base.as_object_mut(), extra.as_object()) {
                for (k, v) in e {
                    b.insert(k.clone(), v.clone());
                }
            }
            base
        };

        let cxy = comb(space, &x, &y, lambda);
        let dxy = d(space, &x, &y);

        // (W1) d(z, W(x,y,l)) <= (1-l) d(z,x) + l d(z,y)
        let lhs = d(space, &z, &cxy);
        let rhs = (1.0 - lambda) * d(space, &z, &x) + lambda * d(space, &z, &y);
        w1.observe(lhs - rhs, || witness(json!({"z": z.to_json()})));

        // (W2) d(W(x,y,l), W(x,y,m)) = |l - m| d(x,y)
        let cxy_mu = comb(space, &x, &y, mu);
        let gap = d(space, &cxy, &cxy_mu);
        w2.observe((gap - (lambda - mu).abs() * dxy).abs(), || {
            witness(json!({"mu": mu}))
        });

        // (W3) W(x,y,l) = W(y,x,1-l)
        let cyx = comb(space, &y, &x, 1.0 - lambda);
        w3.observe(d(space, &cxy, &cyx), || witness(json!({})));

        // (W4) d(W(x,z,l), W(y,w,l)) <= (1-l) d(x,y) + l d(z,w)
        let cxz = comb(space, &x, &z, lambda);
        let cyw = comb(space, &y, &w, lambda);
        let lhs = d(space, &cxz, &cyw);
        let rhs = (1.0 - lambda) * d(space, &x, &y) + lambda * d(space, &z, &w);
        w4.observe(lhs - rhs, || {
            witness(json!({"z": z.to_json(), "w": w.to_json()}))
        });

        // Endpoint and degenerate-segment identities.
        endpoint_left.observe(d(space, &comb(space, &x, &y, 0.0), &x), || witness(json!({})));
        endpoint_right.observe(d(space, &comb(space, &x, &y, 1.0), &y), || witness(json!({})));
        degenerate.observe(d(space, &comb(space, &x, &x, lambda), &x), || witness(json!({})));

        // d(x, W(x,y,l)) = l d(x,y) and d(y, W(x,y,l)) = (1-l) d(x,y).
        dist_left.observe((d(space, &x, &cxy) - lambda * dxy).abs(), || witness(json!({})));
        dist_right.observe((d(space, &y, &cxy) - (1.0 - lambda) * dxy).abs(), || {
            witness(json!({}))
        });

        // Uniform convexity: for d(x,a) <= r, d(y,a) <= r, d(x,y) >= eps r,
        // the midpoint satisfies d(mid, a) <= (1 - eta(r, eps)) r.
        let a = &z;
        let (dxa, dya) = (d(space, &x, a), d(space, &y, a));
        let r_min = dxa.max(dya);
        if r_min > 0.0 && dxy > 0.0 {
            // Also exercise radii strictly above the tight choice; the
            // modulus is monotone in r, so the bound must keep holding.
            let scale: f64 = if trial % 3 == 0 { rng.gen_range(1.0..2.0) } else { 1.0 };
            let r = (r_min * scale).min(space.diameter_bound());
            let eps = dxy / r;
            if eps > 0.0 {
                let mid = comb(space, &x, &y, 0.5);
                let eta = space.modulus().eval(r, eps);
                let lhs = d(space, &mid, a);
                let rhs = (1.0 - eta) * r;
                convexity.observe(lhs - rhs, || {
                    witness(json!({"a": a.to_json(), "r": r, "eps": eps}))
                });
            }
        }
    }

    let checks = vec![
        w1.finish(tol),
        w2.finish(tol),
        w3.finish(tol),
        w4.finish(tol),
        endpoint_left.finish(tol),
        endpoint_right.finish(tol),
        degenerate.finish(tol),
        dist_left.finish(tol),
        dist_right.finish(tol),
        convexity.finish(tol),
    ];
    let pass = checks.iter().all(|c| c.pass);
    AxiomReport {
        space: space.name().to_string(),
        requested_trials: trials,
        seed,
        tol,
        checks,
        pass,
    }
}

/// Sampled check of the midpoint drop inequality: when d(x,a) <= d(y,a) <= r
/// and d(x,y) >= eps r, the midpoint improves on d(y,a) by at least
/// u(r, eps) * r.
pub fn check_u_property(space: &SpaceModel, trials: u64, seed: u64, tol: f64) -> AxiomCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Acc::new("midpoint-drop");
    for trial in 0..trials {
        let a = space.sample(&mut rng);
        let mut x = space.sample(&mut rng);
        let mut y = space.sample(&mut rng);
        if d(space, &x, &a) > d(space, &y, &a) {
            std::mem::swap(&mut x, &mut y);
        }
        let dya = d(space, &y, &a);
        let dxy = d(space, &x, &y);
        if dya == 0.0 || dxy == 0.0 {
            continue;
        }
        let scale: f64 = if trial % 3 == 0 { rng.gen_range(1.0..2.0) } else { 1.0 };
        let r = (dya * scale).min(space.diameter_bound());
        let eps = dxy / r;
        let u = space.modulus().u(r, eps);
        let mid = comb(space, &x, &y, 0.5);
        let lhs = d(space, &mid, &a);
        let rhs = dya - u * r;
        acc.observe(lhs - rhs, || {
            json!({
                "trial": trial,
                "a": a.to_json(),
                "x": x.to_json(),
                "y": y.to_json(),
                "r": r,
                "eps": eps,
                "u": u,
            })
        });
    }
    acc.finish(tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{make_space, SpaceConfig};

    #[test]
    fn euclidean_axioms_hold_tightly() {
        let s = make_space(&SpaceConfig::euclidean(2, 1.0)).unwrap();
        let report = check_axioms(&s, 2000, 7, 1e-9);
        assert!(report.pass, "{}", serde_json::to_string_pretty(&report).unwrap());
        for c in &report.checks {
            assert!(c.trials > 0, "axiom {} never sampled", c.axiom);
        }
    }

    #[test]
    fn tree_axioms_hold() {
        let s = make_space(&SpaceConfig::star_tree(4, 1.0)).unwrap();
        let report = check_axioms(&s, 2000, 11, 1e-9);
        assert!(report.pass, "{}", serde_json::to_string_pretty(&report).unwrap());
    }

    #[test]
    fn midpoint_drop_holds_on_sparse_ball() {
        let s = make_space(&SpaceConfig::sparse()).unwrap();
        let check = check_u_property(&s, 2000, 13, 1e-9);
        assert!(check.pass, "{}", serde_json::to_string_pretty(&check).unwrap());
        assert!(check.trials > 500);
    }

    #[test]
    fn report_serializes_with_wire_keys() {
        let s = make_space(&SpaceConfig::euclidean(2, 1.0)).unwrap();
        let report = check_axioms(&s, 10, 0, 1e-9);
        let v = serde_json::to_value(&report).unwrap();
        let first = &v["checks"][0];
        assert!(first.get("axiom").is_some());
        assert!(first.get("trials").is_some());
        assert!(first.get("maxViolation").is_some());
        assert!(first.get("worstSeedInputs").is_some());
    }

    #[test]
    fn a_broken_modulus_is_reported_not_thrown() {
        // Claim an absurdly strong modulus; uniform convexity must fail.
        let s = make_space(&SpaceConfig::euclidean(2, 1.0)).unwrap();
        let strong = crate::geometry::Modulus::custom(|_, _| 0.999, true, false);
        let s = match s {
            crate::geometry::SpaceModel::Euclidean(mut ball) => {
                ball.set_modulus_for_tests(strong);
                crate::geometry::SpaceModel::Euclidean(ball)
            }
            _ => unreachable!(),
        };
        let report = check_axioms(&s, 500, 3, 1e-9);
        let uc = report.check("uniform-convexity").unwrap();
        assert!(!uc.pass);
        assert!(uc.max_violation.unwrap() > 0.0);
        assert!(uc.worst_seed_inputs.is_some());
    }
}
