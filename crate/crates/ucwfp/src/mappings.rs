//! Self-maps with declared asymptotic Lipschitz data: each map carries its
//! null sequence (k_n), with d(T^n x, T^n y) <= (1 + k_n) d(x, y), plus an
//! effective witness N(eps) past which k_n <= eps.

use std::f64::consts::LN_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::axioms::AxiomCheck;
use crate::geometry::{Point, SpaceModel};
use crate::spaces::{point_from_json, SparseVec, DROP_EPS};

/// Declarative map selection, one action plus its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub map: String,
    /// Rotation angle (radians).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Contraction target point literal, in the space's point wire format.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<serde_json::Value>,
    /// Contraction strength in (0, 1) for "contraction" and "treefold".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// Leg rotation amount for "treefold" (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<u32>,
}

impl MapConfig {
    pub fn rotation(theta: f64) -> Self {
        MapConfig {
            map: "rotation".into(),
            theta: Some(theta),
            target: None,
            rate: None,
            shift: None,
        }
    }

    pub fn contraction(target: serde_json::Value, rate: f64) -> Self {
        MapConfig {
            map: "contraction".into(),
            theta: None,
            target: Some(target),
            rate: Some(rate),
            shift: None,
        }
    }

    pub fn goebelkirk() -> Self {
        MapConfig {
            map: "goebelkirk".into(),
            theta: None,
            target: None,
            rate: None,
            shift: None,
        }
    }

    pub fn treefold(rate: f64, shift: u32) -> Self {
        MapConfig {
            map: "treefold".into(),
            theta: None,
            target: None,
            rate: Some(rate),
            shift: Some(shift),
        }
    }
}

#[derive(Debug, Clone)]
enum Action {
    /// Plane rotation about the origin of the 2-d Euclidean ball.
    Rotation { cos_t: f64, sin_t: f64 },
    /// Geodesic pull toward a target: T x = W(x, q, rate).
    Contraction { target: Point, rate: f64 },
    /// Shifted-square map on the sparse unit ball:
    /// T(x1, x2, x3, ...) = (0, x1^2, a2 x2, a3 x3, ...).
    SquareShift,
    /// Pull toward the hub of the star tree, then rotate legs.
    TreeFold { rate: f64, shift: u32 },
}

#[derive(Debug, Clone)]
enum KSeq {
    /// Nonexpansive map: k_n = 0 for all n.
    Zero,
    /// k_n = 2 * prod_{i=2..n} a_i - 1 for the canonical shifted-square
    /// coefficients; see `square_shift_k`.
    SquareShift,
    /// Explicit head values, zero beyond; for tests and diagnostics.
    Table {
        values: Vec<f64>,
        witness_override: Option<usize>,
    },
}

/// Canonical damping coefficients a_i = (1/2)^(1/2^(i-1)) for i >= 2; the
/// exponents sum to 1, so the infinite product is exactly 1/2.
fn square_shift_a(i: u32) -> f64 {
    debug_assert!(i >= 2);
    (-LN_2 * (1.0 - i as f64).exp2()).exp()
}

/// k_n for the shifted-square map. The square term doubles differences on the
/// unit ball (|x^2 - y^2| <= 2 |x - y|), and after n applications that path is
/// damped by prod_{i=2..n} a_i, giving the iterate Lipschitz constant
/// 1 + k_n = 2 * prod_{i=2..n} a_i = 2^(2^(1-n)); every other path is a plain
/// product of a_i < 1. Decreases strictly from k_1 = 1 to 0.
fn square_shift_k(n: usize) -> f64 {
    debug_assert!(n >= 1);
    (LN_2 * (1.0 - n as f64).exp2()).exp_m1().max(0.0)
}

/// A self-map of one space model together with its asymptotic Lipschitz data
/// and (when known) its fixed-point set.
#[derive(Debug, Clone)]
pub struct AsymptoticMap {
    space: Arc<SpaceModel>,
    action: Action,
    k: KSeq,
    fixed: Vec<Point>,
    name: String,
}

impl AsymptoticMap {
    pub fn space(&self) -> &Arc<SpaceModel> {
        &self.space
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Fixed points known analytically; empty when none are known.
    pub fn known_fixed_points(&self) -> &[Point] {
        &self.fixed
    }

    /// Whether the map is declared nonexpansive (k identically zero).
    pub fn is_nonexpansive(&self) -> bool {
        match &self.k {
            KSeq::Zero => true,
            KSeq::SquareShift => false,
            KSeq::Table { values, .. } => values.iter().all(|&v| v <= 0.0),
        }
    }

    /// k_n for n >= 1.
    pub fn k(&self, n: usize) -> f64 {
        assert!(n >= 1, "k-sequence is indexed from 1");
        match &self.k {
            KSeq::Zero => 0.0,
            KSeq::SquareShift => square_shift_k(n),
            KSeq::Table { values, .. } => values.get(n - 1).copied().unwrap_or(0.0),
        }
    }

    /// Index N with k_n <= eps for every n >= N. Requires eps > 0.
    pub fn k_witness(&self, eps: f64) -> Result<usize> {
        // Also rejects NaN.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(eps > 0.0) {
            return Err(Error::MapContract(format!(
                "k-witness needs a positive threshold, got {eps}"
            )));
        }
        match &self.k {
            KSeq::Zero => Ok(1),
            KSeq::SquareShift => {
                // Closed-form start: k_n <= eps iff 2^(1-n) ln 2 <= ln(1+eps).
                let guess = 1.0 - (eps.ln_1p() / LN_2).log2();
                let mut n = if guess.is_finite() { guess.ceil().max(1.0) as usize } else { 1 };
                while square_shift_k(n) > eps {
                    n += 1;
                }
                while n > 1 && square_shift_k(n - 1) <= eps {
                    n -= 1;
                }
                Ok(n)
            }
            KSeq::Table {
                values,
                witness_override,
            } => {
                if let Some(w) = witness_override {
                    return Ok(*w);
                }
                let last_above = values.iter().rposition(|&v| v > eps);
                Ok(last_above.map_or(1, |i| i + 2))
            }
        }
    }

    /// Apply T once.
    pub fn apply(&self, x: &Point) -> Result<Point> {
        match (&self.action, x) {
            (Action::Rotation { cos_t, sin_t }, Point::Euclidean(c)) if c.len() == 2 => Ok(
                Point::Euclidean(vec![cos_t * c[0] - sin_t * c[1], sin_t * c[0] + cos_t * c[1]]),
            ),
            (Action::Contraction { target, rate }, x) => self.space.combine(x, target, *rate),
            (Action::SquareShift, Point::Sparse(entries)) => {
                let mut out = SparseVec::new();
                for (&i, &v) in entries {
                    let (j, w) = if i == 1 {
                        (2, v * v)
                    } else {
                        (i + 1, square_shift_a(i) * v)
                    };
                    if w.abs() > DROP_EPS {
                        out.insert(j, w);
                    }
                }
                Ok(Point::Sparse(out))
            }
            (Action::TreeFold { rate, shift }, &Point::Tree { leg, offset }) => {
                let legs = match self.space.as_ref() {
                    SpaceModel::Tree(t) => t.legs(),
                    _ => unreachable!("treefold is only built on star trees"),
                };
                let pulled = (1.0 - rate) * offset;
                let (leg, offset) =
                    crate::spaces::StarTree::canonicalize((leg + shift) % legs, pulled);
                Ok(Point::Tree { leg, offset })
            }
            _ => Err(Error::MapSpaceMismatch(format!(
                "map '{}' cannot act on a {} point",
                self.name,
                x.kind()
            ))),
        }
    }

    /// T^m x by sequential application; m = 0 returns x unchanged.
    pub fn power(&self, m: usize, x: &Point) -> Result<Point> {
        let mut cur = x.clone();
        for _ in 0..m {
            cur = self.apply(&cur)?;
        }
        Ok(cur)
    }

    /// Replace the declared k-sequence with explicit head values (zero
    /// beyond). Testing/diagnostics hook; the action is unchanged.
    pub fn with_declared_k(mut self, values: Vec<f64>) -> Self {
        self.k = KSeq::Table {
            values,
            witness_override: None,
        };
        self
    }

    /// As `with_declared_k`, but also force the witness answer, valid or not.
    /// Lets tests exercise the witness-contract failure path.
    pub fn with_declared_witness(mut self, values: Vec<f64>, witness: usize) -> Self {
        self.k = KSeq::Table {
            values,
            witness_override: Some(witness),
        };
        self
    }
}

fn check_rate(rate: Option<f64>) -> Result<f64> {
    let rate = rate.ok_or_else(|| Error::Config("map requires parameter 'rate'".into()))?;
    if (0.0..1.0).contains(&rate) && rate > 0.0 {
        Ok(rate)
    } else {
        Err(Error::Config(format!("'rate' must lie in (0, 1), got {rate}")))
    }
}

/// Build a map from config, validating the space pairing.
pub fn make_map(space: Arc<SpaceModel>, config: &MapConfig) -> Result<AsymptoticMap> {
    match config.map.as_str() {
        "rotation" => {
            let dim_ok = matches!(space.as_ref(), SpaceModel::Euclidean(b) if b.dim() == 2);
            if !dim_ok {
                return Err(Error::MapSpaceMismatch(
                    "rotation needs the 2-d euclidean ball".into(),
                ));
            }
            let theta = config
                .theta
                .filter(|t| t.is_finite())
                .ok_or_else(|| Error::Config("rotation requires finite 'theta'".into()))?;
            let origin = Point::Euclidean(vec![0.0, 0.0]);
            Ok(AsymptoticMap {
                space,
                action: Action::Rotation {
                    cos_t: theta.cos(),
                    sin_t: theta.sin(),
                },
                k: KSeq::Zero,
                fixed: vec![origin],
                name: "rotation".into(),
            })
        }
        "contraction" => {
            let rate = check_rate(config.rate)?;
            let target_json = config
                .target
                .as_ref()
                .ok_or_else(|| Error::Config("contraction requires 'target'".into()))?;
            let target = point_from_json(&space, target_json)?;
            Ok(AsymptoticMap {
                space,
                action: Action::Contraction {
                    target: target.clone(),
                    rate,
                },
                k: KSeq::Zero,
                fixed: vec![target],
                name: "contraction".into(),
            })
        }
        "goebelkirk" => {
            if !matches!(space.as_ref(), SpaceModel::Sparse(_)) {
                return Err(Error::MapSpaceMismatch(
                    "goebelkirk needs the sparse l2 ball".into(),
                ));
            }
            Ok(AsymptoticMap {
                space,
                action: Action::SquareShift,
                k: KSeq::SquareShift,
                fixed: vec![Point::Sparse(SparseVec::new())],
                name: "goebelkirk".into(),
            })
        }
        "treefold" => {
            let legs = match space.as_ref() {
                SpaceModel::Tree(t) => t.legs(),
                _ => {
                    return Err(Error::MapSpaceMismatch("treefold needs a star tree".into()));
                }
            };
            let rate = check_rate(config.rate)?;
            let shift = config.shift.unwrap_or(1) % legs;
            Ok(AsymptoticMap {
                space,
                action: Action::TreeFold { rate, shift },
                k: KSeq::Zero,
                fixed: vec![Point::Tree { leg: 0, offset: 0.0 }],
                name: "treefold".into(),
            })
        }
        other => Err(Error::Config(format!("unknown map '{other}'"))),
    }
}

/// Sampled check of d(T^n x, T^n y) <= (1 + k_n) d(x, y) for n up to
/// `horizon`, over `trials` seeded point pairs.
pub fn verify_asymptotic_bound(
    map: &AsymptoticMap,
    horizon: usize,
    trials: u64,
    seed: u64,
    tol: f64,
) -> Result<AxiomCheck> {
    use rand::SeedableRng;
    let space = map.space().as_ref();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = serde_json::Value::Null;
    let mut checked = 0u64;
    for trial in 0..trials {
        let x0 = space.sample(&mut rng);
        let y0 = space.sample(&mut rng);
        let base = space.dist(&x0, &y0)?;
        let (mut x, mut y) = (x0.clone(), y0.clone());
        for n in 1..=horizon {
            x = map.apply(&x)?;
            y = map.apply(&y)?;
            let violation = space.dist(&x, &y)? - (1.0 + map.k(n)) * base;
            checked += 1;
            if violation > max_violation {
                max_violation = violation;
                worst = json!({
                    "trial": trial,
                    "n": n,
                    "x": x0.to_json(),
                    "y": y0.to_json(),
                });
            }
        }
    }
    Ok(AxiomCheck {
        axiom: "asymptotic-bound".into(),
        trials: checked,
        max_violation: (checked > 0).then_some(max_violation),
        worst_seed_inputs: (checked > 0).then_some(worst),
        pass: checked == 0 || max_violation <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{make_space, SpaceConfig};
    use std::f64::consts::FRAC_PI_2;

    fn arc(cfg: &SpaceConfig) -> Arc<SpaceModel> {
        Arc::new(make_space(cfg).unwrap())
    }

    fn sparse_point(entries: &[(u32, f64)]) -> Point {
        Point::Sparse(entries.iter().copied().collect())
    }

    #[test]
    fn rotation_quarter_turn() {
        let space = arc(&SpaceConfig::euclidean(2, 1.0));
        let map = make_map(space, &MapConfig::rotation(FRAC_PI_2)).unwrap();
        let img = map.apply(&Point::Euclidean(vec![1.0, 0.0])).unwrap();
        match img {
            Point::Euclidean(c) => {
                assert!(c[0].abs() < 1e-15);
                assert!((c[1] - 1.0).abs() < 1e-15);
            }
            _ => panic!("wrong point kind"),
        }
        assert_eq!(map.k(1), 0.0);
        assert_eq!(map.k_witness(1e-12).unwrap(), 1);
    }

    #[test]
    fn contraction_fixes_its_target() {
        let space = arc(&SpaceConfig::euclidean(2, 1.0));
        let q = serde_json::json!([0.3, -0.2]);
        let map = make_map(space.clone(), &MapConfig::contraction(q, 0.5)).unwrap();
        let target = map.known_fixed_points()[0].clone();
        let img = map.apply(&target).unwrap();
        assert!(space.dist(&img, &target).unwrap() <= 1e-15);
        // One application halves the distance to the target.
        let x = Point::Euclidean(vec![-0.8, 0.4]);
        let d0 = space.dist(&x, &target).unwrap();
        let d1 = space.dist(&map.apply(&x).unwrap(), &target).unwrap();
        assert!((d1 - 0.5 * d0).abs() <= 1e-15);
    }

    #[test]
    fn square_shift_image_and_powers() {
        let space = arc(&SpaceConfig::sparse());
        let map = make_map(space.clone(), &MapConfig::goebelkirk()).unwrap();
        let e1 = sparse_point(&[(1, 1.0)]);

        // T e1 = e2 with coefficient 1^2; norm is preserved here.
        let t1 = map.apply(&e1).unwrap();
        assert_eq!(t1, sparse_point(&[(2, 1.0)]));

        // T^3 e1 lands on index 4 with coefficient a2 * a3 (independent
        // recomputation: a2 = 2^(-1/2), a3 = 2^(-1/4)).
        let t3 = map.power(3, &e1).unwrap();
        let expected = 2f64.powf(-0.75);
        match &t3 {
            Point::Sparse(m) => {
                assert_eq!(m.len(), 1);
                assert!((m[&4] - expected).abs() < 1e-15, "got {}", m[&4]);
            }
            _ => panic!("wrong point kind"),
        }
        assert_eq!(map.power(0, &e1).unwrap(), e1);
    }

    #[test]
    fn square_shift_k_sequence_values() {
        let space = arc(&SpaceConfig::sparse());
        let map = make_map(space, &MapConfig::goebelkirk()).unwrap();
        assert!((map.k(1) - 1.0).abs() < 1e-12, "k1 = {}", map.k(1));
        assert!((map.k(2) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((map.k(3) - (2f64.powf(0.25) - 1.0)).abs() < 1e-15);
        // 1 + k_n nonincreasing toward 1.
        let mut prev = f64::INFINITY;
        for n in 1..=80 {
            let v = 1.0 + map.k(n);
            assert!(v <= prev && v >= 1.0);
            prev = v;
        }
        assert!(map.k(80) < 1e-12);
        // Witness agrees with the sequence.
        for eps in [0.5, 0.1, 1e-3, 1e-9] {
            let n = map.k_witness(eps).unwrap();
            assert!(map.k(n) <= eps);
            if n > 1 {
                assert!(map.k(n - 1) > eps, "witness not minimal at eps={eps}");
            }
        }
    }

    #[test]
    fn treefold_pulls_and_rotates() {
        let space = arc(&SpaceConfig::star_tree(3, 1.0));
        let map = make_map(space.clone(), &MapConfig::treefold(0.5, 1)).unwrap();
        let x = Point::Tree { leg: 1, offset: 0.8 };
        assert_eq!(map.apply(&x).unwrap(), Point::Tree { leg: 2, offset: 0.4 });
        let hub = Point::Tree { leg: 0, offset: 0.0 };
        assert_eq!(map.apply(&hub).unwrap(), hub);
    }

    #[test]
    fn asymptotic_bound_holds_for_square_shift() {
        let space = arc(&SpaceConfig::sparse());
        let map = make_map(space, &MapConfig::goebelkirk()).unwrap();
        let check = verify_asymptotic_bound(&map, 20, 300, 17, 1e-9).unwrap();
        assert!(check.pass, "{}", serde_json::to_string_pretty(&check).unwrap());
    }

    #[test]
    fn images_stay_in_their_spaces() {
        use rand::SeedableRng;
        let cases: Vec<(Arc<SpaceModel>, MapConfig)> = vec![
            (arc(&SpaceConfig::euclidean(2, 1.0)), MapConfig::rotation(0.7)),
            (
                arc(&SpaceConfig::hyperboloid(1.0)),
                MapConfig::contraction(serde_json::json!([1.0, 0.0, 0.0]), 0.3),
            ),
            (arc(&SpaceConfig::sparse()), MapConfig::goebelkirk()),
            (arc(&SpaceConfig::star_tree(5, 2.0)), MapConfig::treefold(0.25, 2)),
        ];
        for (space, cfg) in cases {
            let map = make_map(space.clone(), &cfg).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
            for _ in 0..200 {
                let x = space.sample(&mut rng);
                let y = map.apply(&x).unwrap();
                assert!(space.contains(&y), "{} left the space", map.name());
            }
        }
    }

    #[test]
    fn bad_pairings_and_params_are_rejected() {
        let tree = arc(&SpaceConfig::star_tree(3, 1.0));
        assert!(matches!(
            make_map(tree.clone(), &MapConfig::rotation(1.0)),
            Err(Error::MapSpaceMismatch(_))
        ));
        assert!(matches!(
            make_map(tree.clone(), &MapConfig::treefold(1.5, 1)),
            Err(Error::Config(_))
        ));
        let map = make_map(tree, &MapConfig::treefold(0.5, 1)).unwrap();
        assert!(matches!(
            map.apply(&Point::Euclidean(vec![0.0, 0.0])),
            Err(Error::MapSpaceMismatch(_))
        ));
    }

    #[test]
    fn declared_k_table_drives_witness() {
        let space = arc(&SpaceConfig::euclidean(2, 1.0));
        let map = make_map(space, &MapConfig::rotation(0.3))
            .unwrap()
            .with_declared_k(vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(map.k(1), 1.0);
        assert_eq!(map.k(5), 0.0);
        assert_eq!(map.k_witness(0.5).unwrap(), 3);
        assert_eq!(map.k_witness(2.0).unwrap(), 1);
    }
}
