//! Core contract for W-hyperbolic spaces: points, convex combination,
//! metric, and the modulus of uniform convexity.

pub mod axioms;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::spaces::{EuclideanBall, HyperboloidDisk, SparseL2Ball, StarTree};

/// A point owned by one of the bundled space models.
///
/// A point is only meaningful inside the model that produced it; pairing it
/// with another model is a usage error surfaced by `SpaceModel` operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    /// Coordinates in R^n.
    Euclidean(Vec<f64>),
    /// Finitely supported index -> value map, fixed ambient l2 norm.
    Sparse(BTreeMap<u32, f64>),
    /// Minkowski triple (x0, x1, x2) on the sheet x0^2 - x1^2 - x2^2 = 1.
    Hyperboloid([f64; 3]),
    /// Position on a star of segments: leg index plus offset from the hub.
    Tree { leg: u32, offset: f64 },
}

impl Point {
    pub(crate) fn kind(&self) -> &'static str {
        match self {
            Point::Euclidean(_) => "euclidean",
            Point::Sparse(_) => "sparse-l2",
            Point::Hyperboloid(_) => "hyperboloid",
            Point::Tree { .. } => "star-tree",
        }
    }

    /// Wire representation: arrays for coordinate models, `{index: value}`
    /// for sparse points, `{leg, offset}` for tree points.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("point serialization is infallible")
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Point::Euclidean(coords) => coords.serialize(ser),
            Point::Hyperboloid(coords) => {
                let mut seq = ser.serialize_seq(Some(3))?;
                for c in coords {
                    seq.serialize_element(c)?;
                }
                seq.end()
            }
            Point::Sparse(entries) => {
                let mut map = ser.serialize_map(Some(entries.len()))?;
                for (idx, val) in entries {
                    map.serialize_entry(&idx.to_string(), val)?;
                }
                map.end()
            }
            Point::Tree { leg, offset } => {
                let mut map = ser.serialize_map(Some(2))?;
                map.serialize_entry("leg", leg)?;
                map.serialize_entry("offset", offset)?;
                map.end()
            }
        }
    }
}

/// Modulus of uniform convexity: eta(r, eps) in (0, 1] such that midpoints of
/// eps-separated points in a ball of radius r sink toward the center by at
/// least eta * r.
#[derive(Clone)]
pub struct Modulus {
    eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    monotone_in_r: bool,
    factored: Option<Factored>,
}

/// Factorization eta(r, eps) = eps * eta'(r, eps) with eta' nondecreasing in
/// eps; when present, the per-step drop coefficient can be taken as eta itself.
#[derive(Clone)]
struct Factored {
    nondecreasing_in_eps: bool,
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Modulus")
            .field("monotone_in_r", &self.monotone_in_r)
            .field("factored", &self.factored.is_some())
            .finish()
    }
}

impl Modulus {
    /// The CAT(0) modulus eta(r, eps) = eps^2 / 8, constant in r, with the
    /// factorization eta'(r, eps) = eps / 8 (nondecreasing in eps).
    pub fn cat0() -> Self {
        Modulus {
            eval: Arc::new(|_r, eps| eps * eps / 8.0),
            monotone_in_r: true,
            factored: Some(Factored {
                nondecreasing_in_eps: true,
            }),
        }
    }

    /// Custom modulus; `factored_nondecreasing` declares that eta = eps * eta'
    /// with eta' nondecreasing in eps.
    pub fn custom(
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        monotone_in_r: bool,
        factored_nondecreasing: bool,
    ) -> Self {
        Modulus {
            eval: Arc::new(eval),
            monotone_in_r,
            factored: factored_nondecreasing.then_some(Factored {
                nondecreasing_in_eps: true,
            }),
        }
    }

    /// Evaluate eta(r, eps). Callers must keep r > 0, eps > 0.
    pub fn eval(&self, r: f64, eps: f64) -> f64 {
        debug_assert!(r > 0.0 && eps > 0.0, "modulus arguments must be positive");
        (self.eval)(r, eps)
    }

    /// Whether eta(., eps) is nonincreasing in r (larger balls, weaker gain).
    pub fn monotone_in_r(&self) -> bool {
        self.monotone_in_r
    }

    /// Drop coefficient u(r, eps): midpoints of eps-separated points improve
    /// the distance to any admissible center by at least u * r. Equal to eta
    /// itself when the eps-factorization is available, else (eps / 2) * eta.
    pub fn u(&self, r: f64, eps: f64) -> f64 {
        match &self.factored {
            Some(f) if f.nondecreasing_in_eps => self.eval(r, eps),
            _ => 0.5 * eps * self.eval(r, eps),
        }
    }
}

/// One of the bundled bounded uniformly convex W-hyperbolic models.
#[derive(Debug, Clone)]
pub enum SpaceModel {
    Euclidean(EuclideanBall),
    Sparse(SparseL2Ball),
    Hyperboloid(HyperboloidDisk),
    Tree(StarTree),
}

impl SpaceModel {
    pub fn name(&self) -> &'static str {
        match self {
            SpaceModel::Euclidean(_) => "euclidean",
            SpaceModel::Sparse(_) => "sparse-l2",
            SpaceModel::Hyperboloid(_) => "hyperboloid",
            SpaceModel::Tree(_) => "star-tree",
        }
    }

    /// Metric. Symmetric, nonnegative, bounded by `diameter_bound`.
    pub fn dist(&self, x: &Point, y: &Point) -> Result<f64> {
        match (self, x, y) {
            (SpaceModel::Euclidean(m), Point::Euclidean(a), Point::Euclidean(b)) => {
                Ok(m.dist(a, b))
            }
            (SpaceModel::Sparse(m), Point::Sparse(a), Point::Sparse(b)) => Ok(m.dist(a, b)),
            (SpaceModel::Hyperboloid(m), Point::Hyperboloid(a), Point::Hyperboloid(b)) => {
                Ok(m.dist(a, b))
            }
            (
                SpaceModel::Tree(m),
                &Point::Tree { leg: la, offset: oa },
                &Point::Tree { leg: lb, offset: ob },
            ) => Ok(m.dist(la, oa, lb, ob)),
            (_, x, y) => Err(self.mismatch(if x.kind() == self.name() { y } else { x })),
        }
    }

    /// Convex combination W(x, y, lambda), the point at parameter lambda on
    /// the geodesic from x (lambda = 0) to y (lambda = 1).
    pub fn combine(&self, x: &Point, y: &Point, lambda: f64) -> Result<Point> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::LambdaOutOfRange(lambda));
        }
        match (self, x, y) {
            (SpaceModel::Euclidean(m), Point::Euclidean(a), Point::Euclidean(b)) => {
                Ok(Point::Euclidean(m.combine(a, b, lambda)))
            }
            (SpaceModel::Sparse(m), Point::Sparse(a), Point::Sparse(b)) => {
                Ok(Point::Sparse(m.combine(a, b, lambda)))
            }
            (SpaceModel::Hyperboloid(m), Point::Hyperboloid(a), Point::Hyperboloid(b)) => {
                Ok(Point::Hyperboloid(m.combine(a, b, lambda)))
            }
            (
                SpaceModel::Tree(m),
                &Point::Tree { leg: la, offset: oa },
                &Point::Tree { leg: lb, offset: ob },
            ) => {
                let (leg, offset) = m.combine(la, oa, lb, ob, lambda);
                Ok(Point::Tree { leg, offset })
            }
            (_, x, y) => Err(self.mismatch(if x.kind() == self.name() { y } else { x })),
        }
    }

    /// Midpoint W(x, y, 1/2).
    pub fn midpoint(&self, x: &Point, y: &Point) -> Result<Point> {
        self.combine(x, y, 0.5)
    }

    /// Upper bound b on the diameter of the model.
    pub fn diameter_bound(&self) -> f64 {
        match self {
            SpaceModel::Euclidean(m) => m.diameter_bound(),
            SpaceModel::Sparse(m) => m.diameter_bound(),
            SpaceModel::Hyperboloid(m) => m.diameter_bound(),
            SpaceModel::Tree(m) => m.diameter_bound(),
        }
    }

    /// Modulus of uniform convexity declared by the model.
    pub fn modulus(&self) -> &Modulus {
        match self {
            SpaceModel::Euclidean(m) => m.modulus(),
            SpaceModel::Sparse(m) => m.modulus(),
            SpaceModel::Hyperboloid(m) => m.modulus(),
            SpaceModel::Tree(m) => m.modulus(),
        }
    }

    /// Numerical tolerance the model claims for its identities.
    pub fn tol(&self) -> f64 {
        match self {
            SpaceModel::Euclidean(m) => m.tol(),
            SpaceModel::Sparse(m) => m.tol(),
            SpaceModel::Hyperboloid(m) => m.tol(),
            SpaceModel::Tree(m) => m.tol(),
        }
    }

    /// Membership test, with a relative slack of ~1e-12 at the boundary.
    pub fn contains(&self, p: &Point) -> bool {
        match (self, p) {
            (SpaceModel::Euclidean(m), Point::Euclidean(a)) => m.contains(a),
            (SpaceModel::Sparse(m), Point::Sparse(a)) => m.contains(a),
            (SpaceModel::Hyperboloid(m), Point::Hyperboloid(a)) => m.contains(a),
            (SpaceModel::Tree(m), &Point::Tree { leg, offset }) => m.contains(leg, offset),
            _ => false,
        }
    }

    /// Draw a point from the model's seeded sampler.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Point {
        match self {
            SpaceModel::Euclidean(m) => Point::Euclidean(m.sample(rng)),
            SpaceModel::Sparse(m) => Point::Sparse(m.sample(rng)),
            SpaceModel::Hyperboloid(m) => Point::Hyperboloid(m.sample(rng)),
            SpaceModel::Tree(m) => {
                let (leg, offset) = m.sample(rng);
                Point::Tree { leg, offset }
            }
        }
    }

    fn mismatch(&self, p: &Point) -> Error {
        Error::SpaceMismatch {
            space: self.name(),
            point: p.kind(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{make_space, SpaceConfig};

    fn unit_disk() -> SpaceModel {
        make_space(&SpaceConfig::euclidean(2, 1.0)).unwrap()
    }

    #[test]
    fn cat0_modulus_values() {
        let eta = Modulus::cat0();
        // eps^2 / 8 at the two pinned sample points.
        assert_eq!(eta.eval(1.0, 0.5), 0.03125);
        assert_eq!(eta.eval(2.0, 0.25), 0.0078125);
        assert!(eta.monotone_in_r());
    }

    #[test]
    fn u_uses_factorization_when_available() {
        let eta = Modulus::cat0();
        // Factored modulus: u = eta itself.
        assert_eq!(eta.u(1.0, 0.5), 1.0 / 32.0);
        assert_eq!(eta.u(2.0, 0.25), 1.0 / 128.0);

        // Unfactored constant modulus c: u = (eps / 2) * c.
        let flat = Modulus::custom(|_, _| 0.25, true, false);
        assert_eq!(flat.u(1.0, 0.5), 0.0625);
    }

    #[test]
    fn combine_rejects_bad_lambda() {
        let s = unit_disk();
        let x = Point::Euclidean(vec![0.0, 0.0]);
        let y = Point::Euclidean(vec![1.0, 0.0]);
        assert!(matches!(
            s.combine(&x, &y, 1.5),
            Err(Error::LambdaOutOfRange(_))
        ));
        assert!(matches!(
            s.combine(&x, &y, -0.1),
            Err(Error::LambdaOutOfRange(_))
        ));
    }

    #[test]
    fn combine_rejects_foreign_points() {
        let s = unit_disk();
        let x = Point::Euclidean(vec![0.0, 0.0]);
        let t = Point::Tree {
            leg: 0,
            offset: 0.5,
        };
        assert!(matches!(
            s.combine(&x, &t, 0.5),
            Err(Error::SpaceMismatch { .. })
        ));
        assert!(matches!(s.dist(&t, &x), Err(Error::SpaceMismatch { .. })));
    }

    #[test]
    fn combine_endpoints() {
        let s = unit_disk();
        let x = Point::Euclidean(vec![0.25, -0.5]);
        let y = Point::Euclidean(vec![-0.75, 0.125]);
        assert_eq!(s.combine(&x, &y, 0.0).unwrap(), x);
        assert_eq!(s.combine(&x, &y, 1.0).unwrap(), y);
    }

    #[test]
    fn point_json_shapes() {
        let e = Point::Euclidean(vec![1.0, 0.0]);
        assert_eq!(e.to_json(), serde_json::json!([1.0, 0.0]));

        let mut m = BTreeMap::new();
        m.insert(2u32, 0.5);
        let sp = Point::Sparse(m);
        assert_eq!(sp.to_json(), serde_json::json!({"2": 0.5}));

        let t = Point::Tree {
            leg: 1,
            offset: 0.4,
        };
        assert_eq!(t.to_json(), serde_json::json!({"leg": 1, "offset": 0.4}));
    }
}
