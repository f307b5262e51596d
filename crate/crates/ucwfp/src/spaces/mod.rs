//! Bundled space models and their config-driven construction.

mod euclidean;
mod hyperboloid;
mod sparse;
mod startree;

pub use euclidean::EuclideanBall;
pub use hyperboloid::{HyperboloidDisk, SHEET_EPS};
pub use sparse::{SparseL2Ball, SparseVec, DROP_EPS};
pub use startree::StarTree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, SpaceModel};

const DEFAULT_TOL: f64 = 1e-9;
// The curved model's identities are limited by transcendental evaluation.
const DEFAULT_TOL_HYPERBOLOID: f64 = 1e-7;

/// Declarative space selection, one model plus its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub model: String,
    /// Euclidean dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Euclidean ball radius.
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "R")]
    pub radius: Option<f64>,
    /// Star-tree leg count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    /// Star-tree leg length.
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "L")]
    pub leg_length: Option<f64>,
    /// Hyperboloid disk radius.
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "ρ")]
    pub rho: Option<f64>,
    /// Override for the model's numerical tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl SpaceConfig {
    pub fn euclidean(n: usize, radius: f64) -> Self {
        SpaceConfig {
            model: "euclidean".into(),
            n: Some(n),
            radius: Some(radius),
            k: None,
            leg_length: None,
            rho: None,
            tol: None,
        }
    }

    pub fn sparse() -> Self {
        SpaceConfig {
            model: "sparse-l2".into(),
            n: None,
            radius: None,
            k: None,
            leg_length: None,
            rho: None,
            tol: None,
        }
    }

    pub fn hyperboloid(rho: f64) -> Self {
        SpaceConfig {
            model: "hyperboloid".into(),
            n: None,
            radius: None,
            k: None,
            leg_length: None,
            rho: Some(rho),
            tol: None,
        }
    }

    pub fn star_tree(k: u32, leg_length: f64) -> Self {
        SpaceConfig {
            model: "star-tree".into(),
            n: None,
            radius: None,
            k: Some(k),
            leg_length: Some(leg_length),
            rho: None,
            tol: None,
        }
    }
}

fn require<T: Copy>(v: Option<T>, what: &str, model: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("model '{model}' requires parameter '{what}'")))
}

fn check_positive(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("'{what}' must be positive and finite, got {v}")))
    }
}

/// Build a space model from config, validating every parameter.
pub fn make_space(config: &SpaceConfig) -> Result<SpaceModel> {
    let tol = match config.tol {
        Some(t) => check_positive(t, "tol")?,
        None => match config.model.as_str() {
            "hyperboloid" => DEFAULT_TOL_HYPERBOLOID,
            _ => DEFAULT_TOL,
        },
    };
    match config.model.as_str() {
        "euclidean" => {
            let n = require(config.n, "n", "euclidean")?;
            if n == 0 {
                return Err(Error::Config("'n' must be at least 1".into()));
            }
            let r = check_positive(require(config.radius, "R", "euclidean")?, "R")?;
            Ok(SpaceModel::Euclidean(EuclideanBall::new(n, r, tol)))
        }
        "sparse-l2" => Ok(SpaceModel::Sparse(SparseL2Ball::new(tol))),
        "hyperboloid" => {
            let rho = check_positive(require(config.rho, "rho", "hyperboloid")?, "rho")?;
            Ok(SpaceModel::Hyperboloid(HyperboloidDisk::new(rho, tol)))
        }
        "star-tree" => {
            let k = require(config.k, "k", "star-tree")?;
            if k < 3 {
                return Err(Error::Config(format!("'k' must be at least 3, got {k}")));
            }
            let l = check_positive(require(config.leg_length, "L", "star-tree")?, "L")?;
            Ok(SpaceModel::Tree(StarTree::new(k, l, tol)))
        }
        other => Err(Error::Config(format!("unknown space model '{other}'"))),
    }
}

/// Deterministic point draw: same space, same seed, same point.
pub fn sample_point(space: &SpaceModel, seed: u64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    space.sample(&mut rng)
}

/// Parse a point literal in the wire format of the given space and validate
/// membership.
pub fn point_from_json(space: &SpaceModel, value: &serde_json::Value) -> Result<Point> {
    let bad = |msg: String| Error::Config(msg);
    match space {
        SpaceModel::Euclidean(m) => {
            let coords = as_f64_array(value)
                .ok_or_else(|| bad("euclidean point literal must be a number array".into()))?;
            if !m.contains(&coords) {
                return Err(bad(format!(
                    "point {value} is outside the euclidean ball (dim {}, radius {})",
                    m.dim(),
                    m.radius()
                )));
            }
            Ok(Point::Euclidean(coords))
        }
        SpaceModel::Sparse(m) => {
            let obj = value
                .as_object()
                .ok_or_else(|| bad("sparse point literal must be an {index: value} object".into()))?;
            let mut entries = SparseVec::new();
            for (key, val) in obj {
                let idx: u32 = key
                    .parse()
                    .map_err(|_| bad(format!("sparse index '{key}' is not a positive integer")))?;
                if idx == 0 {
                    return Err(bad("sparse indices start at 1".into()));
                }
                let v = val
                    .as_f64()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("sparse entry '{key}' must be a finite number")))?;
                if v.abs() > DROP_EPS {
                    entries.insert(idx, v);
                }
            }
            if !m.contains(&entries) {
                return Err(bad(format!("point {value} has l2 norm above 1")));
            }
            Ok(Point::Sparse(entries))
        }
        SpaceModel::Hyperboloid(m) => {
            let coords = as_f64_array(value)
                .ok_or_else(|| bad("hyperboloid point literal must be a number array".into()))?;
            let [x0, x1, x2]: [f64; 3] = coords
                .try_into()
                .map_err(|_| bad("hyperboloid point literal must have 3 components".into()))?;
            let p = [x0, x1, x2];
            if HyperboloidDisk::sheet_residual(&p) > SHEET_EPS {
                return Err(bad(format!("point {value} is not on the hyperboloid sheet")));
            }
            // Canonicalize x0 from the sheet constraint before the disk test.
            let p = [(1.0 + x1 * x1 + x2 * x2).sqrt(), x1, x2];
            if !m.contains(&p) {
                return Err(bad(format!(
                    "point {value} is outside the hyperbolic disk of radius {}",
                    m.radius()
                )));
            }
            Ok(Point::Hyperboloid(p))
        }
        SpaceModel::Tree(m) => {
            let obj = value
                .as_object()
                .ok_or_else(|| bad("tree point literal must be a {leg, offset} object".into()))?;
            let leg = obj
                .get("leg")
                .and_then(|v| v.as_u64())
                .ok_or_else(|| bad("tree point needs an integer 'leg'".into()))?;
            let offset = obj
                .get("offset")
                .and_then(|v| v.as_f64())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad("tree point needs a finite 'offset'".into()))?;
            let leg = u32::try_from(leg)
                .map_err(|_| bad(format!("leg index {leg} out of range")))?;
            if !m.contains(leg, offset) {
                return Err(bad(format!(
                    "point {value} is outside the star tree (k {}, L {})",
                    m.legs(),
                    m.leg_length()
                )));
            }
            let (leg, offset) = StarTree::canonicalize(leg, offset);
            Ok(Point::Tree { leg, offset })
        }
    }
}

fn as_f64_array(value: &serde_json::Value) -> Option<Vec<f64>> {
    let arr = value.as_array()?;
    arr.iter()
        .map(|v| v.as_f64().filter(|x| x.is_finite()))
        .collect()
}
