use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::Modulus;

/// Star of k segments of length L glued at a hub (an R-tree). A point is a
/// leg index plus an offset from the hub; offset 0 on any leg is the hub and
/// is canonicalized to leg 0. Diameter bound b = 2L.
#[derive(Debug, Clone)]
pub struct StarTree {
    legs: u32,
    leg_length: f64,
    tol: f64,
    modulus: Modulus,
}

impl StarTree {
    pub fn new(legs: u32, leg_length: f64, tol: f64) -> Self {
        assert!(legs >= 3, "a star tree needs at least 3 legs");
        assert!(
            leg_length > 0.0 && leg_length.is_finite(),
            "leg length must be positive"
        );
        StarTree {
            legs,
            leg_length,
            tol,
            modulus: Modulus::cat0(),
        }
    }

    pub fn legs(&self) -> u32 {
        self.legs
    }

    pub fn leg_length(&self) -> f64 {
        self.leg_length
    }

    pub fn hub(&self) -> (u32, f64) {
        (0, 0.0)
    }

    pub fn canonicalize(leg: u32, offset: f64) -> (u32, f64) {
        if offset == 0.0 {
            (0, 0.0)
        } else {
            (leg, offset)
        }
    }

    /// Path metric: along the shared leg, or through the hub.
    pub fn dist(&self, la: u32, oa: f64, lb: u32, ob: f64) -> f64 {
        if la == lb {
            (oa - ob).abs()
        } else {
            oa + ob
        }
    }

    /// Point at arclength lambda * d(x, y) from x on the unique path to y.
    pub fn combine(&self, la: u32, oa: f64, lb: u32, ob: f64, lambda: f64) -> (u32, f64) {
        if la == lb {
            return Self::canonicalize(la, (1.0 - lambda) * oa + lambda * ob);
        }
        let total = oa + ob;
        let arc = lambda * total; // distance travelled from x toward the hub
        if arc <= oa {
            Self::canonicalize(la, oa - arc)
        } else {
            Self::canonicalize(lb, arc - oa)
        }
    }

    pub fn contains(&self, leg: u32, offset: f64) -> bool {
        leg < self.legs && (0.0..=self.leg_length * (1.0 + 1e-12)).contains(&offset)
    }

    pub fn diameter_bound(&self) -> f64 {
        2.0 * self.leg_length
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (u32, f64) {
        let leg = rng.gen_range(0..self.legs);
        let offset = rng.gen_range(0.0..self.leg_length);
        Self::canonicalize(leg, offset)
    }
}
