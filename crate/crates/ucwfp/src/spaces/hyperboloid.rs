use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::Modulus;

/// Closed geodesic disk of radius rho on the upper sheet of the hyperboloid
/// x0^2 - x1^2 - x2^2 = 1, centered at the apex (1, 0, 0). The metric is the
/// hyperbolic distance arccosh(-<x, y>) for the Minkowski form; it is computed
/// from the Minkowski norm of the difference vector, which avoids the
/// catastrophic cancellation of the raw inner-product form for nearby points.
/// Diameter bound b = 2 * rho.
#[derive(Debug, Clone)]
pub struct HyperboloidDisk {
    radius: f64,
    tol: f64,
    modulus: Modulus,
}

/// Sheet-constraint slack maintained by renormalization after every combine.
pub const SHEET_EPS: f64 = 1e-10;

const APEX: [f64; 3] = [1.0, 0.0, 0.0];

impl HyperboloidDisk {
    pub fn new(radius: f64, tol: f64) -> Self {
        assert!(radius > 0.0 && radius.is_finite(), "radius must be positive");
        HyperboloidDisk {
            radius,
            tol,
            modulus: Modulus::cat0(),
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> [f64; 3] {
        APEX
    }

    pub fn dist(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        // <a-b, a-b>_Mink = 2 (cosh d - 1), and the difference components are
        // small for nearby points, so s below carries full relative accuracy.
        let d0 = a[0] - b[0];
        let d1 = a[1] - b[1];
        let d2 = a[2] - b[2];
        let q = d1 * d1 + d2 * d2 - d0 * d0;
        if q <= 0.0 {
            return 0.0;
        }
        let s = 0.5 * q; // cosh d - 1
        (s + (s * (s + 2.0)).sqrt()).ln_1p()
    }

    /// Geodesic combination via sinh weights, renormalized onto the sheet.
    pub fn combine(&self, a: &[f64; 3], b: &[f64; 3], lambda: f64) -> [f64; 3] {
        let len = self.dist(a, b);
        if len < 1e-9 {
            // Chord interpolation; projection error is O(len^2).
            return Self::renorm([
                (1.0 - lambda) * a[0] + lambda * b[0],
                (1.0 - lambda) * a[1] + lambda * b[1],
                (1.0 - lambda) * a[2] + lambda * b[2],
            ]);
        }
        let denom = len.sinh();
        let wa = ((1.0 - lambda) * len).sinh() / denom;
        let wb = (lambda * len).sinh() / denom;
        Self::renorm([
            wa * a[0] + wb * b[0],
            wa * a[1] + wb * b[1],
            wa * a[2] + wb * b[2],
        ])
    }

    fn renorm(p: [f64; 3]) -> [f64; 3] {
        [(1.0 + p[1] * p[1] + p[2] * p[2]).sqrt(), p[1], p[2]]
    }

    /// Residual of the sheet constraint x0^2 - x1^2 - x2^2 = 1.
    pub fn sheet_residual(a: &[f64; 3]) -> f64 {
        (a[0] * a[0] - a[1] * a[1] - a[2] * a[2] - 1.0).abs()
    }

    pub fn contains(&self, a: &[f64; 3]) -> bool {
        Self::sheet_residual(a) <= SHEET_EPS && self.dist(&APEX, a) <= self.radius * (1.0 + 1e-12)
    }

    pub fn diameter_bound(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Sample uniformly for the hyperbolic area element: the radius CDF in a
    /// disk of radius rho is (cosh r - 1) / (cosh rho - 1).
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let u: f64 = rng.gen_range(0.0..1.0);
        let t = u * (self.radius.cosh() - 1.0);
        let r = (t + (t * (t + 2.0)).sqrt()).ln_1p(); // arccosh(1 + t)
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        [r.cosh(), r.sinh() * theta.cos(), r.sinh() * theta.sin()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn distance_from_apex_matches_polar_radius() {
        let disk = HyperboloidDisk::new(1.0, 1e-7);
        // Analytically placed boundary point at distance exactly 1.
        let p = [1f64.cosh(), 1f64.sinh(), 0.0];
        assert!((disk.dist(&APEX, &p) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn dist_is_accurate_for_nearby_points() {
        let disk = HyperboloidDisk::new(1.0, 1e-7);
        // Two points 1e-9 apart in polar radius along the same ray.
        let (r1, r2): (f64, f64) = (0.5, 0.5 + 1e-9);
        let a = [r1.cosh(), r1.sinh(), 0.0];
        let b = [r2.cosh(), r2.sinh(), 0.0];
        // The endpoint coordinates themselves carry ~1 ulp (~1e-16) of
        // rounding; the naive arccosh(-<a,b>) form would lose eight digits.
        let d = disk.dist(&a, &b);
        assert!((d - 1e-9).abs() < 1e-15, "d = {d:e}");
    }

    #[test]
    fn combine_stays_on_sheet_and_splits_distance() {
        let disk = HyperboloidDisk::new(1.5, 1e-7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = disk.sample(&mut rng);
            let b = disk.sample(&mut rng);
            let lambda: f64 = rng.gen_range(0.0..1.0);
            let w = disk.combine(&a, &b, lambda);
            assert!(HyperboloidDisk::sheet_residual(&w) <= SHEET_EPS);
            let d = disk.dist(&a, &b);
            assert!((disk.dist(&a, &w) - lambda * d).abs() <= 1e-12 * (1.0 + d));
        }
    }

    #[test]
    fn samples_stay_in_disk() {
        let disk = HyperboloidDisk::new(0.8, 1e-7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = disk.sample(&mut rng);
            assert!(disk.contains(&p));
        }
    }
}
