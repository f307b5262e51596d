use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::Modulus;

/// Closed ball of radius R in R^n with the Euclidean metric and straight-line
/// combination. Diameter bound b = 2R.
#[derive(Debug, Clone)]
pub struct EuclideanBall {
    dim: usize,
    radius: f64,
    tol: f64,
    modulus: Modulus,
}

impl EuclideanBall {
    pub fn new(dim: usize, radius: f64, tol: f64) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        assert!(radius > 0.0 && radius.is_finite(), "radius must be positive");
        EuclideanBall {
            dim,
            radius,
            tol,
            modulus: Modulus::cat0(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.dim);
        debug_assert_eq!(b.len(), self.dim);
        a.iter()
            .zip(b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    }

    pub fn combine(&self, a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(p, q)| (1.0 - lambda) * p + lambda * q)
            .collect()
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

    #[cfg(test)]
    pub(crate) fn set_modulus_for_tests(&mut self, m: Modulus) {
        self.modulus = m;
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim && self.norm(a) <= self.radius * (1.0 + 1e-12)
    }

    fn norm(&self, a: &[f64]) -> f64 {
        a.iter().map(|p| p * p).sum::<f64>().sqrt()
    }

    /// Uniform sample: Gaussian direction scaled by R * U^(1/n).
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = self.norm(&v);
        if n == 0.0 {
            return v; // origin; measure-zero draw
        }
        let u: f64 = rng.gen_range(0.0..1.0);
        let scale = self.radius * u.powf(1.0 / self.dim as f64) / n;
        for c in &mut v {
            *c *= scale;
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn metric_and_combine_basics() {
        let ball = EuclideanBall::new(2, 1.0, 1e-9);
        assert_eq!(ball.dist(&[1.0, 0.0], &[0.0, 1.0]), 2f64.sqrt());
        assert_eq!(ball.combine(&[1.0, 0.0], &[0.0, 1.0], 0.5), vec![0.5, 0.5]);
        assert_eq!(ball.diameter_bound(), 2.0);
    }

    #[test]
    fn samples_stay_in_ball() {
        let ball = EuclideanBall::new(3, 0.7, 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p = ball.sample(&mut rng);
            assert!(ball.contains(&p));
        }
    }
}
