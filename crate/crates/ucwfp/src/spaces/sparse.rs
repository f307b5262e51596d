use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::Modulus;

/// Entries at or below this magnitude are dropped after arithmetic so that
/// supports stay finite under long iteration.
pub const DROP_EPS: f64 = 1e-300;

/// Closed unit ball of l2 over finitely supported sequences indexed from 1.
/// Diameter bound b = 2.
#[derive(Debug, Clone)]
pub struct SparseL2Ball {
    tol: f64,
    modulus: Modulus,
}

pub type SparseVec = BTreeMap<u32, f64>;

impl SparseL2Ball {
    pub fn new(tol: f64) -> Self {
        SparseL2Ball {
            tol,
            modulus: Modulus::cat0(),
        }
    }

    pub fn dist(&self, a: &SparseVec, b: &SparseVec) -> f64 {
        let mut sum = 0.0;
        let mut ia = a.iter().peekable();
        let mut ib = b.iter().peekable();
        loop {
            match (ia.peek(), ib.peek()) {
                (Some(&(ka, va)), Some(&(kb, vb))) => {
                    let d = match ka.cmp(kb) {
                        std::cmp::Ordering::Less => {
                            ia.next();
                            *va
                        }
                        std::cmp::Ordering::Greater => {
                            ib.next();
                            -*vb
                        }
                        std::cmp::Ordering::Equal => {
                            ia.next();
                            ib.next();
                            va - vb
                        }
                    };
                    sum += d * d;
                }
                (Some(&(_, va)), None) => {
                    ia.next();
                    sum += va * va;
                }
                (None, Some(&(_, vb))) => {
                    ib.next();
                    sum += vb * vb;
                }
                (None, None) => break,
            }
        }
        sum.sqrt()
    }

    pub fn combine(&self, a: &SparseVec, b: &SparseVec, lambda: f64) -> SparseVec {
        let ca = 1.0 - lambda;
        let mut out = SparseVec::new();
        for (&k, &v) in a {
            let w = ca * v + lambda * b.get(&k).copied().unwrap_or(0.0);
            if w.abs() > DROP_EPS {
                out.insert(k, w);
            }
        }
        for (&k, &v) in b {
            if !a.contains_key(&k) {
                let w = lambda * v;
                if w.abs() > DROP_EPS {
                    out.insert(k, w);
                }
            }
        }
        out
    }

    pub fn norm(&self, a: &SparseVec) -> f64 {
        a.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn contains(&self, a: &SparseVec) -> bool {
        self.norm(a) <= 1.0 + 1e-12
    }

    pub fn diameter_bound(&self) -> f64 {
        2.0
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Sample: small random support among low indices, Gaussian values scaled
    /// to a uniform norm in [0, 1).
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> SparseVec {
        let support = rng.gen_range(0..=6usize);
        let mut indices: Vec<u32> = (1..=24).collect();
        indices.shuffle(rng);
        let mut out = SparseVec::new();
        for &k in indices.iter().take(support) {
            out.insert(k, rng.sample::<f64, _>(StandardNormal));
        }
        let n = self.norm(&out);
        if n > 0.0 {
            let target: f64 = rng.gen_range(0.0..1.0);
            let scale = target / n;
            out.retain(|_, v| {
                *v *= scale;
                v.abs() > DROP_EPS
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(entries: &[(u32, f64)]) -> SparseVec {
        entries.iter().copied().collect()
    }

    #[test]
    fn dist_over_disjoint_and_shared_support() {
        let s = SparseL2Ball::new(1e-9);
        let a = sv(&[(1, 0.6), (3, 0.8)]);
        let b = sv(&[(3, 0.8)]);
        assert_eq!(s.dist(&a, &b), 0.6);
        let c = sv(&[(2, 1.0)]);
        let d = sv(&[(5, 1.0)]);
        assert_eq!(s.dist(&c, &d), 2f64.sqrt());
    }

    #[test]
    fn combine_drops_vanishing_entries() {
        let s = SparseL2Ball::new(1e-9);
        let a = sv(&[(1, 0.5), (2, 1e-301)]);
        let b = sv(&[(1, -0.5)]);
        let mid = s.combine(&a, &b, 0.5);
        assert!(!mid.contains_key(&1), "exact cancellation must drop the key");
        assert!(!mid.contains_key(&2), "subnormal-range entries are dropped");
    }

    #[test]
    fn combine_support_is_subset_of_union() {
        let s = SparseL2Ball::new(1e-9);
        let a = sv(&[(1, 0.3), (4, -0.2)]);
        let b = sv(&[(2, 0.1), (4, 0.9)]);
        let w = s.combine(&a, &b, 0.25);
        for k in w.keys() {
            assert!(a.contains_key(k) || b.contains_key(k));
        }
    }
}
