//! Monte Carlo oracle for reflected Brownian motion killed at an independent
//! exponential time. Kept separate from the closed forms in [`crate::bounds`]
//! so it can be used to check them.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{contract, Result};
use crate::exec::{map_paths, path_rng};
use crate::stats::Proportion;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectedBm {
    /// Start point, `0 ≤ x ≤ barrier`.
    pub x: f64,
    pub barrier: f64,
    /// Variance per unit time of the driving Brownian motion.
    pub variance: f64,
    /// Rate of the exponential killing time.
    pub kill_rate: f64,
    pub dt: f64,
}

impl ReflectedBm {
    pub fn new(x: f64, barrier: f64, variance: f64, kill_rate: f64, dt: f64) -> Result<Self> {
        if !(0.0 <= x && x <= barrier) {
            return Err(contract("need 0 ≤ x ≤ barrier"));
        }
        if !(variance > 0.0 && kill_rate > 0.0 && dt > 0.0) {
            return Err(contract("variance, kill rate and dt must be positive"));
        }
        Ok(Self { x, barrier, variance, kill_rate, dt })
    }

    /// One path: does `|W|` reach the barrier before the killing time?
    ///
    /// `W` is simulated exactly on the grid; crossings between grid points
    /// are caught with the Brownian-bridge exit probability for each side.
    pub fn hits<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        let b = self.barrier;
        if self.x >= b {
            return true;
        }
        let eta = Exp::new(self.kill_rate).expect("positive rate").sample(rng);
        let mut t = 0.0;
        let mut w = self.x;
        while t < eta {
            let h = self.dt.min(eta - t);
            let z: f64 = StandardNormal.sample(rng);
            let next = w + (self.variance * h).sqrt() * z;
            if next.abs() >= b {
                return true;
            }
            let vh = self.variance * h;
            let up = (-2.0 * (b - w) * (b - next) / vh).exp();
            let down = (-2.0 * (b + w) * (b + next) / vh).exp();
            let u: f64 = rng.random();
            if u < up + down {
                return true;
            }
            w = next;
            t += h;
        }
        false
    }

    pub fn estimate(&self, paths: u64, seed: u64, workers: usize) -> Proportion {
        let hits = map_paths(paths, workers, |p| self.hits(&mut path_rng(seed, p)));
        Proportion::new(hits.iter().filter(|h| **h).count() as u64, paths)
    }
}
