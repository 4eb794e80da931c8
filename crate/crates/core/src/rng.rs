//! Stateless seed derivation.
//!
//! Every random stream in the crate is identified by a `(master, stream)`
//! pair. Child streams are derived by mixing, never by advancing a shared
//! generator, so results do not depend on which thread draws first.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

pub type StreamRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn combine(master: u64, stream: u64) -> u64 {
    mix64(master.wrapping_add(GOLDEN).wrapping_add(mix64(stream ^ 0xD6E8_FEB8_6659_FD93)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSource {
    pub master: u64,
    pub stream: u64,
}

impl RandomSource {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn from_seed(master: u64) -> Self {
        Self { master, stream: 0 }
    }

    /// 64-bit seed of this stream.
    pub fn seed(&self) -> u64 {
        combine(self.master, self.stream)
    }

    /// Sub-stream `id` of this stream.
    pub fn child(&self, id: u64) -> Self {
        Self {
            master: self.seed(),
            stream: id,
        }
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::seed_from_u64(self.seed())
    }
}

/// Child-stream ids used consistently across samplers.
pub(crate) mod streams {
    pub const SITES: u64 = 0;
    pub const PAIRS: u64 = 1;
    pub const CHOICE: u64 = 2;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_pure() {
        let a = RandomSource::new(42, 7);
        let b = RandomSource::new(42, 7);
        assert_eq!(a.seed(), b.seed());
        let xa: Vec<u64> = a.rng().random_iter().take(16).collect();
        let xb: Vec<u64> = b.rng().random_iter().take(16).collect();
        assert_eq!(xa, xb);
        assert_eq!(a.child(3), b.child(3));
    }

    #[test]
    fn distinct_streams_differ() {
        let s = RandomSource::from_seed(1);
        let mut seeds: Vec<u64> = (0..10_000).map(|i| s.child(i).seed()).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(RandomSource::new(1, 2).seed(), RandomSource::new(2, 1).seed());
    }

    #[test]
    fn neighbouring_streams_are_uncorrelated() {
        // Sample correlation of paired uniforms from streams i and i+1.
        let s = RandomSource::from_seed(99);
        let n = 200_000usize;
        let mut r0 = s.child(0).rng();
        let mut r1 = s.child(1).rng();
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x: f64 = r0.random();
            let y: f64 = r1.random();
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let vx = sxx / nf - (sx / nf).powi(2);
        let vy = syy / nf - (sy / nf).powi(2);
        let r = cov / (vx * vy).sqrt();
        // 4 sigma under independence, sigma ~ 1/sqrt(n)
        assert!(r.abs() < 4.0 / nf.sqrt(), "r = {r}");
    }
}
