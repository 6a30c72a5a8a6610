//! Low-discrepancy and seeded pseudo-random sampling.
//!
//! Certificates use a Halton sequence with a Cranley–Patterson rotation drawn
//! from a ChaCha8 stream seeded by the caller. Seeds for sub-tasks are derived
//! with [`split_seed`], so a single configuration seed determines every stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Default seed used by certificates when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 0x5eed_a115;

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Rotated Halton sequence on the unit cube.
#[derive(Clone, Debug)]
pub struct Halton {
    index: u64,
    shift: Vec<f64>,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton sampler supports at most 16 dimensions");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.gen::<f64>()).collect();
        Self { index: 1, shift }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Writes the next point of the sequence into `out`.
    pub fn fill(&mut self, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let v = radical_inverse(self.index, PRIMES[k]) + self.shift[k];
            *o = v - v.floor();
        }
        self.index += 1;
    }
}

/// Derives an independent child seed: `split_seed(seed, stream)`.
///
/// The scheme is SplitMix64 applied to `seed ^ (stream * golden)`.
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `count` Halton points of the open Euclidean ball `B_radius`, by rejection.
pub fn ball_points(n: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut h = Halton::new(n, seed);
    let mut u = vec![0.0; n];
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        h.fill(&mut u);
        let x: Vec<f64> = u.iter().map(|v| radius * (2.0 * v - 1.0)).collect();
        if x.iter().map(|v| v * v).sum::<f64>() < radius * radius {
            out.push(x);
        }
    }
    out
}

/// Seeded pseudo-random generator used for ensembles.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn halton_is_deterministic_and_uniform() {
        let mut a = Halton::new(2, 7);
        let mut b = Halton::new(2, 7);
        let mut p = [0.0; 2];
        let mut q = [0.0; 2];
        let mut mean = [0.0; 2];
        for _ in 0..4096 {
            a.fill(&mut p);
            b.fill(&mut q);
            assert_eq!(p, q);
            mean[0] += p[0] / 4096.0;
            mean[1] += p[1] / 4096.0;
        }
        assert!((mean[0] - 0.5).abs() < 1e-2 && (mean[1] - 0.5).abs() < 1e-2);
    }

    #[test]
    fn split_seed_separates_streams() {
        assert_ne!(split_seed(1, 0), split_seed(1, 1));
        assert_eq!(split_seed(9, 3), split_seed(9, 3));
    }
}
