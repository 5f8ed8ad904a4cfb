//! Keyed, counter-based random streams.
//!
//! Each stream is a ChaCha20 keystream (64-bit block counter, stream id 0,
//! as produced by `rand_chacha::ChaCha20Rng`). The 256-bit key is the
//! SHA-256 digest of the stream tag bytes followed by every key field
//! encoded as little-endian `u64` (strings as their length then UTF-8 bytes).
//! Because a stream depends only on its key, work items can be evaluated in
//! any order or on any number of workers and still draw identical numbers.
//!
//! Derived draws are defined so they can be reproduced outside Rust:
//!
//! * `next_u64`: two consecutive keystream words, low word first.
//! * [`Stream::below`]: rejection sampling, accept `x < (2^64 div n) * n`,
//!   return `x mod n`.
//! * [`Stream::uniform_open`]: `((x >> 11) + 0.5) * 2^-53`, strictly in (0, 1).
//! * [`Stream::standard_normal`]: Box–Muller cosine branch from two open
//!   uniforms, `sqrt(-2 ln u1) * cos(2 pi u2)`.
//! * [`Stream::select`]: partial Fisher–Yates over `0..n`, then sorted.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Tag for hidden-unit row selection during lesioning.
pub const TAG_LESION_SELECT: &str = "blum/lesion-select/v1";
/// Tag for multiplicative weight noise during lesioning.
pub const TAG_LESION_NOISE: &str = "blum/lesion-noise/v1";
/// Tag for per-condition permutation nulls in validation.
pub const TAG_VALIDATE: &str = "blum/validate/v1";
/// Tag for the dual-stream label permutation test.
pub const TAG_DUAL_STREAM: &str = "blum/dual-stream/v1";
/// Tag for mass-univariate lesion-symptom permutations.
pub const TAG_LSM: &str = "blum/lsm/v1";

/// Builder for a stream key.
#[derive(Clone)]
pub struct StreamKey {
    hasher: Sha256,
}

impl StreamKey {
    pub fn new(tag: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(tag.as_bytes());
        StreamKey { hasher }
    }

    pub fn u64(mut self, value: u64) -> Self {
        self.hasher.update(value.to_le_bytes());
        self
    }

    pub fn str(mut self, value: &str) -> Self {
        self.hasher.update((value.len() as u64).to_le_bytes());
        self.hasher.update(value.as_bytes());
        self
    }

    pub fn seed_bytes(self) -> [u8; 32] {
        let digest = self.hasher.finalize();
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        out
    }

    pub fn stream(self) -> Stream {
        Stream {
            inner: ChaCha20Rng::from_seed(self.seed_bytes()),
        }
    }
}

/// A deterministic random stream.
pub struct Stream {
    inner: ChaCha20Rng,
}

impl Stream {
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = (u64::MAX / n) * n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform_open();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `m` distinct indices from `0..n`, ascending.
    pub fn select(&mut self, n: usize, m: usize) -> Vec<usize> {
        let mut picked = self.sample_prefix(n, m);
        picked.sort_unstable();
        picked
    }

    /// First `m` slots of a partial Fisher–Yates shuffle of `0..n`, in draw order.
    pub fn sample_prefix(&mut self, n: usize, m: usize) -> Vec<usize> {
        assert!(m <= n, "cannot select {m} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(m);
        pool
    }

    /// Full Fisher–Yates shuffle in place.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        for i in 0..n.saturating_sub(1) {
            let j = i + self.below((n - i) as u64) as usize;
            items.swap(i, j);
        }
    }

    /// Access as a `rand` generator, for distribution sampling in synthesis.
    pub fn as_rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_stream() {
        let mut a = StreamKey::new("t").u64(1).str("x").stream();
        let mut b = StreamKey::new("t").u64(1).str("x").stream();
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn field_boundaries_matter() {
        let a = StreamKey::new("t").str("ab").str("c").seed_bytes();
        let b = StreamKey::new("t").str("a").str("bc").seed_bytes();
        assert_ne!(a, b);
    }

    #[test]
    fn below_stays_in_range() {
        let mut s = StreamKey::new("t").stream();
        let mut seen = [0usize; 7];
        for _ in 0..7000 {
            seen[s.below(7) as usize] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800 && c < 1200), "{seen:?}");
    }

    #[test]
    fn select_is_distinct_and_sorted() {
        let mut s = StreamKey::new("t").u64(9).stream();
        let picked = s.select(64, 32);
        assert_eq!(picked.len(), 32);
        assert!(picked.windows(2).all(|w| w[0] < w[1]));
        assert!(picked.iter().all(|&i| i < 64));
    }

    #[test]
    fn normal_moments() {
        // mean within 3/sqrt(n), variance within 1%.
        let n = 1_000_000;
        let mut s = StreamKey::new("moments").stream();
        let draws: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn scaled_noise_moments() {
        let sigma = 1.3;
        let n = 1_000_000;
        let mut s = StreamKey::new("scaled").stream();
        let draws: Vec<f64> = (0..n).map(|_| sigma * s.standard_normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt());
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.01);
    }
}
