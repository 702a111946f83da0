//! Reproducible key streams for the benchmark harness.
//!
//! Each participant runs its own ChaCha8 generator seeded with
//! `base_seed + rank`, so a fixed (seed, participant count) pair produces
//! identical key sequences on every run and backend. Key numbers come from
//! either the full uniform 64-bit range or a zipfian distribution over
//! `[1, N]`, and are expanded to fixed-width key bytes deterministically.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("zipf range must be at least 1")]
    ZeroRange,
    #[error("zipf skew must be a finite number >= 0, got {0}")]
    BadSkew(f64),
}

/// How key numbers are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyDistribution {
    /// Uniform over the full 64-bit range.
    Uniform,
    /// Zipfian over `[1, range]`: P(X = k) proportional to k^-skew.
    Zipf { skew: f64, range: u64 },
}

impl KeyDistribution {
    pub fn name(&self) -> &'static str {
        match self {
            KeyDistribution::Uniform => "uniform",
            KeyDistribution::Zipf { .. } => "zipf",
        }
    }

    /// Build the sampler for this distribution. Zipf precomputes its
    /// cumulative table once; clone the sampler to share it across
    /// participants.
    pub fn sampler(&self) -> Result<KeySampler, WorkloadError> {
        match *self {
            KeyDistribution::Uniform => Ok(KeySampler::Uniform),
            KeyDistribution::Zipf { skew, range } => {
                Ok(KeySampler::Zipf(ZipfSampler::new(skew, range)?))
            }
        }
    }
}

/// Distribution sampler; cheap to clone (the zipf table is shared).
#[derive(Debug, Clone)]
pub enum KeySampler {
    Uniform,
    Zipf(ZipfSampler),
}

impl KeySampler {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            KeySampler::Uniform => rng.next_u64(),
            KeySampler::Zipf(z) => z.draw(rng),
        }
    }
}

/// Zipfian sampler over `[1, n]` by inversion: binary search of a uniform
/// variate in the precomputed cumulative distribution. Memory is 8n bytes;
/// the intended ranges (up to a few million) fit comfortably.
#[derive(Debug, Clone)]
pub struct ZipfSampler {
    cdf: Arc<[f64]>,
}

impl ZipfSampler {
    pub fn new(skew: f64, n: u64) -> Result<Self, WorkloadError> {
        if n == 0 {
            return Err(WorkloadError::ZeroRange);
        }
        if !skew.is_finite() || skew < 0.0 {
            return Err(WorkloadError::BadSkew(skew));
        }
        let mut cdf = Vec::with_capacity(n as usize);
        let mut total = 0.0f64;
        for k in 1..=n {
            total += (k as f64).powf(-skew);
            cdf.push(total);
        }
        for c in &mut cdf {
            *c /= total;
        }
        // Guarantee the search always lands in range.
        *cdf.last_mut().unwrap() = 1.0;
        Ok(ZipfSampler { cdf: cdf.into() })
    }

    pub fn n(&self) -> u64 {
        self.cdf.len() as u64
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        let u = unit_interval(rng);
        // First k (1-based) whose cumulative probability exceeds u.
        self.cdf.partition_point(|&c| c <= u) as u64 + 1
    }
}

/// Uniform f64 in [0, 1): the top 53 bits of one 64-bit draw.
pub fn unit_interval(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Per-participant deterministic stream of key numbers.
pub struct KeyNumberStream {
    rng: ChaCha8Rng,
    sampler: KeySampler,
}

impl KeyNumberStream {
    /// Participant `rank`'s stream: generator seeded `base_seed + rank`.
    pub fn new(base_seed: u64, rank: usize, sampler: KeySampler) -> Self {
        KeyNumberStream {
            rng: ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(rank as u64)),
            sampler,
        }
    }

    pub fn next_key_number(&mut self) -> u64 {
        self.sampler.draw(&mut self.rng)
    }

    /// Uniform variate for auxiliary decisions (e.g. read-vs-write coins),
    /// taken from the same generator so a stream is replayable as a whole.
    pub fn next_unit(&mut self) -> f64 {
        unit_interval(&mut self.rng)
    }
}

/// Bijective 64-bit mixer (the splitmix64 finalizer). Distinct inputs give
/// distinct outputs, which keeps key expansion injective in the key number.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Block offset constant for key expansion (the splitmix64 increment).
const BLOCK_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Expand a 64-bit key number into `key_size` bytes: block j holds the
/// big-endian bytes of `mix64(x XOR j * GAMMA)`, truncated at the end.
/// Block 0 alone is a bijective image of x, so distinct numbers always
/// expand to distinct keys.
pub fn expand_key(x: u64, key_size: usize) -> Vec<u8> {
    let mut key = vec![0u8; key_size];
    fill_key(x, &mut key);
    key
}

/// `expand_key` into a caller-owned buffer, avoiding per-op allocation.
pub fn fill_key(x: u64, key: &mut [u8]) {
    for (j, block) in key.chunks_mut(8).enumerate() {
        let word = mix64(x ^ (j as u64).wrapping_mul(BLOCK_GAMMA));
        block.copy_from_slice(&word.to_be_bytes()[..block.len()]);
    }
}
