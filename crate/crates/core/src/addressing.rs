//! Key-to-storage addressing.
//!
//! A key is reduced to a 64-bit FNV-1a hash. The hash picks the owning
//! participant (`hash mod P`) and a short ordered list of candidate bucket
//! positions inside that participant's window: every n-byte big-endian
//! window of the 8 hash bytes, taken at byte offsets 0..=8-n and reduced
//! mod B. The index width n is the smallest byte count whose value range
//! covers the bucket count, so a table of 2^24 buckets yields six 3-byte
//! candidates while small tables yield eight 1-byte candidates.

use thiserror::Error;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Maximum number of candidate bucket indices a hash can produce (n = 1).
pub const MAX_CANDIDATES: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AddressingError {
    #[error("bucket count must be at least 1")]
    ZeroBuckets,
    #[error("participant count must be at least 1")]
    ZeroParticipants,
}

/// 64-bit FNV-1a over the raw key bytes. Stable across platforms and runs;
/// every participant must derive identical addresses from identical keys.
pub fn hash64(key: &[u8]) -> u64 {
    let mut h = FNV_OFFSET_BASIS;
    for &byte in key {
        h ^= u64::from(byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Smallest n in 1..=8 with 2^(8n) >= buckets.
pub fn index_width(buckets: u64) -> Result<u32, AddressingError> {
    if buckets == 0 {
        return Err(AddressingError::ZeroBuckets);
    }
    // ceil(log2(buckets)) bits, then whole bytes, at least one.
    let bits = 64 - (buckets - 1).leading_zeros();
    Ok(bits.div_ceil(8).max(1))
}

/// Owning participant for a hash: `h mod participants`.
pub fn target_rank(h: u64, participants: usize) -> Result<usize, AddressingError> {
    if participants == 0 {
        return Err(AddressingError::ZeroParticipants);
    }
    Ok((h % participants as u64) as usize)
}

/// Ordered candidate bucket positions for a hash, all below `buckets`.
/// Produces 9-n entries for index width n; duplicates are possible and kept.
pub fn candidate_indices(h: u64, buckets: u64) -> Result<CandidateList, AddressingError> {
    let n = index_width(buckets)? as usize;
    let bytes = h.to_be_bytes();
    let mut list = CandidateList { buf: [0; MAX_CANDIDATES], len: 0 };
    for off in 0..=(8 - n) {
        let mut acc = 0u64;
        for &b in &bytes[off..off + n] {
            acc = (acc << 8) | u64::from(b);
        }
        list.buf[list.len] = acc % buckets;
        list.len += 1;
    }
    Ok(list)
}

/// Fixed-capacity list of candidate bucket indices, in probe order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateList {
    buf: [u64; MAX_CANDIDATES],
    len: usize,
}

impl CandidateList {
    pub fn as_slice(&self) -> &[u64] {
        &self.buf[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl std::ops::Deref for CandidateList {
    type Target = [u64];

    fn deref(&self) -> &[u64] {
        self.as_slice()
    }
}

impl<'a> IntoIterator for &'a CandidateList {
    type Item = &'a u64;
    type IntoIter = std::slice::Iter<'a, u64>;

    fn into_iter(self) -> Self::IntoIter {
        self.as_slice().iter()
    }
}

/// Complete placement of a key: owning rank plus probe-ordered bucket indices.
#[derive(Debug, Clone, Copy)]
pub struct Address {
    pub rank: usize,
    pub indices: CandidateList,
}

impl Address {
    pub fn of(key: &[u8], participants: usize, buckets: u64) -> Result<Self, AddressingError> {
        let h = hash64(key);
        Ok(Address {
            rank: target_rank(h, participants)?,
            indices: candidate_indices(h, buckets)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Straight-line FNV-1a transcription used as an independent reference;
    /// kept deliberately separate from the implementation above.
    fn fnv1a_reference(data: &[u8]) -> u64 {
        let mut state: u128 = 0xcbf29ce484222325;
        for &b in data {
            state ^= b as u128;
            state = (state * 0x100000001b3) & 0xffff_ffff_ffff_ffff;
        }
        state as u64
    }

    #[test]
    fn hash64_empty_input_is_offset_basis() {
        assert_eq!(hash64(&[]), 0xcbf29ce484222325);
        assert_eq!(hash64(&[]), fnv1a_reference(&[]));
    }

    #[test]
    fn hash64_single_byte_vector() {
        assert_eq!(hash64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(hash64(b"a"), fnv1a_reference(b"a"));
    }

    #[test]
    fn hash64_matches_reference_on_longer_inputs() {
        for input in [&b"foobar"[..], b"hello world", &[0u8; 80], b"\x00\xff\x10"] {
            assert_eq!(hash64(input), fnv1a_reference(input));
        }
    }

    #[test]
    fn index_width_examples() {
        assert_eq!(index_width(1 << 24), Ok(3));
        assert_eq!(index_width(256), Ok(1));
        assert_eq!(index_width(257), Ok(2));
        assert_eq!(index_width(1), Ok(1));
        assert_eq!(index_width(u64::MAX), Ok(8));
        assert_eq!(index_width(0), Err(AddressingError::ZeroBuckets));
    }

    #[test]
    fn target_rank_is_modulo() {
        assert_eq!(target_rank(22, 8), Ok(6));
        assert_eq!(target_rank(5, 1), Ok(0));
        assert_eq!(target_rank(5, 0), Err(AddressingError::ZeroParticipants));
    }

    #[test]
    fn candidates_slide_big_endian_windows() {
        let list = candidate_indices(0x0102030405060708, 1 << 24).unwrap();
        assert_eq!(
            list.as_slice(),
            &[0x010203, 0x020304, 0x030405, 0x040506, 0x050607, 0x060708]
        );
    }

    #[test]
    fn candidates_of_zero_hash_are_zero() {
        for buckets in [1u64, 7, 256, 1 << 20] {
            let list = candidate_indices(0, buckets).unwrap();
            assert!(list.iter().all(|&i| i == 0));
        }
    }

    #[test]
    fn candidates_single_byte_width() {
        let h = 0x8877665544332211u64;
        let list = candidate_indices(h, 100).unwrap();
        let want: Vec<u64> = h.to_be_bytes().iter().map(|&b| u64::from(b) % 100).collect();
        assert_eq!(list.as_slice(), want.as_slice());
    }

    #[test]
    fn address_assembles_rank_and_candidates() {
        let key = [7u8; 80];
        let h = hash64(&key);
        let addr = Address::of(&key, 16, 1 << 16).unwrap();
        assert_eq!(addr.rank, (h % 16) as usize);
        assert_eq!(addr.indices.as_slice(), candidate_indices(h, 1 << 16).unwrap().as_slice());
    }

    proptest! {
        #[test]
        fn candidate_count_and_range(h: u64, buckets in 1u64..=u64::MAX) {
            let n = index_width(buckets).unwrap();
            let list = candidate_indices(h, buckets).unwrap();
            prop_assert_eq!(list.len(), 9 - n as usize);
            prop_assert!(list.iter().all(|&i| i < buckets));
        }

        #[test]
        fn width_is_minimal(buckets in 1u64..=u64::MAX) {
            let n = index_width(buckets).unwrap();
            // 2^(8n) covers the bucket count and 2^(8(n-1)) does not.
            if n < 8 {
                prop_assert!(1u128 << (8 * n) >= buckets as u128);
            }
            if n > 1 {
                prop_assert!(1u128 << (8 * (n - 1)) < buckets as u128);
            }
        }

        #[test]
        fn hash_agrees_with_reference(data in proptest::collection::vec(any::<u8>(), 0..256)) {
            prop_assert_eq!(hash64(&data), fnv1a_reference(&data));
        }
    }

    // Distribution sanity for the first candidate index: a chi-square bound
    // against the uniform expectation, plus a cap on the hottest bucket.
    // (With one million keys over 2^16 buckets the expected per-bucket count
    // is ~15, so the raw max/min occupancy ratio is dominated by Poisson
    // noise and is not a usable gate.)
    #[test]
    fn first_candidate_spreads_uniformly() {
        use rand_core::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let buckets = 1u64 << 16;
        let mut counts = vec![0u32; buckets as usize];
        let draws = 1_000_000u32;
        for _ in 0..draws {
            let key = rng.next_u64().to_le_bytes();
            let first = candidate_indices(hash64(&key), buckets).unwrap()[0];
            counts[first as usize] += 1;
        }
        let expected = f64::from(draws) / buckets as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = f64::from(c) - expected;
                d * d / expected
            })
            .sum();
        // Degrees of freedom 65535: mean 65535, sigma ~362. Allow +5 sigma.
        assert!(chi2 < 67_350.0, "chi-square too high: {chi2}");
        let max = counts.iter().copied().max().unwrap();
        assert!(f64::from(max) < 3.0 * expected, "hottest bucket {max} vs mean {expected}");
    }
}
