//! Window storage shared by both backends: a byte region with byte-granular
//! atomic loads/stores and 8-byte word atomics.
//!
//! Storage is allocated as `AtomicU64` words so every 8-aligned offset can
//! carry a lock word; individual bytes are accessed through `AtomicU8` views
//! of the same allocation. The consistency protocols keep the two access
//! sizes on disjoint offsets (lock words are only ever touched by word
//! atomics, payload bytes only by byte ops), so racing accesses are always
//! same-sized.

use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};

use super::RmaError;

pub(crate) struct SharedWindow {
    words: Box<[AtomicU64]>,
    len: usize,
}

impl SharedWindow {
    /// Zero-filled window of `len` bytes.
    pub(crate) fn new(len: usize) -> Self {
        let words = len.div_ceil(8);
        SharedWindow {
            words: std::iter::repeat_with(|| AtomicU64::new(0)).take(words).collect(),
            len,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    fn check_range(&self, offset: usize, len: usize) -> Result<(), RmaError> {
        if offset.checked_add(len).is_none_or(|end| end > self.len) {
            return Err(RmaError::OutOfBounds { offset, len, window_size: self.len });
        }
        Ok(())
    }

    fn check_word(&self, offset: usize) -> Result<usize, RmaError> {
        if !offset.is_multiple_of(8) {
            return Err(RmaError::Misaligned { offset });
        }
        self.check_range(offset, 8)?;
        Ok(offset / 8)
    }

    fn byte(&self, index: usize) -> &AtomicU8 {
        debug_assert!(index < self.len);
        // In-bounds byte of the words allocation; AtomicU8 is layout- and
        // alignment-compatible with any byte of an AtomicU64.
        unsafe { &*(self.words.as_ptr().cast::<AtomicU8>()).add(index) }
    }

    /// Per-byte acquire loads; concurrent writers yield a per-byte mix.
    pub(crate) fn read_into(&self, offset: usize, buf: &mut [u8]) -> Result<(), RmaError> {
        self.check_range(offset, buf.len())?;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = self.byte(offset + i).load(Ordering::Acquire);
        }
        Ok(())
    }

    /// Per-byte release stores; visible to readers on return.
    pub(crate) fn write_from(&self, offset: usize, data: &[u8]) -> Result<(), RmaError> {
        self.check_range(offset, data.len())?;
        for (i, &b) in data.iter().enumerate() {
            self.byte(offset + i).store(b, Ordering::Release);
        }
        Ok(())
    }

    pub(crate) fn cas(
        &self,
        offset: usize,
        expected: u64,
        desired: u64,
    ) -> Result<u64, RmaError> {
        let word = self.check_word(offset)?;
        Ok(match self.words[word].compare_exchange(
            expected,
            desired,
            Ordering::AcqRel,
            Ordering::Acquire,
        ) {
            Ok(prior) | Err(prior) => prior,
        })
    }

    pub(crate) fn faa(&self, offset: usize, delta: i64) -> Result<u64, RmaError> {
        let word = self.check_word(offset)?;
        Ok(self.words[word].fetch_add(delta as u64, Ordering::AcqRel))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_window_reads_zero() {
        let w = SharedWindow::new(64);
        let mut buf = [0xffu8; 64];
        w.read_into(0, &mut buf).unwrap();
        assert_eq!(buf, [0u8; 64]);
    }

    #[test]
    fn write_read_roundtrip() {
        let w = SharedWindow::new(100);
        let data: Vec<u8> = (0..50).collect();
        w.write_from(25, &data).unwrap();
        let mut back = vec![0u8; 50];
        w.read_into(25, &mut back).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn bounds_are_enforced() {
        let w = SharedWindow::new(16);
        let mut buf = [0u8; 9];
        assert!(matches!(w.read_into(8, &mut buf), Err(RmaError::OutOfBounds { .. })));
        assert!(matches!(w.write_from(16, &[1]), Err(RmaError::OutOfBounds { .. })));
        assert!(w.read_into(16, &mut []).is_ok());
        assert!(matches!(w.cas(16, 0, 1), Err(RmaError::OutOfBounds { .. })));
        assert!(matches!(w.faa(usize::MAX - 3, 1), Err(RmaError::Misaligned { .. })));
    }

    #[test]
    fn word_ops_require_alignment() {
        let w = SharedWindow::new(32);
        assert!(matches!(w.cas(4, 0, 1), Err(RmaError::Misaligned { .. })));
        assert!(matches!(w.faa(9, 1), Err(RmaError::Misaligned { .. })));
    }

    #[test]
    fn cas_reports_prior_and_swaps_only_on_match() {
        let w = SharedWindow::new(8);
        assert_eq!(w.cas(0, 0, 42).unwrap(), 0);
        assert_eq!(w.cas(0, 0, 7).unwrap(), 42); // no swap
        assert_eq!(w.cas(0, 42, 7).unwrap(), 42);
        assert_eq!(w.faa(0, 0).unwrap(), 7);
    }

    #[test]
    fn faa_wraps_and_handles_negative_deltas() {
        let w = SharedWindow::new(8);
        assert_eq!(w.faa(0, -1).unwrap(), 0);
        assert_eq!(w.faa(0, 1).unwrap(), u64::MAX);
        assert_eq!(w.faa(0, 0).unwrap(), 0);
    }

    #[test]
    fn odd_sized_window_still_byte_addressable() {
        let w = SharedWindow::new(13);
        w.write_from(5, &[0xaa; 8]).unwrap();
        let mut buf = [0u8; 8];
        w.read_into(5, &mut buf).unwrap();
        assert_eq!(buf, [0xaa; 8]);
        assert!(w.write_from(6, &[0; 8]).is_err());
    }
}
