//! Readers/writer locking over a single 8-byte word, built purely from the
//! remote atomics of the contract.
//!
//! The word counts readers; a writer parks the sentinel `0x10000000` in it.
//! Writers compare-and-swap 0 -> sentinel, so they only enter when no reader
//! or writer is present. Readers optimistically fetch-and-add +1 and keep
//! the slot iff the prior value was below the sentinel; otherwise a writer
//! holds the lock and the reader revokes its registration (-1), backs off,
//! and retries. Released by subtracting what was added. The word value may
//! transiently exceed the sentinel by the number of readers that are mid
//! registration; it settles once they revoke.

use super::backoff::Backoff;
use super::{Rma, RmaError, WINDOW_LOCK_OFFSET};

/// Sentinel a writer parks in the lock word. Reader counts stay far below.
pub const EXCLUSIVE_LOCK_VALUE: u64 = 0x1000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockMode {
    Shared,
    Exclusive,
}

/// Acquire the word at (`rank`, `offset`) for writing.
pub fn lock_word_exclusive(rma: &dyn Rma, rank: usize, offset: usize) -> Result<(), RmaError> {
    let mut backoff = Backoff::new();
    loop {
        if rma.cas64(rank, offset, 0, EXCLUSIVE_LOCK_VALUE)? == 0 {
            return Ok(());
        }
        backoff.wait();
    }
}

pub fn unlock_word_exclusive(rma: &dyn Rma, rank: usize, offset: usize) -> Result<(), RmaError> {
    rma.faa64(rank, offset, -(EXCLUSIVE_LOCK_VALUE as i64))?;
    Ok(())
}

/// Acquire the word at (`rank`, `offset`) for reading; multiple readers may
/// hold it at once.
pub fn lock_word_shared(rma: &dyn Rma, rank: usize, offset: usize) -> Result<(), RmaError> {
    let mut backoff = Backoff::new();
    loop {
        if rma.faa64(rank, offset, 1)? < EXCLUSIVE_LOCK_VALUE {
            return Ok(());
        }
        // Writer present: revoke the optimistic registration and retry.
        rma.faa64(rank, offset, -1)?;
        backoff.wait();
    }
}

pub fn unlock_word_shared(rma: &dyn Rma, rank: usize, offset: usize) -> Result<(), RmaError> {
    rma.faa64(rank, offset, -1)?;
    Ok(())
}

/// Lock the whole window of `rank` (the word in the window header).
pub fn window_lock(rma: &dyn Rma, rank: usize, mode: LockMode) -> Result<(), RmaError> {
    match mode {
        LockMode::Shared => lock_word_shared(rma, rank, WINDOW_LOCK_OFFSET),
        LockMode::Exclusive => lock_word_exclusive(rma, rank, WINDOW_LOCK_OFFSET),
    }
}

pub fn window_unlock(rma: &dyn Rma, rank: usize, mode: LockMode) -> Result<(), RmaError> {
    match mode {
        LockMode::Shared => unlock_word_shared(rma, rank, WINDOW_LOCK_OFFSET),
        LockMode::Exclusive => unlock_word_exclusive(rma, rank, WINDOW_LOCK_OFFSET),
    }
}
