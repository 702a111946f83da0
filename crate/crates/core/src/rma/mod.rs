//! One-sided remote-memory contract.
//!
//! A universe is a fixed set of P participants, each owning one window of
//! bytes that every participant can access remotely: byte-range `get`/`put`
//! (no atomicity across the range), 8-byte `cas64`/`faa64` word atomics, and
//! a collective `barrier`. Two interchangeable backends implement the
//! contract: `threads` (participants are threads of one process sharing the
//! windows directly) and `sockets` (participants are separate processes, one
//! TCP connection per initiator/target pair).
//!
//! Offset 0 of every window is a reserved 8-byte header holding the window's
//! readers/writer lock word; payload layouts start at offset 8.

mod backoff;
pub mod lock;
mod sockets;
mod threads;
mod window;
mod wire;

pub use lock::{window_lock, window_unlock, LockMode, EXCLUSIVE_LOCK_VALUE};
pub use sockets::{sockets_universe, sockets_universe_prebound, SocketsConfig, SocketsRole};
pub use threads::threads_universe;

use std::sync::Arc;
use thiserror::Error;

/// Bytes reserved at the front of every window (the window lock word).
pub const WINDOW_HEADER_BYTES: usize = 8;
/// Offset of the whole-window readers/writer lock word.
pub const WINDOW_LOCK_OFFSET: usize = 0;

#[derive(Debug, Error)]
pub enum RmaError {
    #[error("rank {rank} out of range: universe has {participants} participants")]
    UnknownRank { rank: usize, participants: usize },
    #[error("range {offset}+{len} exceeds window size {window_size}")]
    OutOfBounds { offset: usize, len: usize, window_size: usize },
    #[error("offset {offset} is not 8-byte aligned")]
    Misaligned { offset: usize },
    #[error("universe configuration: {0}")]
    Config(String),
    #[error("wire protocol: {0}")]
    Protocol(String),
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),
}

/// One participant's view of the universe. Handles are cheap to clone via
/// `Arc` and safe to share, but the intended shape is one owning thread (or
/// process) per participant issuing operations sequentially.
pub trait Rma: Send + Sync {
    /// This participant's rank, in `0..participants`.
    fn rank(&self) -> usize;

    /// Number of participants (and windows) in the universe.
    fn participants(&self) -> usize;

    /// Size in bytes of every window; identical across ranks.
    fn window_size(&self) -> usize;

    /// Read `buf.len()` bytes from `rank`'s window at `offset`. The range is
    /// not read atomically: a get concurrent with a put over the same range
    /// returns a per-byte mix of old and new data, never invented bytes.
    fn get(&self, rank: usize, offset: usize, buf: &mut [u8]) -> Result<(), RmaError>;

    /// Write `data` into `rank`'s window at `offset`. When this returns the
    /// bytes are visible to subsequent gets from any participant.
    fn put(&self, rank: usize, offset: usize, data: &[u8]) -> Result<(), RmaError>;

    /// Atomic compare-and-swap of the 8-byte word at an 8-aligned `offset`.
    /// Returns the prior value; the swap happened iff prior == `expected`.
    fn cas64(
        &self,
        rank: usize,
        offset: usize,
        expected: u64,
        desired: u64,
    ) -> Result<u64, RmaError>;

    /// Atomic wrapping fetch-and-add on the 8-byte word at an 8-aligned
    /// `offset`; negative deltas subtract. Returns the prior value.
    fn faa64(&self, rank: usize, offset: usize, delta: i64) -> Result<u64, RmaError>;

    /// Collective synchronization: returns once every participant of the
    /// universe has entered the same barrier.
    fn barrier(&self) -> Result<(), RmaError>;
}

pub type RmaHandle = Arc<dyn Rma>;

/// Atomically observe an 8-byte word (a fetch-and-add of zero).
pub fn read_word64(rma: &dyn Rma, rank: usize, offset: usize) -> Result<u64, RmaError> {
    rma.faa64(rank, offset, 0)
}
