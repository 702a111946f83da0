//! In-process backend: participants are threads of one process and windows
//! are shared atomic byte regions, so gets and puts are plain (byte-atomic)
//! memory copies and word atomics map to hardware atomics.

use std::sync::{Arc, Barrier};

use super::window::SharedWindow;
use super::{Rma, RmaError, RmaHandle, WINDOW_HEADER_BYTES};

struct ThreadsShared {
    windows: Vec<SharedWindow>,
    barrier: Barrier,
    window_size: usize,
}

struct ThreadsRma {
    rank: usize,
    shared: Arc<ThreadsShared>,
}

/// Create an in-process universe and hand back one endpoint per rank.
/// Give each endpoint to exactly one thread; `barrier` expects all of them.
pub fn threads_universe(
    participants: usize,
    window_size: usize,
) -> Result<Vec<RmaHandle>, RmaError> {
    if participants == 0 {
        return Err(RmaError::Config("participant count must be at least 1".into()));
    }
    if window_size < WINDOW_HEADER_BYTES {
        return Err(RmaError::Config(format!(
            "window size {window_size} below the {WINDOW_HEADER_BYTES}-byte header"
        )));
    }
    let shared = Arc::new(ThreadsShared {
        windows: (0..participants).map(|_| SharedWindow::new(window_size)).collect(),
        barrier: Barrier::new(participants),
        window_size,
    });
    Ok((0..participants)
        .map(|rank| Arc::new(ThreadsRma { rank, shared: shared.clone() }) as RmaHandle)
        .collect())
}

impl ThreadsRma {
    fn window(&self, rank: usize) -> Result<&SharedWindow, RmaError> {
        self.shared.windows.get(rank).ok_or(RmaError::UnknownRank {
            rank,
            participants: self.shared.windows.len(),
        })
    }
}

impl Rma for ThreadsRma {
    fn rank(&self) -> usize {
        self.rank
    }

    fn participants(&self) -> usize {
        self.shared.windows.len()
    }

    fn window_size(&self) -> usize {
        self.shared.window_size
    }

    fn get(&self, rank: usize, offset: usize, buf: &mut [u8]) -> Result<(), RmaError> {
        self.window(rank)?.read_into(offset, buf)
    }

    fn put(&self, rank: usize, offset: usize, data: &[u8]) -> Result<(), RmaError> {
        self.window(rank)?.write_from(offset, data)
    }

    fn cas64(
        &self,
        rank: usize,
        offset: usize,
        expected: u64,
        desired: u64,
    ) -> Result<u64, RmaError> {
        self.window(rank)?.cas(offset, expected, desired)
    }

    fn faa64(&self, rank: usize, offset: usize, delta: i64) -> Result<u64, RmaError> {
        self.window(rank)?.faa(offset, delta)
    }

    fn barrier(&self) -> Result<(), RmaError> {
        self.shared.barrier.wait();
        Ok(())
    }
}
