//! A distributed hash-table cache layered over one-sided remote-memory
//! windows.
//!
//! Every participant in a universe owns one fixed-size window of bytes that
//! all participants can read and write remotely (`rma`). Key/value pairs are
//! placed into per-rank bucket arrays inside those windows (`dht`), with the
//! owning rank and the candidate bucket positions derived purely from the key
//! bytes (`addressing`). Three consistency protocols are provided:
//!
//! * `coarse`   - one readers/writer lock per window,
//! * `fine`     - one readers/writer lock per bucket,
//! * `lockfree` - no locks; a per-bucket checksum detects torn data.
//!
//! `workload` generates reproducible uniform and zipfian key streams,
//! `harness` runs timed benchmark phases across all participants, and
//! `surrogate` is a small stencil-simulation demo that uses the table as a
//! memoization cache for an expensive per-cell kernel.

pub mod addressing;
pub mod dht;
pub mod harness;
pub mod rma;
pub mod surrogate;
pub mod workload;

pub use addressing::{candidate_indices, hash64, index_width, target_rank, Address};
pub use dht::{checksum32, DhtConfig, DhtError, DhtHandle, DhtStats, Protocol, WriteOutcome};
pub use harness::{
    run_mixed, run_universe, run_write_then_read, BackendKind, BenchResult, HarnessError,
    PhasePlan, UniverseSpec, WindowLayout, WorkloadSpec,
};
pub use rma::{
    sockets_universe, sockets_universe_prebound, threads_universe, LockMode, Rma, RmaError,
    RmaHandle, SocketsConfig, SocketsRole,
};
pub use workload::KeyDistribution;
