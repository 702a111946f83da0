//! The distributed hash table itself: fixed-size key/value buckets laid out
//! inside the participants' windows, probed along the candidate index list
//! of each key, with one of three consistency protocols.
//!
//! Bucket layouts (offsets within one bucket, all sizes in bytes):
//!
//! ```text
//! coarse    | key K | value V | meta 1 |                       stride K+V+1
//! fine      | lock 8 | key K | value V | meta 1 | pad |        stride rounded up to 8
//! lockfree  | key K | value V | crc32 4 | meta 1 |             stride K+V+5
//! ```
//!
//! Bucket i of rank r lives at window offset `8 + i * stride` (the first 8
//! bytes of every window hold the window lock word). Meta bit 0 marks the
//! bucket occupied; bit 1 marks it invalidated by a reader that kept seeing
//! checksum mismatches (lockfree only). Writes probe the candidates in
//! order: first empty bucket inserts, matching key updates, and when every
//! candidate is occupied by foreign keys the last one is overwritten.

mod checksum;

pub use checksum::checksum32;

use std::str::FromStr;

use thiserror::Error;

use crate::addressing::{self, Address, AddressingError};
use crate::rma::lock::{
    lock_word_exclusive, lock_word_shared, unlock_word_exclusive, unlock_word_shared,
};
use crate::rma::{self, LockMode, Rma, RmaError, RmaHandle, WINDOW_HEADER_BYTES};

/// Occupied flag in the bucket meta byte.
pub const META_OCCUPIED: u8 = 0b01;
/// Invalidated-by-reader flag (lockfree protocol only).
pub const META_INVALID: u8 = 0b10;

/// Re-reads a lockfree reader attempts after a checksum mismatch before
/// flagging the bucket invalid.
pub const CHECKSUM_READ_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// One readers/writer lock per window; writers serialize whole ranks.
    Coarse,
    /// One readers/writer lock word per bucket.
    Fine,
    /// No locks; per-bucket checksum catches torn reads.
    LockFree,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Coarse, Protocol::Fine, Protocol::LockFree];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Coarse => "coarse",
            Protocol::Fine => "fine",
            Protocol::LockFree => "lockfree",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coarse" => Ok(Protocol::Coarse),
            "fine" => Ok(Protocol::Fine),
            "lockfree" => Ok(Protocol::LockFree),
            other => Err(format!("unknown protocol {other:?} (coarse|fine|lockfree)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DhtConfig {
    pub protocol: Protocol,
    pub key_size: usize,
    pub value_size: usize,
    /// Buckets per participant window.
    pub buckets: u64,
}

impl DhtConfig {
    pub fn layout(&self) -> BucketLayout {
        BucketLayout::new(self.protocol, self.key_size, self.value_size)
    }

    /// Window bytes needed for the bucket array plus the window header.
    pub fn table_bytes(&self) -> usize {
        WINDOW_HEADER_BYTES + self.layout().stride * self.buckets as usize
    }
}

/// Byte offsets of one bucket's fields, relative to the bucket start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketLayout {
    pub stride: usize,
    /// Per-bucket lock word (fine protocol only); always at the bucket start.
    pub lock: Option<usize>,
    pub key: usize,
    pub value: usize,
    /// Little-endian CRC-32 over key and value (lockfree protocol only).
    pub checksum: Option<usize>,
    pub meta: usize,
}

impl BucketLayout {
    pub fn new(protocol: Protocol, key_size: usize, value_size: usize) -> Self {
        match protocol {
            Protocol::Coarse => BucketLayout {
                stride: key_size + value_size + 1,
                lock: None,
                key: 0,
                value: key_size,
                checksum: None,
                meta: key_size + value_size,
            },
            Protocol::Fine => {
                let payload = 8 + key_size + value_size + 1;
                BucketLayout {
                    stride: payload.div_ceil(8) * 8,
                    lock: Some(0),
                    key: 8,
                    value: 8 + key_size,
                    checksum: None,
                    meta: 8 + key_size + value_size,
                }
            }
            Protocol::LockFree => BucketLayout {
                stride: key_size + value_size + 5,
                lock: None,
                key: 0,
                value: key_size,
                checksum: Some(key_size + value_size),
                meta: key_size + value_size + 4,
            },
        }
    }

    /// Span fetched and stored by bucket operations: key through meta. The
    /// fine protocol's lock word is excluded; only word atomics touch it.
    fn data_offset(&self) -> usize {
        self.key
    }

    fn data_len(&self) -> usize {
        self.meta + 1 - self.key
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    /// Placed into an empty (or invalidated) bucket.
    Inserted,
    /// Replaced the value of the same key.
    Updated,
    /// Overwrote the last candidate; some other pair was dropped.
    Evicted,
}

/// Per-participant operation counters. Monotonic over the handle's life.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct DhtStats {
    pub reads: u64,
    pub writes: u64,
    pub read_misses: u64,
    /// Re-reads forced by a checksum mismatch (lockfree reads).
    pub checksum_mismatch_retries: u64,
    /// Buckets this participant flagged invalid after exhausting retries.
    pub invalidations: u64,
    /// Writes that overwrote a foreign pair in the last candidate bucket.
    pub evictions: u64,
}

impl std::ops::Sub for DhtStats {
    type Output = DhtStats;

    fn sub(self, rhs: DhtStats) -> DhtStats {
        DhtStats {
            reads: self.reads - rhs.reads,
            writes: self.writes - rhs.writes,
            read_misses: self.read_misses - rhs.read_misses,
            checksum_mismatch_retries: self.checksum_mismatch_retries
                - rhs.checksum_mismatch_retries,
            invalidations: self.invalidations - rhs.invalidations,
            evictions: self.evictions - rhs.evictions,
        }
    }
}

#[derive(Debug, Error)]
pub enum DhtError {
    #[error("key is {got} bytes, table is configured for {expected}")]
    KeySize { expected: usize, got: usize },
    #[error("value is {got} bytes, table is configured for {expected}")]
    ValueSize { expected: usize, got: usize },
    #[error("table needs {needed} bytes per window but windows are {window_size}")]
    TableTooLarge { needed: usize, window_size: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("operation on a freed table handle")]
    Freed,
    #[error(transparent)]
    Addressing(#[from] AddressingError),
    #[error(transparent)]
    Rma(#[from] RmaError),
}

/// Per-bucket write lock (fine protocol); `lock_offset` is the bucket's
/// window offset, where its lock word lives.
pub fn bucket_write_lock(rma: &dyn Rma, rank: usize, lock_offset: usize) -> Result<(), RmaError> {
    lock_word_exclusive(rma, rank, lock_offset)
}

pub fn bucket_write_unlock(
    rma: &dyn Rma,
    rank: usize,
    lock_offset: usize,
) -> Result<(), RmaError> {
    unlock_word_exclusive(rma, rank, lock_offset)
}

pub fn bucket_read_lock(rma: &dyn Rma, rank: usize, lock_offset: usize) -> Result<(), RmaError> {
    lock_word_shared(rma, rank, lock_offset)
}

pub fn bucket_read_unlock(rma: &dyn Rma, rank: usize, lock_offset: usize) -> Result<(), RmaError> {
    unlock_word_shared(rma, rank, lock_offset)
}

/// One participant's handle onto a shared table. Create and free are
/// collective (all participants call them); write/read/stats are local.
pub struct DhtHandle {
    rma: RmaHandle,
    cfg: DhtConfig,
    layout: BucketLayout,
    stats: DhtStats,
    freed: bool,
    // Scratch buffers so probing does not allocate per operation.
    fetch_buf: Vec<u8>,
    image_buf: Vec<u8>,
}

impl DhtHandle {
    /// Collective: every participant of the universe must call this with an
    /// identical config. Zeroes the caller's own bucket region and returns
    /// once all participants have done so.
    pub fn create(rma: RmaHandle, cfg: DhtConfig) -> Result<Self, DhtError> {
        if cfg.buckets == 0 {
            return Err(DhtError::Config("bucket count must be at least 1".into()));
        }
        if cfg.key_size == 0 || cfg.value_size == 0 {
            return Err(DhtError::Config("key and value sizes must be at least 1".into()));
        }
        // Fail early if candidate derivation would reject the bucket count.
        addressing::index_width(cfg.buckets)?;
        let needed = cfg.table_bytes();
        if needed > rma.window_size() {
            return Err(DhtError::TableTooLarge { needed, window_size: rma.window_size() });
        }

        let layout = cfg.layout();
        let handle = DhtHandle {
            fetch_buf: vec![0; layout.data_len()],
            image_buf: vec![0; layout.data_len()],
            rma,
            cfg,
            layout,
            stats: DhtStats::default(),
            freed: false,
        };
        handle.zero_own_region(needed)?;
        handle.rma.barrier()?;
        Ok(handle)
    }

    fn zero_own_region(&self, len: usize) -> Result<(), DhtError> {
        let zeros = vec![0u8; 64 * 1024];
        let rank = self.rma.rank();
        let mut offset = 0;
        while offset < len {
            let chunk = zeros.len().min(len - offset);
            self.rma.put(rank, offset, &zeros[..chunk])?;
            offset += chunk;
        }
        Ok(())
    }

    pub fn config(&self) -> &DhtConfig {
        &self.cfg
    }

    pub fn bucket_layout(&self) -> &BucketLayout {
        &self.layout
    }

    pub fn rma(&self) -> &RmaHandle {
        &self.rma
    }

    pub fn stats(&self) -> DhtStats {
        self.stats
    }

    /// Window offset of bucket `index`.
    pub fn bucket_offset(&self, index: u64) -> usize {
        WINDOW_HEADER_BYTES + self.layout.stride * index as usize
    }

    /// Collective: all participants release the table together. The handle
    /// rejects further operations.
    pub fn free(&mut self) -> Result<(), DhtError> {
        self.ensure_live()?;
        self.rma.barrier()?;
        self.freed = true;
        Ok(())
    }

    fn ensure_live(&self) -> Result<(), DhtError> {
        if self.freed {
            return Err(DhtError::Freed);
        }
        Ok(())
    }

    fn check_key(&self, key: &[u8]) -> Result<(), DhtError> {
        if key.len() != self.cfg.key_size {
            return Err(DhtError::KeySize { expected: self.cfg.key_size, got: key.len() });
        }
        Ok(())
    }

    /// Store a pair. Probes the key's candidate buckets on the owning rank;
    /// inserts into the first free one, updates in place on a key match, and
    /// evicts the last candidate when all are taken by other keys.
    pub fn write(&mut self, key: &[u8], value: &[u8]) -> Result<WriteOutcome, DhtError> {
        self.ensure_live()?;
        self.check_key(key)?;
        if value.len() != self.cfg.value_size {
            return Err(DhtError::ValueSize { expected: self.cfg.value_size, got: value.len() });
        }
        self.stats.writes += 1;
        let addr = Address::of(key, self.rma.participants(), self.cfg.buckets)?;
        let outcome = match self.cfg.protocol {
            Protocol::Coarse => self.write_coarse(&addr, key, value)?,
            Protocol::Fine => self.write_fine(&addr, key, value)?,
            Protocol::LockFree => self.write_lockfree(&addr, key, value)?,
        };
        if outcome == WriteOutcome::Evicted {
            self.stats.evictions += 1;
        }
        Ok(outcome)
    }

    /// Look a key up; `None` when no candidate bucket holds it.
    pub fn read(&mut self, key: &[u8]) -> Result<Option<Vec<u8>>, DhtError> {
        self.ensure_live()?;
        self.check_key(key)?;
        self.stats.reads += 1;
        let addr = Address::of(key, self.rma.participants(), self.cfg.buckets)?;
        let value = match self.cfg.protocol {
            Protocol::Coarse => self.read_coarse(&addr, key)?,
            Protocol::Fine => self.read_fine(&addr, key)?,
            Protocol::LockFree => self.read_lockfree(&addr, key)?,
        };
        if value.is_none() {
            self.stats.read_misses += 1;
        }
        Ok(value)
    }

    // Bucket fetch/store over the data span (key..=meta). The fine layout's
    // lock word is deliberately outside this span.

    fn fetch_bucket(&mut self, rank: usize, index: u64) -> Result<(), DhtError> {
        let offset = self.bucket_offset(index) + self.layout.data_offset();
        self.rma.get(rank, offset, &mut self.fetch_buf)?;
        Ok(())
    }

    fn store_bucket(&mut self, rank: usize, index: u64, key: &[u8], value: &[u8]) -> Result<(), DhtError> {
        let k = self.cfg.key_size;
        let v = self.cfg.value_size;
        self.image_buf[..k].copy_from_slice(key);
        self.image_buf[k..k + v].copy_from_slice(value);
        match self.layout.checksum {
            Some(c) => {
                let crc = checksum32(&self.image_buf[..k + v]);
                let c = c - self.layout.data_offset();
                self.image_buf[c..c + 4].copy_from_slice(&crc.to_le_bytes());
                self.image_buf[c + 4] = META_OCCUPIED;
            }
            None => self.image_buf[k + v] = META_OCCUPIED,
        }
        let offset = self.bucket_offset(index) + self.layout.data_offset();
        self.rma.put(rank, offset, &self.image_buf)?;
        Ok(())
    }

    fn fetched_meta(&self) -> u8 {
        self.fetch_buf[self.layout.meta - self.layout.data_offset()]
    }

    fn fetched_key_matches(&self, key: &[u8]) -> bool {
        &self.fetch_buf[..self.cfg.key_size] == key
    }

    fn fetched_value(&self) -> Vec<u8> {
        let k = self.cfg.key_size;
        self.fetch_buf[k..k + self.cfg.value_size].to_vec()
    }

    /// Stored and recomputed checksum of the fetched bucket (lockfree).
    fn fetched_checksums(&self) -> (u32, u32) {
        let kv = self.cfg.key_size + self.cfg.value_size;
        let stored = u32::from_le_bytes(self.fetch_buf[kv..kv + 4].try_into().unwrap());
        (stored, checksum32(&self.fetch_buf[..kv]))
    }

    // Coarse: one exclusive (write) or shared (read) lock on the whole
    // target window around the entire probe sequence.

    fn write_coarse(
        &mut self,
        addr: &Address,
        key: &[u8],
        value: &[u8],
    ) -> Result<WriteOutcome, DhtError> {
        rma::window_lock(self.rma.as_ref(), addr.rank, LockMode::Exclusive)?;
        let result = self.probe_and_place(addr, key, value);
        let unlock = rma::window_unlock(self.rma.as_ref(), addr.rank, LockMode::Exclusive);
        let outcome = result?;
        unlock?;
        Ok(outcome)
    }

    fn read_coarse(&mut self, addr: &Address, key: &[u8]) -> Result<Option<Vec<u8>>, DhtError> {
        rma::window_lock(self.rma.as_ref(), addr.rank, LockMode::Shared)?;
        let result = self.probe_for_key(addr, key);
        let unlock = rma::window_unlock(self.rma.as_ref(), addr.rank, LockMode::Shared);
        let value = result?;
        unlock?;
        Ok(value)
    }

    /// Lockless probe shared by the coarse paths (the window lock already
    /// serializes access).
    fn probe_and_place(
        &mut self,
        addr: &Address,
        key: &[u8],
        value: &[u8],
    ) -> Result<WriteOutcome, DhtError> {
        let last = addr.indices.len() - 1;
        for (pos, &index) in addr.indices.iter().enumerate() {
            self.fetch_bucket(addr.rank, index)?;
            let occupied = self.fetched_meta() & META_OCCUPIED != 0;
            let outcome = if !occupied {
                WriteOutcome::Inserted
            } else if self.fetched_key_matches(key) {
                WriteOutcome::Updated
            } else if pos == last {
                WriteOutcome::Evicted
            } else {
                continue;
            };
            self.store_bucket(addr.rank, index, key, value)?;
            return Ok(outcome);
        }
        unreachable!("candidate list is never empty")
    }

    fn probe_for_key(&mut self, addr: &Address, key: &[u8]) -> Result<Option<Vec<u8>>, DhtError> {
        for &index in addr.indices.iter() {
            self.fetch_bucket(addr.rank, index)?;
            if self.fetched_meta() & META_OCCUPIED != 0 && self.fetched_key_matches(key) {
                return Ok(Some(self.fetched_value()));
            }
        }
        Ok(None)
    }

    // Fine: a per-bucket lock word guards each candidate individually. The
    // write lock covers the bucket's read-check and the conditional store,
    // and is dropped before moving to the next candidate.

    fn write_fine(
        &mut self,
        addr: &Address,
        key: &[u8],
        value: &[u8],
    ) -> Result<WriteOutcome, DhtError> {
        let last = addr.indices.len() - 1;
        for (pos, &index) in addr.indices.iter().enumerate() {
            let lock_offset = self.bucket_offset(index);
            bucket_write_lock(self.rma.as_ref(), addr.rank, lock_offset)?;
            let result = (|| -> Result<Option<WriteOutcome>, DhtError> {
                self.fetch_bucket(addr.rank, index)?;
                let occupied = self.fetched_meta() & META_OCCUPIED != 0;
                let outcome = if !occupied {
                    WriteOutcome::Inserted
                } else if self.fetched_key_matches(key) {
                    WriteOutcome::Updated
                } else if pos == last {
                    WriteOutcome::Evicted
                } else {
                    return Ok(None);
                };
                self.store_bucket(addr.rank, index, key, value)?;
                Ok(Some(outcome))
            })();
            let unlock = bucket_write_unlock(self.rma.as_ref(), addr.rank, lock_offset);
            let decision = result?;
            unlock?;
            if let Some(outcome) = decision {
                return Ok(outcome);
            }
        }
        unreachable!("candidate list is never empty")
    }

    fn read_fine(&mut self, addr: &Address, key: &[u8]) -> Result<Option<Vec<u8>>, DhtError> {
        for &index in addr.indices.iter() {
            let lock_offset = self.bucket_offset(index);
            bucket_read_lock(self.rma.as_ref(), addr.rank, lock_offset)?;
            let result = self.fetch_bucket(addr.rank, index);
            let unlock = bucket_read_unlock(self.rma.as_ref(), addr.rank, lock_offset);
            result?;
            unlock?;
            if self.fetched_meta() & META_OCCUPIED != 0 && self.fetched_key_matches(key) {
                return Ok(Some(self.fetched_value()));
            }
        }
        Ok(None)
    }

    // Lockfree: plain gets and puts. Writers store key|value|crc|meta in one
    // put; readers validate the crc and retry a bounded number of times
    // before flagging the bucket invalid and probing on.

    fn write_lockfree(
        &mut self,
        addr: &Address,
        key: &[u8],
        value: &[u8],
    ) -> Result<WriteOutcome, DhtError> {
        let last = addr.indices.len() - 1;
        for (pos, &index) in addr.indices.iter().enumerate() {
            self.fetch_bucket(addr.rank, index)?;
            let meta = self.fetched_meta();
            let outcome = if meta & META_OCCUPIED == 0 || meta & META_INVALID != 0 {
                WriteOutcome::Inserted
            } else {
                let (stored, computed) = self.fetched_checksums();
                if stored != computed {
                    // Torn or stale image: the pair it held is unreadable
                    // anyway, so the bucket counts as free.
                    WriteOutcome::Inserted
                } else if self.fetched_key_matches(key) {
                    WriteOutcome::Updated
                } else if pos == last {
                    WriteOutcome::Evicted
                } else {
                    continue;
                }
            };
            self.store_bucket(addr.rank, index, key, value)?;
            return Ok(outcome);
        }
        unreachable!("candidate list is never empty")
    }

    fn read_lockfree(&mut self, addr: &Address, key: &[u8]) -> Result<Option<Vec<u8>>, DhtError> {
        'candidates: for &index in addr.indices.iter() {
            let mut retries = 0;
            loop {
                self.fetch_bucket(addr.rank, index)?;
                let meta = self.fetched_meta();
                if meta & META_OCCUPIED == 0 || meta & META_INVALID != 0 {
                    continue 'candidates;
                }
                let (stored, computed) = self.fetched_checksums();
                if stored == computed {
                    if self.fetched_key_matches(key) {
                        return Ok(Some(self.fetched_value()));
                    }
                    continue 'candidates;
                }
                if retries < CHECKSUM_READ_RETRIES {
                    retries += 1;
                    self.stats.checksum_mismatch_retries += 1;
                    continue;
                }
                // Persistent divergence: flag the bucket so writers may
                // reclaim it. (A writer that completed between our retries
                // can lose a good bucket here; the invalidation counter
                // makes that visible.)
                let meta_offset = self.bucket_offset(index) + self.layout.meta;
                self.rma.put(addr.rank, meta_offset, &[META_OCCUPIED | META_INVALID])?;
                self.stats.invalidations += 1;
                continue 'candidates;
            }
        }
        Ok(None)
    }
}
