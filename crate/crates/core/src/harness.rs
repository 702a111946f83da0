//! Timed benchmark phases over the table, run collectively by all
//! participants and aggregated by participant 0.
//!
//! Phases are barrier-delimited: every participant enters the phase together,
//! times its own operation loop, publishes a small report into its own
//! window, and meets at another barrier; participant 0 then reads the reports
//! and folds them into one `BenchResult`. Aggregate throughput is total
//! operations divided by the slowest participant's wall time.
//!
//! Benchmark values embed the full key followed by a little-endian sequence
//! number, so every read hit can be checked against the requested key. A hit
//! whose value embeds a different key aborts the run; it means a consistency
//! protocol returned torn or foreign data.

use std::io::Write;
use std::time::Instant;

use thiserror::Error;

use crate::dht::{DhtConfig, DhtError, DhtHandle, DhtStats, Protocol};
use crate::rma::{threads_universe, RmaError, RmaHandle, SocketsConfig};
use crate::workload::{fill_key, KeyDistribution, KeyNumberStream, WorkloadError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("benchmark configuration: {0}")]
    Config(String),
    #[error(
        "participant {participant} read a value embedding a foreign key \
         (key number {key_number:#x}): consistency violation"
    )]
    WrongValue { participant: usize, key_number: u64 },
    #[error(transparent)]
    Dht(#[from] DhtError),
    #[error(transparent)]
    Rma(#[from] RmaError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("csv output: {0}")]
    Csv(String),
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}

/// Which transport carries the universe. Purely a label at this layer; the
/// table code is backend-agnostic behind the remote-memory contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Threads,
    Sockets,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Threads => "threads",
            BackendKind::Sockets => "sockets",
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "threads" => Ok(BackendKind::Threads),
            "sockets" => Ok(BackendKind::Sockets),
            other => Err(format!("unknown backend {other:?} (threads|sockets)")),
        }
    }
}

/// Phase structure of one benchmark run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhasePlan {
    /// Each participant writes `count` pairs, all meet at a barrier, then
    /// each re-reads its own `count` keys.
    WriteThenRead { count: u64 },
    /// `ops` operations per participant; each drawing a fresh key and
    /// reading with probability `read_ratio`, writing otherwise.
    Mixed { ops: u64, read_ratio: f64 },
}

/// Everything a participant needs to run its share of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadSpec {
    pub distribution: KeyDistribution,
    pub plan: PhasePlan,
    /// Participant i draws from a generator seeded `seed + i`.
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        match self.plan {
            PhasePlan::WriteThenRead { count } => {
                if count == 0 {
                    return Err(HarnessError::Config("pair count must be at least 1".into()));
                }
            }
            PhasePlan::Mixed { ops, read_ratio } => {
                if ops == 0 {
                    return Err(HarnessError::Config("op count must be at least 1".into()));
                }
                if !(0.0..=1.0).contains(&read_ratio) {
                    return Err(HarnessError::Config(format!(
                        "read ratio {read_ratio} outside [0, 1]"
                    )));
                }
            }
        }
        self.distribution.sampler()?;
        Ok(())
    }
}

/// One phase's aggregated outcome, as written to the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub protocol: Protocol,
    pub backend: BackendKind,
    pub participants: usize,
    pub phase: &'static str,
    pub distribution: &'static str,
    /// Total operations across all participants.
    pub ops: u64,
    /// Wall time of the slowest participant.
    pub seconds: f64,
    pub ops_per_sec: f64,
    pub misses: u64,
    /// Checksum mismatches observed by readers (lockfree protocol).
    pub mismatches: u64,
    pub invalidations: u64,
    pub evictions: u64,
}

pub const CSV_HEADER: [&str; 12] = [
    "protocol",
    "backend",
    "participants",
    "phase",
    "distribution",
    "ops",
    "seconds",
    "ops_per_sec",
    "misses",
    "mismatches",
    "invalidations",
    "evictions",
];

/// Write results as CSV: the fixed header plus one row per result.
pub fn emit_csv<W: Write>(results: &[BenchResult], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in results {
        w.write_record([
            r.protocol.name().to_string(),
            r.backend.name().to_string(),
            r.participants.to_string(),
            r.phase.to_string(),
            r.distribution.to_string(),
            r.ops.to_string(),
            format!("{:.9}", r.seconds),
            format!("{:.3}", r.ops_per_sec),
            r.misses.to_string(),
            r.mismatches.to_string(),
            r.invalidations.to_string(),
            r.evictions.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn emit_csv_path(results: &[BenchResult], path: &std::path::Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(csv::Error::from)?;
    emit_csv(results, file)
}

/// Placement of the table and the auxiliary region inside each window.
/// The auxiliary region (phase reports here; demo state elsewhere) starts at
/// the first 8-aligned offset past the bucket array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowLayout {
    pub table_bytes: usize,
    pub aux_offset: usize,
    pub window_size: usize,
}

impl WindowLayout {
    pub fn new(cfg: &DhtConfig, aux_bytes: usize) -> Self {
        let table_bytes = cfg.table_bytes();
        let aux_offset = table_bytes.div_ceil(8) * 8;
        WindowLayout { table_bytes, aux_offset, window_size: aux_offset + aux_bytes }
    }

    /// Layout for benchmark runs: one phase report slot per window.
    pub fn for_bench(cfg: &DhtConfig) -> Self {
        WindowLayout::new(cfg, PhaseReport::BYTES)
    }
}

/// Per-participant phase outcome, exchanged through the windows.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct PhaseReport {
    pub ops: u64,
    pub nanos: u64,
    pub misses: u64,
    pub mismatches: u64,
    pub invalidations: u64,
    pub evictions: u64,
}

impl PhaseReport {
    pub const BYTES: usize = 48;

    fn encode(&self) -> [u8; Self::BYTES] {
        let mut buf = [0u8; Self::BYTES];
        for (slot, word) in buf.chunks_exact_mut(8).zip([
            self.ops,
            self.nanos,
            self.misses,
            self.mismatches,
            self.invalidations,
            self.evictions,
        ]) {
            slot.copy_from_slice(&word.to_le_bytes());
        }
        buf
    }

    fn decode(buf: &[u8; Self::BYTES]) -> Self {
        let word = |i: usize| u64::from_le_bytes(buf[i * 8..i * 8 + 8].try_into().unwrap());
        PhaseReport {
            ops: word(0),
            nanos: word(1),
            misses: word(2),
            mismatches: word(3),
            invalidations: word(4),
            evictions: word(5),
        }
    }

    fn from_stats(ops: u64, nanos: u64, delta: DhtStats) -> Self {
        PhaseReport {
            ops,
            nanos,
            misses: delta.read_misses,
            mismatches: delta.checksum_mismatch_retries,
            invalidations: delta.invalidations,
            evictions: delta.evictions,
        }
    }
}

/// Publish this participant's report, meet the barrier, and (on participant
/// 0) gather everyone's reports into one aggregate.
fn finish_phase(
    rma: &RmaHandle,
    aux_offset: usize,
    report: PhaseReport,
) -> Result<Option<PhaseReport>, HarnessError> {
    rma.put(rma.rank(), aux_offset, &report.encode())?;
    rma.barrier()?;
    if rma.rank() != 0 {
        return Ok(None);
    }
    let mut agg = PhaseReport::default();
    let mut buf = [0u8; PhaseReport::BYTES];
    for rank in 0..rma.participants() {
        rma.get(rank, aux_offset, &mut buf)?;
        let r = PhaseReport::decode(&buf);
        agg.ops += r.ops;
        agg.nanos = agg.nanos.max(r.nanos);
        agg.misses += r.misses;
        agg.mismatches += r.mismatches;
        agg.invalidations += r.invalidations;
        agg.evictions += r.evictions;
    }
    Ok(Some(agg))
}

fn into_result(
    agg: PhaseReport,
    dht: &DhtHandle,
    backend: BackendKind,
    phase: &'static str,
    distribution: &'static str,
) -> BenchResult {
    let seconds = agg.nanos.max(1) as f64 / 1e9;
    BenchResult {
        protocol: dht.config().protocol,
        backend,
        participants: dht.rma().participants(),
        phase,
        distribution,
        ops: agg.ops,
        seconds,
        ops_per_sec: agg.ops as f64 / seconds,
        misses: agg.misses,
        mismatches: agg.mismatches,
        invalidations: agg.invalidations,
        evictions: agg.evictions,
    }
}

/// Compose the benchmark value for a key: key bytes, then the operation
/// sequence number little-endian, then zero padding.
fn fill_value(key: &[u8], seq: u64, value: &mut [u8]) {
    let k = key.len();
    value[..k].copy_from_slice(key);
    value[k..k + 8].copy_from_slice(&seq.to_le_bytes());
    value[k + 8..].fill(0);
}

/// A read hit is only acceptable when the stored value embeds the key that
/// was asked for.
fn value_embeds_key(value: &[u8], key: &[u8]) -> bool {
    value.len() >= key.len() && &value[..key.len()] == key
}

fn check_hit(
    value: &[u8],
    key: &[u8],
    rank: usize,
    key_number: u64,
) -> Result<(), HarnessError> {
    if value_embeds_key(value, key) {
        Ok(())
    } else {
        Err(HarnessError::WrongValue { participant: rank, key_number })
    }
}

fn require_embedding_room(cfg: &DhtConfig) -> Result<(), HarnessError> {
    if cfg.value_size < cfg.key_size + 8 {
        return Err(HarnessError::Config(format!(
            "benchmark values embed the key plus a sequence number: value size {} < {}",
            cfg.value_size,
            cfg.key_size + 8
        )));
    }
    Ok(())
}

/// Write phase then read-back phase, both timed. Collective; returns the
/// (write, read) result pair on participant 0 and `None` elsewhere.
pub fn run_write_then_read(
    rma: &RmaHandle,
    dht: &mut DhtHandle,
    spec: &WorkloadSpec,
    backend: BackendKind,
) -> Result<Option<(BenchResult, BenchResult)>, HarnessError> {
    spec.validate()?;
    require_embedding_room(dht.config())?;
    let PhasePlan::WriteThenRead { count } = spec.plan else {
        return Err(HarnessError::Config("plan is not write-then-read".into()));
    };
    let layout = WindowLayout::for_bench(dht.config());
    let sampler = spec.distribution.sampler()?;
    let rank = rma.rank();
    let mut key = vec![0u8; dht.config().key_size];
    let mut value = vec![0u8; dht.config().value_size];

    // Write phase: every participant its own stream of `count` fresh pairs.
    let mut stream = KeyNumberStream::new(spec.seed, rank, sampler.clone());
    let before = dht.stats();
    rma.barrier()?;
    let t0 = Instant::now();
    for seq in 0..count {
        let x = stream.next_key_number();
        fill_key(x, &mut key);
        fill_value(&key, seq, &mut value);
        dht.write(&key, &value)?;
    }
    let nanos = t0.elapsed().as_nanos() as u64;
    let report = PhaseReport::from_stats(count, nanos, dht.stats() - before);
    let write_agg = finish_phase(rma, layout.aux_offset, report)?;

    // Read phase: replay the same stream and look every key up again.
    let mut stream = KeyNumberStream::new(spec.seed, rank, sampler);
    let before = dht.stats();
    rma.barrier()?;
    let t0 = Instant::now();
    for _ in 0..count {
        let x = stream.next_key_number();
        fill_key(x, &mut key);
        if let Some(found) = dht.read(&key)? {
            check_hit(&found, &key, rank, x)?;
        }
    }
    let nanos = t0.elapsed().as_nanos() as u64;
    let report = PhaseReport::from_stats(count, nanos, dht.stats() - before);
    let read_agg = finish_phase(rma, layout.aux_offset, report)?;

    let dist = spec.distribution.name();
    Ok(write_agg.zip(read_agg).map(|(w, r)| {
        (
            into_result(w, dht, backend, "write", dist),
            into_result(r, dht, backend, "read", dist),
        )
    }))
}

/// One timed phase of reads and writes interleaved by coin flips.
/// Collective; returns the result on participant 0 and `None` elsewhere.
pub fn run_mixed(
    rma: &RmaHandle,
    dht: &mut DhtHandle,
    spec: &WorkloadSpec,
    backend: BackendKind,
) -> Result<Option<BenchResult>, HarnessError> {
    spec.validate()?;
    require_embedding_room(dht.config())?;
    let PhasePlan::Mixed { ops, read_ratio } = spec.plan else {
        return Err(HarnessError::Config("plan is not mixed".into()));
    };
    let layout = WindowLayout::for_bench(dht.config());
    let sampler = spec.distribution.sampler()?;
    let rank = rma.rank();
    let mut key = vec![0u8; dht.config().key_size];
    let mut value = vec![0u8; dht.config().value_size];

    let mut stream = KeyNumberStream::new(spec.seed, rank, sampler);
    let before = dht.stats();
    rma.barrier()?;
    let t0 = Instant::now();
    for seq in 0..ops {
        let x = stream.next_key_number();
        fill_key(x, &mut key);
        if stream.next_unit() < read_ratio {
            if let Some(found) = dht.read(&key)? {
                check_hit(&found, &key, rank, x)?;
            }
        } else {
            fill_value(&key, seq, &mut value);
            dht.write(&key, &value)?;
        }
    }
    let nanos = t0.elapsed().as_nanos() as u64;
    let report = PhaseReport::from_stats(ops, nanos, dht.stats() - before);
    let agg = finish_phase(rma, layout.aux_offset, report)?;
    Ok(agg.map(|a| into_result(a, dht, backend, "mixed", spec.distribution.name())))
}

/// Where a universe comes from.
#[derive(Debug, Clone)]
pub enum UniverseSpec {
    /// One participant per spawned thread, all in this process.
    Threads { participants: usize, window_size: usize },
    /// This process is one participant of a multi-process universe.
    Sockets(SocketsConfig),
}

impl UniverseSpec {
    pub fn backend(&self) -> BackendKind {
        match self {
            UniverseSpec::Threads { .. } => BackendKind::Threads,
            UniverseSpec::Sockets(_) => BackendKind::Sockets,
        }
    }
}

/// Run one closure per locally hosted participant. Threads universes spawn
/// one thread per rank and return all their outputs, rank-ordered; sockets
/// universes run the calling process's single participant inline. Panics in
/// participant threads propagate.
pub fn run_universe<T, F>(spec: &UniverseSpec, body: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(RmaHandle) -> Result<T, HarnessError> + Send + Sync,
{
    match spec {
        UniverseSpec::Threads { participants, window_size } => {
            let handles = threads_universe(*participants, *window_size)?;
            std::thread::scope(|scope| {
                let joins: Vec<_> = handles
                    .into_iter()
                    .map(|h| scope.spawn(|| body(h)))
                    .collect();
                joins
                    .into_iter()
                    .map(|j| j.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                    .collect()
            })
        }
        UniverseSpec::Sockets(cfg) => {
            let handle = crate::rma::sockets_universe(cfg.clone())?;
            Ok(vec![body(handle)?])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dht::Protocol;

    fn small_cfg(protocol: Protocol) -> DhtConfig {
        DhtConfig { protocol, key_size: 16, value_size: 24, buckets: 1 << 17 }
    }

    fn wtr_spec(count: u64) -> WorkloadSpec {
        WorkloadSpec {
            distribution: KeyDistribution::Uniform,
            plan: PhasePlan::WriteThenRead { count },
            seed: 1,
        }
    }

    fn run_single(protocol: Protocol, spec: &WorkloadSpec) -> (BenchResult, BenchResult) {
        let cfg = small_cfg(protocol);
        let layout = WindowLayout::for_bench(&cfg);
        let universe =
            UniverseSpec::Threads { participants: 1, window_size: layout.window_size };
        let mut out = run_universe(&universe, |rma| {
            let mut dht = DhtHandle::create(rma.clone(), cfg)?;
            let pair = run_write_then_read(&rma, &mut dht, spec, BackendKind::Threads)?;
            dht.free()?;
            Ok(pair.expect("single participant is rank 0"))
        })
        .unwrap();
        out.pop().unwrap()
    }

    #[test]
    fn write_then_read_has_no_misses_at_low_load() {
        for protocol in Protocol::ALL {
            let (w, r) = run_single(protocol, &wtr_spec(1000));
            assert_eq!(w.ops, 1000);
            assert_eq!(r.ops, 1000);
            assert_eq!(r.misses, 0, "{protocol}");
            assert_eq!(r.mismatches, 0, "{protocol}");
            assert_eq!(w.phase, "write");
            assert_eq!(r.phase, "read");
            assert!(w.seconds > 0.0 && w.ops_per_sec > 0.0);
        }
    }

    #[test]
    fn single_participant_counters_are_reproducible() {
        let spec = wtr_spec(500);
        let (w1, r1) = run_single(Protocol::LockFree, &spec);
        let (w2, r2) = run_single(Protocol::LockFree, &spec);
        let strip = |b: BenchResult| (b.ops, b.misses, b.mismatches, b.invalidations, b.evictions);
        assert_eq!(strip(w1), strip(w2));
        assert_eq!(strip(r1), strip(r2));
    }

    #[test]
    fn mixed_all_reads_on_empty_table_only_misses() {
        let cfg = small_cfg(Protocol::Fine);
        let layout = WindowLayout::for_bench(&cfg);
        let spec = WorkloadSpec {
            distribution: KeyDistribution::Zipf { skew: 0.99, range: 100 },
            plan: PhasePlan::Mixed { ops: 400, read_ratio: 1.0 },
            seed: 7,
        };
        let universe =
            UniverseSpec::Threads { participants: 2, window_size: layout.window_size };
        let results = run_universe(&universe, |rma| {
            let mut dht = DhtHandle::create(rma.clone(), cfg)?;
            let res = run_mixed(&rma, &mut dht, &spec, BackendKind::Threads)?;
            dht.free()?;
            Ok(res)
        })
        .unwrap();
        let agg = results[0].clone().expect("rank 0 aggregates");
        assert!(results[1].is_none());
        assert_eq!(agg.ops, 800);
        assert_eq!(agg.misses, 800);
        assert_eq!(agg.evictions, 0);
        assert_eq!(agg.participants, 2);
    }

    #[test]
    fn plan_mismatch_is_rejected() {
        let cfg = small_cfg(Protocol::Coarse);
        let layout = WindowLayout::for_bench(&cfg);
        let universe =
            UniverseSpec::Threads { participants: 1, window_size: layout.window_size };
        let err = run_universe(&universe, |rma| {
            let mut dht = DhtHandle::create(rma.clone(), cfg)?;
            match run_mixed(&rma, &mut dht, &wtr_spec(10), BackendKind::Threads) {
                Err(e) => Ok(e.to_string()),
                Ok(_) => Ok("no error".into()),
            }
        })
        .unwrap();
        assert!(err[0].contains("not mixed"), "{}", err[0]);
    }

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        let bad_ratio = WorkloadSpec {
            distribution: KeyDistribution::Uniform,
            plan: PhasePlan::Mixed { ops: 10, read_ratio: 1.5 },
            seed: 0,
        };
        assert!(bad_ratio.validate().is_err());
        let zero_count = wtr_spec(0);
        assert!(zero_count.validate().is_err());
        let bad_zipf = WorkloadSpec {
            distribution: KeyDistribution::Zipf { skew: -1.0, range: 10 },
            plan: PhasePlan::Mixed { ops: 10, read_ratio: 0.5 },
            seed: 0,
        };
        assert!(bad_zipf.validate().is_err());
    }

    #[test]
    fn value_must_have_room_for_key_and_sequence() {
        let cfg = DhtConfig {
            protocol: Protocol::Coarse,
            key_size: 16,
            value_size: 16,
            buckets: 64,
        };
        let layout = WindowLayout::for_bench(&cfg);
        let universe =
            UniverseSpec::Threads { participants: 1, window_size: layout.window_size };
        let msgs = run_universe(&universe, |rma| {
            let mut dht = DhtHandle::create(rma.clone(), cfg)?;
            match run_write_then_read(&rma, &mut dht, &wtr_spec(1), BackendKind::Threads) {
                Err(e) => Ok(e.to_string()),
                Ok(_) => Ok("no error".into()),
            }
        })
        .unwrap();
        assert!(msgs[0].contains("embed"), "{}", msgs[0]);
    }

    #[test]
    fn hit_checking_accepts_own_key_and_rejects_foreign() {
        let key = [7u8; 16];
        let mut value = vec![0u8; 24];
        fill_value(&key, 3, &mut value);
        assert!(value_embeds_key(&value, &key));
        assert_eq!(&value[16..24], &3u64.to_le_bytes());
        let other = [8u8; 16];
        assert!(!value_embeds_key(&value, &other));
        assert!(check_hit(&value, &other, 0, 9).is_err());
    }

    #[test]
    fn report_roundtrips_through_bytes() {
        let r = PhaseReport {
            ops: 1,
            nanos: u64::MAX,
            misses: 3,
            mismatches: 4,
            invalidations: 5,
            evictions: 6,
        };
        assert_eq!(PhaseReport::decode(&r.encode()), r);
    }

    #[test]
    fn csv_header_only_for_empty_results() {
        let mut buf = Vec::new();
        emit_csv(&[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.trim_end(),
            "protocol,backend,participants,phase,distribution,ops,seconds,ops_per_sec,\
             misses,mismatches,invalidations,evictions"
        );
    }

    #[test]
    fn csv_rows_roundtrip() {
        let results = vec![
            BenchResult {
                protocol: Protocol::LockFree,
                backend: BackendKind::Threads,
                participants: 8,
                phase: "write",
                distribution: "zipf",
                ops: 800_000,
                seconds: 1.25,
                ops_per_sec: 640_000.0,
                misses: 0,
                mismatches: 2,
                invalidations: 1,
                evictions: 17,
            },
            BenchResult {
                protocol: Protocol::Coarse,
                backend: BackendKind::Sockets,
                participants: 4,
                phase: "mixed",
                distribution: "uniform",
                ops: 1000,
                seconds: 0.5,
                ops_per_sec: 2000.0,
                misses: 950,
                mismatches: 0,
                invalidations: 0,
                evictions: 0,
            },
        ];
        let mut buf = Vec::new();
        emit_csv(&results, &mut buf).unwrap();
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[0][0], "lockfree");
        assert_eq!(&rows[0][5], "800000");
        assert_eq!(rows[0][7].parse::<f64>().unwrap(), 640_000.0);
        assert_eq!(&rows[1][1], "sockets");
        assert_eq!(&rows[1][8], "950");
        // ops_per_sec column consistent with ops and seconds.
        for row in &rows {
            let ops: f64 = row[5].parse().unwrap();
            let secs: f64 = row[6].parse().unwrap();
            let rate: f64 = row[7].parse().unwrap();
            assert!((rate - ops / secs).abs() <= 0.5 + 1e-9 * rate);
        }
    }

    #[test]
    fn universe_runs_every_thread_rank() {
        let spec = UniverseSpec::Threads { participants: 4, window_size: 64 };
        let ranks = run_universe(&spec, |rma| {
            rma.barrier()?;
            Ok(rma.rank())
        })
        .unwrap();
        assert_eq!(ranks, vec![0, 1, 2, 3]);
        assert_eq!(spec.backend(), BackendKind::Threads);
    }
}
