//! Table behavior across both transports: every test here runs once over a
//! threads universe and once over an in-process sockets universe (each
//! participant on its own thread, meshed over loopback).

use std::sync::Arc;

use dht_core::dht::{DhtConfig, DhtHandle, Protocol, WriteOutcome, META_INVALID, META_OCCUPIED};
use dht_core::rma::threads_universe;
use dht_core::{Rma, RmaError, RmaHandle};

mod common;
use common::{run_per_rank, sockets_mesh};

/// The two transports under test.
fn universes(participants: usize, window_size: usize) -> Vec<(&'static str, Vec<RmaHandle>)> {
    vec![
        ("threads", threads_universe(participants, window_size).unwrap()),
        ("sockets", sockets_mesh(participants, window_size)),
    ]
}

fn key_bytes(tag: u64, size: usize) -> Vec<u8> {
    let mut k = vec![0u8; size];
    dht_core::workload::fill_key(tag, &mut k);
    k
}

fn value_bytes(tag: u64, size: usize) -> Vec<u8> {
    (0..size).map(|i| (tag as usize + i * 31) as u8).collect()
}

const KEY: usize = 24;
const VAL: usize = 32;

fn cfg(protocol: Protocol, buckets: u64) -> DhtConfig {
    DhtConfig { protocol, key_size: KEY, value_size: VAL, buckets }
}

fn window_for(c: &DhtConfig) -> usize {
    c.table_bytes()
}

#[test]
fn roundtrip_update_and_miss_on_both_backends() {
    let table = cfg(Protocol::Fine, 1 << 12);
    for (backend, handles) in universes(2, window_for(&table)) {
        run_per_rank(handles, |rma| {
            let mut dht = DhtHandle::create(rma.clone(), table).unwrap();
            let base = rma.rank() as u64 * 10_000;
            for i in 0..200 {
                dht.write(&key_bytes(base + i, KEY), &value_bytes(base + i, VAL)).unwrap();
            }
            for i in 0..200 {
                let got = dht.read(&key_bytes(base + i, KEY)).unwrap();
                assert_eq!(got, Some(value_bytes(base + i, VAL)), "{backend} rank read-back");
            }
            // Overwrite half the keys and confirm in-place updates.
            for i in 0..100 {
                let out = dht
                    .write(&key_bytes(base + i, KEY), &value_bytes(base + i + 777, VAL))
                    .unwrap();
                assert_eq!(out, WriteOutcome::Updated, "{backend}");
            }
            for i in 0..100 {
                let got = dht.read(&key_bytes(base + i, KEY)).unwrap();
                assert_eq!(got, Some(value_bytes(base + i + 777, VAL)), "{backend}");
            }
            assert_eq!(dht.read(&key_bytes(u64::MAX, KEY)).unwrap(), None, "{backend}");
            dht.free().unwrap();
        });
    }
}

#[test]
fn one_rank_writes_all_ranks_see_it() {
    for protocol in Protocol::ALL {
        let table = cfg(protocol, 1 << 12);
        for (backend, handles) in universes(3, window_for(&table)) {
            run_per_rank(handles, |rma| {
                let mut dht = DhtHandle::create(rma.clone(), table).unwrap();
                if rma.rank() == 0 {
                    for i in 0..120 {
                        dht.write(&key_bytes(i, KEY), &value_bytes(i, VAL)).unwrap();
                    }
                }
                rma.barrier().unwrap();
                // Every rank, including non-writers, finds every pair.
                for i in 0..120 {
                    let got = dht.read(&key_bytes(i, KEY)).unwrap();
                    assert_eq!(
                        got,
                        Some(value_bytes(i, VAL)),
                        "{backend}/{protocol} rank {} key {i}",
                        rma.rank()
                    );
                }
                dht.free().unwrap();
            });
        }
    }
}

// With a single bucket every candidate position is bucket 0, so a second
// distinct key must evict the first.
#[test]
fn all_candidates_full_evicts_the_last() {
    for protocol in Protocol::ALL {
        let table = cfg(protocol, 1);
        for (backend, handles) in universes(1, window_for(&table)) {
            run_per_rank(handles, |rma| {
                let mut dht = DhtHandle::create(rma.clone(), table).unwrap();
                let (k1, v1) = (key_bytes(1, KEY), value_bytes(1, VAL));
                let (k2, v2) = (key_bytes(2, KEY), value_bytes(2, VAL));
                assert_eq!(dht.write(&k1, &v1).unwrap(), WriteOutcome::Inserted);
                assert_eq!(dht.write(&k2, &v2).unwrap(), WriteOutcome::Evicted, "{backend}");
                assert_eq!(dht.read(&k1).unwrap(), None, "{backend}/{protocol} evicted");
                assert_eq!(dht.read(&k2).unwrap(), Some(v2), "{backend}/{protocol}");
                assert_eq!(dht.stats().evictions, 1);
                dht.free().unwrap();
            });
        }
    }
}

// Two keys sharing their first candidate bucket but not the second: the
// second write must fall through to its next candidate, not evict.
#[test]
fn collision_on_first_candidate_probes_onward() {
    let buckets = 256u64;
    // Hunt deterministically for a colliding pair with distinct seconds.
    let (a, b) = {
        let first = |tag: u64| {
            let h = dht_core::hash64(&key_bytes(tag, KEY));
            dht_core::candidate_indices(h, buckets).unwrap().as_slice().to_vec()
        };
        let target = first(0);
        let mut found = None;
        for tag in 1..50_000 {
            let c = first(tag);
            if c[0] == target[0] && c[1] != target[1] {
                found = Some(tag);
                break;
            }
        }
        (0u64, found.expect("a colliding key exists below the search bound"))
    };

    for protocol in Protocol::ALL {
        let table = cfg(protocol, buckets);
        for (backend, handles) in universes(1, window_for(&table)) {
            run_per_rank(handles, |rma| {
                let mut dht = DhtHandle::create(rma.clone(), table).unwrap();
                assert_eq!(
                    dht.write(&key_bytes(a, KEY), &value_bytes(a, VAL)).unwrap(),
                    WriteOutcome::Inserted
                );
                assert_eq!(
                    dht.write(&key_bytes(b, KEY), &value_bytes(b, VAL)).unwrap(),
                    WriteOutcome::Inserted,
                    "{backend}/{protocol} second key must probe onward"
                );
                assert_eq!(dht.read(&key_bytes(a, KEY)).unwrap(), Some(value_bytes(a, VAL)));
                assert_eq!(dht.read(&key_bytes(b, KEY)).unwrap(), Some(value_bytes(b, VAL)));
                assert_eq!(dht.stats().evictions, 0);
                dht.free().unwrap();
            });
        }
    }
}

#[test]
fn stats_track_operations() {
    let table = cfg(Protocol::LockFree, 1 << 10);
    for (backend, handles) in universes(1, window_for(&table)) {
        run_per_rank(handles, |rma| {
            let mut dht = DhtHandle::create(rma.clone(), table).unwrap();
            for i in 0..50 {
                dht.write(&key_bytes(i, KEY), &value_bytes(i, VAL)).unwrap();
            }
            for i in 0..80 {
                dht.read(&key_bytes(i, KEY)).unwrap();
            }
            let s = dht.stats();
            assert_eq!(s.writes, 50, "{backend}");
            assert_eq!(s.reads, 80, "{backend}");
            assert_eq!(s.read_misses, 30, "{backend}");
            assert_eq!(s.checksum_mismatch_retries, 0, "{backend}");
            dht.free().unwrap();
        });
    }
}

// Corrupting a stored bucket makes lockfree reads retry, give up, flag the
// bucket, and lets the next write reclaim it.
#[test]
fn corrupted_bucket_is_invalidated_and_reclaimed() {
    let table = cfg(Protocol::LockFree, 1);
    for (backend, handles) in universes(1, window_for(&table)) {
        run_per_rank(handles, |rma| {
            let mut dht = DhtHandle::create(rma.clone(), table).unwrap();
            let k1 = key_bytes(1, KEY);
            dht.write(&k1, &value_bytes(1, VAL)).unwrap();

            // Flip one stored value byte behind the table's back.
            let layout = *dht.bucket_layout();
            let value_offset = dht.bucket_offset(0) + layout.value;
            let mut byte = [0u8; 1];
            rma.get(0, value_offset, &mut byte).unwrap();
            byte[0] ^= 0xff;
            rma.put(0, value_offset, &byte).unwrap();

            assert_eq!(dht.read(&k1).unwrap(), None, "{backend} torn data never surfaces");
            let s = dht.stats();
            assert_eq!(s.checksum_mismatch_retries, 3, "{backend}");
            assert_eq!(s.invalidations, 1, "{backend}");

            let meta_offset = dht.bucket_offset(0) + layout.meta;
            rma.get(0, meta_offset, &mut byte).unwrap();
            assert_eq!(byte[0], META_OCCUPIED | META_INVALID, "{backend}");

            // A write reclaims the invalidated bucket as free.
            let k2 = key_bytes(2, KEY);
            assert_eq!(dht.write(&k2, &value_bytes(2, VAL)).unwrap(), WriteOutcome::Inserted);
            assert_eq!(dht.read(&k2).unwrap(), Some(value_bytes(2, VAL)));
            assert_eq!(dht.stats().evictions, 0, "{backend} reclaim is not an eviction");
            dht.free().unwrap();
        });
    }
}

#[test]
fn puts_published_before_barrier_are_visible_after() {
    for (backend, handles) in universes(3, 256) {
        run_per_rank(handles, |rma| {
            // Every rank deposits a tagged word into every window, then all
            // verify the full matrix after one barrier.
            let me = rma.rank() as u64;
            for target in 0..rma.participants() {
                let slot = 8 + rma.rank() * 8;
                rma.put(target, slot, &(me + 100).to_le_bytes()).unwrap();
            }
            rma.barrier().unwrap();
            for writer in 0..rma.participants() {
                let mut buf = [0u8; 8];
                rma.get(rma.rank(), 8 + writer * 8, &mut buf).unwrap();
                assert_eq!(u64::from_le_bytes(buf), writer as u64 + 100, "{backend}");
            }
            rma.barrier().unwrap();
        });
    }
}

#[test]
fn out_of_range_operations_error_on_both_backends() {
    for (backend, handles) in universes(2, 64) {
        run_per_rank(handles, |rma| {
            let mut buf = [0u8; 16];
            let err = rma.get(0, 56, &mut buf).unwrap_err();
            assert!(matches!(err, RmaError::OutOfBounds { .. }), "{backend}: {err}");
            let err = rma.put(1, 64, &[1]).unwrap_err();
            assert!(matches!(err, RmaError::OutOfBounds { .. }), "{backend}: {err}");
            let err = rma.cas64(0, 12, 0, 1).unwrap_err();
            assert!(matches!(err, RmaError::Misaligned { .. }), "{backend}: {err}");
            let err = rma.faa64(5, 0, 1).unwrap_err();
            assert!(matches!(err, RmaError::UnknownRank { .. }), "{backend}: {err}");
            rma.barrier().unwrap();
        });
    }
}

// Remote atomics hitting the same word from every rank stay exact.
#[test]
fn cross_backend_atomics_agree() {
    for (backend, handles) in universes(4, 64) {
        let participants = handles.len();
        run_per_rank(handles, |rma| {
            for _ in 0..500 {
                rma.faa64(0, 8, 3).unwrap();
            }
            rma.barrier().unwrap();
            let word = rma.faa64(0, 8, 0).unwrap();
            assert_eq!(word, 3 * 500 * participants as u64, "{backend}");
            rma.barrier().unwrap();
        });
    }
}

// A table shared by handles of different protocols is nonsense, but a fresh
// create after free on the same universe must work.
#[test]
fn table_can_be_recreated_after_free() {
    let table = cfg(Protocol::Coarse, 1 << 8);
    for (_backend, handles) in universes(2, window_for(&table)) {
        run_per_rank(handles, |rma| {
            for round in 0..3u64 {
                let mut dht = DhtHandle::create(rma.clone(), table).unwrap();
                let tag = round * 1000 + rma.rank() as u64;
                dht.write(&key_bytes(tag, KEY), &value_bytes(tag, VAL)).unwrap();
                assert_eq!(dht.read(&key_bytes(tag, KEY)).unwrap(), Some(value_bytes(tag, VAL)));
                dht.free().unwrap();
            }
        });
    }
}

// Handles are Arc-shared and the trait object is Send + Sync.
#[test]
fn handles_are_shareable() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<RmaHandle>();
    assert_send_sync::<Arc<dyn Rma>>();
}
