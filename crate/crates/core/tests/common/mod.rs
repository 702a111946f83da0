//! Helpers shared by the integration suites.
#![allow(dead_code)]

use std::net::TcpListener;

use dht_core::rma::{sockets_universe, sockets_universe_prebound, SocketsConfig, SocketsRole};
use dht_core::RmaHandle;

/// Builds a fully meshed sockets universe whose participants all live in
/// this process, returned rank-ordered like `threads_universe`.
pub fn sockets_mesh(participants: usize, window_size: usize) -> Vec<RmaHandle> {
    let control = TcpListener::bind("127.0.0.1:0").expect("loopback bind");
    let addr = control.local_addr().unwrap();

    std::thread::scope(|scope| {
        let mut joins = vec![scope.spawn(move || {
            sockets_universe_prebound(control, participants, window_size).expect("universe forms")
        })];
        for _ in 1..participants {
            joins.push(scope.spawn(move || {
                let role = SocketsRole::Connect(addr);
                sockets_universe(SocketsConfig { participants, window_size, role })
                    .expect("universe forms")
            }));
        }
        let mut handles: Vec<Option<RmaHandle>> = (0..participants).map(|_| None).collect();
        for j in joins {
            let h = j.join().expect("bootstrap thread");
            let rank = h.rank();
            assert!(handles[rank].is_none(), "duplicate rank {rank}");
            handles[rank] = Some(h);
        }
        handles.into_iter().map(|h| h.unwrap()).collect()
    })
}

/// One closure per participant, rank-ordered results.
pub fn run_per_rank<T: Send>(
    handles: Vec<RmaHandle>,
    body: impl Fn(RmaHandle) -> T + Sync,
) -> Vec<T> {
    std::thread::scope(|scope| {
        let joins: Vec<_> = handles.into_iter().map(|h| scope.spawn(|| body(h))).collect();
        joins.into_iter().map(|j| j.join().expect("participant thread")).collect()
    })
}
