//! Shared plumbing for the two command-line front ends: argument enums
//! mapping onto library types, and universe bootstrap for both transports.

use std::error::Error;
use std::net::{SocketAddr, TcpListener};

use clap::ValueEnum;
use dht_core::{
    run_universe, sockets_universe, sockets_universe_prebound, BackendKind, HarnessError,
    Protocol, RmaHandle, SocketsConfig, SocketsRole, UniverseSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Coarse,
    Fine,
    Lockfree,
}

impl From<ProtocolArg> for Protocol {
    fn from(arg: ProtocolArg) -> Protocol {
        match arg {
            ProtocolArg::Coarse => Protocol::Coarse,
            ProtocolArg::Fine => Protocol::Fine,
            ProtocolArg::Lockfree => Protocol::LockFree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Threads,
    Sockets,
}

impl BackendArg {
    pub fn kind(self) -> BackendKind {
        match self {
            BackendArg::Threads => BackendKind::Threads,
            BackendArg::Sockets => BackendKind::Sockets,
        }
    }
}

/// Run `body` once per participant hosted by this process and collect what
/// it returns: every rank of a threads universe, or the single rank this
/// process contributes to a sockets universe. Aggregating runs hand their
/// result to participant 0, so the collected vector is empty elsewhere.
///
/// A listening sockets participant may bind port 0; the actual address is
/// announced on stdout as `listening on ADDR` before peers are awaited.
pub fn run_participants<T, F>(
    backend: BackendArg,
    participants: usize,
    window_size: usize,
    listen: Option<SocketAddr>,
    connect: Option<SocketAddr>,
    body: F,
) -> Result<Vec<T>, Box<dyn Error>>
where
    T: Send,
    F: Fn(RmaHandle) -> Result<Option<T>, HarnessError> + Send + Sync,
{
    match backend {
        BackendArg::Threads => {
            if listen.is_some() || connect.is_some() {
                return Err("--listen and --connect apply to the sockets backend only".into());
            }
            let spec = UniverseSpec::Threads { participants, window_size };
            let nested = run_universe(&spec, body)?;
            Ok(nested.into_iter().flatten().collect())
        }
        BackendArg::Sockets => {
            let handle = match (listen, connect) {
                (Some(addr), None) => {
                    let control = TcpListener::bind(addr)?;
                    println!("listening on {}", control.local_addr()?);
                    sockets_universe_prebound(control, participants, window_size)?
                }
                (None, Some(addr)) => sockets_universe(SocketsConfig {
                    participants,
                    window_size,
                    role: SocketsRole::Connect(addr),
                })?,
                (Some(_), Some(_)) => return Err("--listen conflicts with --connect".into()),
                (None, None) => return Err("sockets backend needs --listen or --connect".into()),
            };
            Ok(body(handle)?.into_iter().collect())
        }
    }
}
