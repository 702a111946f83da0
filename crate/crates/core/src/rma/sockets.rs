//! TCP backend: each participant is its own process (or thread) owning a
//! local window and a mesh of loopback-or-LAN connections to every peer.
//!
//! Topology. One bootstrap listener (rank 0) assigns ranks to connectors in
//! arrival order and broadcasts the table of per-rank service addresses;
//! afterwards every participant dials one connection to every other rank, so
//! each ordered (initiator, target) pair has its own stream and requests on
//! it are handled strictly in order.
//!
//! Service. The window owner runs one reader thread per inbound connection.
//! Gets and puts are applied right in the reader thread (byte ops are safe
//! to interleave); cas/faa/barrier requests are funneled into a single
//! per-owner service loop, which also releases barrier waiters once all
//! participants have arrived. Barriers always target rank 0.

use std::io::{BufReader, Read, Write};
use std::net::{IpAddr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use super::window::SharedWindow;
use super::wire::{
    encode_request_header, error_to_status, read_request_header, status_to_error, OP_BARRIER,
    OP_CAS, OP_FAA, OP_GET, OP_PUT, REQUEST_HEADER_LEN, ST_BAD_REQUEST, ST_OK,
};
use super::{Rma, RmaError, RmaHandle, WINDOW_HEADER_BYTES};

const CONTROL_MAGIC: u32 = 0x5244_4854;
const CONTROL_VERSION: u8 = 1;
const BOOTSTRAP_TIMEOUT: Duration = Duration::from_secs(30);
const CONNECT_RETRY_PAUSE: Duration = Duration::from_millis(25);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocketsRole {
    /// Rank 0: bind the bootstrap address and wait for the other
    /// participants to announce themselves.
    Listen(SocketAddr),
    /// Any other rank: dial the bootstrap address; the assigned rank comes
    /// back in the welcome message.
    Connect(SocketAddr),
}

#[derive(Debug, Clone)]
pub struct SocketsConfig {
    pub participants: usize,
    pub window_size: usize,
    pub role: SocketsRole,
}

/// Join (or form) a sockets universe and return this process's endpoint.
/// Blocks until all `participants` endpoints have met and fully meshed.
pub fn sockets_universe(cfg: SocketsConfig) -> Result<RmaHandle, RmaError> {
    validate_universe(cfg.participants, cfg.window_size)?;
    match cfg.role {
        SocketsRole::Listen(addr) => bootstrap_listener(TcpListener::bind(addr)?, &cfg),
        SocketsRole::Connect(addr) => bootstrap_connector(addr, &cfg),
    }
}

/// Form a universe around a bootstrap listener the caller already bound.
/// Binding port 0 and advertising `listener.local_addr()` avoids the gap
/// where a chosen-then-rebound port could be snatched by another process.
pub fn sockets_universe_prebound(
    control: TcpListener,
    participants: usize,
    window_size: usize,
) -> Result<RmaHandle, RmaError> {
    validate_universe(participants, window_size)?;
    let role = SocketsRole::Listen(control.local_addr()?);
    bootstrap_listener(control, &SocketsConfig { participants, window_size, role })
}

fn validate_universe(participants: usize, window_size: usize) -> Result<(), RmaError> {
    if participants == 0 {
        return Err(RmaError::Config("participant count must be at least 1".into()));
    }
    if window_size < WINDOW_HEADER_BYTES {
        return Err(RmaError::Config(format!(
            "window size {window_size} below the {WINDOW_HEADER_BYTES}-byte header"
        )));
    }
    Ok(())
}

enum ServiceOp {
    Cas { offset: usize, expected: u64, desired: u64 },
    Faa { offset: usize, delta: i64 },
    /// Remote arrivals carry the connection to release; the coordinator's
    /// own arrival has no socket and is released through `reply`.
    Barrier { sink: Option<TcpStream> },
}

struct ServiceRequest {
    op: ServiceOp,
    reply: SyncSender<Result<u64, u8>>,
}

/// A barrier arrival awaiting release: the remote connection to write to,
/// or `None` plus the local reply channel for the owner's own arrival.
type BarrierWaiter = (Option<TcpStream>, SyncSender<Result<u64, u8>>);

struct PeerLink {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

struct SocketsRma {
    rank: usize,
    participants: usize,
    window_size: usize,
    window: Arc<SharedWindow>,
    peers: Vec<Option<Mutex<PeerLink>>>,
    service: Sender<ServiceRequest>,
}

fn bootstrap_listener(control: TcpListener, cfg: &SocketsConfig) -> Result<RmaHandle, RmaError> {
    let window = Arc::new(SharedWindow::new(cfg.window_size));
    let service_tx = start_service(&window, cfg.participants)?;

    let ip = control.local_addr()?.ip();
    let mut peer_addrs = vec![service_listener_addr(&window, cfg, ip, &service_tx)?];
    let mut controls = Vec::with_capacity(cfg.participants - 1);
    for _ in 1..cfg.participants {
        let (mut stream, _) = control.accept()?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(BOOTSTRAP_TIMEOUT))?;
        let (peer_window, peer_service) = read_hello(&mut stream)?;
        if peer_window != cfg.window_size as u64 {
            return Err(RmaError::Config(format!(
                "window size disagreement: local {} vs joining participant {}",
                cfg.window_size, peer_window
            )));
        }
        peer_addrs.push(peer_service);
        controls.push(stream);
    }
    for (i, stream) in controls.iter_mut().enumerate() {
        write_welcome(stream, (i + 1) as u32, cfg.participants as u32, &peer_addrs)?;
    }
    drop(controls);

    finish_endpoint(0, cfg, window, peer_addrs, service_tx)
}

fn bootstrap_connector(addr: SocketAddr, cfg: &SocketsConfig) -> Result<RmaHandle, RmaError> {
    let mut control = connect_with_retry(addr)?;
    control.set_nodelay(true)?;
    control.set_read_timeout(Some(BOOTSTRAP_TIMEOUT))?;

    let window = Arc::new(SharedWindow::new(cfg.window_size));
    let service_tx = start_service(&window, cfg.participants)?;
    let my_service = service_listener_addr(&window, cfg, control.local_addr()?.ip(), &service_tx)?;

    write_hello(&mut control, cfg.window_size as u64, &my_service)?;
    let (rank, participants, peer_addrs) = read_welcome(&mut control)?;
    if participants as usize != cfg.participants {
        return Err(RmaError::Config(format!(
            "participant count disagreement: local {} vs universe {}",
            cfg.participants, participants
        )));
    }
    drop(control);

    finish_endpoint(rank as usize, cfg, window, peer_addrs, service_tx)
}

/// Spawn the per-owner service loop; reader threads and the local endpoint
/// feed it cas/faa/barrier requests.
fn start_service(
    window: &Arc<SharedWindow>,
    participants: usize,
) -> Result<Sender<ServiceRequest>, RmaError> {
    let (tx, rx) = mpsc::channel::<ServiceRequest>();
    let window = window.clone();
    std::thread::Builder::new()
        .name("rma-service".into())
        .spawn(move || service_loop(&window, participants, &rx))?;
    Ok(tx)
}

fn service_loop(window: &SharedWindow, participants: usize, rx: &Receiver<ServiceRequest>) {
    let mut barrier_waiters: Vec<BarrierWaiter> = Vec::new();
    for req in rx.iter() {
        match req.op {
            ServiceOp::Cas { offset, expected, desired } => {
                let result = window.cas(offset, expected, desired);
                let _ = req.reply.send(result.map_err(|e| error_to_status(&e)));
            }
            ServiceOp::Faa { offset, delta } => {
                let result = window.faa(offset, delta);
                let _ = req.reply.send(result.map_err(|e| error_to_status(&e)));
            }
            ServiceOp::Barrier { sink } => {
                barrier_waiters.push((sink, req.reply));
                if barrier_waiters.len() == participants {
                    // Remote releases go out first, written here rather than
                    // by the serve threads: once write_all returns the bytes
                    // are the kernel's, so a coordinator that exits right
                    // after its own barrier returns cannot strand them.
                    let mut release = [0u8; 9];
                    release[0] = ST_OK;
                    release[1..].copy_from_slice(&0u64.to_le_bytes());
                    let (remote, local): (Vec<_>, Vec<_>) =
                        barrier_waiters.drain(..).partition(|(sink, _)| sink.is_some());
                    for (sink, _) in remote {
                        let _ = sink.expect("partitioned on is_some").write_all(&release);
                    }
                    for (_, reply) in local {
                        let _ = reply.send(Ok(0));
                    }
                }
            }
        }
    }
}

/// Bind the per-rank service listener, start its accept thread, and return
/// the advertised address.
fn service_listener_addr(
    window: &Arc<SharedWindow>,
    cfg: &SocketsConfig,
    ip: IpAddr,
    service_tx: &Sender<ServiceRequest>,
) -> Result<String, RmaError> {
    let listener = TcpListener::bind((ip, 0))?;
    let advertised = listener.local_addr()?.to_string();
    let inbound = cfg.participants - 1;
    let window = window.clone();
    let service_tx = service_tx.clone();
    std::thread::Builder::new().name("rma-accept".into()).spawn(move || {
        for _ in 0..inbound {
            let Ok((stream, _)) = listener.accept() else { return };
            let window = window.clone();
            let service_tx = service_tx.clone();
            let _ = std::thread::Builder::new()
                .name("rma-serve".into())
                .spawn(move || serve_connection(stream, &window, &service_tx));
        }
    })?;
    Ok(advertised)
}

fn finish_endpoint(
    rank: usize,
    cfg: &SocketsConfig,
    window: Arc<SharedWindow>,
    peer_addrs: Vec<String>,
    service: Sender<ServiceRequest>,
) -> Result<RmaHandle, RmaError> {
    let mut peers = Vec::with_capacity(peer_addrs.len());
    for (j, addr) in peer_addrs.iter().enumerate() {
        if j == rank {
            peers.push(None);
            continue;
        }
        let target: SocketAddr = addr
            .parse()
            .map_err(|e| RmaError::Protocol(format!("bad service address {addr:?}: {e}")))?;
        let stream = connect_with_retry(target)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        peers.push(Some(Mutex::new(PeerLink { reader, writer: stream })));
    }
    Ok(Arc::new(SocketsRma {
        rank,
        participants: cfg.participants,
        window_size: cfg.window_size,
        window,
        peers,
        service,
    }))
}

fn connect_with_retry(addr: SocketAddr) -> Result<TcpStream, RmaError> {
    let deadline = Instant::now() + BOOTSTRAP_TIMEOUT;
    loop {
        match TcpStream::connect(addr) {
            Ok(stream) => return Ok(stream),
            Err(e) if Instant::now() < deadline => {
                let _ = e; // listener may not be up yet
                std::thread::sleep(CONNECT_RETRY_PAUSE);
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Handle one inbound connection until EOF. Gets/puts run here; atomics and
/// barriers go through the service loop.
fn serve_connection(stream: TcpStream, window: &SharedWindow, service: &Sender<ServiceRequest>) {
    let _ = stream.set_nodelay(true);
    let Ok(clone) = stream.try_clone() else { return };
    let mut reader = BufReader::new(clone);
    let mut writer = stream;
    loop {
        let Ok(hdr) = read_request_header(&mut reader) else {
            let _ = writer.shutdown(Shutdown::Both);
            return;
        };
        let len = hdr.len as usize;
        let offset = hdr.offset as usize;
        let ok = match hdr.opcode {
            OP_GET => {
                if len > window.len() {
                    respond(&mut writer, error_to_status(&RmaError::OutOfBounds {
                        offset,
                        len,
                        window_size: window.len(),
                    }), &[])
                } else {
                    let mut data = vec![0u8; len];
                    match window.read_into(offset, &mut data) {
                        Ok(()) => respond(&mut writer, ST_OK, &data),
                        Err(e) => respond(&mut writer, error_to_status(&e), &[]),
                    }
                }
            }
            OP_PUT => {
                if len > window.len() {
                    // Drain the oversized payload to keep the stream framed.
                    if std::io::copy(&mut (&mut reader).take(len as u64), &mut std::io::sink())
                        .is_err()
                    {
                        return;
                    }
                    respond(&mut writer, error_to_status(&RmaError::OutOfBounds {
                        offset,
                        len,
                        window_size: window.len(),
                    }), &[])
                } else {
                    let mut data = vec![0u8; len];
                    if reader.read_exact(&mut data).is_err() {
                        return;
                    }
                    match window.write_from(offset, &data) {
                        Ok(()) => respond(&mut writer, ST_OK, &[]),
                        Err(e) => respond(&mut writer, error_to_status(&e), &[]),
                    }
                }
            }
            OP_CAS => {
                let mut payload = [0u8; 16];
                if len != 16 || reader.read_exact(&mut payload).is_err() {
                    respond(&mut writer, ST_BAD_REQUEST, &[])
                } else {
                    let expected = u64::from_le_bytes(payload[..8].try_into().unwrap());
                    let desired = u64::from_le_bytes(payload[8..].try_into().unwrap());
                    let op = ServiceOp::Cas { offset, expected, desired };
                    respond_service(&mut writer, service, op)
                }
            }
            OP_FAA => {
                let mut payload = [0u8; 8];
                if len != 8 || reader.read_exact(&mut payload).is_err() {
                    respond(&mut writer, ST_BAD_REQUEST, &[])
                } else {
                    let delta = i64::from_le_bytes(payload);
                    respond_service(&mut writer, service, ServiceOp::Faa { offset, delta })
                }
            }
            OP_BARRIER => match writer.try_clone() {
                // The service loop itself writes the release on the Nth
                // arrival; this thread just resumes reading (the initiator
                // sends nothing more until released anyway).
                Ok(sink) => {
                    let (reply, _) = mpsc::sync_channel(1);
                    service
                        .send(ServiceRequest { op: ServiceOp::Barrier { sink: Some(sink) }, reply })
                        .is_ok()
                }
                Err(_) => false,
            },
            _ => respond(&mut writer, ST_BAD_REQUEST, &[]),
        };
        if !ok {
            return;
        }
    }
}

/// Route an op through the service loop and relay its reply. Barrier replies
/// arrive only once all participants checked in, stalling just this
/// connection (its initiator is blocked inside `barrier` anyway).
fn respond_service(
    writer: &mut TcpStream,
    service: &Sender<ServiceRequest>,
    op: ServiceOp,
) -> bool {
    let (reply_tx, reply_rx) = mpsc::sync_channel(1);
    if service.send(ServiceRequest { op, reply: reply_tx }).is_err() {
        return false;
    }
    match reply_rx.recv() {
        Ok(Ok(prior)) => respond(writer, ST_OK, &prior.to_le_bytes()),
        Ok(Err(status)) => respond(writer, status, &[]),
        Err(_) => false,
    }
}

fn respond(writer: &mut TcpStream, status: u8, payload: &[u8]) -> bool {
    let mut frame = Vec::with_capacity(1 + payload.len());
    frame.push(status);
    frame.extend_from_slice(payload);
    writer.write_all(&frame).is_ok()
}

impl SocketsRma {
    fn peer(&self, rank: usize) -> Result<MutexGuard<'_, PeerLink>, RmaError> {
        match self.peers.get(rank) {
            Some(Some(link)) => Ok(link.lock().unwrap_or_else(|e| e.into_inner())),
            _ => Err(RmaError::UnknownRank { rank, participants: self.participants }),
        }
    }

    /// One request/response exchange. `response` is filled only on status 0;
    /// barrier responses for rank 0's own arrival use the service channel
    /// instead (there is no self connection).
    fn exchange(
        &self,
        rank: usize,
        frame: &[u8],
        offset: usize,
        len: usize,
        response: &mut [u8],
    ) -> Result<(), RmaError> {
        let mut link = self.peer(rank)?;
        link.writer.write_all(frame)?;
        let mut status = [0u8; 1];
        link.reader.read_exact(&mut status)?;
        if status[0] != ST_OK {
            return Err(status_to_error(status[0], offset, len, self.window_size));
        }
        link.reader.read_exact(response)?;
        Ok(())
    }

    fn service_call(&self, op: ServiceOp, offset: usize) -> Result<u64, RmaError> {
        let (reply_tx, reply_rx) = mpsc::sync_channel(1);
        self.service
            .send(ServiceRequest { op, reply: reply_tx })
            .map_err(|_| RmaError::Protocol("service loop terminated".into()))?;
        match reply_rx.recv() {
            Ok(Ok(prior)) => Ok(prior),
            Ok(Err(status)) => Err(status_to_error(status, offset, 8, self.window_size)),
            Err(_) => Err(RmaError::Protocol("service loop terminated".into())),
        }
    }

    fn check_rank(&self, rank: usize) -> Result<(), RmaError> {
        if rank >= self.participants {
            return Err(RmaError::UnknownRank { rank, participants: self.participants });
        }
        Ok(())
    }
}

impl Rma for SocketsRma {
    fn rank(&self) -> usize {
        self.rank
    }

    fn participants(&self) -> usize {
        self.participants
    }

    fn window_size(&self) -> usize {
        self.window_size
    }

    fn get(&self, rank: usize, offset: usize, buf: &mut [u8]) -> Result<(), RmaError> {
        self.check_rank(rank)?;
        if rank == self.rank {
            return self.window.read_into(offset, buf);
        }
        let frame = encode_request_header(OP_GET, offset as u64, buf.len() as u32);
        self.exchange(rank, &frame, offset, buf.len(), buf)
    }

    fn put(&self, rank: usize, offset: usize, data: &[u8]) -> Result<(), RmaError> {
        self.check_rank(rank)?;
        if rank == self.rank {
            return self.window.write_from(offset, data);
        }
        let mut frame = Vec::with_capacity(REQUEST_HEADER_LEN + data.len());
        frame.extend_from_slice(&encode_request_header(OP_PUT, offset as u64, data.len() as u32));
        frame.extend_from_slice(data);
        self.exchange(rank, &frame, offset, data.len(), &mut [])
    }

    fn cas64(
        &self,
        rank: usize,
        offset: usize,
        expected: u64,
        desired: u64,
    ) -> Result<u64, RmaError> {
        self.check_rank(rank)?;
        if rank == self.rank {
            return self.service_call(ServiceOp::Cas { offset, expected, desired }, offset);
        }
        let mut frame = Vec::with_capacity(REQUEST_HEADER_LEN + 16);
        frame.extend_from_slice(&encode_request_header(OP_CAS, offset as u64, 16));
        frame.extend_from_slice(&expected.to_le_bytes());
        frame.extend_from_slice(&desired.to_le_bytes());
        let mut prior = [0u8; 8];
        self.exchange(rank, &frame, offset, 16, &mut prior)?;
        Ok(u64::from_le_bytes(prior))
    }

    fn faa64(&self, rank: usize, offset: usize, delta: i64) -> Result<u64, RmaError> {
        self.check_rank(rank)?;
        if rank == self.rank {
            return self.service_call(ServiceOp::Faa { offset, delta }, offset);
        }
        let mut frame = Vec::with_capacity(REQUEST_HEADER_LEN + 8);
        frame.extend_from_slice(&encode_request_header(OP_FAA, offset as u64, 8));
        frame.extend_from_slice(&delta.to_le_bytes());
        let mut prior = [0u8; 8];
        self.exchange(rank, &frame, offset, 8, &mut prior)?;
        Ok(u64::from_le_bytes(prior))
    }

    fn barrier(&self) -> Result<(), RmaError> {
        // Rank 0 coordinates; everyone else reports to it. Like every
        // service op, the release response carries a u64 payload.
        if self.rank == 0 {
            self.service_call(ServiceOp::Barrier { sink: None }, 0)?;
            return Ok(());
        }
        let frame = encode_request_header(OP_BARRIER, 0, 0);
        let mut release = [0u8; 8];
        self.exchange(0, &frame, 0, 0, &mut release)
    }
}

impl Drop for SocketsRma {
    fn drop(&mut self) {
        // Closing the outbound streams lets peer reader threads exit on EOF.
        for link in self.peers.iter().flatten() {
            let link = link.lock().unwrap_or_else(|e| e.into_inner());
            let _ = link.writer.shutdown(Shutdown::Both);
        }
    }
}

// Bootstrap control frames (little-endian):
//   hello:   magic u32 | version u8 | window_size u64 | addr_len u16 | addr
//   welcome: magic u32 | version u8 | rank u32 | participants u32
//            | participants x (addr_len u16 | addr)

fn write_hello(stream: &mut TcpStream, window_size: u64, addr: &str) -> Result<(), RmaError> {
    let mut frame = Vec::with_capacity(15 + addr.len());
    frame.extend_from_slice(&CONTROL_MAGIC.to_le_bytes());
    frame.push(CONTROL_VERSION);
    frame.extend_from_slice(&window_size.to_le_bytes());
    write_string(&mut frame, addr)?;
    stream.write_all(&frame)?;
    Ok(())
}

fn read_hello(stream: &mut TcpStream) -> Result<(u64, String), RmaError> {
    check_preamble(stream)?;
    let mut window = [0u8; 8];
    stream.read_exact(&mut window)?;
    let addr = read_string(stream)?;
    Ok((u64::from_le_bytes(window), addr))
}

fn write_welcome(
    stream: &mut TcpStream,
    rank: u32,
    participants: u32,
    addrs: &[String],
) -> Result<(), RmaError> {
    let mut frame = Vec::new();
    frame.extend_from_slice(&CONTROL_MAGIC.to_le_bytes());
    frame.push(CONTROL_VERSION);
    frame.extend_from_slice(&rank.to_le_bytes());
    frame.extend_from_slice(&participants.to_le_bytes());
    for addr in addrs {
        write_string(&mut frame, addr)?;
    }
    stream.write_all(&frame)?;
    Ok(())
}

fn read_welcome(stream: &mut TcpStream) -> Result<(u32, u32, Vec<String>), RmaError> {
    check_preamble(stream)?;
    let mut word = [0u8; 4];
    stream.read_exact(&mut word)?;
    let rank = u32::from_le_bytes(word);
    stream.read_exact(&mut word)?;
    let participants = u32::from_le_bytes(word);
    let mut addrs = Vec::with_capacity(participants as usize);
    for _ in 0..participants {
        addrs.push(read_string(stream)?);
    }
    Ok((rank, participants, addrs))
}

fn check_preamble(stream: &mut TcpStream) -> Result<(), RmaError> {
    let mut preamble = [0u8; 5];
    stream.read_exact(&mut preamble)?;
    if preamble[..4] != CONTROL_MAGIC.to_le_bytes() {
        return Err(RmaError::Protocol("bad bootstrap magic".into()));
    }
    if preamble[4] != CONTROL_VERSION {
        return Err(RmaError::Protocol(format!("bootstrap version {} unsupported", preamble[4])));
    }
    Ok(())
}

fn write_string(frame: &mut Vec<u8>, s: &str) -> Result<(), RmaError> {
    let len: u16 = s
        .len()
        .try_into()
        .map_err(|_| RmaError::Protocol(format!("address too long: {} bytes", s.len())))?;
    frame.extend_from_slice(&len.to_le_bytes());
    frame.extend_from_slice(s.as_bytes());
    Ok(())
}

fn read_string(stream: &mut TcpStream) -> Result<String, RmaError> {
    let mut len = [0u8; 2];
    stream.read_exact(&mut len)?;
    let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
    stream.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| RmaError::Protocol(format!("address not utf-8: {e}")))
}
