//! Wire format of the sockets backend. All integers little-endian.
//!
//! ```text
//! request:  | opcode u8 | offset u64 | len u32 | payload (len bytes) |
//! response: | status u8 | payload |
//! ```
//!
//! * GET (1): len = bytes wanted, no request payload; response payload = the
//!   bytes (only on status 0).
//! * PUT (2): request payload = data; empty response payload.
//! * CAS (3): request payload = expected u64 | desired u64 (len 16);
//!   response payload = prior u64.
//! * FAA (4): request payload = delta i64 (len 8); response payload = prior.
//! * BARRIER (5): offset 0, len 0; empty response payload, sent once the
//!   coordinator has seen every participant arrive.
//!
//! Non-zero statuses carry no payload.

use std::io::{self, Read};

use super::RmaError;

pub(crate) const OP_GET: u8 = 1;
pub(crate) const OP_PUT: u8 = 2;
pub(crate) const OP_CAS: u8 = 3;
pub(crate) const OP_FAA: u8 = 4;
pub(crate) const OP_BARRIER: u8 = 5;

pub(crate) const ST_OK: u8 = 0;
pub(crate) const ST_OUT_OF_BOUNDS: u8 = 1;
pub(crate) const ST_MISALIGNED: u8 = 2;
pub(crate) const ST_BAD_REQUEST: u8 = 3;

pub(crate) const REQUEST_HEADER_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RequestHeader {
    pub opcode: u8,
    pub offset: u64,
    pub len: u32,
}

pub(crate) fn encode_request_header(
    opcode: u8,
    offset: u64,
    len: u32,
) -> [u8; REQUEST_HEADER_LEN] {
    let mut buf = [0u8; REQUEST_HEADER_LEN];
    buf[0] = opcode;
    buf[1..9].copy_from_slice(&offset.to_le_bytes());
    buf[9..13].copy_from_slice(&len.to_le_bytes());
    buf
}

pub(crate) fn decode_request_header(buf: &[u8; REQUEST_HEADER_LEN]) -> RequestHeader {
    RequestHeader {
        opcode: buf[0],
        offset: u64::from_le_bytes(buf[1..9].try_into().unwrap()),
        len: u32::from_le_bytes(buf[9..13].try_into().unwrap()),
    }
}

pub(crate) fn read_request_header(r: &mut impl Read) -> io::Result<RequestHeader> {
    let mut buf = [0u8; REQUEST_HEADER_LEN];
    r.read_exact(&mut buf)?;
    Ok(decode_request_header(&buf))
}

/// Map a non-zero response status back to the initiator-side error. The
/// request parameters are echoed into the error since error responses carry
/// no payload.
pub(crate) fn status_to_error(
    status: u8,
    offset: usize,
    len: usize,
    window_size: usize,
) -> RmaError {
    match status {
        ST_OUT_OF_BOUNDS => RmaError::OutOfBounds { offset, len, window_size },
        ST_MISALIGNED => RmaError::Misaligned { offset },
        ST_BAD_REQUEST => RmaError::Protocol("target rejected the request frame".into()),
        other => RmaError::Protocol(format!("unknown response status {other}")),
    }
}

pub(crate) fn error_to_status(err: &RmaError) -> u8 {
    match err {
        RmaError::OutOfBounds { .. } => ST_OUT_OF_BOUNDS,
        RmaError::Misaligned { .. } => ST_MISALIGNED,
        _ => ST_BAD_REQUEST,
    }
}
