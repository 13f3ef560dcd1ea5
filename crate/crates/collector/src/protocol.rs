//! Length-prefixed binary query protocol.
//!
//! Every message is a frame: a big-endian `u32` body length followed by the
//! body. All integers are big-endian. The field-by-field layout is in
//! `docs/query-protocol.md`.

use std::io::{self, Read, Write};

use dart_core::store::{CollectorId, ResolutionPolicy};
use dart_core::wire::Reject;
use thiserror::Error;

pub const OP_QUERY: u8 = 0x01;
pub const OP_STATS: u8 = 0x02;
pub const OP_SNAPSHOT: u8 = 0x03;

pub const RESP_QUERY: u8 = 0x81;
pub const RESP_STATS: u8 = 0x82;
pub const RESP_SNAPSHOT: u8 = 0x83;
pub const RESP_ERROR: u8 = 0xff;

/// Largest request body a server will read.
pub const MAX_REQUEST_LEN: u32 = 64 * 1024;
/// Largest response body a client will read.
pub const MAX_RESPONSE_LEN: u32 = 1024 * 1024;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("unknown policy code {0}")]
    UnknownPolicy(u8),
    #[error("{0} trailing bytes after message")]
    Trailing(usize),
    #[error("frame of {0} bytes exceeds limit")]
    TooLarge(u32),
    #[error("invalid UTF-8 in string field")]
    Utf8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    MalformedRequest = 1,
    InvalidKey = 2,
    InvalidPolicy = 3,
    SnapshotFailed = 4,
    RequestTooLarge = 5,
}

impl ErrorCode {
    pub fn from_u8(v: u8) -> Option<Self> {
        use ErrorCode::*;
        [
            MalformedRequest,
            InvalidKey,
            InvalidPolicy,
            SnapshotFailed,
            RequestTooLarge,
        ]
        .into_iter()
        .find(|c| *c as u8 == v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    /// `policy: None` uses the collector's configured policy.
    Query {
        key: Vec<u8>,
        policy: Option<ResolutionPolicy>,
    },
    Stats,
    /// Empty path means the server's configured snapshot path.
    Snapshot {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResponse {
    pub collector: CollectorId,
    pub value: Option<Vec<u8>>,
    pub matched_slots: u32,
    pub distinct_values: u32,
    /// Slot indices probed, in copy order.
    pub addresses: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsResponse {
    pub collector: CollectorId,
    pub accepted: u64,
    /// Indexed by [`Reject::code`].
    pub rejected: [u64; Reject::ALL.len()],
    pub queries: u64,
}

impl StatsResponse {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.iter().sum()
    }

    pub fn received(&self) -> u64 {
        self.accepted + self.rejected_total()
    }

    pub fn rejected_for(&self, reason: Reject) -> u64 {
        self.rejected[usize::from(reason.code())]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Query(QueryResponse),
    Stats(StatsResponse),
    Snapshot {
        collector: CollectorId,
        bytes: u64,
    },
    Error {
        collector: CollectorId,
        code: u8,
        message: String,
    },
}

impl Response {
    pub fn collector(&self) -> CollectorId {
        match self {
            Response::Query(q) => q.collector,
            Response::Stats(s) => s.collector,
            Response::Snapshot { collector, .. } | Response::Error { collector, .. } => *collector,
        }
    }
}

fn policy_code(p: Option<ResolutionPolicy>) -> (u8, u32) {
    match p {
        None => (0, 0),
        Some(ResolutionPolicy::SingleMatch) => (1, 0),
        Some(ResolutionPolicy::PluralityVote) => (2, 0),
        Some(ResolutionPolicy::Consensus(k)) => (3, k),
    }
}

fn policy_from_code(code: u8, k: u32) -> Result<Option<ResolutionPolicy>, ProtocolError> {
    Ok(match code {
        0 => None,
        1 => Some(ResolutionPolicy::SingleMatch),
        2 => Some(ResolutionPolicy::PluralityVote),
        3 => Some(ResolutionPolicy::Consensus(k)),
        other => return Err(ProtocolError::UnknownPolicy(other)),
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() < n {
            return Err(ProtocolError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes16(&mut self) -> Result<&'a [u8], ProtocolError> {
        let n = self.u16()? as usize;
        self.take(n)
    }

    fn string16(&mut self) -> Result<String, ProtocolError> {
        String::from_utf8(self.bytes16()?.to_vec()).map_err(|_| ProtocolError::Utf8)
    }

    fn finish(self) -> Result<(), ProtocolError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(ProtocolError::Trailing(n)),
        }
    }
}

fn put_bytes16(out: &mut Vec<u8>, b: &[u8]) {
    let n = b.len().min(usize::from(u16::MAX));
    out.extend_from_slice(&(n as u16).to_be_bytes());
    out.extend_from_slice(&b[..n]);
}

impl Request {
    pub fn encode(&self, out: &mut Vec<u8>) {
        match self {
            Request::Query { key, policy } => {
                let (code, k) = policy_code(*policy);
                out.push(OP_QUERY);
                out.push(code);
                out.extend_from_slice(&k.to_be_bytes());
                put_bytes16(out, key);
            }
            Request::Stats => out.push(OP_STATS),
            Request::Snapshot { path } => {
                out.push(OP_SNAPSHOT);
                put_bytes16(out, path.as_bytes());
            }
        }
    }

    pub fn decode(body: &[u8]) -> Result<Self, ProtocolError> {
        let mut c = Cursor { buf: body };
        let req = match c.u8()? {
            OP_QUERY => {
                let code = c.u8()?;
                let k = c.u32()?;
                let policy = policy_from_code(code, k)?;
                let key = c.bytes16()?.to_vec();
                Request::Query { key, policy }
            }
            OP_STATS => Request::Stats,
            OP_SNAPSHOT => Request::Snapshot {
                path: c.string16()?,
            },
            other => return Err(ProtocolError::UnknownType(other)),
        };
        c.finish()?;
        Ok(req)
    }
}

impl Response {
    pub fn encode(&self, out: &mut Vec<u8>) {
        match self {
            Response::Query(q) => {
                out.push(RESP_QUERY);
                out.extend_from_slice(&q.collector.0.to_be_bytes());
                match &q.value {
                    Some(v) => {
                        out.push(1);
                        put_bytes16(out, v);
                    }
                    None => {
                        out.push(0);
                        put_bytes16(out, &[]);
                    }
                }
                out.extend_from_slice(&q.matched_slots.to_be_bytes());
                out.extend_from_slice(&q.distinct_values.to_be_bytes());
                out.extend_from_slice(&(q.addresses.len() as u16).to_be_bytes());
                for a in &q.addresses {
                    out.extend_from_slice(&a.to_be_bytes());
                }
            }
            Response::Stats(s) => {
                out.push(RESP_STATS);
                out.extend_from_slice(&s.collector.0.to_be_bytes());
                out.extend_from_slice(&s.accepted.to_be_bytes());
                out.push(s.rejected.len() as u8);
                for r in &s.rejected {
                    out.extend_from_slice(&r.to_be_bytes());
                }
                out.extend_from_slice(&s.queries.to_be_bytes());
            }
            Response::Snapshot { collector, bytes } => {
                out.push(RESP_SNAPSHOT);
                out.extend_from_slice(&collector.0.to_be_bytes());
                out.extend_from_slice(&bytes.to_be_bytes());
            }
            Response::Error {
                collector,
                code,
                message,
            } => {
                out.push(RESP_ERROR);
                out.extend_from_slice(&collector.0.to_be_bytes());
                out.push(*code);
                put_bytes16(out, message.as_bytes());
            }
        }
    }

    pub fn decode(body: &[u8]) -> Result<Self, ProtocolError> {
        let mut c = Cursor { buf: body };
        let kind = c.u8()?;
        let collector = CollectorId(c.u32()?);
        let resp = match kind {
            RESP_QUERY => {
                let has_value = c.u8()? != 0;
                let value = c.bytes16()?;
                let matched_slots = c.u32()?;
                let distinct_values = c.u32()?;
                let n = c.u16()?;
                let addresses = (0..n).map(|_| c.u64()).collect::<Result<_, _>>()?;
                Response::Query(QueryResponse {
                    collector,
                    value: has_value.then(|| value.to_vec()),
                    matched_slots,
                    distinct_values,
                    addresses,
                })
            }
            RESP_STATS => {
                let accepted = c.u64()?;
                let n = c.u8()? as usize;
                let mut rejected = [0u64; Reject::ALL.len()];
                for i in 0..n {
                    let v = c.u64()?;
                    // counters for reasons this build does not know are dropped
                    if let Some(slot) = rejected.get_mut(i) {
                        *slot = v;
                    }
                }
                let queries = c.u64()?;
                Response::Stats(StatsResponse {
                    collector,
                    accepted,
                    rejected,
                    queries,
                })
            }
            RESP_SNAPSHOT => Response::Snapshot {
                collector,
                bytes: c.u64()?,
            },
            RESP_ERROR => Response::Error {
                collector,
                code: c.u8()?,
                message: c.string16()?,
            },
            other => return Err(ProtocolError::UnknownType(other)),
        };
        c.finish()?;
        Ok(resp)
    }
}

pub fn write_frame<W: Write>(out: &mut W, body: &[u8]) -> io::Result<()> {
    out.write_all(&(body.len() as u32).to_be_bytes())?;
    out.write_all(body)
}

/// Outcome of reading one frame.
#[derive(Debug)]
pub enum Frame {
    Body(Vec<u8>),
    /// The body exceeded the limit and was skipped; the stream stays in sync.
    Oversize(u32),
    /// Clean end of stream before a length prefix.
    Eof,
}

pub fn read_frame<R: Read>(input: &mut R, max_len: u32) -> io::Result<Frame> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(Frame::Eof),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len);
    if len > max_len {
        let skipped = io::copy(&mut input.take(u64::from(len)), &mut io::sink())?;
        if skipped < u64::from(len) {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        return Ok(Frame::Oversize(len));
    }
    let mut body = vec![0u8; len as usize];
    input.read_exact(&mut body)?;
    Ok(Frame::Body(body))
}
