//! Binary framing shared by servers, gateway and admin tools.
//!
//! ```text
//! "OFW1" | version u8 | kind u8 | session u64 | party u16 | len u32 | payload | crc32
//! ```
//! Integers big-endian; the CRC covers everything before it. The gateway
//! and clients use party id 0.

use std::io::Read;
use std::net::Ipv4Addr;

use crate::detection::Decision;
use crate::error::{Error, Result};
use crate::sharing::PartyId;

pub const MAGIC: &[u8; 4] = b"OFW1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;
/// Largest payload accepted from the wire.
pub const MAX_PAYLOAD: u32 = 64 << 20;

/// QUERY flag bits.
pub const FLAG_PRODUCT: u8 = 1;
pub const FLAG_COLLECTIVE: u8 = 2;
pub const FLAG_FANIN: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Kind {
    ConfigSync = 0,
    Query = 1,
    ShareResp = 2,
    Insert = 3,
    InsertAck = 4,
    ResultBcast = 5,
    Vote = 6,
    Error = 7,
}

impl Kind {
    fn from_u8(b: u8) -> Result<Self> {
        Ok(match b {
            0 => Kind::ConfigSync,
            1 => Kind::Query,
            2 => Kind::ShareResp,
            3 => Kind::Insert,
            4 => Kind::InsertAck,
            5 => Kind::ResultBcast,
            6 => Kind::Vote,
            7 => Kind::Error,
            other => return Err(Error::Frame(format!("unknown message kind {other}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum InsertPhase {
    Prepare = 0,
    Commit = 1,
    Abort = 2,
}

pub mod ack {
    pub const OK: u8 = 0;
    pub const DENIED: u8 = 1;
    pub const FAILED: u8 = 2;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    ConfigSync {
        digest: [u8; 32],
    },
    Query {
        addr: Ipv4Addr,
        /// Absent on plain sum queries, which keeps those at four bytes.
        flags: Option<u8>,
    },
    ShareResp {
        values: Vec<u64>,
    },
    Insert {
        phase: InsertPhase,
        token: Vec<u8>,
        addr: Ipv4Addr,
    },
    InsertAck {
        status: u8,
    },
    ResultBcast {
        entries: Vec<(PartyId, u64)>,
    },
    Vote {
        decision: Decision,
        value: Option<u64>,
        m_prime: u16,
        malicious: bool,
        suspects: Vec<PartyId>,
    },
    Error {
        code: u8,
        text: String,
    },
}

impl Payload {
    pub fn kind(&self) -> Kind {
        match self {
            Payload::ConfigSync { .. } => Kind::ConfigSync,
            Payload::Query { .. } => Kind::Query,
            Payload::ShareResp { .. } => Kind::ShareResp,
            Payload::Insert { .. } => Kind::Insert,
            Payload::InsertAck { .. } => Kind::InsertAck,
            Payload::ResultBcast { .. } => Kind::ResultBcast,
            Payload::Vote { .. } => Kind::Vote,
            Payload::Error { .. } => Kind::Error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub session: u64,
    pub party: PartyId,
    pub payload: Payload,
}

/// Hook for link encryption; applied to payload bytes only so headers stay
/// readable for framing.
pub trait FrameCipher: Send + Sync {
    fn seal(&self, payload: Vec<u8>) -> Vec<u8>;
    fn open(&self, payload: Vec<u8>) -> Result<Vec<u8>>;
}

/// No encryption; deployments put their own secured transport underneath.
pub struct Plaintext;

impl FrameCipher for Plaintext {
    fn seal(&self, payload: Vec<u8>) -> Vec<u8> {
        payload
    }
    fn open(&self, payload: Vec<u8>) -> Result<Vec<u8>> {
        Ok(payload)
    }
}

fn count_u16(n: usize, what: &str) -> Result<[u8; 2]> {
    u16::try_from(n)
        .map(u16::to_be_bytes)
        .map_err(|_| Error::Frame(format!("too many {what} for one frame: {n}")))
}

fn encode_payload(p: &Payload) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match p {
        Payload::ConfigSync { digest } => out.extend_from_slice(digest),
        Payload::Query { addr, flags } => {
            out.extend_from_slice(&addr.octets());
            if let Some(f) = flags {
                out.push(*f);
            }
        }
        Payload::ShareResp { values } => {
            out.extend_from_slice(&count_u16(values.len(), "shares")?);
            for v in values {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        Payload::Insert { phase, token, addr } => {
            out.push(*phase as u8);
            out.extend_from_slice(&count_u16(token.len(), "token bytes")?);
            out.extend_from_slice(token);
            out.extend_from_slice(&addr.octets());
        }
        Payload::InsertAck { status } => out.push(*status),
        Payload::ResultBcast { entries } => {
            out.extend_from_slice(&count_u16(entries.len(), "entries")?);
            for (p, v) in entries {
                out.extend_from_slice(&p.to_be_bytes());
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        Payload::Vote {
            decision,
            value,
            m_prime,
            malicious,
            suspects,
        } => {
            out.push(match decision {
                Decision::Forward => 0,
                Decision::Block => 1,
            });
            out.push(value.is_some() as u8);
            out.extend_from_slice(&value.unwrap_or(0).to_be_bytes());
            out.extend_from_slice(&m_prime.to_be_bytes());
            out.push(*malicious as u8);
            out.extend_from_slice(&count_u16(suspects.len(), "suspects")?);
            for s in suspects {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        Payload::Error { code, text } => {
            out.push(*code);
            out.extend_from_slice(text.as_bytes());
        }
    }
    Ok(out)
}

pub fn encode(msg: &WireMessage) -> Result<Vec<u8>> {
    encode_with(msg, &Plaintext)
}

pub fn encode_with(msg: &WireMessage, cipher: &dyn FrameCipher) -> Result<Vec<u8>> {
    let payload = cipher.seal(encode_payload(&msg.payload)?);
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l <= MAX_PAYLOAD)
        .ok_or_else(|| Error::Frame("payload too large".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(msg.payload.kind() as u8);
    out.extend_from_slice(&msg.session.to_be_bytes());
    out.extend_from_slice(&msg.party.to_be_bytes());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.b.len() - self.at < n {
            return Err(Error::Frame("payload shorter than its contents".into()));
        }
        let s = &self.b[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn addr(&mut self) -> Result<Ipv4Addr> {
        let o: [u8; 4] = self.take(4)?.try_into().unwrap();
        Ok(Ipv4Addr::from(o))
    }
    fn rest(&mut self) -> &'a [u8] {
        let s = &self.b[self.at..];
        self.at = self.b.len();
        s
    }
    fn done(&self) -> Result<()> {
        if self.at != self.b.len() {
            return Err(Error::Frame(format!("{} trailing payload bytes", self.b.len() - self.at)));
        }
        Ok(())
    }
}

fn decode_payload(kind: Kind, b: &[u8]) -> Result<Payload> {
    let mut c = Cursor { b, at: 0 };
    let p = match kind {
        Kind::ConfigSync => Payload::ConfigSync {
            digest: c.take(32)?.try_into().unwrap(),
        },
        Kind::Query => {
            let addr = c.addr()?;
            let flags = match c.rest() {
                [] => None,
                [f] => Some(*f),
                _ => return Err(Error::Frame("query payload too long".into())),
            };
            Payload::Query { addr, flags }
        }
        Kind::ShareResp => {
            let n = c.u16()? as usize;
            Payload::ShareResp {
                values: (0..n).map(|_| c.u64()).collect::<Result<_>>()?,
            }
        }
        Kind::Insert => {
            let phase = match c.u8()? {
                0 => InsertPhase::Prepare,
                1 => InsertPhase::Commit,
                2 => InsertPhase::Abort,
                other => return Err(Error::Frame(format!("unknown insert phase {other}"))),
            };
            let tl = c.u16()? as usize;
            let token = c.take(tl)?.to_vec();
            Payload::Insert {
                phase,
                token,
                addr: c.addr()?,
            }
        }
        Kind::InsertAck => Payload::InsertAck { status: c.u8()? },
        Kind::ResultBcast => {
            let n = c.u16()? as usize;
            Payload::ResultBcast {
                entries: (0..n).map(|_| Ok((c.u16()?, c.u64()?))).collect::<Result<_>>()?,
            }
        }
        Kind::Vote => {
            let decision = match c.u8()? {
                0 => Decision::Forward,
                1 => Decision::Block,
                other => return Err(Error::Frame(format!("unknown decision {other}"))),
            };
            let has = c.u8()?;
            let v = c.u64()?;
            let value = match has {
                0 if v == 0 => None,
                1 => Some(v),
                _ => return Err(Error::Frame("malformed vote value".into())),
            };
            let m_prime = c.u16()?;
            let malicious = match c.u8()? {
                0 => false,
                1 => true,
                _ => return Err(Error::Frame("malformed vote flag".into())),
            };
            let n = c.u16()? as usize;
            Payload::Vote {
                decision,
                value,
                m_prime,
                malicious,
                suspects: (0..n).map(|_| c.u16()).collect::<Result<_>>()?,
            }
        }
        Kind::Error => {
            let code = c.u8()?;
            let text = std::str::from_utf8(c.rest())
                .map_err(|_| Error::Frame("error text is not UTF-8".into()))?
                .to_owned();
            Payload::Error { code, text }
        }
    };
    c.done()?;
    Ok(p)
}

struct Header {
    kind: Kind,
    session: u64,
    party: PartyId,
    len: u32,
}

fn parse_header(h: &[u8]) -> Result<Header> {
    if &h[..4] != MAGIC {
        return Err(Error::Frame("bad magic".into()));
    }
    if h[4] != VERSION {
        return Err(Error::Frame(format!("unsupported version {}", h[4])));
    }
    let len = u32::from_be_bytes(h[16..20].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(Error::Frame(format!("payload length {len} over the limit")));
    }
    Ok(Header {
        kind: Kind::from_u8(h[5])?,
        session: u64::from_be_bytes(h[6..14].try_into().unwrap()),
        party: u16::from_be_bytes(h[14..16].try_into().unwrap()),
        len,
    })
}

fn finish(frame: &[u8], h: Header, cipher: &dyn FrameCipher) -> Result<WireMessage> {
    let body = frame.len() - 4;
    let crc = u32::from_be_bytes(frame[body..].try_into().unwrap());
    if crc32fast::hash(&frame[..body]) != crc {
        return Err(Error::Frame("checksum mismatch".into()));
    }
    let payload = cipher.open(frame[HEADER_LEN..body].to_vec())?;
    Ok(WireMessage {
        session: h.session,
        party: h.party,
        payload: decode_payload(h.kind, &payload)?,
    })
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode(bytes: &[u8]) -> Result<WireMessage> {
    decode_with(bytes, &Plaintext)
}

pub fn decode_with(bytes: &[u8], cipher: &dyn FrameCipher) -> Result<WireMessage> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::Frame("truncated frame".into()));
    }
    let h = parse_header(&bytes[..HEADER_LEN])?;
    if bytes.len() != HEADER_LEN + h.len as usize + 4 {
        return Err(Error::Frame("frame length does not match header".into()));
    }
    finish(bytes, h, cipher)
}

/// Reads one frame from a stream. `Ok(None)` on clean end of stream.
pub fn read_frame<R: Read>(r: &mut R, cipher: &dyn FrameCipher) -> Result<Option<(WireMessage, usize)>> {
    let mut head = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut head[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Frame("stream ended inside a header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let h = parse_header(&head)?;
    let mut frame = head.to_vec();
    frame.resize(HEADER_LEN + h.len as usize + 4, 0);
    r.read_exact(&mut frame[HEADER_LEN..]).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Frame("stream ended inside a frame".into()),
        _ => e.into(),
    })?;
    let n = frame.len();
    Ok(Some((finish(&frame, h, cipher)?, n)))
}
