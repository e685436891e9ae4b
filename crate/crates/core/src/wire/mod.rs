//! Framing and payload layouts shared by the owner, the user and both clouds.
//!
//! Every message travels in a frame:
//!
//! ```text
//! length   u32 BE   bytes after this field = 1 + 16 + 4 + payload
//! type     u8       see MsgType
//! session  [u8;16]
//! seq      u32 BE
//! payload  ...
//! ```
//!
//! `length` is capped at 2^24. Integers inside payloads are fixed-width big
//! endian: ciphertexts take `ceil(2K/8)` bytes and residues `ceil(K/8)`.
//! There is no channel security here; deployments are expected to tunnel.

mod link;
mod messages;

use std::fmt;
use std::io::{self, Read, Write};

use rug::integer::Order;
use rug::Integer;

use crate::paillier::{byte_len, to_fixed_bytes, Ciphertext, PaillierError, PublicKey};

pub use link::{Direction, FramedLink, Stream, Transcript, TranscriptEntry};
pub use messages::*;

/// Bytes counted by the length field besides the payload.
pub const HEADER_LEN: usize = 1 + 16 + 4;
/// Upper bound on the length field.
pub const MAX_FRAME_LEN: usize = 1 << 24;

pub type SessionId = [u8; 16];

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("connection closed")]
    Closed,
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("truncated frame: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("frame length {0} exceeds the {MAX_FRAME_LEN}-byte cap")]
    Oversize(usize),
    #[error("frame length {0} is shorter than the header")]
    Undersize(usize),
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error("expected {expected}, got {got}")]
    Unexpected { expected: MsgType, got: MsgType },
    #[error("peer reported error {code}: {message}")]
    Remote { code: u16, message: String },
}

pub type Result<T, E = WireError> = std::result::Result<T, E>;

macro_rules! msg_types {
    ($($name:ident = $code:literal),* $(,)?) => {
        /// Message type registry. Codes are fixed.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        #[repr(u8)]
        pub enum MsgType {
            $($name = $code),*
        }

        impl MsgType {
            pub const ALL: &'static [MsgType] = &[$(MsgType::$name),*];

            pub fn from_u8(v: u8) -> Option<Self> {
                match v {
                    $($code => Some(MsgType::$name),)*
                    _ => None,
                }
            }
        }
    };
}

msg_types! {
    Hello = 0x01,
    QueryShareC1 = 0x02,
    QueryShareC2 = 0x03,
    EncShares = 0x04,
    ScpTau = 0x10,
    ScpS = 0x11,
    ScpG = 0x12,
    ScpC = 0x13,
    SmpAb = 0x20,
    SmpH = 0x21,
    ThresholdScp = 0x28,
    ThresholdSmp = 0x29,
    XyzBatch = 0x30,
    ResultRowP1 = 0x31,
    P2Row = 0x32,
    PhiRow = 0x33,
    GammaRow = 0x34,
    RhatRow = 0x35,
    Done = 0x3F,
    Error = 0xF0,
    Ping = 0xFF,
}

impl MsgType {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} (0x{:02x})", self, self.as_u8())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub session: SessionId,
    pub seq: u32,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, session: SessionId, seq: u32, payload: Vec<u8>) -> Self {
        Frame { msg_type, session, seq, payload }
    }

    /// Value of the length field.
    pub fn length(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    /// Size on the wire including the length field.
    pub fn wire_len(&self) -> usize {
        4 + self.length()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.wire_len());
        self.encode_into(&mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<()> {
        let length = self.length();
        if length > MAX_FRAME_LEN {
            return Err(WireError::Oversize(length));
        }
        out.extend_from_slice(&(length as u32).to_be_bytes());
        out.push(self.msg_type.as_u8());
        out.extend_from_slice(&self.session);
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(())
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(WireError::Truncated { expected: 4, actual: bytes.len() });
        }
        let length = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        check_length(length)?;
        let body = &bytes[4..];
        if body.len() < length {
            return Err(WireError::Truncated { expected: length + 4, actual: bytes.len() });
        }
        if body.len() > length {
            return Err(WireError::Malformed("trailing bytes after frame"));
        }
        Self::decode_body(body)
    }

    fn decode_body(body: &[u8]) -> Result<Self> {
        let msg_type = MsgType::from_u8(body[0]).ok_or(WireError::UnknownType(body[0]))?;
        let session: SessionId = body[1..17].try_into().unwrap();
        let seq = u32::from_be_bytes(body[17..21].try_into().unwrap());
        Ok(Frame { msg_type, session, seq, payload: body[HEADER_LEN..].to_vec() })
    }

    /// Reads one frame. A clean end of stream before the first byte is
    /// reported as [`WireError::Closed`].
    pub fn read_from<R: Read + ?Sized>(reader: &mut R) -> Result<Self> {
        let mut len_buf = [0u8; 4];
        let mut got = 0;
        while got < 4 {
            match reader.read(&mut len_buf[got..]) {
                Ok(0) if got == 0 => return Err(WireError::Closed),
                Ok(0) => return Err(WireError::Truncated { expected: 4, actual: got }),
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let length = u32::from_be_bytes(len_buf) as usize;
        check_length(length)?;
        let mut body = vec![0u8; length];
        reader.read_exact(&mut body).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => WireError::Truncated { expected: length + 4, actual: 4 },
            _ => WireError::Io(e),
        })?;
        Self::decode_body(&body)
    }

    pub fn write_to<W: Write + ?Sized>(&self, writer: &mut W) -> Result<()> {
        writer.write_all(&self.encode()?)?;
        Ok(())
    }
}

fn check_length(length: usize) -> Result<()> {
    if length > MAX_FRAME_LEN {
        return Err(WireError::Oversize(length));
    }
    if length < HEADER_LEN {
        return Err(WireError::Undersize(length));
    }
    Ok(())
}

/// `ceil(2K/8)` bytes, big endian.
pub fn serialize_ciphertext(pk: &PublicKey, c: &Ciphertext) -> Vec<u8> {
    pk.ciphertext_to_bytes(c)
}

/// Rejects wrong lengths and values outside `Z*_{N^2}`.
pub fn deserialize_ciphertext(pk: &PublicKey, bytes: &[u8]) -> Result<Ciphertext> {
    Ok(pk.ciphertext_from_bytes(bytes)?)
}

/// `ceil(K/8)` bytes, big endian. Panics if `value` is not in `[0, N)`.
pub fn serialize_residue(pk: &PublicKey, value: &Integer) -> Vec<u8> {
    assert!(*value >= 0 && value < pk.modulus(), "residue outside [0, N)");
    to_fixed_bytes(value, pk.residue_len())
}

pub fn deserialize_residue(pk: &PublicKey, bytes: &[u8]) -> Result<Integer> {
    let expected = byte_len(pk.bits());
    if bytes.len() != expected {
        return Err(PaillierError::Length { expected, actual: bytes.len() }.into());
    }
    let v = Integer::from_digits(bytes, Order::Msf);
    if v >= *pk.modulus() {
        return Err(PaillierError::PlaintextOutOfRange.into());
    }
    Ok(v)
}

/// Append-only payload builder.
#[derive(Default)]
pub struct PayloadWriter {
    buf: Vec<u8>,
}

impl PayloadWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    /// u32 length prefix, then the bytes.
    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn ciphertext(&mut self, pk: &PublicKey, c: &Ciphertext) -> &mut Self {
        self.buf.extend_from_slice(&serialize_ciphertext(pk, c));
        self
    }

    pub fn residue(&mut self, pk: &PublicKey, v: &Integer) -> &mut Self {
        self.buf.extend_from_slice(&serialize_residue(pk, v));
        self
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

/// Cursor over a payload. [`PayloadReader::finish`] rejects leftovers.
pub struct PayloadReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        PayloadReader { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or(WireError::Truncated {
            expected: self.pos.saturating_add(n),
            actual: self.data.len(),
        })?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn ciphertext(&mut self, pk: &PublicKey) -> Result<Ciphertext> {
        let raw = self.take(pk.ciphertext_len())?;
        deserialize_ciphertext(pk, raw)
    }

    pub fn residue(&mut self, pk: &PublicKey) -> Result<Integer> {
        let raw = self.take(pk.residue_len())?;
        deserialize_residue(pk, raw)
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(WireError::Malformed("trailing bytes in payload"));
        }
        Ok(())
    }
}
