//! Payload layouts for each message type.

use rug::integer::Order;
use rug::Integer;

use super::{Frame, MsgType, PayloadReader, PayloadWriter, Result, SessionId, WireError};
use crate::paillier::{Ciphertext, PartialDecryption, PublicKey, ShareIndex};
use crate::protocol::{DecryptRequest, SmpRequest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Owner = 0,
    User = 1,
    Cloud1 = 2,
    Cloud2 = 3,
}

impl Role {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Role::Owner,
            1 => Role::User,
            2 => Role::Cloud1,
            3 => Role::Cloud2,
            _ => return Err(WireError::Malformed("unknown role")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    Pprq1 = 1,
    Pprq2 = 2,
    RawSc = 3,
    RawSmp = 4,
}

impl ProtocolKind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => ProtocolKind::Pprq1,
            2 => ProtocolKind::Pprq2,
            3 => ProtocolKind::RawSc,
            4 => ProtocolKind::RawSmp,
            _ => return Err(WireError::Malformed("unknown protocol")),
        })
    }

    pub fn number(self) -> u8 {
        self as u8
    }
}

/// Opening message of every connection, and the reply to it.
///
/// From the user to the primary cloud it carries the user's own modulus
/// (protocol 1); the primary cloud's reply carries the table modulus and
/// dimensions. Between the clouds it carries the dimensions the secondary
/// cloud needs to validate message counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hello {
    pub role: Role,
    pub protocol: ProtocolKind,
    pub domain_bits: u32,
    pub rows: u64,
    pub cols: u32,
    pub user: String,
    pub modulus: Option<Integer>,
}

impl Hello {
    pub fn new(role: Role, protocol: ProtocolKind, user: &str) -> Self {
        Hello { role, protocol, domain_bits: 0, rows: 0, cols: 0, user: user.to_owned(), modulus: None }
    }

    pub fn encode(&self) -> Vec<u8> {
        let modulus = self.modulus.as_ref().map(|n| n.to_digits::<u8>(Order::Msf)).unwrap_or_default();
        let user = self.user.as_bytes();
        assert!(user.len() <= u16::MAX as usize, "user id too long");
        let mut w = PayloadWriter::new();
        w.u8(self.role as u8).u8(self.protocol as u8).u32(self.domain_bits).u64(self.rows).u32(self.cols);
        w.u16(user.len() as u16);
        w.buf.extend_from_slice(user);
        w.bytes(&modulus);
        w.finish()
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(payload);
        let role = Role::from_u8(r.u8()?)?;
        let protocol = ProtocolKind::from_u8(r.u8()?)?;
        let domain_bits = r.u32()?;
        let rows = r.u64()?;
        let cols = r.u32()?;
        let user_len = r.u16()? as usize;
        let user = std::str::from_utf8(r.take(user_len)?).map_err(|_| WireError::Malformed("user id not UTF-8"))?;
        let user = user.to_owned();
        let raw = r.bytes()?;
        let modulus = (!raw.is_empty()).then(|| Integer::from_digits(raw, Order::Msf));
        r.finish()?;
        Ok(Hello { role, protocol, domain_bits, rows, cols, user, modulus })
    }
}

/// `{k, alpha_1, beta_1}`; `k` is 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryShareC1 {
    pub k: u32,
    pub alpha: Integer,
    pub beta: Integer,
}

impl QueryShareC1 {
    pub fn encode(&self, pk: &PublicKey) -> Vec<u8> {
        PayloadWriter::new().u32(self.k).residue(pk, &self.alpha).residue(pk, &self.beta).finish()
    }

    pub fn decode(pk: &PublicKey, payload: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(payload);
        let out = QueryShareC1 { k: r.u32()?, alpha: r.residue(pk)?, beta: r.residue(pk)? };
        r.finish()?;
        Ok(out)
    }
}

/// `{alpha_2, beta_2}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryShareC2 {
    pub alpha: Integer,
    pub beta: Integer,
}

impl QueryShareC2 {
    pub fn encode(&self, pk: &PublicKey) -> Vec<u8> {
        PayloadWriter::new().residue(pk, &self.alpha).residue(pk, &self.beta).finish()
    }

    pub fn decode(pk: &PublicKey, payload: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(payload);
        let out = QueryShareC2 { alpha: r.residue(pk)?, beta: r.residue(pk)? };
        r.finish()?;
        Ok(out)
    }
}

/// Payload made of `count` ciphertexts.
pub fn encode_ciphertexts(pk: &PublicKey, cts: &[&Ciphertext]) -> Vec<u8> {
    let mut w = PayloadWriter::new();
    for c in cts {
        w.ciphertext(pk, c);
    }
    w.finish()
}

pub fn decode_ciphertexts(pk: &PublicKey, payload: &[u8], count: usize) -> Result<Vec<Ciphertext>> {
    let mut r = PayloadReader::new(payload);
    let out = (0..count).map(|_| r.ciphertext(pk)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(out)
}

pub fn decode_ciphertext(pk: &PublicKey, payload: &[u8]) -> Result<Ciphertext> {
    Ok(decode_ciphertexts(pk, payload, 1)?.remove(0))
}

fn write_partial(w: &mut PayloadWriter, pk: &PublicKey, p: &PartialDecryption) {
    w.u8(p.index.as_u8());
    w.ciphertext(pk, &Ciphertext::from_raw(p.value.clone()));
}

fn read_partial(r: &mut PayloadReader<'_>, pk: &PublicKey) -> Result<PartialDecryption> {
    let index = ShareIndex::from_u8(r.u8()?).ok_or(WireError::Malformed("unknown share index"))?;
    Ok(PartialDecryption { index, value: r.ciphertext(pk)?.into_value() })
}

/// Encodes a ciphertext to be opened by the responder. Without a partial it
/// travels as `inner`; with one it is wrapped in a threshold frame that
/// names `inner` in its first byte.
pub fn encode_decrypt_request(pk: &PublicKey, inner: MsgType, req: &DecryptRequest) -> (MsgType, Vec<u8>) {
    match &req.partial {
        None => (inner, encode_ciphertexts(pk, &[&req.ciphertext])),
        Some(p) => {
            let mut w = PayloadWriter::new();
            w.u8(inner.as_u8()).ciphertext(pk, &req.ciphertext);
            write_partial(&mut w, pk, p);
            (MsgType::ThresholdScp, w.finish())
        }
    }
}

/// Inverse of [`encode_decrypt_request`]; returns the inner type.
pub fn decode_decrypt_request(pk: &PublicKey, frame: &Frame) -> Result<(MsgType, DecryptRequest)> {
    match frame.msg_type {
        MsgType::ScpTau | MsgType::ScpG => {
            let ciphertext = decode_ciphertext(pk, &frame.payload)?;
            Ok((frame.msg_type, DecryptRequest { ciphertext, partial: None }))
        }
        MsgType::ThresholdScp => {
            let mut r = PayloadReader::new(&frame.payload);
            let inner = match MsgType::from_u8(r.u8()?) {
                Some(t @ (MsgType::ScpTau | MsgType::ScpG)) => t,
                _ => return Err(WireError::Malformed("threshold frame wraps an unexpected type")),
            };
            let ciphertext = r.ciphertext(pk)?;
            let partial = read_partial(&mut r, pk)?;
            r.finish()?;
            Ok((inner, DecryptRequest { ciphertext, partial: Some(partial) }))
        }
        got => Err(WireError::Unexpected { expected: MsgType::ScpTau, got }),
    }
}

pub fn encode_smp_request(pk: &PublicKey, req: &SmpRequest) -> (MsgType, Vec<u8>) {
    let mut w = PayloadWriter::new();
    w.ciphertext(pk, &req.a.ciphertext).ciphertext(pk, &req.b.ciphertext);
    match (&req.a.partial, &req.b.partial) {
        (Some(pa), Some(pb)) => {
            write_partial(&mut w, pk, pa);
            write_partial(&mut w, pk, pb);
            (MsgType::ThresholdSmp, w.finish())
        }
        _ => (MsgType::SmpAb, w.finish()),
    }
}

pub fn decode_smp_request(pk: &PublicKey, frame: &Frame) -> Result<SmpRequest> {
    let mut r = PayloadReader::new(&frame.payload);
    let a = r.ciphertext(pk)?;
    let b = r.ciphertext(pk)?;
    let (pa, pb) = match frame.msg_type {
        MsgType::SmpAb => (None, None),
        MsgType::ThresholdSmp => (Some(read_partial(&mut r, pk)?), Some(read_partial(&mut r, pk)?)),
        got => return Err(WireError::Unexpected { expected: MsgType::SmpAb, got }),
    };
    r.finish()?;
    Ok(SmpRequest {
        a: DecryptRequest { ciphertext: a, partial: pa },
        b: DecryptRequest { ciphertext: b, partial: pb },
    })
}

/// One permuted row sent from the primary to the secondary cloud.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MaskedRow {
    /// `X_i`, `Y_i` (ciphertexts under the user's key, kept opaque) and `Z_i`.
    P1 { x: Vec<Ciphertext>, y: Vec<Vec<u8>>, z: Ciphertext },
    /// `X_i`, `W_i`, the mask ciphertext `Z_i` and its share-1 partial `Z'_i`.
    P2 { x: Vec<Ciphertext>, w: Vec<Ciphertext>, z: Ciphertext, z_partial: PartialDecryption },
}

impl MaskedRow {
    fn write(&self, out: &mut PayloadWriter, pk: &PublicKey) {
        match self {
            MaskedRow::P1 { x, y, z } => {
                x.iter().for_each(|c| {
                    out.ciphertext(pk, c);
                });
                y.iter().for_each(|b| {
                    out.bytes(b);
                });
                out.ciphertext(pk, z);
            }
            MaskedRow::P2 { x, w, z, z_partial } => {
                x.iter().chain(w).for_each(|c| {
                    out.ciphertext(pk, c);
                });
                out.ciphertext(pk, z);
                write_partial(out, pk, z_partial);
            }
        }
    }

    fn read(r: &mut PayloadReader<'_>, pk: &PublicKey, protocol: ProtocolKind, cols: usize) -> Result<Self> {
        let x = (0..cols).map(|_| r.ciphertext(pk)).collect::<Result<Vec<_>>>()?;
        match protocol {
            ProtocolKind::Pprq1 => {
                let y = (0..cols).map(|_| r.bytes().map(<[u8]>::to_vec)).collect::<Result<Vec<_>>>()?;
                Ok(MaskedRow::P1 { x, y, z: r.ciphertext(pk)? })
            }
            ProtocolKind::Pprq2 => {
                let w = (0..cols).map(|_| r.ciphertext(pk)).collect::<Result<Vec<_>>>()?;
                let z = r.ciphertext(pk)?;
                Ok(MaskedRow::P2 { x, w, z, z_partial: read_partial(r, pk)? })
            }
            _ => Err(WireError::Malformed("masked rows exist only in range queries")),
        }
    }

    pub fn x(&self) -> &[Ciphertext] {
        match self {
            MaskedRow::P1 { x, .. } | MaskedRow::P2 { x, .. } => x,
        }
    }

    pub fn z(&self) -> &Ciphertext {
        match self {
            MaskedRow::P1 { z, .. } | MaskedRow::P2 { z, .. } => z,
        }
    }
}

/// A slice `[first, first + rows.len())` of the `total` permuted rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XyzBatch {
    pub total: u32,
    pub first: u32,
    pub rows: Vec<MaskedRow>,
}

impl XyzBatch {
    pub fn encode(&self, pk: &PublicKey) -> Vec<u8> {
        let mut w = PayloadWriter::new();
        w.u32(self.total).u32(self.first).u32(self.rows.len() as u32);
        for row in &self.rows {
            row.write(&mut w, pk);
        }
        w.finish()
    }

    pub fn decode(pk: &PublicKey, protocol: ProtocolKind, cols: usize, payload: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(payload);
        let total = r.u32()?;
        let first = r.u32()?;
        let count = r.u32()?;
        if first as u64 + count as u64 > total as u64 {
            return Err(WireError::Malformed("batch extends past the row total"));
        }
        let rows = (0..count).map(|_| MaskedRow::read(&mut r, pk, protocol, cols)).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(XyzBatch { total, first, rows })
    }
}

/// `{x_i, Y_i}`: blinded residues and the user-key ciphertexts of the blinds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResultRowP1 {
    pub x: Vec<Integer>,
    pub y: Vec<Vec<u8>>,
}

impl ResultRowP1 {
    pub fn encode(&self, pk: &PublicKey) -> Vec<u8> {
        let mut w = PayloadWriter::new();
        w.u32(self.x.len() as u32);
        self.x.iter().for_each(|v| {
            w.residue(pk, v);
        });
        self.y.iter().for_each(|b| {
            w.bytes(b);
        });
        w.finish()
    }

    pub fn decode(pk: &PublicKey, payload: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(payload);
        let cols = r.u32()? as usize;
        if cols > r.remaining() {
            return Err(WireError::Malformed("column count exceeds payload"));
        }
        let x = (0..cols).map(|_| r.residue(pk)).collect::<Result<Vec<_>>>()?;
        let y = (0..cols).map(|_| r.bytes().map(<[u8]>::to_vec)).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(ResultRowP1 { x, y })
    }
}

/// `{X', Y', W'}` for one matching row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct P2Row {
    pub x: Vec<Ciphertext>,
    pub y: Vec<Ciphertext>,
    pub w: Vec<PartialDecryption>,
}

impl P2Row {
    pub fn encode(&self, pk: &PublicKey) -> Vec<u8> {
        let mut out = PayloadWriter::new();
        out.u32(self.x.len() as u32);
        self.x.iter().chain(&self.y).for_each(|c| {
            out.ciphertext(pk, c);
        });
        self.w.iter().for_each(|p| write_partial(&mut out, pk, p));
        out.finish()
    }

    pub fn decode(pk: &PublicKey, payload: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(payload);
        let cols = checked_cols(&mut r)?;
        let x = (0..cols).map(|_| r.ciphertext(pk)).collect::<Result<Vec<_>>>()?;
        let y = (0..cols).map(|_| r.ciphertext(pk)).collect::<Result<Vec<_>>>()?;
        let w = (0..cols).map(|_| read_partial(&mut r, pk)).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(P2Row { x, y, w })
    }
}

/// `{H', Phi}` for one matching row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhiRow {
    pub h: Vec<Ciphertext>,
    pub phi: Vec<PartialDecryption>,
}

impl PhiRow {
    pub fn encode(&self, pk: &PublicKey) -> Vec<u8> {
        let mut out = PayloadWriter::new();
        out.u32(self.h.len() as u32);
        self.h.iter().for_each(|c| {
            out.ciphertext(pk, c);
        });
        self.phi.iter().for_each(|p| write_partial(&mut out, pk, p));
        out.finish()
    }

    pub fn decode(pk: &PublicKey, payload: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(payload);
        let cols = checked_cols(&mut r)?;
        let h = (0..cols).map(|_| r.ciphertext(pk)).collect::<Result<Vec<_>>>()?;
        let phi = (0..cols).map(|_| read_partial(&mut r, pk)).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(PhiRow { h, phi })
    }
}

fn checked_cols(r: &mut PayloadReader<'_>) -> Result<usize> {
    let cols = r.u32()? as usize;
    if cols > r.remaining() {
        return Err(WireError::Malformed("column count exceeds payload"));
    }
    Ok(cols)
}

/// A row of residues: `GAMMA_ROW` and `RHAT_ROW`.
pub fn encode_residues(pk: &PublicKey, values: &[Integer]) -> Vec<u8> {
    let mut w = PayloadWriter::new();
    w.u32(values.len() as u32);
    values.iter().for_each(|v| {
        w.residue(pk, v);
    });
    w.finish()
}

pub fn decode_residues(pk: &PublicKey, payload: &[u8]) -> Result<Vec<Integer>> {
    let mut r = PayloadReader::new(payload);
    let cols = checked_cols(&mut r)?;
    let out = (0..cols).map(|_| r.residue(pk)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(out)
}

pub fn encode_done(count: u32) -> Vec<u8> {
    count.to_be_bytes().to_vec()
}

pub fn decode_done(payload: &[u8]) -> Result<u32> {
    let mut r = PayloadReader::new(payload);
    let v = r.u32()?;
    r.finish()?;
    Ok(v)
}

/// `code u16` then a u16-length UTF-8 message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorMsg {
    pub code: u16,
    pub message: String,
}

impl ErrorMsg {
    pub const UNAUTHORIZED: u16 = 1;
    pub const UNSUPPORTED: u16 = 2;
    pub const BAD_REQUEST: u16 = 3;
    pub const INTERNAL: u16 = 4;
    pub const TIMEOUT: u16 = 5;

    pub fn new(code: u16, message: impl Into<String>) -> Self {
        ErrorMsg { code, message: message.into() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let msg = self.message.as_bytes();
        let msg = &msg[..msg.len().min(u16::MAX as usize)];
        let mut w = PayloadWriter::new();
        w.u16(self.code).u16(msg.len() as u16);
        w.buf.extend_from_slice(msg);
        w.finish()
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(payload);
        let code = r.u16()?;
        let len = r.u16()? as usize;
        let message = String::from_utf8_lossy(r.take(len)?).into_owned();
        r.finish()?;
        Ok(ErrorMsg { code, message })
    }

    pub fn into_frame(self, session: SessionId) -> Frame {
        Frame::new(MsgType::Error, session, 0, self.encode())
    }
}
