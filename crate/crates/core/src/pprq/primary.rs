//! The primary cloud (C1): holds the encrypted table and drives each query.

use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use rayon::prelude::*;

use super::driver::Initiator;
use super::steps::{self, Permuted};
use super::{fork_rngs, reconstruct_bounds, Allowlist, PprqError, Result, RngSource};
use crate::paillier::{Ciphertext, KeyShare, PublicKey};
use crate::store::EncryptedTable;
use crate::wire::{
    decode_ciphertexts, decode_done, encode_done, encode_residues, Frame, FramedLink, Hello, MsgType, P2Row,
    ProtocolKind, QueryShareC1, Role, SessionId, WireError, XyzBatch,
};

/// Target payload size of one XYZ batch frame.
const BATCH_BYTES: usize = 1 << 20;

#[derive(Clone, Debug)]
pub struct PrimaryContext {
    pub table: Arc<EncryptedTable>,
    /// Share 1 of the threshold key; required for protocol 2.
    pub share: Option<KeyShare>,
    pub allowlist: Allowlist,
    /// Upper bound on concurrently running comparison or multiplication
    /// instances.
    pub parallelism: usize,
    pub rng: RngSource,
}

impl PrimaryContext {
    pub fn new(table: EncryptedTable, share: Option<KeyShare>) -> Result<Self> {
        if let Some(s) = &share {
            if s.public_key() != table.public_key() {
                return Err(PprqError::Unsupported("key share does not match the table key".into()));
            }
            if s.index() != crate::paillier::ShareIndex::First {
                return Err(PprqError::Unsupported("the primary cloud must hold share 1".into()));
            }
        }
        Ok(PrimaryContext {
            table: Arc::new(table),
            share,
            allowlist: Allowlist::allow_all(),
            parallelism: super::default_parallelism(),
            rng: RngSource::Os,
        })
    }

    pub fn protocols(&self) -> &'static [ProtocolKind] {
        if self.share.is_some() {
            &[ProtocolKind::Pprq1, ProtocolKind::Pprq2]
        } else {
            &[ProtocolKind::Pprq1]
        }
    }
}

/// What C1 computed for one query. Confined to C1; exposed for tests and
/// diagnostics.
#[derive(Clone, Debug)]
pub struct PrimaryReport {
    pub session: SessionId,
    pub user: String,
    pub protocol: ProtocolKind,
    /// 0-based column the query filtered on.
    pub column: usize,
    /// `O_i` in storage order.
    pub mask: Vec<Ciphertext>,
    /// `T'_{i,j}` in storage order.
    pub masked: Vec<Vec<Ciphertext>>,
    /// Rows as sent to C2, with the permutation.
    pub sent: Permuted,
    /// Number of rows C2 reported as matching.
    pub matches: u32,
}

/// Serves one user connection. `connect_peer` opens a fresh connection to C2.
///
/// On failure an ERROR frame is sent to the user and, once connected, to C2.
pub fn serve_user<F>(ctx: &PrimaryContext, mut bob: FramedLink, connect_peer: F) -> Result<PrimaryReport>
where
    F: FnOnce() -> std::io::Result<FramedLink>,
{
    let hello = bob.recv_expect(MsgType::Hello)?;
    let session = hello.session;
    let mut peer = None;
    let result = run_session(ctx, &mut bob, &mut peer, hello, connect_peer);
    if let Err(e) = &result {
        log::warn!("session {}: {e}", hex(&session));
        let msg = e.to_error_msg();
        if !matches!(e, PprqError::Wire(WireError::Io(_) | WireError::Closed)) {
            let _ = bob.send_error(session, msg.clone());
        }
        if let Some(p) = peer.as_mut() {
            let _ = p.send_error(session, msg);
        }
    }
    result
}

pub(crate) fn hex(session: &SessionId) -> String {
    session.iter().map(|b| format!("{b:02x}")).collect()
}

fn run_session<F>(
    ctx: &PrimaryContext,
    bob: &mut FramedLink,
    peer: &mut Option<FramedLink>,
    hello: Frame,
    connect_peer: F,
) -> Result<PrimaryReport>
where
    F: FnOnce() -> std::io::Result<FramedLink>,
{
    let session = hello.session;
    let table = &*ctx.table;
    let pk = table.public_key();
    let request = Hello::decode(&hello.payload)?;
    if request.role != Role::User {
        return Err(PprqError::Violation(format!("expected a user, got {:?}", request.role)));
    }
    if !ctx.allowlist.permits(&request.user) {
        return Err(PprqError::Unauthorized(request.user));
    }
    let user_key = match request.protocol {
        ProtocolKind::Pprq1 => {
            let n = request.modulus.clone().ok_or(PprqError::Violation("protocol 1 needs the user's key".into()))?;
            let pk_b = PublicKey::from_modulus(n)?;
            if pk_b.bits() < pk.bits() {
                return Err(PprqError::Unsupported(format!(
                    "user key of {} bits is shorter than the {}-bit table key",
                    pk_b.bits(),
                    pk.bits()
                )));
            }
            Some(pk_b)
        }
        ProtocolKind::Pprq2 if ctx.share.is_some() => None,
        ProtocolKind::Pprq2 => return Err(PprqError::Unsupported("protocol 2 needs a threshold deployment".into())),
        other => return Err(PprqError::Unsupported(format!("{other:?} is not served to users"))),
    };
    let protocol = request.protocol;
    log::info!("session {}: user {:?}, protocol {}", hex(&session), request.user, protocol.number());

    let info = Hello {
        role: Role::Cloud1,
        protocol,
        domain_bits: table.domain_bits(),
        rows: table.num_rows() as u64,
        cols: table.num_cols() as u32,
        user: request.user.clone(),
        modulus: Some(pk.modulus().clone()),
    };
    bob.send(&Frame::new(MsgType::Hello, session, 0, info.encode()))?;

    let share = bob.recv_expect(MsgType::QueryShareC1)?;
    let share = QueryShareC1::decode(pk, &share.payload)?;
    if share.k == 0 || share.k as usize > table.num_cols() {
        return Err(PprqError::Query(format!("attribute {} outside 1..={}", share.k, table.num_cols())));
    }
    let column = share.k as usize - 1;

    let c2 = peer.insert(connect_peer().map_err(WireError::from)?);
    c2.send(&Frame::new(MsgType::Hello, session, 0, info.encode()))?;
    let ack = Hello::decode(&c2.recv_expect(MsgType::Hello)?.payload)?;
    if ack.modulus.as_ref() != Some(pk.modulus()) {
        return Err(PprqError::Unsupported("secondary cloud holds a different key".into()));
    }
    let enc_shares = c2.recv_expect(MsgType::EncShares)?;
    let shares = decode_ciphertexts(pk, &enc_shares.payload, 2)?;

    let mut rng = ctx.rng.session_rng(&session, 1);
    let (e_alpha, e_beta) = reconstruct_bounds(pk, &share.alpha, &share.beta, &shares[0], &shares[1], &mut rng)?;

    let (mask, masked) = evaluate_mask(ctx, c2, session, column, &e_alpha, &e_beta, &mut rng)?;

    let sent = match &user_key {
        Some(pk_b) => steps::pprq1_mask_permute(pk, pk_b, &masked, &mask, &mut rng)?,
        None => steps::pprq2_mask_permute(pk, ctx.share.as_ref().unwrap(), &masked, &mask, &mut rng)?,
    };
    send_batches(c2, pk, session, &sent)?;

    let matches = match protocol {
        ProtocolKind::Pprq1 => decode_done(&c2.recv_expect(MsgType::Done)?.payload)?,
        _ => unblind_rows(ctx, bob, c2, session, &mut rng)?,
    };
    bob.send(&Frame::new(MsgType::Done, session, 0, encode_done(matches)))?;
    log::info!("session {}: {matches} matching rows", hex(&session));

    Ok(PrimaryReport { session, user: request.user, protocol, column, mask, masked, sent, matches })
}

/// `L_i = [t_ik >= alpha]`, `M_i = [beta >= t_ik]`, `O_i = L_i M_i` and
/// `T'_ij = T_ij O_i`, all with C2's help.
fn evaluate_mask<R: RngCore + CryptoRng>(
    ctx: &PrimaryContext,
    c2: &mut FramedLink,
    session: SessionId,
    column: usize,
    e_alpha: &Ciphertext,
    e_beta: &Ciphertext,
    rng: &mut R,
) -> Result<(Vec<Ciphertext>, Vec<Vec<Ciphertext>>)> {
    let table = &*ctx.table;
    let n = table.num_rows();
    let w = table.num_cols();
    let mut init = Initiator {
        link: c2,
        pk: table.public_key(),
        assist: ctx.share.as_ref(),
        session,
        parallelism: ctx.parallelism,
    };

    let mut pairs: Vec<(&Ciphertext, &Ciphertext)> = Vec::with_capacity(2 * n);
    pairs.extend((0..n).map(|i| (table.cell(i, column), e_alpha)));
    pairs.extend((0..n).map(|i| (e_beta, table.cell(i, column))));
    let bits = init.compare_all(&pairs, table.domain_bits(), 0, rng)?;
    let (lower, upper) = bits.split_at(n);

    let pairs: Vec<_> = lower.iter().zip(upper).collect();
    let mask = init.multiply_all(&pairs, 0, rng)?;

    let pairs: Vec<_> = (0..n).flat_map(|i| table.row(i).iter().map(move |c| (c, i))).map(|(c, i)| (c, &mask[i])).collect();
    let flat = init.multiply_all(&pairs, 0, rng)?;
    let masked = flat.chunks(w.max(1)).map(<[Ciphertext]>::to_vec).collect();
    Ok((mask, masked))
}

fn send_batches(c2: &mut FramedLink, pk: &PublicKey, session: SessionId, sent: &Permuted) -> Result<()> {
    let total = sent.rows.len() as u32;
    let row_len = sent
        .rows
        .first()
        .map(|r| XyzBatch { total: 1, first: 0, rows: vec![r.clone()] }.encode(pk).len())
        .unwrap_or(1);
    let per_batch = (BATCH_BYTES / row_len).max(1);
    if sent.rows.is_empty() {
        let empty = XyzBatch { total: 0, first: 0, rows: Vec::new() };
        return Ok(c2.send(&Frame::new(MsgType::XyzBatch, session, 0, empty.encode(pk)))?);
    }
    for (b, rows) in sent.rows.chunks(per_batch).enumerate() {
        let batch = XyzBatch { total, first: (b * per_batch) as u32, rows: rows.to_vec() };
        c2.queue(&Frame::new(MsgType::XyzBatch, session, b as u32, batch.encode(pk)))?;
    }
    Ok(c2.flush()?)
}

/// Protocol 2 tail on C1: collects every P2 row, then answers with PHI rows
/// to C2 and blinds to Bob, both keyed by the row's seq.
fn unblind_rows<R: RngCore + CryptoRng>(
    ctx: &PrimaryContext,
    bob: &mut FramedLink,
    c2: &mut FramedLink,
    session: SessionId,
    rng: &mut R,
) -> Result<u32> {
    let pk = ctx.table.public_key();
    let share1 = ctx.share.as_ref().expect("protocol 2 requires share 1");
    let mut rows: Vec<(u32, P2Row)> = Vec::new();
    let count = loop {
        let frame = c2.recv()?;
        match frame.msg_type {
            MsgType::P2Row => rows.push((frame.seq, P2Row::decode(pk, &frame.payload)?)),
            MsgType::Done => break decode_done(&frame.payload)?,
            got => return Err(WireError::Unexpected { expected: MsgType::P2Row, got }.into()),
        }
    };
    if count as usize != rows.len() {
        return Err(PprqError::Violation(format!("peer announced {count} rows but sent {}", rows.len())));
    }
    let mut seen = std::collections::HashSet::new();
    if !rows.iter().all(|(seq, _)| seen.insert(*seq)) {
        return Err(PprqError::Violation("duplicate row seq".into()));
    }
    let outputs = rows
        .par_iter()
        .zip(fork_rngs(rng, rows.len()))
        .map(|((seq, row), mut rng)| Ok((*seq, steps::pprq2_unblind_partial(share1, row, &mut rng)?)))
        .collect::<Result<Vec<_>>>()?;
    for (seq, (phi, r_hat)) in &outputs {
        bob.queue(&Frame::new(MsgType::RhatRow, session, *seq, encode_residues(pk, r_hat)))?;
        c2.queue(&Frame::new(MsgType::PhiRow, session, *seq, phi.encode(pk)))?;
    }
    c2.queue(&Frame::new(MsgType::Done, session, 0, encode_done(count)))?;
    c2.flush()?;
    bob.flush()?;
    Ok(count)
}
