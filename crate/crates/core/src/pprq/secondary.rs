//! The secondary cloud (C2): holds the decryption capability, answers
//! subprotocol rounds and filters the permuted rows.
//!
//! Every query reaches C2 over two connections: the user's, which carries
//! the query share and later receives results, and C1's, which carries the
//! computation. The user's connection is parked in [`PendingSessions`]
//! until C1 arrives with the same session id.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::driver::ResponderLoop;
use super::primary::hex;
use super::steps;
use super::{fork_rngs, Allowlist, PprqError, Result, RngSource};
use crate::protocol::{DecryptionKey, Responder};
use crate::wire::{
    decode_done, encode_ciphertexts, encode_done, encode_residues, Frame, FramedLink, Hello, MsgType, PhiRow,
    ProtocolKind, QueryShareC2, Role, SessionId, WireError, XyzBatch,
};

/// Parked user connections older than this are dropped.
const PENDING_TTL: Duration = Duration::from_secs(600);

#[derive(Clone, Debug)]
pub struct SecondaryContext {
    pub responder: Responder,
    pub allowlist: Allowlist,
    pub rng: RngSource,
    /// How long C1's connection waits for the matching user connection.
    pub wait: Duration,
}

impl SecondaryContext {
    pub fn new(key: DecryptionKey) -> Self {
        SecondaryContext {
            responder: Responder::new(key),
            allowlist: Allowlist::allow_all(),
            rng: RngSource::Os,
            wait: Duration::from_secs(30),
        }
    }

    /// A full secret key serves protocol 1, a share serves protocol 2.
    pub fn protocol(&self) -> ProtocolKind {
        if self.responder.key().is_threshold() {
            ProtocolKind::Pprq2
        } else {
            ProtocolKind::Pprq1
        }
    }

    fn check_protocol(&self, requested: ProtocolKind) -> Result<()> {
        if requested != self.protocol() {
            return Err(PprqError::Unsupported(format!(
                "this cloud serves protocol {} only, protocol {} requested",
                self.protocol().number(),
                requested.number()
            )));
        }
        Ok(())
    }

    fn hello(&self, protocol: ProtocolKind, user: &str) -> Hello {
        let mut h = Hello::new(Role::Cloud2, protocol, user);
        h.modulus = Some(self.responder.public_key().modulus().clone());
        h
    }
}

struct PendingUser {
    user: String,
    protocol: ProtocolKind,
    share: QueryShareC2,
    link: FramedLink,
    since: Instant,
}

/// User connections waiting for C1.
#[derive(Clone, Default)]
pub struct PendingSessions {
    inner: Arc<(Mutex<HashMap<SessionId, PendingUser>>, Condvar)>,
}

impl PendingSessions {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&self, session: SessionId, entry: PendingUser) {
        let (lock, cvar) = &*self.inner;
        let mut map = lock.lock().unwrap();
        map.retain(|_, p| p.since.elapsed() < PENDING_TTL);
        map.insert(session, entry);
        cvar.notify_all();
    }

    fn take(&self, session: &SessionId, wait: Duration) -> Option<PendingUser> {
        let (lock, cvar) = &*self.inner;
        let deadline = Instant::now() + wait;
        let mut map = lock.lock().unwrap();
        loop {
            if let Some(entry) = map.remove(session) {
                return Some(entry);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            map = cvar.wait_timeout(map, deadline - now).unwrap().0;
        }
    }

    /// Drops every parked connection, closing it.
    pub fn clear(&self) {
        self.inner.0.lock().unwrap().clear();
    }

    pub fn len(&self) -> usize {
        self.inner.0.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecondaryReport {
    pub session: SessionId,
    pub user: String,
    pub protocol: ProtocolKind,
    pub matches: u32,
}

/// Serves one inbound connection, from either a user or C1. Returns a
/// report once C1's side of a session completes.
pub fn handle_connection(
    ctx: &SecondaryContext,
    mut link: FramedLink,
    pending: &PendingSessions,
) -> Result<Option<SecondaryReport>> {
    let frame = link.recv_expect(MsgType::Hello)?;
    let session = frame.session;
    let mut user_link = None;
    let mut from_c1 = false;
    let result = Hello::decode(&frame.payload).map_err(PprqError::from).and_then(|hello| match hello.role {
        Role::User => register_user(ctx, &mut link, session, hello, pending).map(|_| None),
        Role::Cloud1 => {
            from_c1 = true;
            run_session(ctx, &mut link, &mut user_link, session, hello, pending).map(Some)
        }
        other => Err(PprqError::Violation(format!("unexpected role {other:?}"))),
    });
    if let Err(e) = &result {
        log::warn!("session {}: {e}", hex(&session));
        let msg = e.to_error_msg();
        if !matches!(e, PprqError::Wire(WireError::Io(_) | WireError::Closed)) {
            let _ = link.send_error(session, msg.clone());
        }
        // A failed C1 connection must not leave the user waiting.
        if from_c1 && user_link.is_none() {
            user_link = pending.take(&session, Duration::ZERO).map(|p| p.link);
        }
        if let Some(u) = user_link.as_mut() {
            let _ = u.send_error(session, msg);
        }
    }
    result
}

fn register_user(
    ctx: &SecondaryContext,
    link: &mut FramedLink,
    session: SessionId,
    hello: Hello,
    pending: &PendingSessions,
) -> Result<()> {
    if !ctx.allowlist.permits(&hello.user) {
        return Err(PprqError::Unauthorized(hello.user));
    }
    ctx.check_protocol(hello.protocol)?;
    link.send(&Frame::new(MsgType::Hello, session, 0, ctx.hello(hello.protocol, &hello.user).encode()))?;
    let frame = link.recv_expect(MsgType::QueryShareC2)?;
    let share = QueryShareC2::decode(ctx.responder.public_key(), &frame.payload)?;
    let placeholder = FramedLink::new(std::io::Cursor::new(Vec::new()));
    let link = std::mem::replace(link, placeholder);
    pending.insert(session, PendingUser { user: hello.user, protocol: hello.protocol, share, link, since: Instant::now() });
    Ok(())
}

fn run_session(
    ctx: &SecondaryContext,
    c1: &mut FramedLink,
    user_link: &mut Option<FramedLink>,
    session: SessionId,
    hello: Hello,
    pending: &PendingSessions,
) -> Result<SecondaryReport> {
    let pk = ctx.responder.public_key();
    ctx.check_protocol(hello.protocol)?;
    if hello.modulus.as_ref() != Some(pk.modulus()) {
        return Err(PprqError::Unsupported("primary cloud holds a different key".into()));
    }
    if hello.domain_bits == 0 || hello.domain_bits + 2 >= pk.bits() {
        return Err(PprqError::Violation(format!("domain of {} bits", hello.domain_bits)));
    }
    let user = pending.take(&session, ctx.wait).ok_or(PprqError::Timeout("the user's query share"))?;
    let bob = user_link.insert(user.link);
    if user.user != hello.user || user.protocol != hello.protocol {
        return Err(PprqError::Violation("session does not match the user's request".into()));
    }
    c1.send(&Frame::new(MsgType::Hello, session, 0, ctx.hello(hello.protocol, &hello.user).encode()))?;

    let mut rng = ctx.rng.session_rng(&session, 2);
    let key = &ctx.responder;
    let ea = key.key().encrypt(&user.share.alpha, &mut rng)?;
    let eb = key.key().encrypt(&user.share.beta, &mut rng)?;
    c1.send(&Frame::new(MsgType::EncShares, session, 0, encode_ciphertexts(pk, &[&ea, &eb])))?;

    let mut responder = ResponderLoop::new(key, hello.domain_bits);
    let first_batch = loop {
        let frame = c1.recv()?;
        if frame.session != session {
            return Err(PprqError::Violation("frame for another session".into()));
        }
        if ResponderLoop::handles(frame.msg_type) {
            let reply = responder.answer(&frame, &mut rng)?;
            c1.send(&reply)?;
        } else if frame.msg_type == MsgType::XyzBatch {
            break frame;
        } else if frame.msg_type != MsgType::Ping {
            return Err(WireError::Unexpected { expected: MsgType::XyzBatch, got: frame.msg_type }.into());
        }
    };
    if !responder.idle() {
        return Err(PprqError::Violation("rows arrived before every comparison finished".into()));
    }

    let cols = hello.cols as usize;
    let matches = match key.key() {
        DecryptionKey::Secret(sk) => {
            let mut sent = 0u32;
            for_each_batch(c1, first_batch, pk, hello.protocol, cols, |batch, _| {
                let rows = batch.rows.par_iter().map(|r| steps::pprq1_filter_respond(sk, r)).collect::<Result<Vec<_>>>()?;
                for row in rows.into_iter().flatten() {
                    bob.queue(&Frame::new(MsgType::ResultRowP1, session, sent, row.encode(pk)))?;
                    sent += 1;
                }
                Ok(bob.flush()?)
            })?;
            c1.send(&Frame::new(MsgType::Done, session, 0, encode_done(sent)))?;
            sent
        }
        DecryptionKey::Share(share2) => {
            let mut sent = 0u32;
            for_each_batch(c1, first_batch, pk, hello.protocol, cols, |batch, c1| {
                let rows = batch
                    .rows
                    .par_iter()
                    .zip(fork_rngs(&mut rng, batch.rows.len()))
                    .map(|(r, mut rng)| steps::pprq2_filter_blind(share2, r, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                for row in rows.into_iter().flatten() {
                    c1.queue(&Frame::new(MsgType::P2Row, session, sent, row.encode(pk)))?;
                    sent += 1;
                }
                Ok(())
            })?;
            c1.queue(&Frame::new(MsgType::Done, session, 0, encode_done(sent)))?;
            c1.flush()?;

            let mut answered = std::collections::HashSet::new();
            let announced = loop {
                let frame = c1.recv()?;
                match frame.msg_type {
                    MsgType::PhiRow => {
                        if frame.seq >= sent || !answered.insert(frame.seq) {
                            return Err(PprqError::Violation(format!("unexpected PHI row {}", frame.seq)));
                        }
                        let gamma = steps::pprq2_final_partial(share2, &PhiRow::decode(pk, &frame.payload)?)?;
                        bob.queue(&Frame::new(MsgType::GammaRow, session, frame.seq, encode_residues(pk, &gamma)))?;
                    }
                    MsgType::Done => break decode_done(&frame.payload)?,
                    got => return Err(WireError::Unexpected { expected: MsgType::PhiRow, got }.into()),
                }
            };
            if announced != sent || answered.len() != sent as usize {
                return Err(PprqError::Violation(format!("{} PHI rows for {sent} matches", answered.len())));
            }
            sent
        }
    };
    bob.send(&Frame::new(MsgType::Done, session, 0, encode_done(matches)))?;
    log::info!("session {}: forwarded {matches} rows", hex(&session));
    Ok(SecondaryReport { session, user: hello.user, protocol: hello.protocol, matches })
}

/// Decodes XYZ batches in order, starting with `first`, until all rows
/// announced in the batch header have arrived.
fn for_each_batch<F>(
    c1: &mut FramedLink,
    first: Frame,
    pk: &crate::paillier::PublicKey,
    protocol: ProtocolKind,
    cols: usize,
    mut f: F,
) -> Result<()>
where
    F: FnMut(&XyzBatch, &mut FramedLink) -> Result<()>,
{
    let mut frame = first;
    let mut received = 0u32;
    loop {
        let batch = XyzBatch::decode(pk, protocol, cols, &frame.payload)?;
        if batch.first != received {
            return Err(PprqError::Violation("XYZ batches out of order".into()));
        }
        received += batch.rows.len() as u32;
        f(&batch, c1)?;
        if received == batch.total {
            return Ok(());
        }
        if batch.rows.is_empty() {
            return Err(PprqError::Violation("empty XYZ batch".into()));
        }
        frame = c1.recv_expect(MsgType::XyzBatch)?;
    }
}
