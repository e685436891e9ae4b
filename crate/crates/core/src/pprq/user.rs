//! The user (Bob): splits his query between the clouds and recovers the
//! matching rows.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use rug::Integer;

use super::steps;
use super::{split_query, PprqError, RangeQuery, Result};
use crate::paillier::{PublicKey, SecretKey};
use crate::wire::{
    decode_done, decode_residues, Frame, FramedLink, Hello, MsgType, ProtocolKind, ResultRowP1, Role, SessionId,
    WireError,
};

#[derive(Clone, Debug)]
pub struct QueryRequest {
    pub user: String,
    pub protocol: ProtocolKind,
    pub query: RangeQuery,
    /// Bob's own key pair. Protocol 1 only.
    pub user_key: Option<SecretKey>,
}

#[derive(Clone, Debug, Default)]
pub struct QueryOutcome {
    pub session: SessionId,
    /// Recovered rows, ordered by the seq C2 assigned.
    pub rows: Vec<Vec<Integer>>,
    /// Paillier decryptions Bob performed.
    pub decryptions: usize,
    pub warnings: Vec<String>,
    pub domain_bits: u32,
    pub table_rows: u64,
    pub cols: u32,
}

/// Runs one query. `c1` and `c2` are fresh connections to the two clouds.
/// C2's stream is read on a separate thread so neither cloud stalls on Bob.
pub fn run_query<R: RngCore + CryptoRng>(
    mut c1: FramedLink,
    mut c2: FramedLink,
    request: &QueryRequest,
    rng: &mut R,
) -> Result<QueryOutcome> {
    let mut session = SessionId::default();
    rng.fill_bytes(&mut session);
    let user_key = match (request.protocol, &request.user_key) {
        (ProtocolKind::Pprq1, Some(sk)) => Some(sk),
        (ProtocolKind::Pprq1, None) => return Err(PprqError::Query("protocol 1 needs the user's key pair".into())),
        (ProtocolKind::Pprq2, _) => None,
        (other, _) => return Err(PprqError::Unsupported(format!("{other:?} is not a query protocol"))),
    };

    let mut hello = Hello::new(Role::User, request.protocol, &request.user);
    hello.modulus = user_key.map(|sk| sk.public_key().modulus().clone());
    c1.send(&Frame::new(MsgType::Hello, session, 0, hello.encode()))?;
    let info = Hello::decode(&c1.recv_expect(MsgType::Hello)?.payload)?;
    if info.role != Role::Cloud1 {
        return Err(PprqError::Violation(format!("expected the primary cloud, got {:?}", info.role)));
    }
    let n = info.modulus.clone().ok_or(PprqError::Violation("primary cloud sent no key".into()))?;
    let pk = PublicKey::from_modulus(n)?;
    request.query.validate(info.domain_bits, info.cols as usize)?;

    let mut outcome = QueryOutcome {
        session,
        domain_bits: info.domain_bits,
        table_rows: info.rows,
        cols: info.cols,
        ..Default::default()
    };
    if request.query.alpha > request.query.beta {
        outcome.warnings.push(format!(
            "alpha {} exceeds beta {}; the range is empty",
            request.query.alpha, request.query.beta
        ));
    }

    let shares = split_query(&request.query, &pk, info.domain_bits, rng)?;
    let hello2 = Hello::new(Role::User, request.protocol, &request.user);
    c2.send(&Frame::new(MsgType::Hello, session, 0, hello2.encode()))?;
    let ack = Hello::decode(&c2.recv_expect(MsgType::Hello)?.payload)?;
    if ack.modulus.as_ref() != Some(pk.modulus()) {
        return Err(PprqError::Unsupported("the clouds hold different keys".into()));
    }
    c2.send(&Frame::new(MsgType::QueryShareC2, session, 0, shares.c2.encode(&pk)))?;
    c1.send(&Frame::new(MsgType::QueryShareC1, session, 0, shares.c1.encode(&pk)))?;

    let (from_c2, from_c1) = std::thread::scope(|s| {
        let reader = s.spawn(|| collect(&mut c2, session, request.protocol, true));
        let from_c1 = collect(&mut c1, session, request.protocol, request.protocol == ProtocolKind::Pprq2);
        (reader.join().expect("reader thread panicked"), from_c1)
    });
    // An ERROR from either cloud explains the failure better than a
    // closed stream on the other.
    let (from_c1, from_c2) = match (from_c1, from_c2) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) if e.is_remote() => return Err(e),
        (_, Err(e)) => return Err(e),
        (Err(e), _) => return Err(e),
    };

    let bound = Integer::from(1) << info.domain_bits;
    for (seq, row) in recover(&pk, user_key, &from_c1, &from_c2, &mut outcome.decryptions)? {
        if row.iter().any(|v| *v >= bound) {
            outcome.warnings.push(format!("row {seq} has values outside the {}-bit domain", info.domain_bits));
        }
        outcome.rows.push(row);
    }
    Ok(outcome)
}

/// Rows of one stream keyed by seq, plus the count announced in DONE.
struct Stream {
    rows: BTreeMap<u32, Frame>,
    done: u32,
}

/// With `carries_rows` false the stream holds only DONE.
fn collect(link: &mut FramedLink, session: SessionId, protocol: ProtocolKind, carries_rows: bool) -> Result<Stream> {
    let mut rows = BTreeMap::new();
    loop {
        let frame = link.recv()?;
        if frame.session != session {
            return Err(PprqError::Violation("frame for another session".into()));
        }
        match (frame.msg_type, protocol) {
            (MsgType::Done, _) => {
                let done = decode_done(&frame.payload)?;
                if carries_rows && done as usize != rows.len() {
                    return Err(PprqError::Pairing(format!("{done} rows announced, {} received", rows.len())));
                }
                return Ok(Stream { rows, done });
            }
            (MsgType::ResultRowP1, ProtocolKind::Pprq1) | (MsgType::GammaRow | MsgType::RhatRow, ProtocolKind::Pprq2)
                if carries_rows =>
            {
                let seq = frame.seq;
                if rows.insert(seq, frame).is_some() {
                    return Err(PprqError::Pairing(format!("row {seq} received twice")));
                }
            }
            (got, _) => return Err(WireError::Unexpected { expected: MsgType::Done, got }.into()),
        }
    }
}

fn recover(
    pk: &PublicKey,
    user_key: Option<&SecretKey>,
    from_c1: &Stream,
    from_c2: &Stream,
    decryptions: &mut usize,
) -> Result<Vec<(u32, Vec<Integer>)>> {
    if from_c1.done != from_c2.done {
        return Err(PprqError::Pairing(format!("clouds report {} and {} rows", from_c1.done, from_c2.done)));
    }
    match user_key {
        Some(sk_b) => {
            if !from_c1.rows.is_empty() {
                return Err(PprqError::Pairing("unexpected rows from the primary cloud".into()));
            }
            from_c2
                .rows
                .iter()
                .map(|(&seq, frame)| {
                    let row = ResultRowP1::decode(pk, &frame.payload)?;
                    *decryptions += row.y.len();
                    Ok((seq, steps::pprq1_recover(pk, sk_b, &row)?))
                })
                .collect()
        }
        None => from_c2
            .rows
            .iter()
            .map(|(&seq, gamma)| {
                let r_hat = from_c1.rows.get(&seq).ok_or_else(|| PprqError::Pairing(format!("no blinds for row {seq}")))?;
                let gamma = decode_residues(pk, &gamma.payload)?;
                let r_hat = decode_residues(pk, &r_hat.payload)?;
                Ok((seq, steps::pprq2_recover(pk, &gamma, &r_hat)?))
            })
            .collect(),
    }
}
