//! Runs many comparison and multiplication instances over one link.
//!
//! The initiator advances up to `parallelism` instances in lockstep: every
//! round sends one frame per live instance, tagged with the instance's seq,
//! and waits for all replies. The responder answers frame by frame.

use std::collections::HashMap;

use rand::{CryptoRng, RngCore};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::{fork_rngs, PprqError, Result};
use crate::paillier::{Ciphertext, KeyShare, PublicKey};
use crate::protocol::{
    ComparisonResult, Responder, ScInitiator, ScOptions, ScResponderState, ScStep, SmpInitiator,
};
use crate::wire::{self, decode_ciphertext, Frame, FramedLink, MsgType, SessionId};

pub(crate) struct Initiator<'a> {
    pub link: &'a mut FramedLink,
    pub pk: &'a PublicKey,
    pub assist: Option<&'a KeyShare>,
    pub session: SessionId,
    pub parallelism: usize,
}

enum Pending {
    Tau(wire::Frame),
    Final(wire::Frame),
}

impl Initiator<'_> {
    /// `E([x_i >= y_i])` for every pair. Instance `i` uses seq `seq_base + i`.
    pub fn compare_all<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        pairs: &[(&Ciphertext, &Ciphertext)],
        bits: u32,
        seq_base: u32,
        rng: &mut R,
    ) -> Result<Vec<Ciphertext>> {
        let mut results = Vec::with_capacity(pairs.len());
        let chunk = self.parallelism.max(1);
        for (c, group) in pairs.chunks(chunk).enumerate() {
            let base = seq_base + (c * chunk) as u32;
            results.extend(self.compare_group(group, bits, base, rng)?);
        }
        Ok(results)
    }

    fn compare_group<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        group: &[(&Ciphertext, &Ciphertext)],
        bits: u32,
        base: u32,
        rng: &mut R,
    ) -> Result<Vec<Ciphertext>> {
        let (pk, assist, session) = (self.pk, self.assist, self.session);
        let mut instances: Vec<(ScInitiator, ChaCha20Rng)> = Vec::with_capacity(group.len());
        let mut outgoing = Vec::with_capacity(group.len());
        let started = group
            .par_iter()
            .zip(fork_rngs(rng, group.len()))
            .map(|((x, y), mut rng)| {
                let (p1, tau) = ScInitiator::start(pk, x, y, bits, assist, ScOptions::default(), &mut rng)?;
                Ok((p1, rng, tau))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, (p1, rng, tau)) in started.into_iter().enumerate() {
            let (t, payload) = wire::encode_decrypt_request(pk, MsgType::ScpTau, &tau);
            outgoing.push(Pending::Tau(Frame::new(t, session, base + i as u32, payload)));
            instances.push((p1, rng));
        }

        loop {
            let frames: Vec<Frame> = outgoing
                .iter()
                .map(|p| match p {
                    Pending::Tau(f) | Pending::Final(f) => f.clone(),
                })
                .collect();
            let replies = self.link.exchange(&frames)?;
            let is_final = matches!(outgoing[0], Pending::Final(_));
            if is_final {
                return instances
                    .into_par_iter()
                    .zip(replies)
                    .map(|((p1, _), reply)| {
                        expect_type(&reply, MsgType::ScpC)?;
                        let c = decode_ciphertext(pk, &reply.payload)?;
                        let ComparisonResult { ciphertext } = p1.finish(&c)?;
                        Ok(ciphertext)
                    })
                    .collect();
            }
            outgoing = instances
                .par_iter_mut()
                .zip(replies)
                .enumerate()
                .map(|(i, ((p1, rng), reply))| {
                    expect_type(&reply, MsgType::ScpS)?;
                    let s = decode_ciphertext(pk, &reply.payload)?;
                    let seq = base + i as u32;
                    Ok(match p1.on_s(&s, rng)? {
                        ScStep::Tau(req) => {
                            let (t, payload) = wire::encode_decrypt_request(pk, MsgType::ScpTau, &req);
                            Pending::Tau(Frame::new(t, session, seq, payload))
                        }
                        ScStep::Final(req) => {
                            let (t, payload) = wire::encode_decrypt_request(pk, MsgType::ScpG, &req);
                            Pending::Final(Frame::new(t, session, seq, payload))
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?;
        }
    }

    /// `E(a_i * b_i)` for every pair. Instance `i` uses seq `seq_base + i`.
    pub fn multiply_all<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        pairs: &[(&Ciphertext, &Ciphertext)],
        seq_base: u32,
        rng: &mut R,
    ) -> Result<Vec<Ciphertext>> {
        let (pk, assist, session) = (self.pk, self.assist, self.session);
        let mut results = Vec::with_capacity(pairs.len());
        let chunk = self.parallelism.max(1);
        for (c, group) in pairs.chunks(chunk).enumerate() {
            let base = seq_base + (c * chunk) as u32;
            let started = group
                .par_iter()
                .zip(fork_rngs(rng, group.len()))
                .enumerate()
                .map(|(i, ((a, b), mut rng))| {
                    let (p1, req) = SmpInitiator::start(pk, a, b, assist, &mut rng)?;
                    let (t, payload) = wire::encode_smp_request(pk, &req);
                    Ok((p1, Frame::new(t, session, base + i as u32, payload)))
                })
                .collect::<Result<Vec<_>>>()?;
            let (instances, frames): (Vec<_>, Vec<_>) = started.into_iter().unzip();
            let replies = self.link.exchange(&frames)?;
            let products = instances
                .into_par_iter()
                .zip(replies)
                .map(|(p1, reply)| {
                    expect_type(&reply, MsgType::SmpH)?;
                    Ok(p1.finish(&decode_ciphertext(pk, &reply.payload)?)?)
                })
                .collect::<Result<Vec<_>>>()?;
            results.extend(products);
        }
        Ok(results)
    }
}

fn expect_type(frame: &Frame, expected: MsgType) -> Result<()> {
    if frame.msg_type != expected {
        return Err(wire::WireError::Unexpected { expected, got: frame.msg_type }.into());
    }
    Ok(())
}

/// Responder side: answers comparison and multiplication frames and keeps
/// per-instance round counts.
pub(crate) struct ResponderLoop<'a> {
    pub responder: &'a Responder,
    pub bits: u32,
    pub states: HashMap<u32, ScResponderState>,
}

impl<'a> ResponderLoop<'a> {
    pub fn new(responder: &'a Responder, bits: u32) -> Self {
        ResponderLoop { responder, bits, states: HashMap::new() }
    }

    /// Whether `frame` belongs to the subprotocol phase.
    pub fn handles(msg_type: MsgType) -> bool {
        matches!(
            msg_type,
            MsgType::ScpTau | MsgType::ScpG | MsgType::ThresholdScp | MsgType::SmpAb | MsgType::ThresholdSmp
        )
    }

    pub fn answer<R: RngCore + CryptoRng + ?Sized>(&mut self, frame: &Frame, rng: &mut R) -> Result<Frame> {
        let pk = self.responder.public_key();
        let threshold = self.responder.key().is_threshold();
        let wrapped = matches!(frame.msg_type, MsgType::ThresholdScp | MsgType::ThresholdSmp);
        if threshold != wrapped && frame.msg_type != MsgType::Ping {
            return Err(PprqError::Violation(format!("{} does not match the key setting", frame.msg_type)));
        }
        let (reply_type, ct) = match frame.msg_type {
            MsgType::SmpAb | MsgType::ThresholdSmp => {
                let req = wire::decode_smp_request(pk, frame)?;
                (MsgType::SmpH, self.responder.on_smp(&req, rng)?)
            }
            _ => {
                let (inner, req) = wire::decode_decrypt_request(pk, frame)?;
                let state = self.states.entry(frame.seq).or_insert_with(|| ScResponderState::new(self.bits));
                if inner == MsgType::ScpTau {
                    state.accept_tau()?;
                    (MsgType::ScpS, self.responder.on_tau(&req, rng)?)
                } else {
                    state.accept_final()?;
                    self.states.remove(&frame.seq);
                    (MsgType::ScpC, self.responder.on_final(&req, rng)?)
                }
            }
        };
        Ok(Frame::new(reply_type, frame.session, frame.seq, wire::encode_ciphertexts(pk, &[&ct])))
    }

    /// True when no comparison is half-way through.
    pub fn idle(&self) -> bool {
        self.states.is_empty()
    }
}
