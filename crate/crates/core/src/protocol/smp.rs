//! Secure multiplication.
//!
//! The initiator blinds both operands, `a' = a + r_a` and `b' = b + r_b`,
//! and the responder returns `E(a' b')`. Since
//! `a b = a' b' - a r_b - b r_a - r_a r_b`, the initiator removes the cross
//! terms homomorphically and ends with `E(a b mod N)`. Exact; there is no
//! error probability.

use rand::{CryptoRng, RngCore};
use rug::Integer;

use super::{DecryptRequest, ProtocolError, Result};
use crate::paillier::{random_below, Ciphertext, KeyShare, PublicKey};

/// The blinded operands sent to the responder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmpRequest {
    pub a: DecryptRequest,
    pub b: DecryptRequest,
}

#[derive(Clone, Debug)]
pub struct SmpInitiator {
    pk: PublicKey,
    ea: Ciphertext,
    eb: Ciphertext,
    ra: Integer,
    rb: Integer,
}

impl SmpInitiator {
    pub fn start<R: RngCore + CryptoRng + ?Sized>(
        pk: &PublicKey,
        ea: &Ciphertext,
        eb: &Ciphertext,
        assist: Option<&KeyShare>,
        rng: &mut R,
    ) -> Result<(Self, SmpRequest)> {
        let ea = pk.ciphertext(ea.value().clone())?;
        let eb = pk.ciphertext(eb.value().clone())?;
        let ra = random_below(pk.modulus(), rng);
        let rb = random_below(pk.modulus(), rng);
        let a = pk.add(&ea, &pk.encrypt(&ra, rng)?);
        let b = pk.add(&eb, &pk.encrypt(&rb, rng)?);
        let request = SmpRequest { a: DecryptRequest::new(a, assist)?, b: DecryptRequest::new(b, assist)? };
        Ok((SmpInitiator { pk: pk.clone(), ea, eb, ra, rb }, request))
    }

    /// Consumes `h' = E(a' b')` and returns `E(a b)`.
    pub fn finish(self, h: &Ciphertext) -> Result<Ciphertext> {
        let pk = &self.pk;
        let h = pk.ciphertext(h.value().clone()).map_err(ProtocolError::from)?;
        let n = pk.modulus();
        let minus_rb = reduce_neg(&self.rb, n);
        let minus_ra = reduce_neg(&self.ra, n);
        let s = pk.add(&h, &pk.scalar_mul(&self.ea, &minus_rb)?);
        let s = pk.add(&s, &pk.scalar_mul(&self.eb, &minus_ra)?);
        // E(r_a r_b)^(N-1) is E(-r_a r_b); add it as a plaintext shift.
        Ok(pk.add_plain(&s, &Integer::from(-(Integer::from(&self.ra * &self.rb)))))
    }
}

/// `N - r mod N`, i.e. `-r` as a residue in `[0, N)`.
fn reduce_neg(r: &Integer, n: &Integer) -> Integer {
    if *r == 0 {
        Integer::new()
    } else {
        Integer::from(n - r)
    }
}

/// Runs both roles of one multiplication in-process.
pub fn multiply_local<R: RngCore + CryptoRng + ?Sized>(
    pk: &PublicKey,
    responder: &super::Responder,
    ea: &Ciphertext,
    eb: &Ciphertext,
    assist: Option<&KeyShare>,
    rng: &mut R,
) -> Result<Ciphertext> {
    let (p1, request) = SmpInitiator::start(pk, ea, eb, assist, rng)?;
    let h = responder.on_smp(&request, rng)?;
    p1.finish(&h)
}
