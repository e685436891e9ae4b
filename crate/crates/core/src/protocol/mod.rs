//! Two-party subprotocols run between an initiator holding ciphertexts and
//! a responder holding decryption capability.
//!
//! * [`sc`]: probabilistic secure comparison, producing `E([x >= y])`.
//! * [`smp`]: secure multiplication, producing `E(a * b)`.
//!
//! Both are message-driven: each call consumes one inbound message and
//! yields the next outbound one, so the same code runs in-process, across
//! threads, or over a socket.
//!
//! In the threshold setting the initiator holds share 1 and attaches its
//! partial decryption to every ciphertext it asks the responder to open;
//! the responder (share 2) completes the decryption. The responder sees the
//! same blinded plaintexts as with a full secret key.

pub mod sc;
pub mod smp;

use rand::{CryptoRng, RngCore};
use rug::Integer;

use crate::paillier::{Ciphertext, KeyShare, PaillierError, PartialDecryption, PublicKey, SecretKey};

pub use sc::{Blinding, ComparisonResult, Functionality, ScInitiator, ScOptions, ScResponderState, ScStep};
pub use sc::compare_local;
pub use smp::{multiply_local, SmpInitiator, SmpRequest};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error("domain of {bits} bits is too wide for a {key_bits}-bit key (need m < K - 2)")]
    DomainTooWide { bits: u32, key_bits: u32 },
    #[error("domain bit length must be at least 1")]
    EmptyDomain,
    #[error("message out of order: {0}")]
    OutOfOrder(&'static str),
    #[error("threshold responder needs the initiator's partial decryption")]
    MissingPartial,
    #[error("partial decryption carries the wrong share index")]
    WrongShare,
    #[error("scripted blinding supplies {got} values for {expected} iterations")]
    ScriptLength { expected: usize, got: usize },
}

pub type Result<T, E = ProtocolError> = std::result::Result<T, E>;

/// A ciphertext the initiator wants the responder to open, with the
/// initiator's partial decryption in the threshold setting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecryptRequest {
    pub ciphertext: Ciphertext,
    pub partial: Option<PartialDecryption>,
}

impl DecryptRequest {
    pub(crate) fn new(ciphertext: Ciphertext, assist: Option<&KeyShare>) -> Result<Self> {
        let partial = assist.map(|share| share.partial_decrypt(&ciphertext)).transpose()?;
        Ok(DecryptRequest { ciphertext, partial })
    }
}

/// Decryption capability of the responder.
#[derive(Clone, Debug)]
pub enum DecryptionKey {
    Secret(SecretKey),
    Share(KeyShare),
}

impl DecryptionKey {
    pub fn public_key(&self) -> &PublicKey {
        match self {
            DecryptionKey::Secret(sk) => sk.public_key(),
            DecryptionKey::Share(share) => share.public_key(),
        }
    }

    pub fn is_threshold(&self) -> bool {
        matches!(self, DecryptionKey::Share(_))
    }

    /// Opens a request. A share holder needs the other share's partial.
    pub fn open(&self, request: &DecryptRequest) -> Result<Integer> {
        match self {
            DecryptionKey::Secret(sk) => Ok(sk.decrypt(&request.ciphertext)?),
            DecryptionKey::Share(share) => {
                let partial = request.partial.as_ref().ok_or(ProtocolError::MissingPartial)?;
                if partial.index == share.index() {
                    return Err(ProtocolError::WrongShare);
                }
                Ok(share.finish_decrypt(&request.ciphertext, partial)?)
            }
        }
    }

    /// Fresh encryption; uses the factorization when available.
    pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(&self, m: &Integer, rng: &mut R) -> Result<Ciphertext> {
        Ok(match self {
            DecryptionKey::Secret(sk) => sk.encrypt(m, rng)?,
            DecryptionKey::Share(share) => share.public_key().encrypt(m, rng)?,
        })
    }
}

/// The responder side of both subprotocols. Stateless apart from its key;
/// message ordering for comparisons is tracked by [`ScResponderState`].
#[derive(Clone, Debug)]
pub struct Responder {
    key: DecryptionKey,
}

impl Responder {
    pub fn new(key: DecryptionKey) -> Self {
        Responder { key }
    }

    pub fn key(&self) -> &DecryptionKey {
        &self.key
    }

    pub fn public_key(&self) -> &PublicKey {
        self.key.public_key()
    }

    /// Comparison loop step: `E(1)` if the blinded value is odd, else `E(0)`.
    pub fn on_tau<R: RngCore + CryptoRng + ?Sized>(&self, tau: &DecryptRequest, rng: &mut R) -> Result<Ciphertext> {
        let blinded = self.key.open(tau)?;
        self.key.encrypt(&Integer::from(blinded.is_odd() as u32), rng)
    }

    /// Comparison final step: `E(1)` if `G'` decrypts to zero, else `E(0)`.
    pub fn on_final<R: RngCore + CryptoRng + ?Sized>(&self, g: &DecryptRequest, rng: &mut R) -> Result<Ciphertext> {
        let value = self.key.open(g)?;
        self.key.encrypt(&Integer::from((value == 0) as u32), rng)
    }

    /// Multiplication: `E(a' * b' mod N)` for the two blinded operands.
    pub fn on_smp<R: RngCore + CryptoRng + ?Sized>(&self, request: &SmpRequest, rng: &mut R) -> Result<Ciphertext> {
        let a = self.key.open(&request.a)?;
        let b = self.key.open(&request.b)?;
        let h = (a * b) % self.public_key().modulus();
        self.key.encrypt(&h, rng)
    }
}

#[cfg(test)]
mod tests;
