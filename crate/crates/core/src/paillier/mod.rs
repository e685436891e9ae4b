//! Paillier cryptosystem with `g = N + 1`.
//!
//! Ciphertexts live in `Z*_{N^2}`; the homomorphic operations are
//!
//! * `add(E(a), E(b)) = E(a) * E(b) mod N^2`, decrypting to `a + b mod N`;
//! * `scalar_mul(E(a), u) = E(a)^u mod N^2`, decrypting to `a * u mod N`.
//!
//! Every reduction modulo `N` or `N^2` is explicit. The secret key decrypts
//! with CRT over `p^2` and `q^2`; [`SecretKey::decrypt_textbook`] keeps the
//! `L(c^lambda mod N^2) * mu mod N` route around as a cross-check.
//!
//! The 2-of-2 threshold variant in [`threshold`] splits the exponent `d`
//! with `d = 0 mod lambda` and `d = 1 mod N` additively between two holders.

mod keyfile;
mod keys;
pub mod threshold;

use std::fmt;

use rand::{CryptoRng, RngCore};
use rug::integer::Order;
use rug::Integer;

pub use keyfile::{KeyFile, KeyRole, KEY_MAGIC, KEY_VERSION};
pub use keys::{keygen, PublicKey, SecretKey, DEFAULT_BITS, MIN_PRIME_CHECKS, SUPPORTED_BITS};
pub use threshold::{combine, split_secret_key, threshold_keygen, KeyShare, PartialDecryption, ShareIndex};

/// Errors raised by key handling and the homomorphic operations.
#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum PaillierError {
    #[error("unsupported modulus size {0} bits (expected 512, 1024 or 2048)")]
    UnsupportedBits(u32),
    #[error("plaintext outside [0, N)")]
    PlaintextOutOfRange,
    #[error("nonce must lie in (0, N) and be coprime to N")]
    InvalidNonce,
    #[error("scalar outside [0, N)")]
    ScalarOutOfRange,
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(&'static str),
    #[error("both partial decryptions come from share {0}")]
    DuplicateShare(u8),
    #[error("partial decryptions do not belong to the same ciphertext")]
    InconsistentPartials,
    #[error("invalid key material: {0}")]
    InvalidKey(String),
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
}

pub type Result<T, E = PaillierError> = std::result::Result<T, E>;

/// An element of `Z*_{N^2}` produced under some [`PublicKey`].
///
/// The wrapped value is only guaranteed to satisfy `0 < c < N^2` and
/// `gcd(c, N) = 1` when it was produced by this module or passed through
/// [`PublicKey::ciphertext`].
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext(Integer);

impl Ciphertext {
    pub fn value(&self) -> &Integer {
        &self.0
    }

    pub fn into_value(self) -> Integer {
        self.0
    }

    /// Wraps a raw value without validation. Only for values known to be
    /// ciphertexts, e.g. the result of a group operation on ciphertexts.
    pub(crate) fn from_raw(value: Integer) -> Self {
        Ciphertext(value)
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = self.0.to_string_radix(16);
        if hex.len() > 16 {
            write!(f, "Ciphertext({}..{})", &hex[..8], &hex[hex.len() - 8..])
        } else {
            write!(f, "Ciphertext({hex})")
        }
    }
}

/// Uniform integer in `[0, bound)`, by rejection sampling on whole bytes.
pub fn random_below<R: RngCore + CryptoRng + ?Sized>(bound: &Integer, rng: &mut R) -> Integer {
    assert!(*bound > 0, "empty sampling range");
    let bits = bound.significant_bits() as usize;
    let len = bits.div_ceil(8);
    let excess = len * 8 - bits;
    let mut buf = vec![0u8; len];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xff >> excess;
        let v = Integer::from_digits(&buf, Order::Msf);
        if v < *bound {
            return v;
        }
    }
}

/// Uniform integer in `[low, high)`.
pub fn random_in<R: RngCore + CryptoRng + ?Sized>(low: &Integer, high: &Integer, rng: &mut R) -> Integer {
    let span = Integer::from(high - low);
    random_below(&span, rng) + low
}

/// Least non-negative residue of `value` modulo `modulus`.
pub fn reduce(value: Integer, modulus: &Integer) -> Integer {
    let mut r = value % modulus;
    if r < 0 {
        r += modulus;
    }
    r
}

/// `ceil(bits / 8)`.
pub fn byte_len(bits: u32) -> usize {
    (bits as usize).div_ceil(8)
}

/// Fixed-width big-endian encoding. Panics if `value` does not fit.
pub fn to_fixed_bytes(value: &Integer, width: usize) -> Vec<u8> {
    let digits = value.to_digits::<u8>(Order::Msf);
    assert!(digits.len() <= width, "value wider than {width} bytes");
    let mut out = vec![0u8; width - digits.len()];
    out.extend_from_slice(&digits);
    out
}

#[cfg(test)]
mod tests;
