//! 2-of-2 threshold decryption.
//!
//! The dealer picks `d` with `d = 0 (mod lambda)` and `d = 1 (mod N)`, so
//! that `c^d = 1 + m N (mod N^2)` for every ciphertext `c` of `m`. `d` is
//! split additively modulo `N * lambda`: each holder raises the ciphertext
//! to its own share, and only the product of both partials reveals `m`.

use rand::{CryptoRng, RngCore};
use rug::Integer;

use super::{keygen, random_below, reduce, Ciphertext, PaillierError, PublicKey, Result, SecretKey};

/// Which of the two shares a key or partial belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShareIndex {
    First = 1,
    Second = 2,
}

impl ShareIndex {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(ShareIndex::First),
            2 => Some(ShareIndex::Second),
            _ => None,
        }
    }
}

/// One additive share of the decryption exponent.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyShare {
    index: ShareIndex,
    exponent: Integer,
    public: PublicKey,
}

impl std::fmt::Debug for KeyShare {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyShare").field("index", &self.index).finish_non_exhaustive()
    }
}

impl KeyShare {
    pub fn new(index: ShareIndex, exponent: Integer, public: PublicKey) -> Result<Self> {
        if exponent < 0 {
            return Err(PaillierError::InvalidKey("negative share exponent".into()));
        }
        Ok(KeyShare { index, exponent, public })
    }

    pub fn index(&self) -> ShareIndex {
        self.index
    }

    pub fn exponent(&self) -> &Integer {
        &self.exponent
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    /// `c^{d_i} mod N^2`.
    pub fn partial_decrypt(&self, c: &Ciphertext) -> Result<PartialDecryption> {
        let c = self.public.ciphertext(c.value().clone())?;
        let value = Integer::from(c.value().pow_mod_ref(&self.exponent, self.public.modulus_squared()).unwrap());
        Ok(PartialDecryption { index: self.index, value })
    }

    /// Completes a decryption given the other holder's partial of the same ciphertext.
    pub fn finish_decrypt(&self, c: &Ciphertext, other: &PartialDecryption) -> Result<Integer> {
        let own = self.partial_decrypt(c)?;
        combine(&self.public, &own, other)
    }
}

/// A share holder's contribution `c^{d_i} mod N^2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialDecryption {
    pub index: ShareIndex,
    pub value: Integer,
}

/// `L(p1 * p2 mod N^2) mod N`. Rejects partials from the same share and
/// products that are not of the form `1 + m N`.
pub fn combine(pk: &PublicKey, p1: &PartialDecryption, p2: &PartialDecryption) -> Result<Integer> {
    if p1.index == p2.index {
        return Err(PaillierError::DuplicateShare(p1.index.as_u8()));
    }
    let mut u = Integer::from(&p1.value * &p2.value);
    u %= pk.modulus_squared();
    let shifted = Integer::from(&u - 1);
    if !shifted.is_divisible(pk.modulus()) {
        return Err(PaillierError::InconsistentPartials);
    }
    Ok(pk.l_function(&u))
}

/// Splits a secret key into two shares. `d_1` is uniform in `[0, N lambda)`.
pub fn split_secret_key<R: RngCore + CryptoRng + ?Sized>(sk: &SecretKey, rng: &mut R) -> (KeyShare, KeyShare) {
    let pk = sk.public_key();
    let n = pk.modulus();
    let lambda = sk.lambda();
    // d = lambda * (lambda^-1 mod N): 0 mod lambda, 1 mod N.
    let lambda_inv = Integer::from(lambda.invert_ref(n).expect("gcd(lambda, N) = 1"));
    let d = Integer::from(lambda * &lambda_inv);
    let order = Integer::from(n * lambda);
    let d1 = random_below(&order, rng);
    let d2 = reduce(d - &d1, &order);
    (
        KeyShare { index: ShareIndex::First, exponent: d1, public: pk.clone() },
        KeyShare { index: ShareIndex::Second, exponent: d2, public: pk.clone() },
    )
}

/// Generates a fresh modulus and splits its decryption exponent in two.
pub fn threshold_keygen<R: RngCore + CryptoRng + ?Sized>(
    bits: u32,
    rng: &mut R,
) -> Result<(PublicKey, KeyShare, KeyShare)> {
    let (pk, sk) = keygen(bits, rng)?;
    let (s1, s2) = split_secret_key(&sk, rng);
    Ok((pk, s1, s2))
}
