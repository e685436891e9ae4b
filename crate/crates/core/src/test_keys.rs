//! Deterministic keys shared by unit tests.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::paillier::{keygen, split_secret_key, KeyShare, PublicKey, SecretKey};

pub(crate) fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub(crate) fn standard() -> &'static (PublicKey, SecretKey) {
    static KEYS: OnceLock<(PublicKey, SecretKey)> = OnceLock::new();
    KEYS.get_or_init(|| keygen(512, &mut rng(0x5eed)).unwrap())
}

/// Shares split from [`standard`], so both routes decrypt alike.
pub(crate) fn shares() -> &'static (KeyShare, KeyShare) {
    static SHARES: OnceLock<(KeyShare, KeyShare)> = OnceLock::new();
    SHARES.get_or_init(|| split_secret_key(&standard().1, &mut rng(0x5a4e)))
}
