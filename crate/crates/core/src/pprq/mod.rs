//! Range queries over an attribute-wise encrypted table.
//!
//! Four principals take part: the owner encrypts the table once and hands
//! it to the primary cloud (C1); the secondary cloud (C2) holds decryption
//! capability; the user (Bob) splits his query `{k, alpha, beta}`
//! additively between the two clouds and recovers the matching records.
//!
//! C1 evaluates `O_i = [t_ik >= alpha] * [beta >= t_ik]` for every row with
//! C2's help, multiplies every cell by `O_i`, blinds the result, permutes
//! the rows and sends them to C2, which keeps the rows whose mask bit is 1.
//!
//! * Protocol 1: C2 holds the secret key. C2 sends Bob the blinded values
//!   and C1 supplies the blinds encrypted under Bob's own key.
//! * Protocol 2: the clouds hold the two shares of a threshold key. Bob
//!   receives a blinded value from C2 and the blind from C1, and decrypts
//!   nothing.
//!
//! [`steps`] holds the per-row computations as plain functions; the
//! [`primary`], [`secondary`] and [`user`] modules run them over framed
//! connections, and [`local`] wires all three together in-process.

mod driver;
pub mod local;
pub mod primary;
pub mod secondary;
pub mod steps;
pub mod user;

use std::collections::HashSet;

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rug::Integer;

use crate::paillier::{random_below, reduce, Ciphertext, PaillierError, PublicKey};
use crate::protocol::ProtocolError;
use crate::store::{PlainTable, StoreError};
use crate::wire::{ErrorMsg, QueryShareC1, QueryShareC2, SessionId, WireError};

pub use local::{run_local, LocalRun};
pub use primary::{PrimaryContext, PrimaryReport};
pub use secondary::{PendingSessions, SecondaryContext};
pub use user::{QueryOutcome, QueryRequest};

#[derive(Debug, thiserror::Error)]
pub enum PprqError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid query: {0}")]
    Query(String),
    #[error("user {0:?} is not authorized")]
    Unauthorized(String),
    #[error("unsupported request: {0}")]
    Unsupported(String),
    #[error("result streams do not pair up: {0}")]
    Pairing(String),
    #[error("protocol violation: {0}")]
    Violation(String),
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
}

pub type Result<T, E = PprqError> = std::result::Result<T, E>;

impl PprqError {
    /// The ERROR frame to send to a peer when this error ends a session.
    pub fn to_error_msg(&self) -> ErrorMsg {
        let code = match self {
            PprqError::Unauthorized(_) => ErrorMsg::UNAUTHORIZED,
            PprqError::Unsupported(_) => ErrorMsg::UNSUPPORTED,
            PprqError::Query(_) | PprqError::Violation(_) | PprqError::Pairing(_) => ErrorMsg::BAD_REQUEST,
            PprqError::Timeout(_) => ErrorMsg::TIMEOUT,
            PprqError::Wire(WireError::Remote { code, .. }) => *code,
            _ => ErrorMsg::INTERNAL,
        };
        ErrorMsg::new(code, self.to_string())
    }

    /// True when the peer ended the session with an ERROR frame.
    pub fn is_remote(&self) -> bool {
        matches!(self, PprqError::Wire(WireError::Remote { .. }))
    }
}

/// Bob's query: rows whose attribute `k` (1-based) lies in `[alpha, beta]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeQuery {
    pub k: u32,
    pub alpha: Integer,
    pub beta: Integer,
}

impl RangeQuery {
    pub fn new(k: u32, alpha: impl Into<Integer>, beta: impl Into<Integer>) -> Self {
        RangeQuery { k, alpha: alpha.into(), beta: beta.into() }
    }

    /// Bounds must lie in the domain and `k` must name a column. `alpha >
    /// beta` is allowed and matches nothing.
    pub fn validate(&self, domain_bits: u32, cols: usize) -> Result<()> {
        if self.k == 0 || self.k as usize > cols {
            return Err(PprqError::Query(format!("attribute {} outside 1..={cols}", self.k)));
        }
        let bound = Integer::from(1) << domain_bits;
        for (name, v) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if *v < 0 || *v >= bound {
                return Err(PprqError::Query(format!("{name} = {v} outside [0, 2^{domain_bits})")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryShares {
    pub c1: QueryShareC1,
    pub c2: QueryShareC2,
}

/// `alpha_1` uniform in `[0, N)`, `alpha_2 = alpha - alpha_1 mod N`; same for
/// `beta`. Only C1's share carries `k`.
pub fn split_query<R: RngCore + CryptoRng + ?Sized>(
    query: &RangeQuery,
    pk: &PublicKey,
    domain_bits: u32,
    rng: &mut R,
) -> Result<QueryShares> {
    let bound = Integer::from(1) << domain_bits;
    if query.alpha < 0 || query.alpha >= bound || query.beta < 0 || query.beta >= bound {
        return Err(PprqError::Query(format!("bounds outside [0, 2^{domain_bits})")));
    }
    let n = pk.modulus();
    let alpha1 = random_below(n, rng);
    let beta1 = random_below(n, rng);
    let alpha2 = reduce(Integer::from(&query.alpha - &alpha1), n);
    let beta2 = reduce(Integer::from(&query.beta - &beta1), n);
    Ok(QueryShares {
        c1: QueryShareC1 { k: query.k, alpha: alpha1, beta: beta1 },
        c2: QueryShareC2 { alpha: alpha2, beta: beta2 },
    })
}

/// `E(alpha) = E(alpha_1) * E(alpha_2)`, likewise for `beta`.
pub fn reconstruct_bounds<R: RngCore + CryptoRng + ?Sized>(
    pk: &PublicKey,
    alpha1: &Integer,
    beta1: &Integer,
    e_alpha2: &Ciphertext,
    e_beta2: &Ciphertext,
    rng: &mut R,
) -> Result<(Ciphertext, Ciphertext)> {
    let ea = pk.add(&pk.encrypt(alpha1, rng)?, e_alpha2);
    let eb = pk.add(&pk.encrypt(beta1, rng)?, e_beta2);
    Ok((ea, eb))
}

/// Plaintext reference: rows with `alpha <= t_k <= beta`, in storage order.
pub fn range_filter(table: &PlainTable, query: &RangeQuery) -> Vec<Vec<Integer>> {
    let col = query.k as usize - 1;
    table.rows().iter().filter(|row| query.alpha <= row[col] && row[col] <= query.beta).cloned().collect()
}

/// Sorts rows so that result sets can be compared as multisets.
pub fn sorted_rows(mut rows: Vec<Vec<Integer>>) -> Vec<Vec<Integer>> {
    rows.sort();
    rows
}

/// Which users a daemon serves. Empty means everyone.
#[derive(Clone, Debug, Default)]
pub struct Allowlist {
    users: HashSet<String>,
}

impl Allowlist {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(users: I) -> Self {
        Allowlist { users: users.into_iter().map(Into::into).collect() }
    }

    pub fn allow_all() -> Self {
        Self::default()
    }

    pub fn is_open(&self) -> bool {
        self.users.is_empty()
    }

    pub fn permits(&self, user: &str) -> bool {
        self.users.is_empty() || self.users.contains(user)
    }
}

/// Where session randomness comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RngSource {
    /// Operating-system entropy.
    #[default]
    Os,
    /// Derived from a fixed seed and the session id. Tests only.
    Seeded(u64),
}

impl RngSource {
    pub fn session_rng(&self, session: &SessionId, salt: u8) -> ChaCha20Rng {
        match self {
            RngSource::Os => ChaCha20Rng::from_entropy(),
            RngSource::Seeded(seed) => {
                let mut key = [0u8; 32];
                key[..8].copy_from_slice(&seed.to_be_bytes());
                key[8..24].copy_from_slice(session);
                key[24] = salt;
                ChaCha20Rng::from_seed(key)
            }
        }
    }
}

/// Independent generators for parallel work, seeded from `rng`.
pub fn fork_rngs<R: RngCore + ?Sized>(rng: &mut R, count: usize) -> Vec<ChaCha20Rng> {
    (0..count)
        .map(|_| {
            let mut seed = [0u8; 32];
            rng.fill_bytes(&mut seed);
            ChaCha20Rng::from_seed(seed)
        })
        .collect()
}

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
