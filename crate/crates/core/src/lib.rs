//! Secure comparison of Paillier-encrypted integers and two range-query
//! protocols for an attribute-wise encrypted table held by a pair of
//! non-colluding clouds.
//!
//! * [`paillier`]: the additively homomorphic cryptosystem and its 2-of-2
//!   threshold variant.
//! * [`protocol`]: message-driven two-party state machines for the
//!   probabilistic comparison and for secure multiplication.
//! * [`pprq`]: the range-query roles (user, primary cloud, secondary cloud).
//! * [`wire`]: framing and payload layouts shared by all parties.
//! * [`store`]: CSV ingestion and the `.pprq` encrypted-table format.
//! * [`bench`]: timing and correctness harness for the comparison protocol.

pub mod paillier;
pub mod pprq;
pub mod protocol;
pub mod store;
pub mod wire;
pub mod bench;

#[cfg(test)]
pub(crate) mod test_keys;
