//! Probabilistic secure comparison.
//!
//! The initiator holds `E(x)`, `E(y)` with `0 <= x, y < 2^m` and ends with
//! `E(c)`, `c = [x >= y]`; neither side learns `c`. The initiator flips a
//! coin between testing `x >= y` (difference `d = x - y`) and `y >= x + 1`
//! (`d = y - x - 1`). Exactly one of the two holds, and the tested one holds
//! iff `d` lies in `[0, 2^m)` rather than `[N - 2^m, N)`.
//!
//! The low `m` bits of `d` are extracted one per round: the initiator sends
//! `tau_i = delta + r_i` under encryption, the responder answers with the
//! encrypted parity of the blinded value, and the initiator corrects for the
//! parity of `r_i` (`N` is odd, so no overflow means `bit = parity xor
//! parity(r_i)`). It then halves `delta` homomorphically by multiplying with
//! `2^-1 mod N`. After `m` rounds `d' = d mod 2^m`, and `d - d' = 0` iff the
//! tested relation holds. The initiator sends `G' = E(r (d - d'))` with
//! `r != 0`; the responder returns `E([G' decrypts to 0])`, which the
//! initiator flips back under the `y >= x + 1` branch.
//!
//! A round errs only when `delta + r_i` wraps modulo `N`, i.e. with
//! probability about `2^m / N` per round.

use rand::{CryptoRng, Rng, RngCore};
use rug::Integer;

use super::{DecryptRequest, ProtocolError, Responder, Result};
use crate::paillier::{random_below, random_in, Ciphertext, KeyShare, PublicKey};

/// Which relation the initiator secretly evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Functionality {
    /// `x >= y`, with `d = x - y`.
    Geq,
    /// `y >= x + 1`, with `d = y - x - 1`.
    Lt,
}

/// How the per-round blinds `r_i` are drawn.
#[derive(Clone, Debug, Default)]
pub enum Blinding {
    /// Uniform in `[0, N)`.
    #[default]
    Uniform,
    /// Uniform in `[0, N - 2^(m+1))`, which rules out wraparound. Test mode.
    OverflowFree,
    /// Exactly these values, one per round. Test mode.
    Scripted(Vec<Integer>),
}

#[derive(Clone, Debug, Default)]
pub struct ScOptions {
    /// Forces the coin flip. `None` flips a fair coin.
    pub functionality: Option<Functionality>,
    pub blinding: Blinding,
}

/// Next message from the initiator.
#[derive(Clone, Debug)]
pub enum ScStep {
    /// `tau_i`, to be answered with a parity ciphertext.
    Tau(DecryptRequest),
    /// `G'`, to be answered with `E(c')`.
    Final(DecryptRequest),
}

/// `E(c)` with `c = [x >= y]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComparisonResult {
    pub ciphertext: Ciphertext,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Looping,
    AwaitingResult,
}

/// Initiator state. Owns one comparison; not shareable between threads
/// while in flight, but may be moved.
#[derive(Clone, Debug)]
pub struct ScInitiator {
    pk: PublicKey,
    assist: Option<KeyShare>,
    functionality: Functionality,
    difference: Ciphertext,
    delta: Ciphertext,
    low_bits: Ciphertext,
    half: Integer,
    iteration: u32,
    blind_odd: bool,
    bits: u32,
    blinding: Blinding,
    phase: Phase,
}

impl ScInitiator {
    /// Computes `E(d)` for the chosen functionality and emits `tau_1`.
    ///
    /// `assist` is share 1 in the threshold setting; its partial is attached
    /// to every outgoing request.
    pub fn start<R: RngCore + CryptoRng + ?Sized>(
        pk: &PublicKey,
        ex: &Ciphertext,
        ey: &Ciphertext,
        bits: u32,
        assist: Option<&KeyShare>,
        options: ScOptions,
        rng: &mut R,
    ) -> Result<(Self, DecryptRequest)> {
        if bits == 0 {
            return Err(ProtocolError::EmptyDomain);
        }
        if bits + 2 >= pk.bits() {
            return Err(ProtocolError::DomainTooWide { bits, key_bits: pk.bits() });
        }
        if let Blinding::Scripted(values) = &options.blinding {
            if values.len() != bits as usize {
                return Err(ProtocolError::ScriptLength { expected: bits as usize, got: values.len() });
            }
        }
        let functionality = options.functionality.unwrap_or_else(|| {
            if rng.gen::<bool>() {
                Functionality::Geq
            } else {
                Functionality::Lt
            }
        });
        let difference = match functionality {
            Functionality::Geq => pk.sub(ex, ey),
            Functionality::Lt => pk.add_plain(&pk.sub(ey, ex), &Integer::from(-1)),
        };
        let half = Integer::from(pk.modulus() + 1) >> 1u32;
        let mut state = ScInitiator {
            pk: pk.clone(),
            assist: assist.cloned(),
            functionality,
            delta: difference.clone(),
            difference,
            low_bits: pk.encrypt_trivial(&Integer::new()),
            half,
            iteration: 1,
            blind_odd: false,
            bits,
            blinding: options.blinding,
            phase: Phase::Looping,
        };
        let tau = state.blinded_delta(rng)?;
        Ok((state, tau))
    }

    fn next_blind<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> Integer {
        match &self.blinding {
            Blinding::Uniform => random_below(self.pk.modulus(), rng),
            Blinding::OverflowFree => {
                let bound = Integer::from(self.pk.modulus() - (Integer::from(1) << (self.bits + 1)));
                random_below(&bound, rng)
            }
            Blinding::Scripted(values) => values[self.iteration as usize - 1].clone(),
        }
    }

    /// `tau_i = delta * E(r_i)`; only the parity of `r_i` is kept.
    fn blinded_delta<R: RngCore + CryptoRng + ?Sized>(&mut self, rng: &mut R) -> Result<DecryptRequest> {
        let r = self.next_blind(rng);
        self.blind_odd = r.is_odd();
        let tau = self.pk.add(&self.delta, &self.pk.encrypt(&r, rng)?);
        DecryptRequest::new(tau, self.assist.as_ref())
    }

    /// Consumes the responder's parity ciphertext `s_i`.
    pub fn on_s<R: RngCore + CryptoRng + ?Sized>(&mut self, s: &Ciphertext, rng: &mut R) -> Result<ScStep> {
        if self.phase != Phase::Looping {
            return Err(ProtocolError::OutOfOrder("parity after the last round"));
        }
        let pk = &self.pk;
        let s = pk.ciphertext(s.value().clone())?;
        // E(d_i) = s_i when r_i is even, E(1 - s_i) otherwise.
        let bit = if self.blind_odd { pk.add_plain(&pk.neg(&s), &Integer::from(1)) } else { s };
        let weight = Integer::from(1) << (self.iteration - 1);
        self.low_bits = pk.add(&self.low_bits, &pk.scalar_mul(&bit, &weight)?);
        let even = pk.sub(&self.delta, &bit);
        self.delta = pk.pow(&even, &self.half);

        if self.iteration < self.bits {
            self.iteration += 1;
            return Ok(ScStep::Tau(self.blinded_delta(rng)?));
        }
        let gap = pk.sub(&self.difference, &self.low_bits);
        let r = random_in(&Integer::from(1), pk.modulus(), rng);
        let g = pk.pow(&gap, &r);
        self.phase = Phase::AwaitingResult;
        Ok(ScStep::Final(DecryptRequest::new(g, self.assist.as_ref())?))
    }

    /// Consumes `E(c')` and undoes the coin flip.
    pub fn finish(self, c_prime: &Ciphertext) -> Result<ComparisonResult> {
        if self.phase != Phase::AwaitingResult {
            return Err(ProtocolError::OutOfOrder("result before the final round"));
        }
        let c_prime = self.pk.ciphertext(c_prime.value().clone())?;
        let ciphertext = match self.functionality {
            Functionality::Geq => c_prime,
            Functionality::Lt => self.pk.add_plain(&self.pk.neg(&c_prime), &Integer::from(1)),
        };
        Ok(ComparisonResult { ciphertext })
    }

    pub fn functionality(&self) -> Functionality {
        self.functionality
    }

    /// `E(d)`.
    pub fn difference(&self) -> &Ciphertext {
        &self.difference
    }

    /// `E(floor(d / 2^i))` after round `i`.
    pub fn delta(&self) -> &Ciphertext {
        &self.delta
    }

    /// `E(d mod 2^i)` after round `i`.
    pub fn low_bits(&self) -> &Ciphertext {
        &self.low_bits
    }

    /// The round whose `tau` is outstanding (1-based).
    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }
}

/// Round bookkeeping on the responder side: `m` parity rounds, then one
/// final round.
#[derive(Clone, Debug)]
pub struct ScResponderState {
    bits: u32,
    answered: u32,
    finished: bool,
}

impl ScResponderState {
    pub fn new(bits: u32) -> Self {
        ScResponderState { bits, answered: 0, finished: false }
    }

    pub fn accept_tau(&mut self) -> Result<()> {
        if self.finished || self.answered >= self.bits {
            return Err(ProtocolError::OutOfOrder("more parity rounds than domain bits"));
        }
        self.answered += 1;
        Ok(())
    }

    pub fn accept_final(&mut self) -> Result<()> {
        if self.finished || self.answered != self.bits {
            return Err(ProtocolError::OutOfOrder("final round before all parity rounds"));
        }
        self.finished = true;
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }
}

/// Runs both roles of one comparison in-process.
#[allow(clippy::too_many_arguments)]
pub fn compare_local<R: RngCore + CryptoRng + ?Sized>(
    pk: &PublicKey,
    responder: &Responder,
    ex: &Ciphertext,
    ey: &Ciphertext,
    bits: u32,
    assist: Option<&KeyShare>,
    options: ScOptions,
    rng: &mut R,
) -> Result<ComparisonResult> {
    let (mut p1, mut request) = ScInitiator::start(pk, ex, ey, bits, assist, options, rng)?;
    loop {
        let s = responder.on_tau(&request, rng)?;
        match p1.on_s(&s, rng)? {
            ScStep::Tau(next) => request = next,
            ScStep::Final(g) => {
                let c_prime = responder.on_final(&g, rng)?;
                return p1.finish(&c_prime);
            }
        }
    }
}
