//! Timing and correctness harness for the comparison protocol, run
//! in-process against a local responder.

use std::time::{Duration, Instant};

use rand::{CryptoRng, RngCore};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use rug::Integer;

use crate::paillier::{random_below, SecretKey};
use crate::pprq::fork_rngs;
use crate::protocol::{compare_local, DecryptionKey, ProtocolError, Responder, ScOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct ScBench {
    pub domain_bits: u32,
    pub key_bits: u32,
    pub trials: usize,
    /// Mean wall time of one comparison, inputs encrypted beforehand.
    pub mean: Duration,
    pub correct: usize,
    /// Probability that every extracted bit is right, `(1 - 2^(m-K))^m`.
    pub analytic: f64,
}

impl ScBench {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            return 1.0;
        }
        self.correct as f64 / self.trials as f64
    }
}

/// `(1 - 2^(m-K))^m`, evaluated as `exp(m * ln(1 - 2^(m-K)))` so that tiny
/// failure probabilities do not vanish in the subtraction.
pub fn analytic_success(domain_bits: u32, key_bits: u32) -> f64 {
    let p = 2f64.powi(domain_bits as i32 - key_bits as i32);
    if p >= 1.0 {
        return 0.0;
    }
    (domain_bits as f64 * (-p).ln_1p()).exp()
}

/// Runs `trials` comparisons on uniform `x, y < 2^m`. Timed runs go one at a
/// time; with `parallel` set only the correct count is meaningful and
/// `mean` is the wall time divided by the trial count.
pub fn run_sc_bench<R: RngCore + CryptoRng + ?Sized>(
    sk: &SecretKey,
    domain_bits: u32,
    trials: usize,
    parallel: bool,
    rng: &mut R,
) -> Result<ScBench, ProtocolError> {
    let pk = sk.public_key();
    let responder = Responder::new(DecryptionKey::Secret(sk.clone()));
    let bound = Integer::from(1) << domain_bits;
    let one = |rng: &mut ChaCha20Rng| -> Result<(bool, Duration), ProtocolError> {
        let x = random_below(&bound, rng);
        let y = random_below(&bound, rng);
        let ex = pk.encrypt(&x, rng)?;
        let ey = pk.encrypt(&y, rng)?;
        let start = Instant::now();
        let result = compare_local(pk, &responder, &ex, &ey, domain_bits, None, ScOptions::default(), rng)?;
        let elapsed = start.elapsed();
        let bit = sk.decrypt(&result.ciphertext)?;
        Ok((bit == u32::from(x >= y), elapsed))
    };

    let rngs = fork_rngs(rng, trials);
    let start = Instant::now();
    let runs: Vec<(bool, Duration)> = if parallel {
        rngs.into_par_iter().map(|mut r| one(&mut r)).collect::<Result<_, _>>()?
    } else {
        rngs.into_iter().map(|mut r| one(&mut r)).collect::<Result<_, _>>()?
    };
    let wall = start.elapsed();
    let correct = runs.iter().filter(|(ok, _)| *ok).count();
    let mean = if trials == 0 {
        Duration::ZERO
    } else if parallel {
        wall / trials as u32
    } else {
        runs.iter().map(|(_, d)| *d).sum::<Duration>() / trials as u32
    };
    Ok(ScBench { domain_bits, key_bits: pk.bits(), trials, mean, correct, analytic: analytic_success(domain_bits, pk.bits()) })
}
