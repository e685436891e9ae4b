use rand::{CryptoRng, RngCore};
use rug::integer::{IsPrime, Order};
use rug::Integer;

use super::{byte_len, random_below, reduce, Ciphertext, PaillierError, Result};

/// Modulus sizes accepted by [`keygen`] and by key loading.
pub const SUPPORTED_BITS: [u32; 3] = [512, 1024, 2048];

/// Default modulus size for production keys.
pub const DEFAULT_BITS: u32 = 1024;

/// Miller-Rabin rounds for prime generation; error probability at most
/// `4^-64 = 2^-128` per accepted candidate.
pub const MIN_PRIME_CHECKS: u32 = 64;

/// Paillier public key `(N, g = N + 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    n: Integer,
    n_squared: Integer,
    bits: u32,
}

impl PublicKey {
    /// Builds a public key from its modulus. `N` must be odd and have one of
    /// the [`SUPPORTED_BITS`] lengths.
    pub fn from_modulus(n: Integer) -> Result<Self> {
        let bits = n.significant_bits();
        if !SUPPORTED_BITS.contains(&bits) {
            return Err(PaillierError::UnsupportedBits(bits));
        }
        if n.is_even() {
            return Err(PaillierError::InvalidKey("modulus is even".into()));
        }
        let n_squared = Integer::from(n.square_ref());
        Ok(PublicKey { n, n_squared, bits })
    }

    pub fn modulus(&self) -> &Integer {
        &self.n
    }

    pub fn modulus_squared(&self) -> &Integer {
        &self.n_squared
    }

    /// Bit length `K` of `N`.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn generator(&self) -> Integer {
        Integer::from(&self.n + 1)
    }

    /// Encoded width of a ciphertext: `ceil(2K / 8)` bytes.
    pub fn ciphertext_len(&self) -> usize {
        byte_len(2 * self.bits)
    }

    /// Encoded width of a plaintext or residue modulo `N`: `ceil(K / 8)` bytes.
    pub fn residue_len(&self) -> usize {
        byte_len(self.bits)
    }

    /// Validates `value` as a ciphertext: `0 < value < N^2` and coprime to `N`.
    pub fn ciphertext(&self, value: Integer) -> Result<Ciphertext> {
        if value <= 0 || value >= self.n_squared {
            return Err(PaillierError::MalformedCiphertext("outside (0, N^2)"));
        }
        if Integer::from(value.gcd_ref(&self.n)) != 1 {
            return Err(PaillierError::MalformedCiphertext("not coprime to N"));
        }
        Ok(Ciphertext(value))
    }

    pub fn ciphertext_from_bytes(&self, bytes: &[u8]) -> Result<Ciphertext> {
        let expected = self.ciphertext_len();
        if bytes.len() != expected {
            return Err(PaillierError::Length { expected, actual: bytes.len() });
        }
        self.ciphertext(Integer::from_digits(bytes, Order::Msf))
    }

    pub fn ciphertext_to_bytes(&self, c: &Ciphertext) -> Vec<u8> {
        super::to_fixed_bytes(c.value(), self.ciphertext_len())
    }

    fn check_plaintext(&self, m: &Integer) -> Result<()> {
        if *m < 0 || *m >= self.n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        Ok(())
    }

    /// `(1 + m N) mod N^2`, the deterministic part of an encryption of `m`.
    fn encode(&self, m: &Integer) -> Integer {
        let mut g_m = Integer::from(m * &self.n);
        g_m += 1;
        g_m
    }

    /// A fresh nonce in `(0, N)`, coprime to `N`.
    pub fn random_nonce<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> Integer {
        loop {
            let r = random_below(&self.n, rng);
            if r != 0 && Integer::from(r.gcd_ref(&self.n)) == 1 {
                return r;
            }
        }
    }

    pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(&self, m: &Integer, rng: &mut R) -> Result<Ciphertext> {
        self.check_plaintext(m)?;
        let nonce = self.random_nonce(rng);
        Ok(self.encrypt_unchecked(m, &nonce))
    }

    /// Encrypts with a caller-chosen nonce: `(1 + m N) * nonce^N mod N^2`.
    pub fn encrypt_with_nonce(&self, m: &Integer, nonce: &Integer) -> Result<Ciphertext> {
        self.check_plaintext(m)?;
        if *nonce <= 0 || *nonce >= self.n || Integer::from(nonce.gcd_ref(&self.n)) != 1 {
            return Err(PaillierError::InvalidNonce);
        }
        Ok(self.encrypt_unchecked(m, nonce))
    }

    fn encrypt_unchecked(&self, m: &Integer, nonce: &Integer) -> Ciphertext {
        let r_n = Integer::from(nonce.pow_mod_ref(&self.n, &self.n_squared).expect("modulus is positive"));
        let mut c = self.encode(m) * r_n;
        c %= &self.n_squared;
        Ciphertext(c)
    }

    /// Convenience for small plaintexts.
    pub fn encrypt_u64<R: RngCore + CryptoRng + ?Sized>(&self, m: u64, rng: &mut R) -> Result<Ciphertext> {
        self.encrypt(&Integer::from(m), rng)
    }

    /// Deterministic encryption with nonce 1. Only meaningful when combined
    /// with a ciphertext that already carries fresh randomness.
    pub fn encrypt_trivial(&self, m: &Integer) -> Ciphertext {
        let m = reduce(m.clone(), &self.n);
        Ciphertext(self.encode(&m))
    }

    /// Homomorphic addition: decrypts to `a + b mod N`.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        let mut c = Integer::from(&a.0 * &b.0);
        c %= &self.n_squared;
        Ciphertext(c)
    }

    /// Homomorphic negation via the inverse modulo `N^2`; decrypts to `-a mod N`.
    pub fn neg(&self, a: &Ciphertext) -> Ciphertext {
        let inv = Integer::from(a.0.invert_ref(&self.n_squared).expect("ciphertexts are units mod N^2"));
        Ciphertext(inv)
    }

    /// Homomorphic subtraction: decrypts to `a - b mod N`.
    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.add(a, &self.neg(b))
    }

    /// Homomorphic scalar multiplication `c^u mod N^2`; decrypts to `a * u mod N`.
    pub fn scalar_mul(&self, c: &Ciphertext, u: &Integer) -> Result<Ciphertext> {
        if *u < 0 || *u >= self.n {
            return Err(PaillierError::ScalarOutOfRange);
        }
        Ok(self.pow(c, u))
    }

    pub(crate) fn pow(&self, c: &Ciphertext, u: &Integer) -> Ciphertext {
        Ciphertext(Integer::from(c.0.pow_mod_ref(u, &self.n_squared).expect("exponent is non-negative")))
    }

    /// Adds a known plaintext without fresh randomness: `c * (1 + k N)`.
    /// `k` is reduced modulo `N`, so negative offsets are allowed.
    pub fn add_plain(&self, c: &Ciphertext, k: &Integer) -> Ciphertext {
        let k = reduce(k.clone(), &self.n);
        let mut out = self.encode(&k) * &c.0;
        out %= &self.n_squared;
        Ciphertext(out)
    }

    /// Multiplies in a fresh encryption of zero.
    pub fn rerandomize<R: RngCore + CryptoRng + ?Sized>(&self, c: &Ciphertext, rng: &mut R) -> Ciphertext {
        let zero = self.encrypt_unchecked(&Integer::new(), &self.random_nonce(rng));
        self.add(c, &zero)
    }

    /// `L(u) = (u - 1) / N`.
    pub(crate) fn l_function(&self, u: &Integer) -> Integer {
        let mut v = Integer::from(u - 1);
        v /= &self.n;
        v
    }
}

/// Paillier secret key. Holds the factorization so decryption and
/// encryption can run modulo `p^2` and `q^2` separately.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    public: PublicKey,
    p: Integer,
    q: Integer,
    lambda: Integer,
    mu: Integer,
    p_squared: Integer,
    q_squared: Integer,
    p_minus_one: Integer,
    q_minus_one: Integer,
    h_p: Integer,
    h_q: Integer,
    q_inv_mod_p: Integer,
    q_squared_inv_mod_p_squared: Integer,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey").field("bits", &self.public.bits).finish_non_exhaustive()
    }
}

impl SecretKey {
    /// Rebuilds a key from two distinct primes of equal length.
    pub fn from_primes(p: Integer, q: Integer) -> Result<Self> {
        if p == q {
            return Err(PaillierError::InvalidKey("p and q must differ".into()));
        }
        if p.significant_bits() != q.significant_bits() {
            return Err(PaillierError::InvalidKey("p and q must have equal length".into()));
        }
        for f in [&p, &q] {
            if f.is_probably_prime(MIN_PRIME_CHECKS) == IsPrime::No {
                return Err(PaillierError::InvalidKey("factor is not prime".into()));
            }
        }
        let n = Integer::from(&p * &q);
        let public = PublicKey::from_modulus(n)?;
        let p_minus_one = Integer::from(&p - 1);
        let q_minus_one = Integer::from(&q - 1);
        let lambda = p_minus_one.clone().lcm(&q_minus_one);
        if Integer::from(lambda.gcd_ref(public.modulus())) != 1 {
            return Err(PaillierError::InvalidKey("gcd(lambda, N) != 1".into()));
        }
        let g_lambda = Integer::from(public.generator().pow_mod_ref(&lambda, public.modulus_squared()).unwrap());
        let mu = public
            .l_function(&g_lambda)
            .invert(public.modulus())
            .map_err(|_| PaillierError::InvalidKey("L(g^lambda) not invertible".into()))?;

        let p_squared = Integer::from(p.square_ref());
        let q_squared = Integer::from(q.square_ref());
        let h = |prime: &Integer, prime_sq: &Integer, exp: &Integer| -> Result<Integer> {
            let g = Integer::from(public.generator().pow_mod_ref(exp, prime_sq).unwrap());
            let l = (g - 1u32) / prime;
            l.invert(prime).map_err(|_| PaillierError::InvalidKey("CRT constant not invertible".into()))
        };
        let h_p = h(&p, &p_squared, &p_minus_one)?;
        let h_q = h(&q, &q_squared, &q_minus_one)?;
        let q_inv_mod_p = Integer::from(q.invert_ref(&p).expect("distinct primes"));
        let q_squared_inv_mod_p_squared = Integer::from(q_squared.invert_ref(&p_squared).expect("distinct primes"));

        Ok(SecretKey {
            public,
            p,
            q,
            lambda,
            mu,
            p_squared,
            q_squared,
            p_minus_one,
            q_minus_one,
            h_p,
            h_q,
            q_inv_mod_p,
            q_squared_inv_mod_p_squared,
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn lambda(&self) -> &Integer {
        &self.lambda
    }

    pub fn mu(&self) -> &Integer {
        &self.mu
    }

    pub fn primes(&self) -> (&Integer, &Integer) {
        (&self.p, &self.q)
    }

    fn check(&self, c: &Ciphertext) -> Result<()> {
        self.public.ciphertext(c.value().clone()).map(|_| ())
    }

    /// Decrypts with CRT over `p^2` and `q^2`.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<Integer> {
        self.check(c)?;
        let half = |prime: &Integer, prime_sq: &Integer, exp: &Integer, h: &Integer| {
            let u = Integer::from(c.value().pow_mod_ref(exp, prime_sq).unwrap());
            let l = (u - 1u32) / prime;
            (l * h) % prime
        };
        let m_p = half(&self.p, &self.p_squared, &self.p_minus_one, &self.h_p);
        let m_q = half(&self.q, &self.q_squared, &self.q_minus_one, &self.h_q);
        // m = m_q + q * ((m_p - m_q) * q^-1 mod p)
        let t = reduce((m_p - &m_q) * &self.q_inv_mod_p, &self.p);
        Ok(t * &self.q + m_q)
    }

    /// `L(c^lambda mod N^2) * mu mod N`, without CRT.
    pub fn decrypt_textbook(&self, c: &Ciphertext) -> Result<Integer> {
        self.check(c)?;
        let u = Integer::from(c.value().pow_mod_ref(&self.lambda, self.public.modulus_squared()).unwrap());
        Ok((self.public.l_function(&u) * &self.mu) % self.public.modulus())
    }

    /// A uniform `N`-th residue modulo `N^2`, i.e. `rho^N` for uniform `rho`,
    /// computed as `u^p mod p^2` and `v^q mod q^2` joined by CRT.
    pub fn random_nth_residue<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> Integer {
        let part = |prime: &Integer, prime_sq: &Integer, rng: &mut R| loop {
            let u = random_below(prime_sq, rng);
            if !u.is_divisible(prime) {
                break Integer::from(u.pow_mod_ref(prime, prime_sq).unwrap());
            }
        };
        let a = part(&self.p, &self.p_squared, rng);
        let b = part(&self.q, &self.q_squared, rng);
        let t = reduce((a - &b) * &self.q_squared_inv_mod_p_squared, &self.p_squared);
        t * &self.q_squared + b
    }

    /// Encryption using the factorization; same distribution as
    /// [`PublicKey::encrypt`] at roughly a quarter of the cost.
    pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(&self, m: &Integer, rng: &mut R) -> Result<Ciphertext> {
        self.public.check_plaintext(m)?;
        let mut c = self.public.encode(m) * self.random_nth_residue(rng);
        c %= self.public.modulus_squared();
        Ok(Ciphertext(c))
    }
}

fn random_prime<R: RngCore + CryptoRng + ?Sized>(bits: u32, rng: &mut R) -> Integer {
    let len = byte_len(bits);
    let excess = len * 8 - bits as usize;
    let mut buf = vec![0u8; len];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xff >> excess;
        let mut candidate = Integer::from_digits(&buf, Order::Msf);
        // Top two bits set so that the product of two such primes has exactly 2*bits bits.
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if candidate.is_probably_prime(MIN_PRIME_CHECKS) != IsPrime::No {
            return candidate;
        }
    }
}

/// Generates a Paillier key pair with a `bits`-bit modulus.
pub fn keygen<R: RngCore + CryptoRng + ?Sized>(bits: u32, rng: &mut R) -> Result<(PublicKey, SecretKey)> {
    if !SUPPORTED_BITS.contains(&bits) {
        return Err(PaillierError::UnsupportedBits(bits));
    }
    loop {
        let p = random_prime(bits / 2, rng);
        let q = random_prime(bits / 2, rng);
        if p == q {
            continue;
        }
        match SecretKey::from_primes(p, q) {
            Ok(sk) => {
                debug_assert_eq!(sk.public.bits(), bits);
                return Ok((sk.public.clone(), sk));
            }
            Err(PaillierError::InvalidKey(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}
