use proptest::prelude::*;
use rug::Integer;

use super::*;
use crate::test_keys::{rng, shares, standard};

fn int(v: u64) -> Integer {
    Integer::from(v)
}

#[test]
fn keygen_roundtrip_and_modulus_size() {
    let (pk, sk) = standard();
    assert_eq!(pk.bits(), 512);
    assert!(pk.modulus().is_odd());
    let mut r = rng(1);
    let c = pk.encrypt_u64(42, &mut r).unwrap();
    assert_eq!(sk.decrypt(&c).unwrap(), 42);
}

#[test]
fn keygen_1024_has_exact_length() {
    let (pk, _) = keygen(1024, &mut rng(2)).unwrap();
    assert_eq!(pk.modulus().significant_bits(), 1024);
    assert_eq!(pk.ciphertext_len(), 256);
}

#[test]
fn keygen_twice_gives_distinct_moduli() {
    let (a, _) = keygen(512, &mut rng(3)).unwrap();
    let (b, _) = keygen(512, &mut rng(4)).unwrap();
    assert_ne!(a.modulus(), b.modulus());
}

#[test]
fn keygen_rejects_unsupported_sizes() {
    for bits in [256, 768, 1023, 4096] {
        assert_eq!(keygen(bits, &mut rng(5)).unwrap_err(), PaillierError::UnsupportedBits(bits));
    }
}

#[test]
fn encrypt_decrypt_edges() {
    let (pk, sk) = standard();
    let mut r = rng(6);
    let n_minus_1 = Integer::from(pk.modulus() - 1);
    assert_eq!(sk.decrypt(&pk.encrypt_u64(0, &mut r).unwrap()).unwrap(), 0);
    assert_eq!(sk.decrypt(&pk.encrypt_u64(7, &mut r).unwrap()).unwrap(), 7);
    assert_eq!(sk.decrypt(&pk.encrypt(&n_minus_1, &mut r).unwrap()).unwrap(), n_minus_1);
    assert_eq!(pk.encrypt(pk.modulus(), &mut r).unwrap_err(), PaillierError::PlaintextOutOfRange);
    assert_eq!(pk.encrypt(&Integer::from(-1), &mut r).unwrap_err(), PaillierError::PlaintextOutOfRange);
}

#[test]
fn encryption_matches_closed_form_under_fixed_nonce() {
    let (pk, _) = standard();
    let nonce = int(123_456_789);
    let a = pk.encrypt_with_nonce(&int(5), &nonce).unwrap();
    let b = pk.encrypt_with_nonce(&int(5), &nonce).unwrap();
    assert_eq!(a, b);
    let n2 = pk.modulus_squared();
    let expected = (Integer::from(pk.modulus() * 5u32) + 1u32) * Integer::from(nonce.pow_mod_ref(pk.modulus(), n2).unwrap()) % n2;
    assert_eq!(a.value(), &expected);
}

#[test]
fn fresh_encryptions_differ() {
    let (pk, _) = standard();
    let mut r = rng(7);
    assert_ne!(pk.encrypt_u64(5, &mut r).unwrap(), pk.encrypt_u64(5, &mut r).unwrap());
}

#[test]
fn bad_nonces_rejected() {
    let (pk, sk) = standard();
    let (p, _) = sk.primes();
    for nonce in [Integer::new(), pk.modulus().clone(), p.clone()] {
        assert_eq!(pk.encrypt_with_nonce(&int(1), &nonce).unwrap_err(), PaillierError::InvalidNonce);
    }
}

#[test]
fn malformed_ciphertexts_rejected() {
    let (pk, sk) = standard();
    let (p, _) = sk.primes();
    assert!(pk.ciphertext(Integer::new()).is_err());
    assert!(pk.ciphertext(pk.modulus_squared().clone()).is_err());
    let multiple_of_p = Ciphertext::from_raw(Integer::from(p * 3u32));
    assert!(matches!(sk.decrypt(&multiple_of_p), Err(PaillierError::MalformedCiphertext(_))));
}

#[test]
fn homomorphic_examples() {
    let (pk, sk) = standard();
    let mut r = rng(8);
    let e = |v: u64, r: &mut _| pk.encrypt_u64(v, r).unwrap();
    let n = pk.modulus();
    let n_minus_1 = Integer::from(n - 1);

    assert_eq!(sk.decrypt(&pk.add(&e(2, &mut r), &e(3, &mut r))).unwrap(), 5);
    assert_eq!(sk.decrypt(&pk.add(&e(11, &mut r), &e(0, &mut r))).unwrap(), 11);
    let wrap = pk.add(&pk.encrypt(&n_minus_1, &mut r).unwrap(), &e(2, &mut r));
    assert_eq!(sk.decrypt(&wrap).unwrap(), 1);

    assert_eq!(sk.decrypt(&pk.scalar_mul(&e(3, &mut r), &int(4)).unwrap()).unwrap(), 12);
    assert_eq!(sk.decrypt(&pk.scalar_mul(&e(9, &mut r), &int(1)).unwrap()).unwrap(), 9);
    let negated = pk.scalar_mul(&e(9, &mut r), &n_minus_1).unwrap();
    assert_eq!(sk.decrypt(&negated).unwrap(), Integer::from(n - 9));
    assert_eq!(pk.scalar_mul(&e(1, &mut r), n).unwrap_err(), PaillierError::ScalarOutOfRange);

    assert_eq!(sk.decrypt(&pk.neg(&e(9, &mut r))).unwrap(), Integer::from(n - 9));
    assert_eq!(sk.decrypt(&pk.sub(&e(9, &mut r), &e(4, &mut r))).unwrap(), 5);
    assert_eq!(sk.decrypt(&pk.add_plain(&e(9, &mut r), &int(4))).unwrap(), 13);
    assert_eq!(sk.decrypt(&pk.add_plain(&e(9, &mut r), &Integer::from(-10))).unwrap(), Integer::from(n - 1));
}

#[test]
fn thousand_random_additions_match_plaintext_sum() {
    let (pk, sk) = standard();
    let mut r = rng(9);
    let n = pk.modulus();
    for _ in 0..1000 {
        let a = random_below(n, &mut r);
        let b = random_below(n, &mut r);
        let c = pk.add(&pk.encrypt(&a, &mut r).unwrap(), &pk.encrypt(&b, &mut r).unwrap());
        assert_eq!(sk.decrypt(&c).unwrap(), Integer::from(&a + &b) % n);
    }
}

#[test]
fn crt_and_textbook_decryption_agree() {
    let (pk, sk) = standard();
    let mut r = rng(10);
    for _ in 0..100 {
        let m = random_below(pk.modulus(), &mut r);
        let c = pk.encrypt(&m, &mut r).unwrap();
        assert_eq!(sk.decrypt(&c).unwrap(), m);
        assert_eq!(sk.decrypt_textbook(&c).unwrap(), m);
    }
}

#[test]
fn secret_key_encryption_is_well_formed() {
    let (pk, sk) = standard();
    let mut r = rng(11);
    let n2 = pk.modulus_squared();
    for v in [0u64, 1, 99] {
        let c = sk.encrypt(&int(v), &mut r).unwrap();
        assert_eq!(sk.decrypt_textbook(&c).unwrap(), v);
        // c / (1 + vN) must be an N-th residue: raising it to lambda gives 1.
        let unit = pk.add_plain(&c, &Integer::from(-(v as i64)));
        assert_eq!(Integer::from(unit.value().pow_mod_ref(sk.lambda(), n2).unwrap()), 1);
    }
    assert_ne!(sk.encrypt(&int(1), &mut r).unwrap(), sk.encrypt(&int(1), &mut r).unwrap());
}

#[test]
fn threshold_roundtrip_and_cross_check() {
    let (pk, sk) = standard();
    let (s1, s2) = shares();
    let mut r = rng(12);
    let c = pk.encrypt_u64(9, &mut r).unwrap();
    let got = combine(pk, &s1.partial_decrypt(&c).unwrap(), &s2.partial_decrypt(&c).unwrap()).unwrap();
    assert_eq!(got, 9);
    for _ in 0..1000 {
        let m = random_below(pk.modulus(), &mut r);
        let c = pk.encrypt(&m, &mut r).unwrap();
        let joint = s2.finish_decrypt(&c, &s1.partial_decrypt(&c).unwrap()).unwrap();
        assert_eq!(joint, sk.decrypt(&c).unwrap());
    }
}

#[test]
fn share_invariant_holds() {
    let (pk, sk) = standard();
    let (s1, s2) = shares();
    let d = Integer::from(s1.exponent() + s2.exponent());
    assert!(d.is_divisible(sk.lambda()));
    assert_eq!(d % pk.modulus(), 1);
}

#[test]
fn single_partial_depends_on_nonce() {
    let (pk, _) = standard();
    let (s1, _) = shares();
    let mut r = rng(13);
    let a = s1.partial_decrypt(&pk.encrypt_u64(17, &mut r).unwrap()).unwrap();
    let b = s1.partial_decrypt(&pk.encrypt_u64(17, &mut r).unwrap()).unwrap();
    assert_ne!(a.value, b.value);
}

#[test]
fn combine_rejects_bad_partials() {
    let (pk, _) = standard();
    let (s1, s2) = shares();
    let mut r = rng(14);
    let c = pk.encrypt_u64(3, &mut r).unwrap();
    let d = pk.encrypt_u64(3, &mut r).unwrap();
    let p1 = s1.partial_decrypt(&c).unwrap();
    assert_eq!(combine(pk, &p1, &p1).unwrap_err(), PaillierError::DuplicateShare(1));
    let q2 = s2.partial_decrypt(&d).unwrap();
    assert_eq!(combine(pk, &p1, &q2).unwrap_err(), PaillierError::InconsistentPartials);
}

#[test]
fn key_files_roundtrip() {
    let (pk, sk) = standard();
    let (s1, s2) = shares();
    for file in [
        KeyFile::Public(pk.clone()),
        KeyFile::Secret(sk.clone()),
        KeyFile::Share(s1.clone()),
        KeyFile::Share(s2.clone()),
    ] {
        let bytes = file.to_bytes();
        assert_eq!(&bytes[..4], b"PPQK");
        assert_eq!(&bytes[4..6], &[0, 1]);
        assert_eq!(bytes[6], file.role() as u8);
        assert_eq!(KeyFile::from_bytes(&bytes).unwrap(), file);
    }
    let mut bytes = KeyFile::Public(pk.clone()).to_bytes();
    bytes[0] = b'X';
    assert!(KeyFile::from_bytes(&bytes).is_err());
    let bytes = KeyFile::Secret(sk.clone()).to_bytes();
    assert!(KeyFile::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_mul_matches_plaintext_product(a in any::<u64>(), u in any::<u64>(), seed in any::<u64>()) {
        let (pk, sk) = standard();
        let mut r = rng(seed);
        let c = pk.scalar_mul(&pk.encrypt_u64(a, &mut r).unwrap(), &int(u)).unwrap();
        prop_assert_eq!(sk.decrypt(&c).unwrap(), Integer::from(a) * u % pk.modulus());
    }

    #[test]
    fn ciphertext_bytes_roundtrip(m in any::<u64>(), seed in any::<u64>()) {
        let (pk, _) = standard();
        let c = pk.encrypt_u64(m, &mut rng(seed)).unwrap();
        let bytes = pk.ciphertext_to_bytes(&c);
        prop_assert_eq!(bytes.len(), 128);
        prop_assert_eq!(pk.ciphertext_from_bytes(&bytes).unwrap(), c);
    }
}
