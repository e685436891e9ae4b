use rand::Rng;
use rug::Integer;

use super::sc::{compare_local, ScInitiator};
use super::smp::multiply_local;
use super::*;
use crate::paillier::Ciphertext;
use crate::test_keys::{rng, shares, standard};

fn int(v: i64) -> Integer {
    Integer::from(v)
}

fn responder() -> Responder {
    Responder::new(DecryptionKey::Secret(standard().1.clone()))
}

fn threshold_responder() -> Responder {
    Responder::new(DecryptionKey::Share(shares().1.clone()))
}

fn enc(v: i64) -> Ciphertext {
    standard().0.encrypt(&int(v), &mut rng(v as u64 ^ 0xabc)).unwrap()
}

fn dec(c: &Ciphertext) -> Integer {
    standard().1.decrypt(c).unwrap()
}

fn forced(f: Functionality) -> ScOptions {
    ScOptions { functionality: Some(f), blinding: Blinding::Uniform }
}

fn request(c: Ciphertext) -> DecryptRequest {
    DecryptRequest { ciphertext: c, partial: None }
}

#[test]
fn walkthrough_x1_y5() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(1);
    let options = ScOptions {
        functionality: Some(Functionality::Lt),
        blinding: Blinding::Scripted(vec![int(2), int(40), int(1 << 20)]),
    };
    let (mut p1, tau) = ScInitiator::start(pk, &enc(1), &enc(5), 3, None, options, &mut r).unwrap();
    assert_eq!(dec(p1.difference()), 3);

    // tau'_1 = 3 + r_1 is odd
    let s1 = p2.on_tau(&tau, &mut r).unwrap();
    assert_eq!(dec(&s1), 1);
    let ScStep::Tau(tau) = p1.on_s(&s1, &mut r).unwrap() else { panic!("expected tau_2") };
    assert_eq!(dec(p1.low_bits()), 1);
    assert_eq!(dec(p1.delta()), 1);

    let s2 = p2.on_tau(&tau, &mut r).unwrap();
    assert_eq!(dec(&s2), 1);
    let ScStep::Tau(tau) = p1.on_s(&s2, &mut r).unwrap() else { panic!("expected tau_3") };
    assert_eq!(dec(p1.low_bits()), 3);
    assert_eq!(dec(p1.delta()), 0);

    let s3 = p2.on_tau(&tau, &mut r).unwrap();
    assert_eq!(dec(&s3), 0);
    let ScStep::Final(g) = p1.on_s(&s3, &mut r).unwrap() else { panic!("expected G'") };
    assert_eq!(dec(p1.low_bits()), 3);
    assert_eq!(dec(p1.delta()), 0);
    assert_eq!(dec(&g.ciphertext), 0);

    let c_prime = p2.on_final(&g, &mut r).unwrap();
    assert_eq!(dec(&c_prime), 1);
    let result = p1.finish(&c_prime).unwrap();
    assert_eq!(dec(&result.ciphertext), 0);
}

#[test]
fn difference_per_functionality() {
    let pk = &standard().0;
    let mut r = rng(2);
    let (p1, _) = ScInitiator::start(pk, &enc(6), &enc(6), 4, None, forced(Functionality::Geq), &mut r).unwrap();
    assert_eq!(dec(p1.difference()), 0);
    let (p1, _) = ScInitiator::start(pk, &enc(7), &enc(3), 4, None, forced(Functionality::Geq), &mut r).unwrap();
    assert_eq!(dec(p1.difference()), 4);
    // y >= x + 1 with x = 7, y = 3 gives d = -5
    let (p1, _) = ScInitiator::start(pk, &enc(7), &enc(3), 4, None, forced(Functionality::Lt), &mut r).unwrap();
    assert_eq!(dec(p1.difference()), Integer::from(pk.modulus() - 5));
}

#[test]
fn responder_parity() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(3);
    let n_minus_1 = Integer::from(pk.modulus() - 1);
    for (value, expected) in [(int(8), 0), (int(3), 1), (int(0), 0), (n_minus_1, 0)] {
        let tau = pk.encrypt(&value, &mut r).unwrap();
        let s = p2.on_tau(&request(tau), &mut r).unwrap();
        assert_eq!(dec(&s), expected, "parity of {value}");
    }
}

#[test]
fn responder_zero_test() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(4);
    for (value, expected) in [(int(0), 1), (int(1), 0), (int(123456), 0), (Integer::from(pk.modulus() - 1), 0)] {
        let g = pk.encrypt(&value, &mut r).unwrap();
        assert_eq!(dec(&p2.on_final(&request(g), &mut r).unwrap()), expected);
    }
}

#[test]
fn responder_answers_are_fresh() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(5);
    let tau = request(pk.encrypt(&int(4), &mut r).unwrap());
    let a = p2.on_tau(&tau, &mut r).unwrap();
    let b = p2.on_tau(&tau, &mut r).unwrap();
    assert_ne!(a, b);
}

#[test]
fn zero_difference_extracts_zero_bits() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(6);
    for m in [1, 5, 12] {
        let options = ScOptions { functionality: Some(Functionality::Geq), blinding: Blinding::OverflowFree };
        let (mut p1, mut tau) = ScInitiator::start(pk, &enc(9), &enc(9), m, None, options, &mut r).unwrap();
        loop {
            let s = p2.on_tau(&tau, &mut r).unwrap();
            match p1.on_s(&s, &mut r).unwrap() {
                ScStep::Tau(next) => {
                    assert_eq!(dec(p1.low_bits()), 0);
                    tau = next;
                }
                ScStep::Final(g) => {
                    assert_eq!(dec(&g.ciphertext), 0);
                    break;
                }
            }
        }
    }
}

#[test]
fn coin_flip_undone_at_finish() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(7);
    let one = pk.encrypt(&int(1), &mut r).unwrap();
    let zero = pk.encrypt(&int(0), &mut r).unwrap();

    let run_to_final = |f: Functionality, r: &mut _| {
        let (mut p1, mut tau) = ScInitiator::start(pk, &enc(2), &enc(1), 2, None, forced(f), r).unwrap();
        loop {
            let s = p2.on_tau(&tau, r).unwrap();
            match p1.on_s(&s, r).unwrap() {
                ScStep::Tau(next) => tau = next,
                ScStep::Final(_) => return p1,
            }
        }
    };
    let geq = run_to_final(Functionality::Geq, &mut r);
    assert_eq!(dec(&geq.clone().finish(&one).unwrap().ciphertext), 1);
    assert_eq!(dec(&geq.finish(&zero).unwrap().ciphertext), 0);
    let lt = run_to_final(Functionality::Lt, &mut r);
    assert_eq!(dec(&lt.clone().finish(&one).unwrap().ciphertext), 0);
    assert_eq!(dec(&lt.finish(&zero).unwrap().ciphertext), 1);
}

#[test]
fn full_run_x7_y3() {
    let pk = &standard().0;
    let mut r = rng(8);
    for f in [None, Some(Functionality::Geq), Some(Functionality::Lt)] {
        let options = ScOptions { functionality: f, blinding: Blinding::Uniform };
        let c = compare_local(pk, &responder(), &enc(7), &enc(3), 4, None, options.clone(), &mut r).unwrap();
        assert_eq!(dec(&c.ciphertext), 1);
        let c = compare_local(pk, &responder(), &enc(3), &enc(7), 4, None, options, &mut r).unwrap();
        assert_eq!(dec(&c.ciphertext), 0);
    }
}

#[test]
fn random_pairs_match_plaintext_comparison() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(9);
    for _ in 0..40 {
        let m = r.gen_range(1..=24u32);
        let x: i64 = r.gen_range(0..1i64 << m);
        let y: i64 = if r.gen_bool(0.2) { x } else { r.gen_range(0..1i64 << m) };
        let c = compare_local(pk, &p2, &enc(x), &enc(y), m, None, ScOptions::default(), &mut r).unwrap();
        assert_eq!(dec(&c.ciphertext), (x >= y) as u32, "x={x} y={y} m={m}");
    }
}

#[test]
fn domain_bounds_enforced() {
    let pk = &standard().0;
    let mut r = rng(10);
    let err = ScInitiator::start(pk, &enc(0), &enc(0), 0, None, ScOptions::default(), &mut r).unwrap_err();
    assert_eq!(err, ProtocolError::EmptyDomain);
    let err = ScInitiator::start(pk, &enc(0), &enc(0), 510, None, ScOptions::default(), &mut r).unwrap_err();
    assert_eq!(err, ProtocolError::DomainTooWide { bits: 510, key_bits: 512 });
    assert!(ScInitiator::start(pk, &enc(0), &enc(0), 509, None, ScOptions::default(), &mut r).is_ok());
    let options = ScOptions { functionality: None, blinding: Blinding::Scripted(vec![int(2)]) };
    let err = ScInitiator::start(pk, &enc(0), &enc(0), 3, None, options, &mut r).unwrap_err();
    assert_eq!(err, ProtocolError::ScriptLength { expected: 3, got: 1 });
}

#[test]
fn initiator_rejects_out_of_order_messages() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(11);
    let (p1, _) = ScInitiator::start(pk, &enc(1), &enc(0), 1, None, ScOptions::default(), &mut r).unwrap();
    assert!(matches!(p1.clone().finish(&enc(1)), Err(ProtocolError::OutOfOrder(_))));

    let (mut p1, tau) = ScInitiator::start(pk, &enc(1), &enc(0), 1, None, ScOptions::default(), &mut r).unwrap();
    let s = p2.on_tau(&tau, &mut r).unwrap();
    assert!(matches!(p1.on_s(&s, &mut r).unwrap(), ScStep::Final(_)));
    assert!(matches!(p1.on_s(&s, &mut r), Err(ProtocolError::OutOfOrder(_))));
}

#[test]
fn responder_state_tracks_rounds() {
    let mut state = ScResponderState::new(2);
    assert!(state.accept_final().is_err());
    state.accept_tau().unwrap();
    state.accept_tau().unwrap();
    assert!(state.accept_tau().is_err());
    state.accept_final().unwrap();
    assert!(state.is_finished());
    assert!(state.accept_final().is_err());
    assert!(state.accept_tau().is_err());
}

/// Drives a comparison and checks the quotient and remainder after each round.
/// `f` must be the relation that holds, so that `d` lies in `[0, 2^m)`; under
/// the other relation `d` is close to `N` and every blinded value wraps.
fn assert_loop_invariant(x: i64, y: i64, m: u32, f: Functionality, seed: u64) {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(seed);
    let options = ScOptions { functionality: Some(f), blinding: Blinding::OverflowFree };
    let (mut p1, mut tau) = ScInitiator::start(pk, &enc(x), &enc(y), m, None, options, &mut r).unwrap();
    let n = pk.modulus();
    let d = dec(p1.difference());
    let expected_d = match f {
        Functionality::Geq => crate::paillier::reduce(int(x - y), n),
        Functionality::Lt => crate::paillier::reduce(int(y - x - 1), n),
    };
    assert_eq!(d, expected_d);
    for i in 1..=m {
        let s = p2.on_tau(&tau, &mut r).unwrap();
        let step = p1.on_s(&s, &mut r).unwrap();
        assert_eq!(dec(p1.delta()), Integer::from(&d >> i), "delta after round {i}");
        assert_eq!(dec(p1.low_bits()), Integer::from(d.keep_bits_ref(i)), "d' after round {i}");
        match step {
            ScStep::Tau(next) => tau = next,
            ScStep::Final(_) => assert_eq!(i, m),
        }
    }
}

#[test]
fn loop_invariant_without_overflow() {
    let mut r = rng(12);
    for seed in 0..12 {
        let m = r.gen_range(1..=16u32);
        let x = r.gen_range(0..1i64 << m);
        let y = r.gen_range(0..1i64 << m);
        let f = if x >= y { Functionality::Geq } else { Functionality::Lt };
        assert_loop_invariant(x, y, m, f, seed);
    }
}

#[test]
fn wraparound_blind_flips_the_bit() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(13);
    // d = 3 under x >= y, so the first extracted bit should be 1. With
    // r_1 = N - 1 the blinded value wraps to 2 and the parity correction
    // assumes no wrap.
    let blinds = vec![Integer::from(pk.modulus() - 1), int(2)];
    let options = ScOptions { functionality: Some(Functionality::Geq), blinding: Blinding::Scripted(blinds) };
    let (mut p1, tau) = ScInitiator::start(pk, &enc(3), &enc(0), 2, None, options, &mut r).unwrap();
    let s = p2.on_tau(&tau, &mut r).unwrap();
    assert_eq!(dec(&s), 0);
    p1.on_s(&s, &mut r).unwrap();
    assert_eq!(dec(p1.low_bits()), 0);
}

#[test]
fn smp_examples() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(14);
    let cases = [(3, 4, 12), (0, 77, 0), (1, 77, 77), (77, 1, 77), (255, 255, 65025)];
    for (a, b, ab) in cases {
        let c = multiply_local(pk, &p2, &enc(a), &enc(b), None, &mut r).unwrap();
        assert_eq!(dec(&c), ab, "{a} * {b}");
    }
    let big = Integer::from(pk.modulus() - 1);
    let c = multiply_local(pk, &p2, &pk.encrypt(&big, &mut r).unwrap(), &enc(2), None, &mut r).unwrap();
    assert_eq!(dec(&c), Integer::from(pk.modulus() - 2));
}

#[test]
fn smp_random_pairs() {
    let pk = &standard().0;
    let p2 = responder();
    let mut r = rng(15);
    for _ in 0..50 {
        let a = crate::paillier::random_below(pk.modulus(), &mut r);
        let b = crate::paillier::random_below(pk.modulus(), &mut r);
        let ea = pk.encrypt(&a, &mut r).unwrap();
        let eb = pk.encrypt(&b, &mut r).unwrap();
        let c = multiply_local(pk, &p2, &ea, &eb, None, &mut r).unwrap();
        assert_eq!(dec(&c), Integer::from(&a * &b) % pk.modulus());
    }
}

#[test]
fn smp_responder_sees_blinded_operands() {
    let pk = &standard().0;
    let mut r = rng(16);
    let (_, request) = SmpInitiator::start(pk, &enc(3), &enc(4), None, &mut r).unwrap();
    assert_ne!(dec(&request.a.ciphertext), 3);
    assert_ne!(dec(&request.b.ciphertext), 4);
}

#[test]
fn threshold_comparison_and_multiplication() {
    let pk = &standard().0;
    let (share1, _) = shares();
    let p2 = threshold_responder();
    let mut r = rng(17);
    let c = compare_local(pk, &p2, &enc(5), &enc(5), 4, Some(share1), ScOptions::default(), &mut r).unwrap();
    assert_eq!(dec(&c.ciphertext), 1);
    let h = multiply_local(pk, &p2, &enc(6), &enc(7), Some(share1), &mut r).unwrap();
    assert_eq!(dec(&h), 42);
}

#[test]
fn threshold_agrees_with_standard() {
    let pk = &standard().0;
    let (share1, _) = shares();
    let standard_p2 = responder();
    let threshold_p2 = threshold_responder();
    let mut r = rng(18);
    for _ in 0..30 {
        let x = r.gen_range(0..256);
        let y = r.gen_range(0..256);
        let a = compare_local(pk, &standard_p2, &enc(x), &enc(y), 8, None, ScOptions::default(), &mut r).unwrap();
        let b = compare_local(pk, &threshold_p2, &enc(x), &enc(y), 8, Some(share1), ScOptions::default(), &mut r)
            .unwrap();
        assert_eq!(dec(&a.ciphertext), dec(&b.ciphertext));
        assert_eq!(dec(&a.ciphertext), (x >= y) as u32);
    }
}

#[test]
fn threshold_responder_requires_the_other_partial() {
    let pk = &standard().0;
    let (share1, share2) = shares();
    let p2 = threshold_responder();
    let mut r = rng(19);
    let c = pk.encrypt(&int(3), &mut r).unwrap();
    assert_eq!(p2.on_tau(&request(c.clone()), &mut r).unwrap_err(), ProtocolError::MissingPartial);
    let own = DecryptRequest::new(c.clone(), Some(share2)).unwrap();
    assert_eq!(p2.on_tau(&own, &mut r).unwrap_err(), ProtocolError::WrongShare);
    let ok = DecryptRequest::new(c, Some(share1)).unwrap();
    assert_eq!(dec(&p2.on_tau(&ok, &mut r).unwrap()), 1);
}

#[test]
fn threshold_responder_rejects_mismatched_partial() {
    let pk = &standard().0;
    let (share1, _) = shares();
    let p2 = threshold_responder();
    let mut r = rng(20);
    let c = pk.encrypt(&int(3), &mut r).unwrap();
    let other = pk.encrypt(&int(3), &mut r).unwrap();
    let forged = DecryptRequest { ciphertext: c, partial: Some(share1.partial_decrypt(&other).unwrap()) };
    assert!(matches!(p2.on_tau(&forged, &mut r), Err(ProtocolError::Paillier(_))));
}
