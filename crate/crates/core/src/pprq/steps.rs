//! Per-row computations of both protocols, free of any I/O.

use rand::seq::SliceRandom;
use rand::{CryptoRng, RngCore};
use rayon::prelude::*;
use rug::Integer;

use super::{fork_rngs, PprqError, Result};
use crate::paillier::{random_below, reduce, Ciphertext, KeyShare, PublicKey, SecretKey, ShareIndex};
use crate::wire::{MaskedRow, P2Row, PhiRow, ResultRowP1};

/// Rows in the order C2 receives them. `rows[i]` derives from storage row
/// `permutation[i]`.
#[derive(Clone, Debug)]
pub struct Permuted {
    pub rows: Vec<MaskedRow>,
    pub permutation: Vec<usize>,
}

pub fn random_permutation<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn permute<T>(items: Vec<T>, permutation: &[usize]) -> Vec<T> {
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    permutation.iter().map(|&i| slots[i].take().expect("permutation repeats an index")).collect()
}

fn check_shape(masked: &[Vec<Ciphertext>], mask: &[Ciphertext]) -> Result<()> {
    if masked.len() != mask.len() {
        return Err(PprqError::Violation(format!("{} masked rows but {} mask bits", masked.len(), mask.len())));
    }
    Ok(())
}

/// Protocol 1, C1: `U = T' + r`, `V = E_b(r)`, then one permutation applied
/// to `U`, `V` and a re-randomized mask.
///
/// The blinds are drawn below `min(N, N_b)` so that they fit under Bob's key.
pub fn pprq1_mask_permute<R: RngCore + CryptoRng + ?Sized>(
    pk: &PublicKey,
    pk_b: &PublicKey,
    masked: &[Vec<Ciphertext>],
    mask: &[Ciphertext],
    rng: &mut R,
) -> Result<Permuted> {
    check_shape(masked, mask)?;
    let bound = pk.modulus().min(pk_b.modulus()).clone();
    let rngs = fork_rngs(rng, masked.len());
    let rows = masked
        .par_iter()
        .zip(mask)
        .zip(rngs)
        .map(|((row, z), mut rng)| {
            let mut x = Vec::with_capacity(row.len());
            let mut y = Vec::with_capacity(row.len());
            for cell in row {
                let r = random_below(&bound, &mut rng);
                x.push(pk.add(cell, &pk.encrypt(&r, &mut rng)?));
                y.push(pk_b.ciphertext_to_bytes(&pk_b.encrypt(&r, &mut rng)?));
            }
            Ok(MaskedRow::P1 { x, y, z: pk.rerandomize(z, &mut rng) })
        })
        .collect::<Result<Vec<_>>>()?;
    let permutation = random_permutation(rows.len(), rng);
    Ok(Permuted { rows: permute(rows, &permutation), permutation })
}

/// Protocol 2, C1: `U = T' + r`, `H = E(r)` under the table key, and the
/// re-randomized mask with C1's partial decryption of it.
pub fn pprq2_mask_permute<R: RngCore + CryptoRng + ?Sized>(
    pk: &PublicKey,
    share1: &KeyShare,
    masked: &[Vec<Ciphertext>],
    mask: &[Ciphertext],
    rng: &mut R,
) -> Result<Permuted> {
    check_shape(masked, mask)?;
    let rngs = fork_rngs(rng, masked.len());
    let rows = masked
        .par_iter()
        .zip(mask)
        .zip(rngs)
        .map(|((row, z), mut rng)| {
            let mut x = Vec::with_capacity(row.len());
            let mut w = Vec::with_capacity(row.len());
            for cell in row {
                let r = random_below(pk.modulus(), &mut rng);
                x.push(pk.add(cell, &pk.encrypt(&r, &mut rng)?));
                w.push(pk.encrypt(&r, &mut rng)?);
            }
            let z = pk.rerandomize(z, &mut rng);
            let z_partial = share1.partial_decrypt(&z)?;
            Ok(MaskedRow::P2 { x, w, z, z_partial })
        })
        .collect::<Result<Vec<_>>>()?;
    let permutation = random_permutation(rows.len(), rng);
    Ok(Permuted { rows: permute(rows, &permutation), permutation })
}

fn mask_bit(value: Integer) -> Result<bool> {
    match value.to_u8() {
        Some(0) => Ok(false),
        Some(1) => Ok(true),
        _ => Err(PprqError::Violation("mask bit decrypts to neither 0 nor 1".into())),
    }
}

/// Protocol 1, C2: for a matching row, the decrypted blinded values and the
/// untouched user-key ciphertexts.
pub fn pprq1_filter_respond(sk: &SecretKey, row: &MaskedRow) -> Result<Option<ResultRowP1>> {
    let MaskedRow::P1 { x, y, z } = row else {
        return Err(PprqError::Violation("protocol 2 row in a protocol 1 session".into()));
    };
    if !mask_bit(sk.decrypt(z)?)? {
        return Ok(None);
    }
    let x = x.iter().map(|c| sk.decrypt(c)).collect::<Result<Vec<_>, _>>()?;
    Ok(Some(ResultRowP1 { x, y: y.clone() }))
}

/// Protocol 1, Bob: `t_j = x_j - D_b(Y_j) mod N`. Performs one decryption
/// per column.
pub fn pprq1_recover(pk: &PublicKey, sk_b: &SecretKey, row: &ResultRowP1) -> Result<Vec<Integer>> {
    if row.x.len() != row.y.len() {
        return Err(PprqError::Violation("result row has mismatched columns".into()));
    }
    let pk_b = sk_b.public_key();
    row.x
        .iter()
        .zip(&row.y)
        .map(|(x, y)| {
            let gamma = sk_b.decrypt(&pk_b.ciphertext_from_bytes(y)?)?;
            Ok(reduce(Integer::from(x - gamma), pk.modulus()))
        })
        .collect()
}

/// Protocol 2, C2: completes the mask decryption; for a matching row adds a
/// fresh blind `r'` to both `X` and `W` and partially decrypts `Y' = W + r'`.
pub fn pprq2_filter_blind<R: RngCore + CryptoRng + ?Sized>(
    share2: &KeyShare,
    row: &MaskedRow,
    rng: &mut R,
) -> Result<Option<P2Row>> {
    let MaskedRow::P2 { x, w, z, z_partial } = row else {
        return Err(PprqError::Violation("protocol 1 row in a protocol 2 session".into()));
    };
    if z_partial.index != ShareIndex::First {
        return Err(PprqError::Violation("mask partial from the wrong share".into()));
    }
    if !mask_bit(share2.finish_decrypt(z, z_partial)?)? {
        return Ok(None);
    }
    let pk = share2.public_key();
    let mut out = P2Row { x: Vec::with_capacity(x.len()), y: Vec::with_capacity(x.len()), w: Vec::with_capacity(x.len()) };
    for (xj, wj) in x.iter().zip(w) {
        let r = random_below(pk.modulus(), rng);
        let xp = pk.add(xj, &pk.encrypt(&r, rng)?);
        let yp = pk.add(wj, &pk.encrypt(&r, rng)?);
        out.w.push(share2.partial_decrypt(&yp)?);
        out.x.push(xp);
        out.y.push(yp);
    }
    Ok(Some(out))
}

/// Protocol 2, C1: `h = r + r'` from `Y'` and C2's partial, `H = X' - h`
/// (an encryption of the cell), `H' = H + E(r_hat)` and C1's partial of
/// `H'`. Returns the row for C2 and `r_hat` for Bob.
pub fn pprq2_unblind_partial<R: RngCore + CryptoRng + ?Sized>(
    share1: &KeyShare,
    row: &P2Row,
    rng: &mut R,
) -> Result<(PhiRow, Vec<Integer>)> {
    let cols = row.x.len();
    if row.y.len() != cols || row.w.len() != cols {
        return Err(PprqError::Violation("P2 row has mismatched columns".into()));
    }
    let pk = share1.public_key();
    let mut phi = PhiRow { h: Vec::with_capacity(cols), phi: Vec::with_capacity(cols) };
    let mut r_hat = Vec::with_capacity(cols);
    for ((xp, yp), wp) in row.x.iter().zip(&row.y).zip(&row.w) {
        if wp.index != ShareIndex::Second {
            return Err(PprqError::Violation("blind partial from the wrong share".into()));
        }
        let h = share1.finish_decrypt(yp, wp)?;
        let cell = pk.add_plain(xp, &Integer::from(-h));
        let blind = random_below(pk.modulus(), rng);
        let hp = pk.add(&cell, &pk.encrypt(&blind, rng)?);
        phi.phi.push(share1.partial_decrypt(&hp)?);
        phi.h.push(hp);
        r_hat.push(blind);
    }
    Ok((phi, r_hat))
}

/// Protocol 2, C2: `Gamma_j = t_j + r_hat_j mod N`.
pub fn pprq2_final_partial(share2: &KeyShare, row: &PhiRow) -> Result<Vec<Integer>> {
    if row.h.len() != row.phi.len() {
        return Err(PprqError::Violation("PHI row has mismatched columns".into()));
    }
    row.h
        .iter()
        .zip(&row.phi)
        .map(|(hp, phi)| {
            if phi.index != ShareIndex::First {
                return Err(PprqError::Violation("PHI partial from the wrong share".into()));
            }
            Ok(share2.finish_decrypt(hp, phi)?)
        })
        .collect()
}

/// Protocol 2, Bob: `t_j = Gamma_j - r_hat_j mod N`. No decryption.
pub fn pprq2_recover(pk: &PublicKey, gamma: &[Integer], r_hat: &[Integer]) -> Result<Vec<Integer>> {
    if gamma.len() != r_hat.len() {
        return Err(PprqError::Pairing(format!("{} values against {} blinds", gamma.len(), r_hat.len())));
    }
    Ok(gamma.iter().zip(r_hat).map(|(g, r)| reduce(Integer::from(g - r), pk.modulus())).collect())
}
