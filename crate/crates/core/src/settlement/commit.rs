//! ElGamal commitments and Chaum–Pedersen equality proofs over prime-order groups.
//!
//! Groups are written multiplicatively: a commitment to `m` with randomness
//! `ρ` is `(g^ρ, g^m·h^ρ)`. The second generator `h` is derived by hashing a
//! fixed label into the group, so nobody knows `log_g h`.

use std::fmt::Debug;
use std::marker::PhantomData;
use std::ops::{Add, Mul, Neg, Sub};

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha512};
use thiserror::Error;

use crate::mpc::field::{Field, Zp};

const H_LABEL: &[u8] = b"lem/commitment/second-generator";
const PROOF_LABEL: &[u8] = b"lem/commitment/equality-proof";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CommitError {
    #[error("malformed hex encoding")]
    Hex,
    #[error("bytes do not encode a group element")]
    Element,
    #[error("bytes do not encode a scalar")]
    Scalar,
    #[error("record has {0} fields")]
    Fields(usize),
}

/// A prime-order group in multiplicative notation.
pub trait PrimeGroup {
    type Scalar: Copy
        + Eq
        + Debug
        + Add<Output = Self::Scalar>
        + Sub<Output = Self::Scalar>
        + Mul<Output = Self::Scalar>
        + Neg<Output = Self::Scalar>;
    type Element: Copy + Eq + Debug;

    fn generator() -> Self::Element;
    fn second_generator() -> Self::Element;
    fn identity() -> Self::Element;
    fn op(a: Self::Element, b: Self::Element) -> Self::Element;
    fn inverse(a: Self::Element) -> Self::Element;
    fn exp(a: Self::Element, s: Self::Scalar) -> Self::Element;
    fn scalar_from_i128(v: i128) -> Self::Scalar;
    fn random_scalar<R: Rng + ?Sized>(rng: &mut R) -> Self::Scalar;
    /// Reduces a 512-bit digest to a scalar.
    fn scalar_from_digest(bytes: &[u8; 64]) -> Self::Scalar;
    fn element_bytes(a: &Self::Element) -> Vec<u8>;
    fn element_from_bytes(b: &[u8]) -> Option<Self::Element>;
    fn scalar_bytes(s: &Self::Scalar) -> Vec<u8>;
    fn scalar_from_bytes(b: &[u8]) -> Option<Self::Scalar>;
}

/// The Ristretto group on Curve25519 (prime order ≈ 2^252).
#[derive(Debug, Clone, Copy)]
pub struct Ristretto;

impl PrimeGroup for Ristretto {
    type Scalar = Scalar;
    type Element = RistrettoPoint;

    fn generator() -> RistrettoPoint {
        RISTRETTO_BASEPOINT_POINT
    }

    fn second_generator() -> RistrettoPoint {
        let digest: [u8; 64] = Sha512::digest(H_LABEL).into();
        RistrettoPoint::from_uniform_bytes(&digest)
    }

    fn identity() -> RistrettoPoint {
        RistrettoPoint::identity()
    }

    fn op(a: RistrettoPoint, b: RistrettoPoint) -> RistrettoPoint {
        a + b
    }

    fn inverse(a: RistrettoPoint) -> RistrettoPoint {
        -a
    }

    fn exp(a: RistrettoPoint, s: Scalar) -> RistrettoPoint {
        a * s
    }

    fn scalar_from_i128(v: i128) -> Scalar {
        let m = Scalar::from(v.unsigned_abs());
        if v < 0 {
            -m
        } else {
            m
        }
    }

    fn random_scalar<R: Rng + ?Sized>(rng: &mut R) -> Scalar {
        let mut wide = [0u8; 64];
        rng.fill(&mut wide[..]);
        Scalar::from_bytes_mod_order_wide(&wide)
    }

    fn scalar_from_digest(bytes: &[u8; 64]) -> Scalar {
        Scalar::from_bytes_mod_order_wide(bytes)
    }

    fn element_bytes(a: &RistrettoPoint) -> Vec<u8> {
        a.compress().to_bytes().to_vec()
    }

    fn element_from_bytes(b: &[u8]) -> Option<RistrettoPoint> {
        CompressedRistretto::from_slice(b).ok()?.decompress()
    }

    fn scalar_bytes(s: &Scalar) -> Vec<u8> {
        s.to_bytes().to_vec()
    }

    fn scalar_from_bytes(b: &[u8]) -> Option<Scalar> {
        let arr: [u8; 32] = b.try_into().ok()?;
        Option::from(Scalar::from_canonical_bytes(arr))
    }
}

/// Modulus of the toy group's ambient field.
pub const TOY_MODULUS: u64 = 607;
/// Order of the toy subgroup; 607 = 6·101 + 1.
pub const TOY_ORDER: u64 = 101;
const TOY_COFACTOR: u64 = 6;

/// The order-101 subgroup of Z*_607, small enough for exhaustive checks.
#[derive(Debug, Clone, Copy)]
pub struct ToyGroup;

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

impl PrimeGroup for ToyGroup {
    type Scalar = Zp<TOY_ORDER>;
    type Element = u64;

    fn generator() -> u64 {
        pow_mod(2, TOY_COFACTOR, TOY_MODULUS)
    }

    fn second_generator() -> u64 {
        let digest = Sha512::digest(H_LABEL);
        let mut seed = u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"));
        loop {
            let h = pow_mod(2 + seed % (TOY_MODULUS - 3), TOY_COFACTOR, TOY_MODULUS);
            if h != 1 && h != Self::generator() {
                return h;
            }
            seed = seed.wrapping_add(1);
        }
    }

    fn identity() -> u64 {
        1
    }

    fn op(a: u64, b: u64) -> u64 {
        a * b % TOY_MODULUS
    }

    fn inverse(a: u64) -> u64 {
        pow_mod(a, TOY_MODULUS - 2, TOY_MODULUS)
    }

    fn exp(a: u64, s: Zp<TOY_ORDER>) -> u64 {
        pow_mod(a, s.value(), TOY_MODULUS)
    }

    fn scalar_from_i128(v: i128) -> Zp<TOY_ORDER> {
        Zp::new(v.rem_euclid(TOY_ORDER as i128) as u64)
    }

    fn random_scalar<R: Rng + ?Sized>(rng: &mut R) -> Zp<TOY_ORDER> {
        Zp::random(rng)
    }

    fn scalar_from_digest(bytes: &[u8; 64]) -> Zp<TOY_ORDER> {
        Zp::new(u64::from_le_bytes(bytes[..8].try_into().expect("eight bytes")))
    }

    fn element_bytes(a: &u64) -> Vec<u8> {
        (*a as u16).to_be_bytes().to_vec()
    }

    fn element_from_bytes(b: &[u8]) -> Option<u64> {
        let v = u16::from_be_bytes(b.try_into().ok()?) as u64;
        (v != 0 && v < TOY_MODULUS && pow_mod(v, TOY_ORDER, TOY_MODULUS) == 1).then_some(v)
    }

    fn scalar_bytes(s: &Zp<TOY_ORDER>) -> Vec<u8> {
        vec![s.value() as u8]
    }

    fn scalar_from_bytes(b: &[u8]) -> Option<Zp<TOY_ORDER>> {
        match b {
            [v] if (*v as u64) < TOY_ORDER => Some(Zp::new(*v as u64)),
            _ => None,
        }
    }
}

/// `(A, B) = (g^ρ, g^m·h^ρ)`.
pub struct Commitment<G: PrimeGroup> {
    pub a: G::Element,
    pub b: G::Element,
}

impl<G: PrimeGroup> Clone for Commitment<G> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<G: PrimeGroup> Copy for Commitment<G> {}

impl<G: PrimeGroup> PartialEq for Commitment<G> {
    fn eq(&self, o: &Self) -> bool {
        self.a == o.a && self.b == o.b
    }
}

impl<G: PrimeGroup> Eq for Commitment<G> {}

impl<G: PrimeGroup> Debug for Commitment<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Commitment({})", self.to_hex())
    }
}

/// The committer's secret: message and randomness.
pub struct Opening<G: PrimeGroup> {
    pub m: G::Scalar,
    pub rho: G::Scalar,
}

impl<G: PrimeGroup> Clone for Opening<G> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<G: PrimeGroup> Copy for Opening<G> {}

impl<G: PrimeGroup> Debug for Opening<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Opening(..)")
    }
}

pub fn commit_with<G: PrimeGroup>(m: G::Scalar, rho: G::Scalar) -> Commitment<G> {
    let a = G::exp(G::generator(), rho);
    let b = G::op(G::exp(G::generator(), m), G::exp(G::second_generator(), rho));
    Commitment { a, b }
}

/// Commits to `m` with fresh randomness.
pub fn commit<G: PrimeGroup, R: Rng + ?Sized>(m: G::Scalar, rng: &mut R) -> (Commitment<G>, Opening<G>) {
    let rho = G::random_scalar(rng);
    (commit_with(m, rho), Opening { m, rho })
}

pub fn verify_opening<G: PrimeGroup>(c: &Commitment<G>, o: &Opening<G>) -> bool {
    commit_with::<G>(o.m, o.rho) == *c
}

fn decode_hex(s: &str) -> Result<Vec<u8>, CommitError> {
    hex::decode(s).map_err(|_| CommitError::Hex)
}

impl<G: PrimeGroup> Commitment<G> {
    /// `hex(A):hex(B)`.
    pub fn to_hex(&self) -> String {
        format!("{}:{}", hex::encode(G::element_bytes(&self.a)), hex::encode(G::element_bytes(&self.b)))
    }

    pub fn from_hex(s: &str) -> Result<Self, CommitError> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b] = parts[..] else { return Err(CommitError::Fields(parts.len())) };
        let a = G::element_from_bytes(&decode_hex(a)?).ok_or(CommitError::Element)?;
        let b = G::element_from_bytes(&decode_hex(b)?).ok_or(CommitError::Element)?;
        Ok(Commitment { a, b })
    }

    /// Componentwise quotient `self / other`.
    fn quotient(&self, other: &Self) -> (G::Element, G::Element) {
        (G::op(self.a, G::inverse(other.a)), G::op(self.b, G::inverse(other.b)))
    }
}

/// Non-interactive proof that two commitments hide the same message.
///
/// The quotient of the commitments is `(g^δ, h^δ)` exactly when the messages
/// agree; the proof shows knowledge of δ with equal logarithms in both bases.
pub struct EqualityProof<G: PrimeGroup> {
    pub t1: G::Element,
    pub t2: G::Element,
    pub s: G::Scalar,
    _group: PhantomData<G>,
}

impl<G: PrimeGroup> Clone for EqualityProof<G> {
    fn clone(&self) -> Self {
        EqualityProof { t1: self.t1, t2: self.t2, s: self.s, _group: PhantomData }
    }
}

impl<G: PrimeGroup> Debug for EqualityProof<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EqualityProof({})", self.to_hex())
    }
}

fn challenge<G: PrimeGroup>(c1: &Commitment<G>, c2: &Commitment<G>, t1: &G::Element, t2: &G::Element) -> G::Scalar {
    let mut h = Sha512::new();
    h.update(PROOF_LABEL);
    for e in [&c1.a, &c1.b, &c2.a, &c2.b, t1, t2] {
        h.update(G::element_bytes(e));
    }
    G::scalar_from_digest(&h.finalize().into())
}

impl<G: PrimeGroup> EqualityProof<G> {
    pub fn new(t1: G::Element, t2: G::Element, s: G::Scalar) -> Self {
        EqualityProof { t1, t2, s, _group: PhantomData }
    }

    /// Proves that `c1` and `c2` hide the same message. Run with unequal
    /// messages, this produces a proof that fails verification.
    pub fn prove<R: Rng + ?Sized>(
        c1: &Commitment<G>,
        o1: &Opening<G>,
        c2: &Commitment<G>,
        o2: &Opening<G>,
        rng: &mut R,
    ) -> Self {
        let delta = o1.rho - o2.rho;
        let k = G::random_scalar(rng);
        let t1 = G::exp(G::generator(), k);
        let t2 = G::exp(G::second_generator(), k);
        let c = challenge(c1, c2, &t1, &t2);
        EqualityProof::new(t1, t2, k + c * delta)
    }

    pub fn verify(&self, c1: &Commitment<G>, c2: &Commitment<G>) -> bool {
        let (da, db) = c1.quotient(c2);
        let c = challenge(c1, c2, &self.t1, &self.t2);
        G::exp(G::generator(), self.s) == G::op(self.t1, G::exp(da, c))
            && G::exp(G::second_generator(), self.s) == G::op(self.t2, G::exp(db, c))
    }

    /// `hex(T1):hex(T2):hex(s)`.
    pub fn to_hex(&self) -> String {
        format!(
            "{}:{}:{}",
            hex::encode(G::element_bytes(&self.t1)),
            hex::encode(G::element_bytes(&self.t2)),
            hex::encode(G::scalar_bytes(&self.s))
        )
    }

    pub fn from_hex(s: &str) -> Result<Self, CommitError> {
        let parts: Vec<&str> = s.split(':').collect();
        let [t1, t2, sc] = parts[..] else { return Err(CommitError::Fields(parts.len())) };
        let t1 = G::element_from_bytes(&decode_hex(t1)?).ok_or(CommitError::Element)?;
        let t2 = G::element_from_bytes(&decode_hex(t2)?).ok_or(CommitError::Element)?;
        let s = G::scalar_from_bytes(&decode_hex(sc)?).ok_or(CommitError::Scalar)?;
        Ok(EqualityProof::new(t1, t2, s))
    }
}

/// Hex record of a commitment, for reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentRecord {
    pub node: usize,
    pub commitment: String,
}
