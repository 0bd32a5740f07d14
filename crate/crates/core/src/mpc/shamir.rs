//! Shamir sharing over any [`Field`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::Field;
use super::MpcError;

/// Evaluation of a party's polynomial share at `x = party`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share<F> {
    /// Evaluation point, never zero.
    pub party: u64,
    pub value: F,
    pub degree: usize,
    pub session: u64,
}

/// Evaluates `coeffs[0] + coeffs[1]·x + …` by Horner's rule.
pub fn eval_poly<F: Field>(coeffs: &[F], x: F) -> F {
    coeffs.iter().rev().fold(F::ZERO, |acc, &c| acc * x + c)
}

/// Splits `secret` into `n` shares at points 1..=n of a random degree-`theta` polynomial.
pub fn share<F: Field, R: Rng + ?Sized>(
    secret: F,
    theta: usize,
    n: usize,
    session: u64,
    rng: &mut R,
) -> Result<Vec<Share<F>>, MpcError> {
    if theta >= n {
        return Err(MpcError::Threshold { theta, parties: n });
    }
    let mut coeffs = Vec::with_capacity(theta + 1);
    coeffs.push(secret);
    coeffs.extend((0..theta).map(|_| F::random(rng)));
    Ok(share_with(&coeffs, n, session))
}

/// Shares for a fixed polynomial.
pub fn share_with<F: Field>(coeffs: &[F], n: usize, session: u64) -> Vec<Share<F>> {
    (1..=n as u64)
        .map(|x| Share { party: x, value: eval_poly(coeffs, F::from_u64(x)), degree: coeffs.len() - 1, session })
        .collect()
}

/// Lagrange coefficients that interpolate the value at zero from points `xs`.
pub fn lagrange_at_zero<F: Field>(xs: &[u64]) -> Result<Vec<F>, MpcError> {
    xs.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let mut num = F::ONE;
            let mut den = F::ONE;
            for (j, &xj) in xs.iter().enumerate() {
                if i != j {
                    num = num * F::from_u64(xj);
                    den = den * (F::from_u64(xj) - F::from_u64(xi));
                }
            }
            den.inv().map(|d| num * d).ok_or(MpcError::DuplicatePoint(xi))
        })
        .collect()
}

/// Interpolates the secret from at least `theta + 1` shares. Extra shares are
/// checked against the polynomial fixed by the first `theta + 1`.
pub fn reconstruct<F: Field>(shares: &[Share<F>], theta: usize) -> Result<F, MpcError> {
    if shares.len() < theta + 1 {
        return Err(MpcError::InsufficientShares { have: shares.len(), need: theta + 1 });
    }
    if let Some(s) = shares.iter().find(|s| s.session != shares[0].session) {
        return Err(MpcError::SessionMismatch { expected: shares[0].session, found: s.session });
    }
    let base = &shares[..theta + 1];
    let xs: Vec<u64> = base.iter().map(|s| s.party).collect();
    let secret = interpolate_at(base, &xs, F::ZERO)?;
    for extra in &shares[theta + 1..] {
        if interpolate_at(base, &xs, F::from_u64(extra.party))? != extra.value {
            return Err(MpcError::InconsistentShares);
        }
    }
    Ok(secret)
}

fn interpolate_at<F: Field>(base: &[Share<F>], xs: &[u64], at: F) -> Result<F, MpcError> {
    let mut acc = F::ZERO;
    for (i, s) in base.iter().enumerate() {
        let mut num = F::ONE;
        let mut den = F::ONE;
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                num = num * (at - F::from_u64(xj));
                den = den * (F::from_u64(s.party) - F::from_u64(xj));
            }
        }
        let inv = den.inv().ok_or(MpcError::DuplicatePoint(s.party))?;
        acc = acc + s.value * num * inv;
    }
    Ok(acc)
}
