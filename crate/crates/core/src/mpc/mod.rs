//! Honest-but-curious multiparty computation on Shamir shares.
//!
//! [`Mpc`] simulates all parties in one process. Every protocol works on
//! batches ([`SharedVec`]) so that a whole vector costs one set of rounds.
//! Reals are carried in fixed point with [`FixedPoint::frac_bits`] fraction
//! bits; comparisons use a statistically masked opening followed by a bitwise
//! comparison against shared random bits.

pub mod fabric;
pub mod field;
pub mod shamir;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use fabric::{Fabric, MsgKind, Outbox};
use field::{Field, Fp};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MpcError {
    #[error("invalid threshold Θ={theta} for {parties} parties")]
    Threshold { theta: usize, parties: usize },
    #[error("multiplication needs 2Θ < N (Θ={theta}, N={parties})")]
    MulThreshold { theta: usize, parties: usize },
    #[error("insufficient shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("inconsistent shares")]
    InconsistentShares,
    #[error("share from session {found} mixed into session {expected}")]
    SessionMismatch { expected: u64, found: u64 },
    #[error("evaluation point {0} repeated")]
    DuplicatePoint(u64),
    #[error("operand lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("average over zero inputs")]
    ZeroCount,
    #[error("value {0} outside the declared fixed-point bound {1}")]
    Bound(f64, f64),
    #[error("field too small for {0} comparison bits with these parameters")]
    FieldTooSmall(u32),
    #[error("unknown party {0}")]
    UnknownParty(usize),
}

/// Fixed-point parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPoint {
    /// Fraction bits F.
    pub frac_bits: u32,
    /// Magnitude bits K of an encoded value.
    pub int_bits: u32,
    /// Statistical security parameter κ.
    pub kappa: u32,
}

impl Default for FixedPoint {
    fn default() -> Self {
        FixedPoint { frac_bits: 16, int_bits: 40, kappa: 40 }
    }
}

impl FixedPoint {
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// One unit in the last place, 2^−F.
    pub fn ulp(&self) -> f64 {
        1.0 / self.scale()
    }

    /// Largest representable magnitude, 2^(K−F−1).
    pub fn bound(&self) -> f64 {
        2f64.powi((self.int_bits - self.frac_bits - 1) as i32)
    }

    pub fn encode(&self, v: f64) -> Result<Fp, MpcError> {
        if !v.is_finite() || v.abs() >= self.bound() {
            return Err(MpcError::Bound(v, self.bound()));
        }
        Ok(Fp::from_i128((v * self.scale()).round() as i128))
    }

    pub fn decode(&self, x: Fp) -> f64 {
        x.to_i128() as f64 / self.scale()
    }
}

/// Shares of a vector of secrets, indexed `[party][element]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedVec {
    pub shares: Vec<Vec<Fp>>,
}

impl SharedVec {
    pub fn len(&self) -> usize {
        self.shares.first().map_or(0, |s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> SharedVec {
        SharedVec { shares: self.shares.iter().map(|s| s[range.clone()].to_vec()).collect() }
    }

    pub fn concat(parts: &[&SharedVec]) -> SharedVec {
        let parties = parts.first().map_or(0, |p| p.shares.len());
        SharedVec { shares: (0..parties).map(|p| parts.iter().flat_map(|v| v.shares[p].iter().copied()).collect()).collect() }
    }

    /// Elements at `idx`, in order.
    pub fn gather(&self, idx: &[usize]) -> SharedVec {
        SharedVec { shares: self.shares.iter().map(|s| idx.iter().map(|&i| s[i]).collect()).collect() }
    }

    fn zip(&self, o: &SharedVec, f: impl Fn(Fp, Fp) -> Fp) -> SharedVec {
        SharedVec {
            shares: self.shares.iter().zip(&o.shares).map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()).collect(),
        }
    }

    fn map(&self, f: impl Fn(usize, Fp) -> Fp) -> SharedVec {
        SharedVec { shares: self.shares.iter().map(|s| s.iter().enumerate().map(|(i, &x)| f(i, x)).collect()).collect() }
    }
}

/// Round and operation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpcStats {
    pub multiplications: u64,
    pub openings: u64,
    pub comparisons: u64,
    pub random_bits: u64,
}

/// All parties of one computation.
#[derive(Debug, Clone)]
pub struct Mpc {
    parties: usize,
    theta: usize,
    pub fx: FixedPoint,
    fabric: Fabric,
    rngs: Vec<ChaCha20Rng>,
    recombine: Vec<Fp>,
    session: u64,
    pub stats: MpcStats,
}

fn mask(bits: u32) -> u128 {
    (1u128 << bits) - 1
}

impl Mpc {
    pub fn new(parties: usize, theta: usize, seed: u64) -> Result<Self, MpcError> {
        Self::with_params(parties, theta, seed, FixedPoint::default())
    }

    pub fn with_params(parties: usize, theta: usize, seed: u64, fx: FixedPoint) -> Result<Self, MpcError> {
        if parties == 0 || theta >= parties {
            return Err(MpcError::Threshold { theta, parties });
        }
        let xs: Vec<u64> = (1..=parties as u64).collect();
        let recombine = shamir::lagrange_at_zero(&xs)?;
        let rngs = (0..parties)
            .map(|p| {
                let mut r = ChaCha20Rng::seed_from_u64(seed);
                r.set_stream(p as u64);
                r
            })
            .collect();
        let mpc = Mpc {
            parties,
            theta,
            fx,
            fabric: Fabric::new(parties, false),
            rngs,
            recombine,
            session: 0,
            stats: MpcStats::default(),
        };
        mpc.check_bits(2 * fx.int_bits)?;
        Ok(mpc)
    }

    /// Threshold ⌊(N−1)/2⌋ for `parties` parties.
    pub fn default_theta(parties: usize) -> usize {
        parties.saturating_sub(1) / 2
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn theta(&self) -> usize {
        self.theta
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    pub fn fabric_mut(&mut self) -> &mut Fabric {
        &mut self.fabric
    }

    pub fn set_recording(&mut self, on: bool) {
        self.fabric.set_recording(on);
    }

    pub fn set_session(&mut self, session: u64) {
        self.session = session;
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    fn check_bits(&self, k: u32) -> Result<(), MpcError> {
        let log_p = usize::BITS - self.parties.leading_zeros();
        if k + self.fx.kappa + log_p + 1 > 126 {
            return Err(MpcError::FieldTooSmall(k));
        }
        Ok(())
    }

    // ---- sharing and opening ----

    fn deal(&mut self, from: usize, values: &[Fp]) -> Vec<Vec<Fp>> {
        let (n, theta) = (self.parties, self.theta);
        let mut out = vec![Vec::with_capacity(values.len()); n];
        let rng = &mut self.rngs[from];
        let mut coeffs = vec![Fp::ZERO; theta + 1];
        for &v in values {
            coeffs[0] = v;
            for c in coeffs.iter_mut().skip(1) {
                *c = Fp::random(rng);
            }
            for (to, col) in out.iter_mut().enumerate() {
                let x = to as u64 + 1;
                col.push(coeffs.iter().rev().fold(Fp::ZERO, |acc, &c| acc.mul_small(x) + c));
            }
        }
        out
    }

    /// One round in which every party `p` shares `inputs[p]`.
    pub fn input_many(&mut self, inputs: &[Vec<Fp>]) -> Result<Vec<SharedVec>, MpcError> {
        if inputs.len() != self.parties {
            return Err(MpcError::LengthMismatch(inputs.len(), self.parties));
        }
        let outbox: Outbox = (0..self.parties).map(|p| self.deal(p, &inputs[p])).collect();
        let inbox = self.fabric.exchange(self.session, MsgKind::Share, outbox);
        Ok((0..self.parties)
            .map(|from| SharedVec {
                shares: (0..self.parties)
                    .map(|to| if inputs[from].is_empty() { Vec::new() } else { inbox[to][from].clone() })
                    .collect(),
            })
            .collect())
    }

    /// Party `from` shares `values`.
    pub fn input(&mut self, from: usize, values: &[Fp]) -> Result<SharedVec, MpcError> {
        if from >= self.parties {
            return Err(MpcError::UnknownParty(from));
        }
        let mut inputs = vec![Vec::new(); self.parties];
        inputs[from] = values.to_vec();
        Ok(self.input_many(&inputs)?.swap_remove(from))
    }

    pub fn input_fixed(&mut self, from: usize, values: &[f64]) -> Result<SharedVec, MpcError> {
        let enc = values.iter().map(|&v| self.fx.encode(v)).collect::<Result<Vec<_>, _>>()?;
        self.input(from, &enc)
    }

    /// Opens `a` to `recipients`; entry `p` of the result is `Some` iff `p` is a recipient.
    pub fn open_to(&mut self, a: &SharedVec, recipients: &[usize]) -> Result<Vec<Option<Vec<Fp>>>, MpcError> {
        if let Some(&r) = recipients.iter().find(|&&r| r >= self.parties) {
            return Err(MpcError::UnknownParty(r));
        }
        let outbox: Outbox = (0..self.parties)
            .map(|from| {
                (0..self.parties)
                    .map(|to| if recipients.contains(&to) { a.shares[from].clone() } else { Vec::new() })
                    .collect()
            })
            .collect();
        let inbox = self.fabric.exchange(self.session, MsgKind::Open, outbox);
        self.stats.openings += (a.len() * recipients.len()) as u64;
        // Recipients with identical inboxes reconstruct identical values.
        let mut out: Vec<Option<Vec<Fp>>> = vec![None; self.parties];
        let mut done: Vec<usize> = Vec::new();
        for &to in recipients {
            if out[to].is_some() {
                continue;
            }
            if let Some(&prev) = done.iter().find(|&&d| inbox[d] == inbox[to]) {
                out[to] = out[prev].clone();
                continue;
            }
            let value = (0..a.len())
                .map(|i| (0..self.parties).fold(Fp::ZERO, |acc, from| acc + self.recombine[from] * inbox[to][from][i]))
                .collect();
            out[to] = Some(value);
            done.push(to);
        }
        Ok(out)
    }

    /// Opens `a` to every party.
    pub fn open(&mut self, a: &SharedVec) -> Result<Vec<Fp>, MpcError> {
        let all: Vec<usize> = (0..self.parties).collect();
        let mut out = self.open_to(a, &all)?;
        Ok(out.swap_remove(0).expect("party 0 is a recipient"))
    }

    pub fn open_fixed(&mut self, a: &SharedVec) -> Result<Vec<f64>, MpcError> {
        Ok(self.open(a)?.into_iter().map(|x| self.fx.decode(x)).collect())
    }

    // ---- local operations ----

    /// Trivial sharing of public values.
    pub fn constant(&self, values: &[Fp]) -> SharedVec {
        SharedVec { shares: vec![values.to_vec(); self.parties] }
    }

    pub fn constant_fixed(&self, values: &[f64]) -> Result<SharedVec, MpcError> {
        let enc = values.iter().map(|&v| self.fx.encode(v)).collect::<Result<Vec<_>, _>>()?;
        Ok(self.constant(&enc))
    }

    pub fn add(&self, a: &SharedVec, b: &SharedVec) -> SharedVec {
        a.zip(b, |x, y| x + y)
    }

    pub fn sub(&self, a: &SharedVec, b: &SharedVec) -> SharedVec {
        a.zip(b, |x, y| x - y)
    }

    pub fn neg(&self, a: &SharedVec) -> SharedVec {
        a.map(|_, x| -x)
    }

    pub fn add_const(&self, a: &SharedVec, c: &[Fp]) -> SharedVec {
        a.map(|i, x| x + c[i])
    }

    pub fn mul_const(&self, a: &SharedVec, c: &[Fp]) -> SharedVec {
        a.map(|i, x| x * c[i])
    }

    pub fn mul_scalar(&self, a: &SharedVec, c: Fp) -> SharedVec {
        a.map(|_, x| x * c)
    }

    /// Sum of all elements, as a length-one vector.
    pub fn sum(&self, a: &SharedVec) -> SharedVec {
        SharedVec { shares: a.shares.iter().map(|s| vec![s.iter().fold(Fp::ZERO, |acc, &x| acc + x)]).collect() }
    }

    // ---- interactive arithmetic ----

    /// Elementwise product with degree reduction by resharing.
    pub fn mul(&mut self, a: &SharedVec, b: &SharedVec) -> Result<SharedVec, MpcError> {
        if 2 * self.theta >= self.parties {
            return Err(MpcError::MulThreshold { theta: self.theta, parties: self.parties });
        }
        if a.len() != b.len() {
            return Err(MpcError::LengthMismatch(a.len(), b.len()));
        }
        if a.is_empty() {
            return Ok(a.clone());
        }
        let local: Vec<Vec<Fp>> = a.zip(b, |x, y| x * y).shares;
        let outbox: Outbox = (0..self.parties).map(|p| self.deal(p, &local[p])).collect();
        let inbox = self.fabric.exchange(self.session, MsgKind::Share, outbox);
        self.stats.multiplications += a.len() as u64;
        Ok(SharedVec {
            shares: (0..self.parties)
                .map(|to| {
                    (0..a.len())
                        .map(|i| (0..self.parties).fold(Fp::ZERO, |acc, from| acc + self.recombine[from] * inbox[to][from][i]))
                        .collect()
                })
                .collect(),
        })
    }

    /// Uniform shared field elements, one contribution per party.
    pub fn random(&mut self, len: usize) -> Result<SharedVec, MpcError> {
        let inputs: Vec<Vec<Fp>> = self.rngs.iter_mut().map(|r| (0..len).map(|_| Fp::random(r)).collect()).collect();
        let parts = self.input_many(&inputs)?;
        Ok(parts.iter().skip(1).fold(parts[0].clone(), |acc, p| self.add(&acc, p)))
    }

    /// Shared integers in `[0, P·2^bits)`: the sum of one uniform
    /// `bits`-bit contribution per party.
    pub fn bounded_random(&mut self, len: usize, bits: u32) -> Result<SharedVec, MpcError> {
        let m = mask(bits);
        let inputs: Vec<Vec<Fp>> =
            self.rngs.iter_mut().map(|r| (0..len).map(|_| Fp::new(r.random::<u128>() & m)).collect()).collect();
        let parts = self.input_many(&inputs)?;
        Ok(parts.iter().skip(1).fold(parts[0].clone(), |acc, p| self.add(&acc, p)))
    }

    /// Shared uniform bits: square a random element, open the square and
    /// divide by its public root.
    pub fn random_bits(&mut self, len: usize) -> Result<SharedVec, MpcError> {
        let inv2 = Fp::from_u64(2).inv().expect("2 is invertible");
        loop {
            let r = self.random(len)?;
            let sq = self.mul(&r, &r)?;
            let c = self.open(&sq)?;
            if c.iter().any(|&x| x == Fp::ZERO) {
                continue;
            }
            // r·w = ±1 with w² = 1/r², each sign equally likely.
            let inv_roots: Vec<Fp> = c.iter().map(|&x| x.inv_sqrt()).collect();
            let signs = self.mul_const(&r, &inv_roots);
            let bits = self.mul_scalar(&self.add_const(&signs, &vec![Fp::ONE; len]), inv2);
            self.stats.random_bits += len as u64;
            return Ok(bits);
        }
    }

    /// Masked opening of `a + 2^(k−1)` with `m` low random bits; returns the
    /// low `m` bits of the opened value and the shared random bits.
    fn masked_low_bits(&mut self, a: &SharedVec, k: u32, m: u32) -> Result<(Vec<u128>, SharedVec, SharedVec), MpcError> {
        self.check_bits(k)?;
        let len = a.len();
        let bits = self.random_bits(len * m as usize)?;
        let high = self.bounded_random(len, k + self.fx.kappa - m)?;
        // r' = Σ 2^j r_j per element.
        let mut low = SharedVec { shares: vec![vec![Fp::ZERO; len]; self.parties] };
        for p in 0..self.parties {
            for i in 0..len {
                let mut acc = Fp::ZERO;
                for j in (0..m as usize).rev() {
                    acc = acc + acc + bits.shares[p][i * m as usize + j];
                }
                low.shares[p][i] = acc;
            }
        }
        let offset = vec![Fp::pow2(k - 1); len];
        let masked = self.add(&self.add(&self.add_const(a, &offset), &self.mul_scalar(&high, Fp::pow2(m))), &low);
        let c = self.open(&masked)?;
        let c_low = c.iter().map(|x| x.value() & mask(m)).collect();
        Ok((c_low, bits, low))
    }

    /// Probabilistic truncation `a / 2^m` for `|a| < 2^(k−1)`; off by at most one unit.
    pub fn trunc(&mut self, a: &SharedVec, k: u32, m: u32) -> Result<SharedVec, MpcError> {
        if a.is_empty() || m == 0 {
            return Ok(a.clone());
        }
        let (c_low, _, low) = self.masked_low_bits(a, k, m)?;
        let c_low: Vec<Fp> = c_low.into_iter().map(Fp::new).collect();
        let a_mod = self.sub(&self.constant(&c_low), &low);
        let inv = Fp::pow2(m).inv().expect("nonzero");
        Ok(self.mul_scalar(&self.sub(a, &a_mod), inv))
    }

    /// Shared bits `[c < r]` for public `c` and shared `m`-bit `r`
    /// (bit `j` of element `i` at index `i·m + j`).
    pub fn bit_lt(&mut self, c: &[u128], bits: &SharedVec, m: u32) -> Result<SharedVec, MpcError> {
        let len = c.len();
        let m = m as usize;
        let bit = |j: usize| -> Vec<usize> { (0..len).map(|i| i * m + j).collect() };
        let r0 = bits.gather(&bit(0));
        let mut lt = r0.map(|i, x| if c[i] & 1 == 0 { x } else { Fp::ZERO });
        for j in 1..m {
            let rj = bits.gather(&bit(j));
            let prod = self.mul(&rj, &lt)?;
            let either = self.sub(&self.add(&rj, &lt), &prod);
            lt = SharedVec {
                shares: (0..self.parties)
                    .map(|p| (0..len).map(|i| if (c[i] >> j) & 1 == 0 { either.shares[p][i] } else { prod.shares[p][i] }).collect())
                    .collect(),
            };
        }
        Ok(lt)
    }

    /// Exact `a mod 2^m` for `|a| < 2^(k−1)`.
    pub fn mod2m(&mut self, a: &SharedVec, k: u32, m: u32) -> Result<SharedVec, MpcError> {
        let (c_low, bits, low) = self.masked_low_bits(a, k, m)?;
        let u = self.bit_lt(&c_low, &bits, m)?;
        let c_f: Vec<Fp> = c_low.into_iter().map(Fp::new).collect();
        let base = self.sub(&self.constant(&c_f), &low);
        Ok(self.add(&base, &self.mul_scalar(&u, Fp::pow2(m))))
    }

    /// Shared bits `[a < 0]` for `|a| < 2^(k−1)`.
    pub fn ltz_bits(&mut self, a: &SharedVec, k: u32) -> Result<SharedVec, MpcError> {
        if a.is_empty() {
            return Ok(a.clone());
        }
        let m = k - 1;
        let r = self.mod2m(a, k, m)?;
        let inv = Fp::pow2(m).inv().expect("nonzero");
        // (a − a mod 2^m)/2^m is −1 or 0.
        let t = self.mul_scalar(&self.sub(a, &r), inv);
        self.stats.comparisons += a.len() as u64;
        Ok(self.neg(&t))
    }

    /// Comparison width for differences of two in-bound values.
    pub fn compare_bits(&self) -> u32 {
        self.fx.int_bits + 1
    }

    pub fn ltz(&mut self, a: &SharedVec) -> Result<SharedVec, MpcError> {
        let k = self.compare_bits();
        self.ltz_bits(a, k)
    }

    /// Shared bits `[a < b]`.
    pub fn less_than(&mut self, a: &SharedVec, b: &SharedVec) -> Result<SharedVec, MpcError> {
        let d = self.sub(a, b);
        self.ltz(&d)
    }

    /// Shared bits `[|a| ≤ tol]` for a shared tolerance, comparison width `k`.
    pub fn within_shared(&mut self, a: &SharedVec, tol: &SharedVec, k: u32) -> Result<SharedVec, MpcError> {
        if a.len() != tol.len() {
            return Err(MpcError::LengthMismatch(a.len(), tol.len()));
        }
        // |a| ≤ tol ⇔ tol − a ≥ 0 ∧ tol + a ≥ 0.
        let upper = self.sub(tol, a);
        let lower = self.add(tol, a);
        let both = SharedVec::concat(&[&upper, &lower]);
        let not_ok = self.ltz_bits(&both, k)?;
        let ok = self.add_const(&self.neg(&not_ok), &vec![Fp::ONE; both.len()]);
        let n = a.len();
        self.mul(&ok.slice(0..n), &ok.slice(n..2 * n))
    }

    /// Shared bits `[|a| ≤ tol]` with comparison width `k`.
    pub fn within_bits(&mut self, a: &SharedVec, tol: &[f64], k: u32) -> Result<SharedVec, MpcError> {
        let t = self.constant_fixed(tol)?;
        self.within_shared(a, &t, k)
    }

    /// Shared bits `[|a| ≤ tol]`.
    pub fn is_zero(&mut self, a: &SharedVec, tol: f64) -> Result<SharedVec, MpcError> {
        let k = self.compare_bits();
        self.within_bits(a, &vec![tol; a.len()], k)
    }

    pub fn abs(&mut self, a: &SharedVec) -> Result<SharedVec, MpcError> {
        let s = self.ltz(a)?;
        let sa = self.mul(&s, a)?;
        Ok(self.sub(a, &self.mul_scalar(&sa, Fp::from_u64(2))))
    }

    pub fn max(&mut self, a: &SharedVec, b: &SharedVec) -> Result<SharedVec, MpcError> {
        let b_lt_a = self.less_than(b, a)?;
        let diff = self.sub(a, b);
        let pick = self.mul(&b_lt_a, &diff)?;
        Ok(self.add(b, &pick))
    }

    /// Bitwise AND of a vector of shared bits, as a length-one vector.
    pub fn and_all(&mut self, bits: &SharedVec) -> Result<SharedVec, MpcError> {
        let mut cur = bits.clone();
        if cur.is_empty() {
            return Ok(self.constant(&[Fp::ONE]));
        }
        while cur.len() > 1 {
            let half = cur.len() / 2;
            let prod = self.mul(&cur.slice(0..half), &cur.slice(half..2 * half))?;
            cur = if cur.len() % 2 == 1 { SharedVec::concat(&[&prod, &cur.slice(2 * half..cur.len())]) } else { prod };
        }
        Ok(cur)
    }

    // ---- fixed point ----

    pub fn fx_mul(&mut self, a: &SharedVec, b: &SharedVec) -> Result<SharedVec, MpcError> {
        let p = self.mul(a, b)?;
        self.trunc(&p, 2 * self.fx.int_bits, self.fx.frac_bits)
    }

    pub fn scale_public(&mut self, a: &SharedVec, c: &[f64]) -> Result<SharedVec, MpcError> {
        let enc = c.iter().map(|&v| self.fx.encode(v)).collect::<Result<Vec<_>, _>>()?;
        let p = self.mul_const(a, &enc);
        self.trunc(&p, 2 * self.fx.int_bits, self.fx.frac_bits)
    }

    /// Σ a_i b_i with a single truncation.
    pub fn fx_dot(&mut self, a: &SharedVec, b: &SharedVec) -> Result<SharedVec, MpcError> {
        let p = self.mul(a, b)?;
        let s = self.sum(&p);
        self.trunc(&s, 2 * self.fx.int_bits, self.fx.frac_bits)
    }

    /// Mean of one value per contributing party: each party divides by the
    /// public count before sharing, so only additions happen under sharing.
    pub fn secure_average(&mut self, inputs: &[(usize, f64)]) -> Result<SharedVec, MpcError> {
        if inputs.is_empty() {
            return Err(MpcError::ZeroCount);
        }
        let count = inputs.len() as f64;
        let mut per_party = vec![Vec::new(); self.parties];
        for &(p, v) in inputs {
            if p >= self.parties {
                return Err(MpcError::UnknownParty(p));
            }
            per_party[p].push(self.fx.encode(v / count)?);
        }
        let parts = self.input_many(&per_party)?;
        let mut acc = self.constant(&[Fp::ZERO]);
        for part in &parts {
            acc = self.add(&acc, &self.sum(part));
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mpc() -> Mpc {
        Mpc::new(5, 2, 7).unwrap()
    }

    #[test]
    fn fixed_point_roundtrip() {
        let fx = FixedPoint::default();
        assert_eq!(fx.decode(fx.encode(-3.25).unwrap()), -3.25);
        assert!(fx.encode(fx.bound()).is_err());
    }

    #[test]
    fn add_open_and_average() {
        let mut m = mpc();
        let a = m.input_fixed(0, &[1.5]).unwrap();
        let b = m.input_fixed(3, &[2.25]).unwrap();
        assert_eq!(m.open_fixed(&m.add(&a, &b)).unwrap(), vec![3.75]);
        let avg = m.secure_average(&[(0, 2.0), (1, 4.0)]).unwrap();
        assert_eq!(m.open_fixed(&avg).unwrap(), vec![3.0]);
        let avg = m.secure_average(&[(0, 1.5), (1, -0.5), (4, 2.0)]).unwrap();
        assert!((m.open_fixed(&avg).unwrap()[0] - 1.0).abs() <= 3.0 * m.fx.ulp());
        assert_eq!(m.secure_average(&[]), Err(MpcError::ZeroCount));
    }

    #[test]
    fn multiplication_and_scaling() {
        let mut m = mpc();
        let a = m.input_fixed(1, &[3.0, 1.5, 0.7]).unwrap();
        let b = m.input_fixed(2, &[4.0, -2.0, 1.0]).unwrap();
        let p = m.fx_mul(&a, &b).unwrap();
        let out = m.open_fixed(&p).unwrap();
        assert_eq!(out[0], 12.0);
        assert!((out[1] + 3.0).abs() <= m.fx.ulp());
        assert!((out[2] - m.fx.decode(m.fx.encode(0.7).unwrap())).abs() <= m.fx.ulp());
        let two = m.input_fixed(0, &[2.0]).unwrap();
        let half = m.scale_public(&two, &[0.5]).unwrap();
        assert!((m.open_fixed(&half).unwrap()[0] - 1.0).abs() <= m.fx.ulp());
    }

    #[test]
    fn comparisons() {
        let mut m = mpc();
        let a = m.input_fixed(0, &[1.0, 5.0, -2.0, 0.0, -7.5]).unwrap();
        let b = m.input_fixed(1, &[2.0, 5.0, -3.0, 0.0, 7.5]).unwrap();
        let lt = m.less_than(&a, &b).unwrap();
        assert_eq!(m.open(&lt).unwrap(), [1, 0, 0, 0, 1].map(Fp::from_u64).to_vec());
        let z = m.input_fixed(2, &[0.0, 0.5, 0.05, -0.1]).unwrap();
        let bits = m.is_zero(&z, 0.1).unwrap();
        assert_eq!(m.open(&bits).unwrap(), [1, 0, 1, 1].map(Fp::from_u64).to_vec());
        let mx = m.max(&a, &b).unwrap();
        assert_eq!(m.open_fixed(&mx).unwrap(), vec![2.0, 5.0, -2.0, 0.0, 7.5]);
        let ab = m.abs(&a).unwrap();
        assert_eq!(m.open_fixed(&ab).unwrap(), vec![1.0, 5.0, 2.0, 0.0, 7.5]);
        let all = m.and_all(&bits.slice(0..1)).unwrap();
        assert_eq!(m.open(&all).unwrap(), vec![Fp::ONE]);
        let all = m.and_all(&bits).unwrap();
        assert_eq!(m.open(&all).unwrap(), vec![Fp::ZERO]);
    }

    #[test]
    fn threshold_checks() {
        assert!(Mpc::new(3, 3, 0).is_err());
        let mut m = Mpc::new(4, 2, 0).unwrap();
        let a = m.input_fixed(0, &[1.0]).unwrap();
        assert!(matches!(m.mul(&a, &a), Err(MpcError::MulThreshold { .. })));
    }

    #[test]
    fn equal_seeds_equal_transcripts() {
        let run = || {
            let mut m = Mpc::new(4, 1, 11).unwrap();
            m.set_recording(true);
            let a = m.input_fixed(0, &[0.25, -1.0]).unwrap();
            let b = m.input_fixed(3, &[4.0, 2.0]).unwrap();
            let p = m.fx_mul(&a, &b).unwrap();
            let l = m.less_than(&a, &b).unwrap();
            m.open(&SharedVec::concat(&[&p, &l])).unwrap();
            m.fabric().transcript().to_vec()
        };
        assert_eq!(run(), run());
    }
}
