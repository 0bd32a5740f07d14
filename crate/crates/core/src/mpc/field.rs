//! Prime fields used by the sharing layer.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Arithmetic needed by Shamir sharing and interpolation.
pub trait Field:
    Copy
    + Eq
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    const ZERO: Self;
    const ONE: Self;
    fn from_u64(v: u64) -> Self;
    fn inv(self) -> Option<Self>;
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

/// Mersenne prime 2^127 − 1.
pub const MODULUS: u128 = (1u128 << 127) - 1;

/// Element of GF(2^127 − 1), always kept reduced.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Fp(u128);

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.0)
    }
}

#[inline]
fn reduce_once(x: u128) -> u128 {
    // x < 2^128: fold the top bit back in (2^127 ≡ 1).
    let y = (x & MODULUS) + (x >> 127);
    if y >= MODULUS {
        y - MODULUS
    } else {
        y
    }
}

impl Fp {
    pub const fn new_unchecked(v: u128) -> Self {
        Fp(v)
    }

    pub fn new(v: u128) -> Self {
        Fp(reduce_once(v))
    }

    pub fn value(self) -> u128 {
        self.0
    }

    pub fn from_i128(v: i128) -> Self {
        if v >= 0 {
            Fp::new(v as u128)
        } else {
            -Fp::new(v.unsigned_abs())
        }
    }

    /// Centered representative in (−q/2, q/2).
    pub fn to_i128(self) -> i128 {
        if self.0 > MODULUS / 2 {
            -((MODULUS - self.0) as i128)
        } else {
            self.0 as i128
        }
    }

    pub fn pow(self, mut e: u128) -> Self {
        let mut base = self;
        let mut acc = Fp::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }

    /// A square root if one exists (q ≡ 3 mod 4).
    pub fn sqrt(self) -> Option<Self> {
        let r = self.pow((MODULUS + 1) / 4);
        (r * r == self).then_some(r)
    }

    /// x^(2^k − 1) by an addition chain over the bits of `k`.
    fn pow_ones(self, k: u32) -> Self {
        let mut t = self;
        let mut n = 1u32;
        for bit in (0..31 - k.leading_zeros()).rev() {
            let mut s = t;
            for _ in 0..n {
                s *= s;
            }
            t = s * t;
            n *= 2;
            if (k >> bit) & 1 == 1 {
                t = t * t * self;
                n += 1;
            }
        }
        t
    }

    /// A `w` with `w² = 1/self` for a nonzero square, computed as
    /// self^((q−3)/4) = self^(2^125 − 1).
    pub fn inv_sqrt(self) -> Self {
        self.pow_ones(125)
    }

    /// Product with a small integer (below 2^32).
    #[inline]
    pub fn mul_small(self, x: u64) -> Self {
        debug_assert!(x < 1 << 32);
        let lo = (self.0 as u64 as u128) * x as u128;
        let hi = (self.0 >> 64) * x as u128;
        // lo + hi·2^64 with 2^128 ≡ 2.
        let a = reduce_once((hi as u64 as u128) << 64);
        let b = reduce_once(lo);
        Fp(reduce_once(reduce_once(a + b) + 2 * (hi >> 64)))
    }

    /// 2^k.
    pub fn pow2(k: u32) -> Self {
        Fp::new(1u128 << k)
    }
}

impl Add for Fp {
    type Output = Fp;
    #[inline]
    fn add(self, o: Fp) -> Fp {
        Fp(reduce_once(self.0 + o.0))
    }
}

impl Sub for Fp {
    type Output = Fp;
    #[inline]
    fn sub(self, o: Fp) -> Fp {
        if self.0 >= o.0 {
            Fp(self.0 - o.0)
        } else {
            Fp(self.0 + MODULUS - o.0)
        }
    }
}

impl Neg for Fp {
    type Output = Fp;
    #[inline]
    fn neg(self) -> Fp {
        if self.0 == 0 {
            self
        } else {
            Fp(MODULUS - self.0)
        }
    }
}

impl Mul for Fp {
    type Output = Fp;
    #[inline]
    fn mul(self, o: Fp) -> Fp {
        let (a0, a1) = (self.0 as u64 as u128, self.0 >> 64);
        let (b0, b1) = (o.0 as u64 as u128, o.0 >> 64);
        let lo = a0 * b0;
        let mid = a0 * b1 + a1 * b0;
        let hi = a1 * b1;
        let (lo_full, carry) = lo.overflowing_add(mid << 64);
        let hi_full = hi + (mid >> 64) + carry as u128;
        // hi_full·2^128 + lo_full with 2^128 ≡ 2.
        let t = reduce_once(lo_full);
        Fp(reduce_once(t + reduce_once(hi_full << 1)))
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, o: Fp) {
        *self = *self + o;
    }
}

impl SubAssign for Fp {
    fn sub_assign(&mut self, o: Fp) {
        *self = *self - o;
    }
}

impl MulAssign for Fp {
    fn mul_assign(&mut self, o: Fp) {
        *self = *self * o;
    }
}

impl Field for Fp {
    const ZERO: Fp = Fp(0);
    const ONE: Fp = Fp(1);

    fn from_u64(v: u64) -> Self {
        Fp(v as u128)
    }

    fn inv(self) -> Option<Self> {
        (self.0 != 0).then(|| self.pow(MODULUS - 2))
    }

    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v: u128 = rng.random::<u128>() >> 1;
            if v < MODULUS {
                return Fp(v);
            }
        }
    }
}

/// Small prime field GF(Q) for exhaustive and distributional tests.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Zp<const Q: u64>(u64);

impl<const Q: u64> fmt::Debug for Zp<Q> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const Q: u64> Zp<Q> {
    pub fn new(v: u64) -> Self {
        Zp(v % Q)
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

impl<const Q: u64> Add for Zp<Q> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Zp((self.0 + o.0) % Q)
    }
}

impl<const Q: u64> Sub for Zp<Q> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Zp((self.0 + Q - o.0) % Q)
    }
}

impl<const Q: u64> Mul for Zp<Q> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Zp(((self.0 as u128 * o.0 as u128) % Q as u128) as u64)
    }
}

impl<const Q: u64> Neg for Zp<Q> {
    type Output = Self;
    fn neg(self) -> Self {
        Zp((Q - self.0) % Q)
    }
}

impl<const Q: u64> Field for Zp<Q> {
    const ZERO: Self = Zp(0);
    const ONE: Self = Zp(1);

    fn from_u64(v: u64) -> Self {
        Zp(v % Q)
    }

    fn inv(self) -> Option<Self> {
        if self.0 == 0 {
            return None;
        }
        let mut acc = Self::ONE;
        let mut base = self;
        let mut e = Q - 2;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        Some(acc)
    }

    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Zp(rng.random_range(0..Q))
    }
}
