//! Exact arithmetic in `Q(sqrt 5)`, enough to compare powers of
//! `psi = ((1 + sqrt 5) / 2)^2` against rationals without rounding.

use std::cmp::Ordering;

use num::bigint::BigInt;
use num::{One, Signed, Zero};

use crate::numerics::{int, Rational};

/// `a + b * sqrt(5)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadSqrt5 {
    pub a: Rational,
    pub b: Rational,
}

impl QuadSqrt5 {
    pub fn new(a: Rational, b: Rational) -> Self {
        QuadSqrt5 { a, b }
    }

    pub fn sign(&self) -> Ordering {
        let sa = self.a.cmp(&Rational::zero());
        let sb = self.b.cmp(&Rational::zero());
        match (sa, sb) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (x, y) if x == y => x,
            (sa, _) => {
                // opposite signs: compare a^2 with 5 b^2
                let a2 = &self.a * &self.a;
                let b2 = &self.b * &self.b * int(5);
                match a2.cmp(&b2) {
                    Ordering::Greater => sa,
                    Ordering::Less => sa.reverse(),
                    Ordering::Equal => Ordering::Equal,
                }
            }
        }
    }

    /// Exact comparison against a rational.
    pub fn cmp_rational(&self, q: &Rational) -> Ordering {
        QuadSqrt5::new(&self.a - q, self.b.clone()).sign()
    }

    pub fn mul(&self, other: &QuadSqrt5) -> QuadSqrt5 {
        QuadSqrt5 {
            a: &self.a * &other.a + &self.b * &other.b * int(5),
            b: &self.a * &other.b + &self.b * &other.a,
        }
    }
}

/// Fibonacci and Lucas numbers `(F_n, L_n)`, with `F_0 = 0, F_1 = 1`.
pub fn fibonacci_lucas(n: u64) -> (BigInt, BigInt) {
    let (mut f0, mut f1) = (BigInt::zero(), BigInt::one());
    for _ in 0..n {
        let next = &f0 + &f1;
        f0 = std::mem::replace(&mut f1, next);
    }
    // L_n = F_{n-1} + F_{n+1} = 2 F_{n+1} - F_n
    let lucas = BigInt::from(2) * &f1 - &f0;
    (f0, lucas)
}

pub fn fibonacci(n: u64) -> BigInt {
    fibonacci_lucas(n).0
}

/// `psi^k = phi^(2k) = (L_{2k} + F_{2k} sqrt 5) / 2`.
pub fn psi_pow(k: u64) -> QuadSqrt5 {
    let (f, l) = fibonacci_lucas(2 * k);
    let half = Rational::new(BigInt::one(), BigInt::from(2));
    QuadSqrt5::new(Rational::from_integer(l) * &half, Rational::from_integer(f) * half)
}

/// Rational bounds `lo < sqrt 5 < hi` from Lucas/Fibonacci ratios.
pub fn sqrt5_bounds(precision: u64) -> (Rational, Rational) {
    let n = 2 * precision.max(1);
    let (f_even, l_even) = fibonacci_lucas(n);
    let (f_odd, l_odd) = fibonacci_lucas(n + 1);
    // L_n^2 - 5 F_n^2 = 4 (-1)^n
    let hi = Rational::new(l_even, f_even);
    let lo = Rational::new(l_odd, f_odd);
    (lo, hi)
}

/// Rational bounds `lo <= psi^k <= hi`.
pub fn psi_pow_bounds(k: u64, precision: u64) -> (Rational, Rational) {
    let p = psi_pow(k);
    let (s_lo, s_hi) = sqrt5_bounds(precision);
    let lo = &p.a + &p.b * s_lo;
    let hi = &p.a + &p.b * s_hi;
    debug_assert!(!p.b.is_negative());
    (lo, hi)
}

/// Rational bounds on psi itself.
pub fn psi_bounds(precision: u64) -> (Rational, Rational) {
    psi_pow_bounds(1, precision)
}
