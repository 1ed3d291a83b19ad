//! Exact rational scalars and closed balls of the unit interval.
//!
//! Every coordinate in the crate is a [`Rational`]. Balls are metric balls of
//! the space `[0,1]`, so a ball centred near an end is clipped by the ambient
//! endpoint; its radius is still the metric radius used by the game rules.

use std::cmp::Ordering;
use std::fmt;

use malachite_base::num::arithmetic::traits::Gcd;
use malachite_nz::natural::Natural;
use num::bigint::{BigInt, BigUint, Sign};
use num::{BigRational, Integer, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary precision signed rational, always in lowest terms.
pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericsError {
    #[error("malformed rational {0:?}")]
    Malformed(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
    #[error("ball center {0} outside [0,1]")]
    CenterOutOfRange(String),
    #[error("ball radius {0} is not positive")]
    NonPositiveRadius(String),
    #[error("interval [{0}, {1}] is reversed")]
    ReversedInterval(String, String),
}

/// Shorthand for a small rational literal.
pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"p/q"` or a bare integer `"p"`.
pub fn parse_rational(s: &str) -> Result<Rational, NumericsError> {
    let t = s.trim();
    let (p, q) = match t.split_once('/') {
        Some((p, q)) => (p, q),
        None => (t, "1"),
    };
    let p: BigInt = p
        .parse()
        .map_err(|_| NumericsError::Malformed(s.to_string()))?;
    let q: BigInt = q
        .parse()
        .map_err(|_| NumericsError::Malformed(s.to_string()))?;
    if q.is_zero() {
        return Err(NumericsError::ZeroDenominator(s.to_string()));
    }
    Ok(Rational::new(p, q))
}

/// Canonical `"p/q"` text; integers are written with denominator 1.
pub fn format_rational(x: &Rational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

fn to_natural(x: &BigUint) -> Natural {
    Natural::from_owned_limbs_asc(x.iter_u64_digits().collect())
}

fn from_natural(x: &Natural) -> BigUint {
    let limbs = x.to_limbs_asc();
    let mut digits = Vec::with_capacity(limbs.len() * 2);
    for l in limbs {
        digits.push(l as u32);
        digits.push((l >> 32) as u32);
    }
    BigUint::new(digits)
}

/// Greatest common divisor of `|a|` and `|b|`.
///
/// num-bigint uses a binary gcd that reallocates on every shift; past a few
/// limbs the half-gcd in malachite is several times faster.
pub fn gcd_int(a: &BigInt, b: &BigInt) -> BigUint {
    let (ma, mb) = (a.magnitude(), b.magnitude());
    let (small, big) = if ma.bits() <= mb.bits() { (ma, mb) } else { (mb, ma) };
    if big.bits() <= 128 {
        return ma.gcd(mb);
    }
    if let Some(s) = small.to_u64() {
        if s == 0 {
            return big.clone();
        }
        let r = (big % s).to_u64().expect("remainder below divisor");
        return BigUint::from(num::integer::gcd(s, r));
    }
    from_natural(&to_natural(ma).gcd(to_natural(mb)))
}

/// `n / d` in lowest terms; `d` must be nonzero.
pub fn reduced(n: BigInt, d: BigInt) -> Rational {
    assert!(!d.is_zero(), "zero denominator");
    let (n, d) = if d.sign() == Sign::Minus { (-n, -d) } else { (n, d) };
    if n.is_zero() {
        return Rational::zero();
    }
    let g = gcd_int(&n, &d);
    if g.is_one() {
        return Rational::new_raw(n, d);
    }
    let g = BigInt::from(g);
    Rational::new_raw(n / &g, d / &g)
}

pub fn add_q(a: &Rational, b: &Rational) -> Rational {
    if a.denom() == b.denom() {
        return reduced(a.numer() + b.numer(), a.denom().clone());
    }
    reduced(a.numer() * b.denom() + b.numer() * a.denom(), a.denom() * b.denom())
}

pub fn sub_q(a: &Rational, b: &Rational) -> Rational {
    if a.denom() == b.denom() {
        return reduced(a.numer() - b.numer(), a.denom().clone());
    }
    reduced(a.numer() * b.denom() - b.numer() * a.denom(), a.denom() * b.denom())
}

pub fn mul_q(a: &Rational, b: &Rational) -> Rational {
    reduced(a.numer() * b.numer(), a.denom() * b.denom())
}

pub fn div_q(a: &Rational, b: &Rational) -> Rational {
    reduced(a.numer() * b.denom(), a.denom() * b.numer())
}

/// `floor(a / b)` for `b > 0`.
pub fn floor_div(a: &Rational, b: &Rational) -> BigInt {
    (a.numer() * b.denom()).div_floor(&(a.denom() * b.numer()))
}

/// `ceil(a / b)` for `b > 0`.
pub fn ceil_div(a: &Rational, b: &Rational) -> BigInt {
    (a.numer() * b.denom()).div_ceil(&(a.denom() * b.numer()))
}

/// `|x - y|`.
pub fn distance(x: &Rational, y: &Rational) -> Rational {
    sub_q(x, y).abs()
}

/// Exact comparison by cross multiplication.
///
/// `Ord` on `BigRational` walks continued fraction expansions, which is slow
/// for nearby values with large denominators; this is the hot-path version.
pub fn cmp_q(a: &Rational, b: &Rational) -> Ordering {
    if a.denom() == b.denom() {
        return a.numer().cmp(b.numer());
    }
    (a.numer() * b.denom()).cmp(&(b.numer() * a.denom()))
}

pub fn lt(a: &Rational, b: &Rational) -> bool {
    cmp_q(a, b) == Ordering::Less
}

pub fn le(a: &Rational, b: &Rational) -> bool {
    cmp_q(a, b) != Ordering::Greater
}

/// Whether `x > 1`.
fn above_one(x: &Rational) -> bool {
    x.numer() > x.denom()
}

pub fn min_rat<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if le(a, b) {
        a
    } else {
        b
    }
}

pub fn max_rat<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if le(b, a) {
        a
    } else {
        b
    }
}

/// `base^exp` for a non-negative exponent.
pub fn pow(base: &Rational, exp: u64) -> Rational {
    let mut result = Rational::one();
    let mut b = base.clone();
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            result *= &b;
        }
        e >>= 1;
        if e > 0 {
            b = &b * &b;
        }
    }
    result
}

/// Closed interval `[lo, hi]` with `lo <= hi`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: Rational,
    pub hi: Rational,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Result<Self, NumericsError> {
        if lt(&hi, &lo) {
            return Err(NumericsError::ReversedInterval(
                format_rational(&lo),
                format_rational(&hi),
            ));
        }
        Ok(Interval { lo, hi })
    }

    /// Builds the interval spanned by two points in either order.
    pub fn spanning(a: Rational, b: Rational) -> Self {
        if le(&a, &b) {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }

    pub fn unit() -> Self {
        Interval {
            lo: Rational::zero(),
            hi: Rational::one(),
        }
    }

    pub fn length(&self) -> Rational {
        sub_q(&self.hi, &self.lo)
    }

    pub fn midpoint(&self) -> Rational {
        let (a, b) = (&self.lo, &self.hi);
        reduced(
            a.numer() * b.denom() + b.numer() * a.denom(),
            a.denom() * b.denom() * BigInt::from(2),
        )
    }

    pub fn contains_point(&self, x: &Rational) -> bool {
        le(&self.lo, x) && le(x, &self.hi)
    }

    pub fn contains_in_interior(&self, x: &Rational) -> bool {
        lt(&self.lo, x) && lt(x, &self.hi)
    }

    pub fn contains(&self, other: &Interval) -> bool {
        le(&self.lo, &other.lo) && le(&other.hi, &self.hi)
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        let lo = max_rat(&self.lo, &other.lo).clone();
        let hi = min_rat(&self.hi, &other.hi).clone();
        le(&lo, &hi).then_some(Interval { lo, hi })
    }

    /// Distance from a point to the interval (0 when inside).
    pub fn distance_to(&self, x: &Rational) -> Rational {
        if lt(x, &self.lo) {
            sub_q(&self.lo, x)
        } else if lt(&self.hi, x) {
            sub_q(x, &self.hi)
        } else {
            Rational::zero()
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{},{}]",
            format_rational(&self.lo),
            format_rational(&self.hi)
        )
    }
}

/// Closed metric ball of `[0,1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ball {
    center: Rational,
    radius: Rational,
    // clipped endpoints, fixed at construction
    lo: Rational,
    hi: Rational,
}

impl Ball {
    pub fn new(center: Rational, radius: Rational) -> Result<Self, NumericsError> {
        if center.is_negative() || above_one(&center) {
            return Err(NumericsError::CenterOutOfRange(format_rational(&center)));
        }
        if !radius.is_positive() {
            return Err(NumericsError::NonPositiveRadius(format_rational(&radius)));
        }
        let mut lo = sub_q(&center, &radius);
        if lo.is_negative() {
            lo = Rational::zero();
        }
        let mut hi = add_q(&center, &radius);
        if above_one(&hi) {
            hi = Rational::one();
        }
        Ok(Ball {
            center,
            radius,
            lo,
            hi,
        })
    }

    pub fn center(&self) -> &Rational {
        &self.center
    }

    pub fn radius(&self) -> &Rational {
        &self.radius
    }

    pub fn left(&self) -> Rational {
        self.lo.clone()
    }

    pub fn right(&self) -> Rational {
        self.hi.clone()
    }

    /// The point set as a closed interval.
    pub fn interval(&self) -> Interval {
        Interval {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
        }
    }

    pub fn diameter(&self) -> Rational {
        sub_q(&self.hi, &self.lo)
    }
}

impl fmt::Display for Ball {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "B({},{})",
            format_rational(&self.center),
            format_rational(&self.radius)
        )
    }
}

/// Whether `inner` is a subset of `outer` as point sets.
pub fn ball_contains(outer: &Ball, inner: &Ball) -> bool {
    outer.interval().contains(&inner.interval())
}

/// Maximal closed pieces of `closure(outer \ removed)` with positive length.
pub fn complement_components(outer: &Ball, removed: &Ball) -> Vec<Interval> {
    interval_minus(&outer.interval(), &removed.interval())
}

/// Interval version of [`complement_components`].
pub fn interval_minus(outer: &Interval, removed: &Interval) -> Vec<Interval> {
    let mut out = Vec::with_capacity(2);
    let left_hi = min_rat(&outer.hi, &removed.lo);
    if lt(&outer.lo, left_hi) {
        out.push(Interval {
            lo: outer.lo.clone(),
            hi: left_hi.clone(),
        });
    }
    let right_lo = max_rat(&outer.lo, &removed.hi);
    if lt(right_lo, &outer.hi) {
        out.push(Interval {
            lo: right_lo.clone(),
            hi: outer.hi.clone(),
        });
    }
    out
}
