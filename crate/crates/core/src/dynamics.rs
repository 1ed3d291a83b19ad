//! The two expanding systems on `[0,1]`: `x -> gamma x mod 1` for an integer
//! `gamma >= 2`, and the Gauss map `x -> 1/x mod 1` with `0 -> 0`.
//!
//! Inverse branches are kept as integer Moebius matrices. A [`Branch`] of
//! depth `m` maps `y = T^m x` back to `x = (a y + b) / (c y + d)`; for the
//! Gauss map the entries are the continuants `p_{m-1}, p_m, q_{m-1}, q_m`.

use std::fmt;

use num::bigint::BigInt;
use num::{Integer, One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::numerics::{format_rational, int, le, reduced, Interval, Rational};
use crate::quadratic::psi_pow_bounds;

/// Enumeration cap used when a window reaches into the accumulation of
/// Gauss cylinders at 0.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("gamma must be an integer >= 2, got {0}")]
    InvalidGamma(u64),
    #[error("point {0} outside [0,1]")]
    OutOfDomain(String),
    #[error("enumeration exceeds cap {cap}")]
    DepthOverflow { cap: usize },
    #[error("point {point} is a vertex of order {order}")]
    Boundary { point: String, order: usize },
    #[error("interval {interval} has a vertex of order {order} in its interior")]
    InjectivityViolation { interval: String, order: usize },
    #[error("points {0} and {1} do not share a cylinder of order {2}")]
    CylinderMismatch(String, String, usize),
    #[error("invalid digit {digit} at position {position}")]
    InvalidDigit { digit: String, position: usize },
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemSpec {
    Beta { gamma: u64 },
    Gauss,
}

impl SystemSpec {
    pub fn beta(gamma: u64) -> Result<Self> {
        if gamma < 2 {
            return Err(DynamicsError::InvalidGamma(gamma));
        }
        Ok(SystemSpec::Beta { gamma })
    }

    pub fn gamma(&self) -> Option<u64> {
        match self {
            SystemSpec::Beta { gamma } => Some(*gamma),
            SystemSpec::Gauss => None,
        }
    }

    pub fn is_gauss(&self) -> bool {
        matches!(self, SystemSpec::Gauss)
    }
}

impl std::str::FromStr for SystemSpec {
    type Err = String;

    /// `"gauss"` or `"beta:<gamma>"`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "gauss" {
            return Ok(SystemSpec::Gauss);
        }
        let gamma = s
            .strip_prefix("beta:")
            .and_then(|g| g.parse::<u64>().ok())
            .ok_or_else(|| format!("unknown system {s:?}"))?;
        SystemSpec::beta(gamma).map_err(|e| e.to_string())
    }
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemSpec::Beta { gamma } => write!(f, "beta:{gamma}"),
            SystemSpec::Gauss => write!(f, "gauss"),
        }
    }
}

/// Digit string of a cylinder: partial quotients for the Gauss map,
/// base-`gamma` digits otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CylinderAddress {
    pub digits: Vec<BigInt>,
}

impl CylinderAddress {
    pub fn new<I: IntoIterator<Item = i64>>(digits: I) -> Self {
        CylinderAddress {
            digits: digits.into_iter().map(BigInt::from).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.digits.len()
    }
}

/// Continued fraction convergent data after `n` partial quotients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Continuants {
    pub p_n: BigInt,
    pub q_n: BigInt,
    pub p_prev: BigInt,
    pub q_prev: BigInt,
}

impl Continuants {
    pub fn from_digits(digits: &[BigInt]) -> Self {
        let (mut p_prev, mut p_n) = (BigInt::one(), BigInt::zero());
        let (mut q_prev, mut q_n) = (BigInt::zero(), BigInt::one());
        for a in digits {
            let p_next = a * &p_n + &p_prev;
            let q_next = a * &q_n + &q_prev;
            p_prev = std::mem::replace(&mut p_n, p_next);
            q_prev = std::mem::replace(&mut q_n, q_next);
        }
        Continuants {
            p_n,
            q_n,
            p_prev,
            q_prev,
        }
    }
}

/// Inverse branch of `T^m` on one cylinder of order `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    sys: SystemSpec,
    depth: usize,
    a: BigInt,
    b: BigInt,
    c: BigInt,
    d: BigInt,
}

impl Branch {
    pub fn identity(sys: SystemSpec) -> Self {
        Branch {
            sys,
            depth: 0,
            a: BigInt::one(),
            b: BigInt::zero(),
            c: BigInt::zero(),
            d: BigInt::one(),
        }
    }

    pub fn from_address(sys: SystemSpec, addr: &CylinderAddress) -> Result<Self> {
        let mut br = Branch::identity(sys);
        for (i, digit) in addr.digits.iter().enumerate() {
            let ok = match sys {
                SystemSpec::Beta { gamma } => {
                    !digit.is_negative() && digit < &BigInt::from(gamma)
                }
                SystemSpec::Gauss => digit.is_positive(),
            };
            if !ok {
                return Err(DynamicsError::InvalidDigit {
                    digit: digit.to_string(),
                    position: i,
                });
            }
            br.push(digit);
        }
        Ok(br)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn system(&self) -> SystemSpec {
        self.sys
    }

    /// Refines the branch by one more digit.
    pub fn push(&mut self, digit: &BigInt) {
        match self.sys {
            SystemSpec::Gauss => {
                // M * [[0,1],[1,k]]
                let na = self.b.clone();
                let nb = &self.a + &self.b * digit;
                let nc = self.d.clone();
                let nd = &self.c + &self.d * digit;
                self.a = na;
                self.b = nb;
                self.c = nc;
                self.d = nd;
            }
            SystemSpec::Beta { gamma } => {
                // M * [[1,k],[0,gamma]]
                let g = BigInt::from(gamma);
                self.b = &self.a * digit + &self.b * &g;
                self.d = &self.c * digit + &self.d * &g;
            }
        }
        self.depth += 1;
    }

    pub fn pushed(&self, digit: &BigInt) -> Branch {
        let mut b = self.clone();
        b.push(digit);
        b
    }

    /// `x` with `T^m x = y` on this branch.
    pub fn preimage(&self, y: &Rational) -> Rational {
        let (p, q) = (y.numer(), y.denom());
        reduced(&self.a * p + &self.b * q, &self.c * p + &self.d * q)
    }

    /// `T^m x` continued across the closed cylinder.
    pub fn forward(&self, x: &Rational) -> Rational {
        let (p, q) = (x.numer(), x.denom());
        reduced(&self.d * p - &self.b * q, &self.a * q - &self.c * p)
    }

    pub fn forward_interval(&self, iv: &Interval) -> Interval {
        Interval::spanning(self.forward(&iv.lo), self.forward(&iv.hi))
    }

    pub fn preimage_interval(&self, iv: &Interval) -> Interval {
        Interval::spanning(self.preimage(&iv.lo), self.preimage(&iv.hi))
    }

    /// The closed cylinder this branch is defined on.
    pub fn cylinder(&self) -> Interval {
        Interval::spanning(
            reduced(self.b.clone(), self.d.clone()),
            reduced(&self.a + &self.b, &self.c + &self.d),
        )
    }

    /// `|D_x T^m|` on the branch, `(c y + d)^2 / |det|` with `y = T^m x`.
    pub fn derivative(&self, x: &Rational) -> Rational {
        let y = self.forward(x);
        let s = &self.c * y.numer() + &self.d * y.denom();
        let det = (&self.a * &self.d - &self.b * &self.c).abs();
        reduced(&s * &s, y.denom() * y.denom() * det)
    }

    /// Whether the branch reverses orientation.
    pub fn reverses(&self) -> bool {
        self.sys.is_gauss() && self.depth % 2 == 1
    }

    pub fn continuants(&self) -> Option<Continuants> {
        self.sys.is_gauss().then(|| Continuants {
            p_n: self.b.clone(),
            q_n: self.d.clone(),
            p_prev: self.a.clone(),
            q_prev: self.c.clone(),
        })
    }
}

/// One application of the map.
pub fn apply_map(sys: SystemSpec, x: &Rational) -> Rational {
    match sys {
        SystemSpec::Beta { gamma } => {
            let y = x * int(gamma as i64);
            y.fract_nonneg()
        }
        SystemSpec::Gauss => {
            if x.is_zero() {
                Rational::zero()
            } else {
                x.recip().fract_nonneg()
            }
        }
    }
}

trait FractNonneg {
    fn fract_nonneg(&self) -> Rational;
}

impl FractNonneg for Rational {
    fn fract_nonneg(&self) -> Rational {
        self - Rational::from_integer(self.floor().to_integer())
    }
}

/// `T^m x`.
pub fn iterate_map(sys: SystemSpec, m: usize, x: &Rational) -> Rational {
    let mut y = x.clone();
    for _ in 0..m {
        y = apply_map(sys, &y);
    }
    y
}

/// Digit of the first order cylinder containing `y` in its interior side.
pub fn digit_of(sys: SystemSpec, y: &Rational) -> BigInt {
    match sys {
        SystemSpec::Beta { gamma } => {
            let d = (y * int(gamma as i64)).floor().to_integer();
            d.min(BigInt::from(gamma - 1))
        }
        SystemSpec::Gauss => y.recip().floor().to_integer(),
    }
}

/// Order-one vertices (points with `T z = 0`) inside a closed interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirstOrderVertices {
    /// `None` when infinitely many (the window reaches 0 on the Gauss map).
    pub count: Option<u64>,
    pub leftmost: Option<Rational>,
    pub rightmost: Option<Rational>,
}

impl FirstOrderVertices {
    pub fn is_empty(&self) -> bool {
        self.count == Some(0)
    }

    pub fn at_most_one(&self) -> bool {
        matches!(self.count, Some(c) if c <= 1)
    }
}

pub fn first_order_vertices(sys: SystemSpec, iv: &Interval) -> FirstOrderVertices {
    match sys {
        SystemSpec::Beta { gamma } => {
            let g = int(gamma as i64);
            let gi = BigInt::from(gamma);
            let lo = (iv.lo.numer() * &gi).div_ceil(iv.lo.denom()).max(BigInt::zero());
            let hi = (iv.hi.numer() * &gi).div_floor(iv.hi.denom()).min(gi.clone());
            if lo > hi {
                return FirstOrderVertices {
                    count: Some(0),
                    leftmost: None,
                    rightmost: None,
                };
            }
            let count = (&hi - &lo + 1u32).to_u64();
            FirstOrderVertices {
                count,
                leftmost: Some(Rational::from_integer(lo) / &g),
                rightmost: Some(Rational::from_integer(hi) / &g),
            }
        }
        SystemSpec::Gauss => {
            // vertices are 0 and 1/k, k >= 1
            let has_zero = iv.lo.is_zero();
            if iv.hi.is_zero() {
                return FirstOrderVertices {
                    count: Some(1),
                    leftmost: Some(Rational::zero()),
                    rightmost: Some(Rational::zero()),
                };
            }
            // 1/k in [lo, hi] iff 1/hi <= k <= 1/lo
            let k_min = iv.hi.recip().ceil().to_integer().max(BigInt::one());
            let rightmost_k = k_min.clone();
            if has_zero {
                return FirstOrderVertices {
                    count: None,
                    leftmost: Some(Rational::zero()),
                    rightmost: Some(Rational::new(BigInt::one(), rightmost_k)),
                };
            }
            let k_max = iv.lo.recip().floor().to_integer();
            if k_min > k_max {
                return FirstOrderVertices {
                    count: Some(0),
                    leftmost: None,
                    rightmost: None,
                };
            }
            FirstOrderVertices {
                count: (&k_max - &k_min + 1u32).to_u64(),
                leftmost: Some(Rational::new(BigInt::one(), k_max)),
                rightmost: Some(Rational::new(BigInt::one(), k_min)),
            }
        }
    }
}

/// Whether the open interior of `iv` contains an order-one vertex.
pub fn interior_has_first_order_vertex(sys: SystemSpec, iv: &Interval) -> bool {
    if le(&iv.hi, &iv.lo) {
        return false;
    }
    let v = first_order_vertices(sys, iv);
    match v.count {
        None => true,
        Some(0) => false,
        Some(1) => {
            let p = v.leftmost.unwrap();
            p != iv.lo && p != iv.hi
        }
        Some(2) => {
            // both could sit exactly on the endpoints
            !(v.leftmost.as_ref() == Some(&iv.lo) && v.rightmost.as_ref() == Some(&iv.hi))
        }
        Some(_) => true,
    }
}

/// Digit ranges of first order cylinders meeting `iv` (closed intersection).
fn child_digits(sys: SystemSpec, iv: &Interval, cap: usize) -> Result<Vec<BigInt>> {
    match sys {
        SystemSpec::Beta { gamma } => {
            let g = int(gamma as i64);
            let lo = ((&iv.lo * &g).ceil().to_integer() - BigInt::one()).max(BigInt::zero());
            let hi = (&iv.hi * &g).floor().to_integer().min(BigInt::from(gamma - 1));
            let mut out = Vec::new();
            let mut k = lo;
            while k <= hi {
                out.push(k.clone());
                k += 1;
            }
            Ok(out)
        }
        SystemSpec::Gauss => {
            if iv.hi.is_zero() {
                return Ok(Vec::new());
            }
            // cylinder k = [1/(k+1), 1/k] meets [lo,hi] iff 1/hi - 1 <= k <= 1/lo
            let k_lo = (iv.hi.recip().ceil().to_integer() - BigInt::one()).max(BigInt::one());
            if iv.lo.is_zero() {
                return Err(DynamicsError::DepthOverflow { cap });
            }
            let k_hi = iv.lo.recip().floor().to_integer();
            if k_hi < k_lo {
                return Ok(Vec::new());
            }
            let span = (&k_hi - &k_lo + 1u32).to_usize().unwrap_or(usize::MAX);
            if span > cap {
                return Err(DynamicsError::DepthOverflow { cap });
            }
            let mut out = Vec::with_capacity(span);
            let mut k = k_lo;
            while k <= k_hi {
                out.push(k.clone());
                k += 1;
            }
            Ok(out)
        }
    }
}

/// All branches of order `n` whose cylinder meets `window`.
pub fn cylinders_meeting(
    sys: SystemSpec,
    n: usize,
    window: &Interval,
    cap: usize,
) -> Result<Vec<Branch>> {
    let mut frontier = vec![Branch::identity(sys)];
    for _ in 0..n {
        let mut next = Vec::new();
        for br in &frontier {
            let Some(local) = br.cylinder().intersection(window) else {
                continue;
            };
            let image = br.forward_interval(&local);
            for k in child_digits(sys, &image, cap)? {
                next.push(br.pushed(&k));
                if next.len() > cap {
                    return Err(DynamicsError::DepthOverflow { cap });
                }
            }
        }
        frontier = next;
    }
    frontier.retain(|br| br.cylinder().intersection(window).is_some());
    Ok(frontier)
}

fn check_window(window: &Interval) -> Result<()> {
    if window.lo < Rational::zero() || window.hi > Rational::one() {
        return Err(DynamicsError::OutOfDomain(window.to_string()));
    }
    Ok(())
}

/// Points `z` in `window` with `T^n z = 0`, ascending.
pub fn enumerate_vertices(
    sys: SystemSpec,
    n: usize,
    window: &Interval,
    cap: usize,
) -> Result<Vec<Rational>> {
    check_window(window)?;
    if n == 0 {
        return Ok(window
            .contains_point(&Rational::zero())
            .then(Rational::zero)
            .into_iter()
            .collect());
    }
    if let SystemSpec::Beta { gamma } = sys {
        let scale = Rational::from_integer(BigInt::from(gamma).pow(n as u32));
        let lo = (&window.lo * &scale).ceil().to_integer();
        let hi = (&window.hi * &scale).floor().to_integer();
        let count = if hi >= lo {
            (&hi - &lo + 1u32).to_usize().unwrap_or(usize::MAX)
        } else {
            0
        };
        if count > cap {
            return Err(DynamicsError::DepthOverflow { cap });
        }
        let mut out = Vec::with_capacity(count);
        let mut k = lo;
        while k <= hi {
            out.push(Rational::from_integer(k.clone()) / &scale);
            k += 1;
        }
        return Ok(out);
    }
    let mut pts: Vec<Rational> = Vec::new();
    for br in cylinders_meeting(sys, n, window, cap)? {
        let cyl = br.cylinder();
        for p in [cyl.lo, cyl.hi] {
            if window.contains_point(&p) {
                pts.push(p);
            }
        }
    }
    if window.contains_point(&Rational::zero()) {
        pts.push(Rational::zero());
    }
    pts.sort();
    pts.dedup();
    pts.retain(|p| iterate_map(sys, n, p).is_zero());
    Ok(pts)
}

/// Address of the order-`n` cylinder whose interior contains `x`.
pub fn cylinder_of(sys: SystemSpec, n: usize, x: &Rational) -> Result<CylinderAddress> {
    if x < &Rational::zero() || x > &Rational::one() {
        return Err(DynamicsError::OutOfDomain(format_rational(x)));
    }
    let mut digits = Vec::with_capacity(n);
    let mut y = x.clone();
    for k in 0..n {
        if y.is_zero() || (!sys.is_gauss() && y.is_one()) {
            let order = if y.is_zero() { k } else { k + 1 };
            return Err(DynamicsError::Boundary {
                point: format_rational(x),
                order,
            });
        }
        digits.push(digit_of(sys, &y));
        y = apply_map(sys, &y);
    }
    if n > 0 && y.is_zero() {
        return Err(DynamicsError::Boundary {
            point: format_rational(x),
            order: n,
        });
    }
    Ok(CylinderAddress { digits })
}

pub fn cylinder_interval(sys: SystemSpec, addr: &CylinderAddress) -> Result<Interval> {
    Ok(Branch::from_address(sys, addr)?.cylinder())
}

/// Branch of `T^m` on an interval with no order-`m` vertex in its interior.
pub fn branch_of_interval(sys: SystemSpec, m: usize, iv: &Interval) -> Result<Branch> {
    let mut br = Branch::identity(sys);
    let mut image = iv.clone();
    for k in 0..m {
        if interior_has_first_order_vertex(sys, &image) {
            return Err(DynamicsError::InjectivityViolation {
                interval: iv.to_string(),
                order: k + 1,
            });
        }
        let probe = if image.lo < image.hi {
            image.midpoint()
        } else {
            image.lo.clone()
        };
        if probe.is_zero() {
            return Err(DynamicsError::Boundary {
                point: format_rational(&iv.lo),
                order: k,
            });
        }
        let digit = digit_of(sys, &probe);
        br.push(&digit);
        image = br.forward_interval(iv);
    }
    Ok(br)
}

/// Image of `iv` under `T^m`, using the continuous branch across the
/// closed cylinder.
pub fn interval_image(sys: SystemSpec, m: usize, iv: &Interval) -> Result<Interval> {
    Ok(branch_of_interval(sys, m, iv)?.forward_interval(iv))
}

/// All `z` in `window` with `T^m z = y`.
pub fn branch_preimages(
    sys: SystemSpec,
    m: usize,
    y: &Rational,
    window: &Interval,
    cap: usize,
) -> Result<Vec<Rational>> {
    check_window(window)?;
    if y < &Rational::zero() || y > &Rational::one() {
        return Err(DynamicsError::OutOfDomain(format_rational(y)));
    }
    if m == 0 {
        return Ok(window.contains_point(y).then(|| y.clone()).into_iter().collect());
    }
    let mut out: Vec<Rational> = cylinders_meeting(sys, m, window, cap)?
        .iter()
        .map(|br| br.preimage(y))
        .filter(|z| window.contains_point(z) && &iterate_map(sys, m, z) == y)
        .collect();
    if y.is_zero() && window.contains_point(&Rational::zero()) {
        out.push(Rational::zero());
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// `|D_x T^m|` along the actual orbit of `x`.
pub fn derivative_magnitude(sys: SystemSpec, m: usize, x: &Rational) -> Result<Rational> {
    match sys {
        SystemSpec::Beta { gamma } => Ok(Rational::from_integer(BigInt::from(gamma).pow(m as u32))),
        SystemSpec::Gauss => {
            let mut acc = Rational::one();
            let mut y = x.clone();
            for k in 0..m {
                if y.is_zero() {
                    return Err(DynamicsError::Boundary {
                        point: format_rational(x),
                        order: k,
                    });
                }
                acc /= &y * &y;
                y = apply_map(sys, &y);
            }
            Ok(acc)
        }
    }
}

/// `|D_x T^m| / |D_y T^m|` for two points of one closed cylinder.
pub fn distortion_ratio(sys: SystemSpec, m: usize, x: &Rational, y: &Rational) -> Result<Rational> {
    if x == y {
        return Ok(Rational::one());
    }
    let span = Interval::spanning(x.clone(), y.clone());
    let br = branch_of_interval(sys, m, &span).map_err(|_| {
        DynamicsError::CylinderMismatch(format_rational(x), format_rational(y), m)
    })?;
    Ok(br.derivative(x) / br.derivative(y))
}

/// One row of the expansion table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionRow {
    pub n: usize,
    pub min_ratio: Rational,
    pub cylinders: u64,
    pub cap: u64,
}

/// Largest partial quotient enumerated explicitly by the expansion oracle.
pub const EXPANSION_DIGIT_CAP: u64 = 2;

/// Certified lower bounds on `|D T^n| / psi^n` for the Gauss map.
///
/// On a cylinder the derivative `(q_{n-1} y + q_n)^2` is smallest at
/// `y = 0`, so each cylinder contributes `q_n^2`. Enumerating digits up to
/// the cap suffices because `q_n` is increasing in every digit.
pub fn expansion_oracle(max_depth: usize) -> Vec<ExpansionRow> {
    (1..=max_depth)
        .into_par_iter()
        .map(|n| {
            let cap = EXPANSION_DIGIT_CAP;
            let mut min_q: Option<BigInt> = None;
            let mut count = 0u64;
            let mut digits = vec![1u64; n];
            loop {
                let addr: Vec<BigInt> = digits.iter().map(|&d| BigInt::from(d)).collect();
                let q = Continuants::from_digits(&addr).q_n;
                count += 1;
                if min_q.as_ref().is_none_or(|m| &q < m) {
                    min_q = Some(q);
                }
                // odometer over {1..cap}^n
                let mut i = 0;
                while i < n && digits[i] == cap {
                    digits[i] = 1;
                    i += 1;
                }
                if i == n {
                    break;
                }
                digits[i] += 1;
            }
            let q = Rational::from_integer(min_q.expect("nonempty enumeration"));
            let (_, psi_hi) = psi_pow_bounds(n as u64, 40);
            ExpansionRow {
                n,
                min_ratio: &q * &q / psi_hi,
                cylinders: count,
                cap,
            }
        })
        .collect()
}
