//! Twist sequences and Bob policies.

use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::SystemSpec;
use crate::game::{placement_range, GameState};
use crate::numerics::{
    add_q, ceil_div, cmp_q, distance, floor_div, format_rational, int, le, lt, mul_q, parse_rational, rat, reduced,
    Ball, Interval, Rational,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("twist {0} does not map [0,1] into [0,1]")]
    TwistRange(String),
    #[error("twist {0} is not equicontinuous")]
    NotEquicontinuous(String),
    #[error("cannot parse twist spec {0:?}")]
    TwistSyntax(String),
    #[error("cannot parse bob spec {0:?}")]
    BobSyntax(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TwistFamily {
    Constant(Rational),
    Identity,
    /// `f_n(x) = L x + 2(1-L)/(n+4)`.
    Affine { slope: Rational },
    /// `f_n(x) = slope_n x + offset_n`; the last entry repeats.
    Custom(Vec<(Rational, Rational)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwistSequence {
    pub family: TwistFamily,
}

impl TwistSequence {
    pub fn new(family: TwistFamily) -> Result<Self, AdversaryError> {
        let ts = TwistSequence { family };
        ts.validate()?;
        Ok(ts)
    }

    pub fn constant(v: Rational) -> Result<Self, AdversaryError> {
        Self::new(TwistFamily::Constant(v))
    }

    pub fn identity() -> Self {
        TwistSequence {
            family: TwistFamily::Identity,
        }
    }

    pub fn affine(slope: Rational) -> Result<Self, AdversaryError> {
        Self::new(TwistFamily::Affine { slope })
    }

    fn validate(&self) -> Result<(), AdversaryError> {
        let unit = |v: &Rational| !v.is_negative() && v <= &Rational::one();
        let bad = || AdversaryError::TwistRange(self.to_string());
        match &self.family {
            TwistFamily::Constant(v) => unit(v).then_some(()).ok_or_else(bad),
            TwistFamily::Identity => Ok(()),
            TwistFamily::Affine { slope } => unit(slope).then_some(()).ok_or_else(bad),
            TwistFamily::Custom(table) => {
                if table.is_empty() {
                    return Err(AdversaryError::TwistSyntax(self.to_string()));
                }
                for (a, b) in table {
                    if !(unit(b) && unit(&(a + b))) {
                        return Err(bad());
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, n: usize, x: &Rational) -> Rational {
        match &self.family {
            TwistFamily::Constant(v) => v.clone(),
            TwistFamily::Identity => x.clone(),
            TwistFamily::Affine { slope } => {
                add_q(&mul_q(slope, x), &((int(1) - slope) * rat(2, n as i64 + 4)))
            }
            TwistFamily::Custom(table) => {
                let (a, b) = &table[n.min(table.len() - 1)];
                add_q(&mul_q(a, x), b)
            }
        }
    }

    /// Uniform Lipschitz constant of the family.
    pub fn lipschitz(&self) -> Rational {
        match &self.family {
            TwistFamily::Constant(_) => Rational::zero(),
            TwistFamily::Identity => Rational::one(),
            TwistFamily::Affine { slope } => slope.clone(),
            TwistFamily::Custom(table) => table
                .iter()
                .map(|(a, _)| a.abs())
                .max()
                .unwrap_or_else(Rational::zero),
        }
    }

    /// Bound on `|f_n(x) - f_n(y)|` whenever `|x - y| <= eps`, for every `n`.
    pub fn modulus(&self, eps: &Rational) -> Rational {
        self.lipschitz() * eps
    }

    /// Largest `eps` whose modulus stays strictly below `bound`.
    pub fn modulus_inverse(&self, bound: &Rational) -> Rational {
        let l = self.lipschitz();
        if l.is_zero() {
            Rational::one()
        } else {
            bound / (l * int(2))
        }
    }
}

impl fmt::Display for TwistSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            TwistFamily::Constant(v) => write!(f, "const:{}", format_rational(v)),
            TwistFamily::Identity => write!(f, "identity"),
            TwistFamily::Affine { slope } => write!(f, "affine:{}", format_rational(slope)),
            TwistFamily::Custom(table) => {
                let parts: Vec<String> = table
                    .iter()
                    .map(|(a, b)| format!("{},{}", format_rational(a), format_rational(b)))
                    .collect();
                write!(f, "custom:{}", parts.join(";"))
            }
        }
    }
}

impl FromStr for TwistSequence {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || AdversaryError::TwistSyntax(s.to_string());
        let num = |t: &str| parse_rational(t).map_err(|_| syntax());
        if s == "identity" {
            return Ok(TwistSequence::identity());
        }
        if let Some(v) = s.strip_prefix("const:") {
            return TwistSequence::constant(num(v)?);
        }
        if let Some(v) = s.strip_prefix("affine:") {
            return TwistSequence::affine(num(v)?);
        }
        if let Some(v) = s.strip_prefix("custom:") {
            let mut table = Vec::new();
            for pair in v.split(';') {
                let (a, b) = pair.split_once(',').ok_or_else(syntax)?;
                table.push((num(a)?, num(b)?));
            }
            return TwistSequence::new(TwistFamily::Custom(table));
        }
        Err(syntax())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BobPolicySpec {
    Random(u64),
    Chaser,
    Extremal(Side),
    /// Balls to re-emit in order, read from a transcript at `path`.
    Replay { path: String, balls: Vec<Ball> },
}

impl fmt::Display for BobPolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BobPolicySpec::Random(seed) => write!(f, "random:{seed}"),
            BobPolicySpec::Chaser => write!(f, "chaser"),
            BobPolicySpec::Extremal(Side::Left) => write!(f, "extremal:left"),
            BobPolicySpec::Extremal(Side::Right) => write!(f, "extremal:right"),
            BobPolicySpec::Replay { path, .. } => write!(f, "replay:{path}"),
        }
    }
}

impl FromStr for BobPolicySpec {
    type Err = AdversaryError;

    /// Replay specs parse with an empty ball list; the harness loads the file.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chaser" => Ok(BobPolicySpec::Chaser),
            "extremal:left" => Ok(BobPolicySpec::Extremal(Side::Left)),
            "extremal:right" => Ok(BobPolicySpec::Extremal(Side::Right)),
            _ => {
                if let Some(seed) = s.strip_prefix("random:") {
                    seed.parse()
                        .map(BobPolicySpec::Random)
                        .map_err(|_| AdversaryError::BobSyntax(s.to_string()))
                } else if let Some(path) = s.strip_prefix("replay:") {
                    Ok(BobPolicySpec::Replay {
                        path: path.to_string(),
                        balls: Vec::new(),
                    })
                } else {
                    Err(AdversaryError::BobSyntax(s.to_string()))
                }
            }
        }
    }
}

/// Grid resolution for random centers.
const RANDOM_GRID: i64 = 1000;
/// Candidate centers per component for the chaser.
const CHASER_GRID: i64 = 16;
/// Iterates scored by the chaser.
pub const CHASER_LOOKAHEAD: usize = 3;

pub struct BobPolicy {
    spec: BobPolicySpec,
    rng: ChaCha8Rng,
    replay_pos: usize,
}

impl BobPolicy {
    pub fn new(spec: BobPolicySpec) -> Self {
        let seed = match &spec {
            BobPolicySpec::Random(s) => *s,
            _ => 0,
        };
        BobPolicy {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            replay_pos: 0,
        }
    }

    pub fn spec(&self) -> &BobPolicySpec {
        &self.spec
    }

    /// Next ball, or `None` when no legal ball exists or a replay ran out.
    pub fn next(&mut self, gs: &GameState, sys: SystemSpec, twist: &TwistSequence) -> Option<Ball> {
        if let BobPolicySpec::Replay { balls, .. } = &self.spec {
            let b = balls.get(self.replay_pos).cloned();
            self.replay_pos += 1;
            return b;
        }
        let Some(min_r) = gs.bob_min_radius() else {
            return Some(self.first_ball());
        };
        let comps = gs.legal_bob_components();
        if comps.is_empty() {
            return None;
        }
        match self.spec.clone() {
            BobPolicySpec::Random(_) => self.random_ball(gs, &comps, &min_r),
            BobPolicySpec::Extremal(side) => extremal_ball(&comps, &min_r, side),
            BobPolicySpec::Chaser => chaser_ball(&comps, &min_r, sys, twist, gs.round()),
            BobPolicySpec::Replay { .. } => unreachable!(),
        }
    }

    fn first_ball(&mut self) -> Ball {
        match self.spec {
            BobPolicySpec::Random(_) => {
                let r = [rat(1, 2), rat(1, 4), rat(1, 8)][self.rng.gen_range(0..3)].clone();
                let t = self.rng.gen_range(0..=RANDOM_GRID);
                let c = &r + (int(1) - &r * int(2)) * rat(t, RANDOM_GRID);
                Ball::new(c, r).expect("center in range")
            }
            _ => Ball::new(rat(1, 2), rat(1, 2)).expect("unit ball"),
        }
    }

    fn random_ball(&mut self, gs: &GameState, comps: &[Interval], min_r: &Rational) -> Option<Ball> {
        let comp = &comps[self.rng.gen_range(0..comps.len())];
        let prev_r = gs.last_bob().map(|b| b.radius().clone()).unwrap_or_else(Rational::one);
        let beta = &gs.config.beta;
        let half = mul_q(&comp.length(), &rat(1, 2));
        let mid = mul_q(&(beta + (rat(1, 3) - beta) / int(2)), &prev_r);
        let mut radii: Vec<Rational> = [min_r.clone(), mid, half.clone()]
            .into_iter()
            .filter(|s| le(min_r, s) && le(s, &half))
            .collect();
        if radii.is_empty() {
            radii.push(min_r.clone());
        }
        let s = radii[self.rng.gen_range(0..radii.len())].clone();
        let (lo, hi) = placement_range(comp, &s)?;
        let t = self.rng.gen_range(0..=RANDOM_GRID);
        let c = grid_point(&lo, &hi, &mul_q(&s, &rat(1, RANDOM_GRID)), t, RANDOM_GRID);
        Ball::new(c, s).ok()
    }
}

/// The `t`-th of `n` evenly spread multiples of `step` in `[lo, hi]`, or
/// `lo` when no multiple fits. Keeps center denominators tied to the radius.
fn grid_point(lo: &Rational, hi: &Rational, step: &Rational, t: i64, n: i64) -> Rational {
    let jlo = ceil_div(lo, step);
    let jhi = floor_div(hi, step);
    if jlo > jhi {
        return lo.clone();
    }
    let j = &jlo + (&jhi - &jlo) * BigInt::from(t) / BigInt::from(n);
    mul_q(&Rational::from_integer(j), step)
}

fn largest(comps: &[Interval], side: Side) -> &Interval {
    let mut best = &comps[0];
    for c in &comps[1..] {
        let better = match side {
            Side::Left => lt(&best.length(), &c.length()),
            Side::Right => le(&best.length(), &c.length()),
        };
        if better {
            best = c;
        }
    }
    best
}

fn extremal_ball(comps: &[Interval], min_r: &Rational, side: Side) -> Option<Ball> {
    let comp = largest(comps, side);
    let (lo, hi) = placement_range(comp, min_r)?;
    let c = match side {
        Side::Left => lo,
        Side::Right => hi,
    };
    Ball::new(c, min_r.clone()).ok()
}

/// Iterates `T^j c` with the derivative `|D T^j c|` for the chaser score.
fn orbit_samples(sys: SystemSpec, c: &Rational, s: &Rational, round: usize) -> Vec<(usize, Rational)> {
    let limit = 4 * round + 64;
    match sys {
        SystemSpec::Beta { gamma } => {
            let g = BigInt::from(gamma);
            // smallest D with gamma^D s >= 1
            let mut d = 0usize;
            let mut scale = s.numer().clone();
            while &scale < s.denom() && d < limit {
                scale *= &g;
                d += 1;
            }
            let (p, q) = (c.numer(), c.denom());
            (d.saturating_sub(CHASER_LOOKAHEAD - 1)..=d)
                .map(|j| {
                    let num = (p * g.modpow(&BigInt::from(j), q)) % q;
                    (j, reduced(num, q.clone()))
                })
                .collect()
        }
        SystemSpec::Gauss => {
            // x_j = num_j / den_j with den_{j+1} = num_j and |D T^j c| = (q / den_j)^2
            let q0 = c.denom().clone();
            let (mut num, mut den) = (c.numer().clone(), c.denom().clone());
            let mut orbit = vec![(num.clone(), den.clone())];
            // stop once (q0 / den)^2 s >= 1
            let bound = &q0 * &q0 * s.numer();
            let mut j = 0;
            while j < limit && !num.is_zero() {
                if &den * &den * s.denom() <= bound {
                    break;
                }
                let next = &den % &num;
                den = std::mem::replace(&mut num, next);
                orbit.push((num.clone(), den.clone()));
                j += 1;
            }
            let d = orbit.len() - 1;
            (d.saturating_sub(CHASER_LOOKAHEAD - 1)..=d)
                .map(|j| {
                    let (n, dd) = &orbit[j];
                    (j, reduced(n.clone(), dd.clone()))
                })
                .collect()
        }
    }
}

fn chaser_ball(
    comps: &[Interval],
    min_r: &Rational,
    sys: SystemSpec,
    twist: &TwistSequence,
    round: usize,
) -> Option<Ball> {
    let mut best: Option<(Rational, Ball)> = None;
    for comp in comps {
        let Some((lo, hi)) = placement_range(comp, min_r) else {
            continue;
        };
        for t in 0..=CHASER_GRID {
            let c = grid_point(&lo, &hi, &mul_q(min_r, &rat(1, RANDOM_GRID)), t, CHASER_GRID);
            let score = orbit_samples(sys, &c, min_r, round)
                .into_iter()
                .map(|(j, y)| distance(&y, &twist.eval(j, &c)))
                .min_by(cmp_q)
                .unwrap_or_else(Rational::zero);
            if best.as_ref().is_none_or(|(b, _)| lt(&score, b)) {
                best = Some((score, Ball::new(c, min_r.clone()).ok()?));
            }
            if lo == hi {
                break;
            }
        }
    }
    best.map(|(_, b)| b)
}

/// Approximate magnitude of a rational as `f64`, for reports.
pub fn approx(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
