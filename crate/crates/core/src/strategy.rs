//! Alice's strategy: level bookkeeping, Type I/II/III classification, the
//! three cases for each system, and the monitors that check the claims the
//! strategy relies on.

use std::cmp::Ordering;
use std::fmt;
use std::sync::OnceLock;

use num::bigint::BigInt;
use num::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::adversary::TwistSequence;
use crate::dynamics::{
    digit_of, expansion_oracle, first_order_vertices, interior_has_first_order_vertex, Branch,
    DynamicsError, SystemSpec,
};
use crate::game::{GameState, Player};
use crate::numerics::{
    add_q, distance, format_rational, int, le, lt, mul_q, pow, rat, sub_q, Ball, Interval, NumericsError, Rational,
};
use crate::quadratic::{psi_pow, psi_pow_bounds, QuadSqrt5};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StrategyError {
    #[error("no admissible constants with lambda <= {0}")]
    InfeasibleConstants(u64),
    #[error("level {level}: ball interior contains a vertex of order {order}")]
    InteriorVertex { level: usize, order: usize },
    #[error("level {0}: classification is not a trichotomy")]
    Trichotomy(usize),
    #[error("strategy asked to move out of turn")]
    NotAliceTurn,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, StrategyError>;

/// Smallest `e` with `2^e >= x`.
pub fn ceil_log2(x: u64) -> u64 {
    let mut e = 0;
    while (1u128 << e) < x as u128 {
        e += 1;
    }
    e
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyConstants {
    pub rho: Rational,
    pub rho_sharp: Rational,
    pub lambda: u64,
    /// Expansion constant of the Gauss map; `None` for the `gamma` maps.
    pub r_expansion: Option<Rational>,
    /// `psi = (3 + sqrt 5) / 2`.
    pub psi: QuadSqrt5,
    pub delta: Rational,
    pub delta_final: Rational,
}

impl StrategyConstants {
    pub fn ceil_log2_lambda(&self) -> u64 {
        ceil_log2(self.lambda)
    }
}

fn psi_exact() -> QuadSqrt5 {
    QuadSqrt5::new(rat(3, 2), rat(1, 2))
}

pub fn derive_constants_i(gamma: u64, beta: &Rational, rho1_1: &Rational) -> StrategyConstants {
    let g = int(gamma as i64);
    let rho_sharp = pow(&g, 4) / beta;
    let rho = beta * rho1_1.min(&rho_sharp).clone();
    // lambda - 1 = smallest e with gamma^e * rho * beta >= 1
    let target = &rho * beta;
    let mut e = 0u64;
    let mut acc = target.clone();
    while acc < Rational::one() {
        acc *= &g;
        e += 1;
    }
    let lambda = e + 1;
    let cl = ceil_log2(lambda);
    let delta = pow(&g, lambda).recip()
        * rat(1, 2)
        * pow(beta, cl + 3)
        * (beta / (int(2) * &g));
    StrategyConstants {
        rho,
        rho_sharp,
        lambda,
        r_expansion: None,
        psi: psi_exact(),
        delta_final: &delta / int(2),
        delta,
    }
}

/// Largest `lambda` searched before giving up.
pub const LAMBDA_CAP: u64 = 1_000_000;

pub fn derive_constants_ii(beta: &Rational, rho1_1: &Rational, r: &Rational) -> Result<StrategyConstants> {
    let quarter = beta / int(4);
    let scale = int(4) / (r * beta);
    // rough search window from floating point logs
    let est = {
        let b = quarter.to_f64().unwrap_or(0.0);
        let s = scale.to_f64().unwrap_or(f64::INFINITY);
        let psi = 2.618_033_988_749_895_f64;
        let mut found = None;
        for lam in 2..=LAMBDA_CAP {
            let cl = ceil_log2(lam) as f64;
            let lhs = (lam as f64 - 1.0) * psi.ln();
            let rhs = (2.0 * s).ln() - (cl + 6.0) * b.ln() - (b / 16.0).ln();
            if lhs >= rhs {
                found = Some(lam);
                break;
            }
        }
        found.ok_or(StrategyError::InfeasibleConstants(LAMBDA_CAP))?
    };
    let upper = est + 64;
    for lambda in 2..=upper {
        let cl = ceil_log2(lambda);
        let p = psi_pow(lambda - 1);
        // (4/(R beta)) psi^{1-lambda} <= (1/2)(beta/4)^{cl+6}
        let need = &scale * int(2) / pow(&quarter, cl + 6);
        if p.cmp_rational(&need) == Ordering::Less {
            continue;
        }
        let hi_end = rat(1, 32) * pow(&quarter, cl + 7);
        // admissible interval must be nonempty
        if p.cmp_rational(&(&scale / &hi_end)) != Ordering::Greater {
            continue;
        }
        let mut precision = 8;
        let lo_up = loop {
            let (p_lo, _) = psi_pow_bounds(lambda - 1, precision);
            let lo_up = &scale / p_lo;
            if lo_up < hi_end {
                break lo_up;
            }
            precision *= 2;
        };
        let rho_sharp = (lo_up + &hi_end) / int(2);
        let rho = rho1_1.min(&rho_sharp).clone();
        let rho_beta = &rho * beta;
        let d1 = rat(1, 4) * pow(beta, 1 + ceil_log2(lambda + 2)) * &rho;
        let d2 = pow(beta, cl + 6) / int(8) * pow(&(&rho_beta / int(2)), 2);
        let d3 = rat(1, 16) * &rho_beta * pow(beta, cl + 1);
        let delta = d1.min(d2).min(d3);
        return Ok(StrategyConstants {
            rho,
            rho_sharp,
            lambda,
            r_expansion: Some(r.clone()),
            psi: psi_exact(),
            delta_final: &delta / int(2),
            delta,
        });
    }
    Err(StrategyError::InfeasibleConstants(upper))
}

/// Depth of the expansion table behind [`expansion_constant`].
pub const EXPANSION_DEPTH: usize = 15;

/// Half the smallest certified ratio `|D T^n| / psi^n` over `n <= 15`.
pub fn expansion_constant() -> Rational {
    static R: OnceLock<Rational> = OnceLock::new();
    R.get_or_init(|| {
        let rows = expansion_oracle(EXPANSION_DEPTH);
        let min = rows
            .into_iter()
            .map(|r| r.min_ratio)
            .min()
            .expect("nonempty table");
        min / int(2)
    })
    .clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevelType {
    I,
    II,
    III,
}

impl fmt::Display for LevelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LevelType::I => "I",
            LevelType::II => "II",
            LevelType::III => "III",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelState {
    pub n: usize,
    pub b1: Ball,
    pub c: Rational,
    pub level_type: LevelType,
    /// `f_{n-1}(c^{(n-1)})`, the value whose preimages are this level's star points.
    pub target: Option<Rational>,
    /// Pending star points in `B1` at classification.
    pub star_count: usize,
    /// Last Type III level before this one, 0 if none.
    pub j: usize,
    pub h: Option<usize>,
    pub l: Option<usize>,
    pub big_n: Option<BigInt>,
    pub big_k: Option<BigInt>,
    pub rho1: Rational,
    pub image: Interval,
    pub subcase: Option<u8>,
    pub round_start: usize,
    pub moves: usize,
}

/// A separation target `y_k = f_k(c^{(k)})` together with its star point
/// `z_k`, the preimage under the order-`k` branch of the reference ball.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub k: usize,
    pub y: Rational,
    pub z: Rational,
    pub branch: Branch,
    /// Margin recorded when the target was certified.
    pub margin: Option<Rational>,
}

impl Target {
    /// `dist(T^k x, y_k)` minimized over `x` in `iv`, exactly.
    pub fn margin_on(&self, iv: &Interval) -> Rational {
        self.branch.forward_interval(iv).distance_to(&self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MonitorKind {
    Trichotomy,
    InteriorVertex,
    RadiusFloor,
    RadiusFloorStrong,
    TypeIIIGap,
    NoDoubleTypeII,
    StarCount,
    HBound,
    RadiusChain,
    NkComparison,
    StarClearance,
    SubcaseOneSchedule,
    Separation,
    MarginMonotone,
    FinalSeparation,
    ContinuedFraction,
}

impl MonitorKind {
    pub const ALL: [MonitorKind; 16] = [
        MonitorKind::Trichotomy,
        MonitorKind::InteriorVertex,
        MonitorKind::RadiusFloor,
        MonitorKind::RadiusFloorStrong,
        MonitorKind::TypeIIIGap,
        MonitorKind::NoDoubleTypeII,
        MonitorKind::StarCount,
        MonitorKind::HBound,
        MonitorKind::RadiusChain,
        MonitorKind::NkComparison,
        MonitorKind::StarClearance,
        MonitorKind::SubcaseOneSchedule,
        MonitorKind::Separation,
        MonitorKind::MarginMonotone,
        MonitorKind::FinalSeparation,
        MonitorKind::ContinuedFraction,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MonitorKind::Trichotomy => "trichotomy",
            MonitorKind::InteriorVertex => "interior-vertex",
            MonitorKind::RadiusFloor => "radius-floor",
            MonitorKind::RadiusFloorStrong => "radius-floor-strong",
            MonitorKind::TypeIIIGap => "type-iii-gap",
            MonitorKind::NoDoubleTypeII => "no-double-type-ii",
            MonitorKind::StarCount => "star-count",
            MonitorKind::HBound => "h-bound",
            MonitorKind::RadiusChain => "radius-chain",
            MonitorKind::NkComparison => "nk-comparison",
            MonitorKind::StarClearance => "star-clearance",
            MonitorKind::SubcaseOneSchedule => "subcase-one-schedule",
            MonitorKind::Separation => "separation",
            MonitorKind::MarginMonotone => "margin-monotone",
            MonitorKind::FinalSeparation => "final-separation",
            MonitorKind::ContinuedFraction => "continued-fraction",
        }
    }

    pub fn from_name(s: &str) -> Option<MonitorKind> {
        MonitorKind::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Monitors kept under `--monitors minimal`.
    pub fn is_minimal(&self) -> bool {
        matches!(
            self,
            MonitorKind::Trichotomy
                | MonitorKind::InteriorVertex
                | MonitorKind::Separation
                | MonitorKind::FinalSeparation
        )
    }
}

impl fmt::Display for MonitorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorRecord {
    pub kind: MonitorKind,
    pub level: usize,
    pub pass: bool,
    /// Exact values behind the verdict.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Annotation {
    pub level: usize,
    pub level_type: Option<LevelType>,
    pub case: String,
    pub target: Option<Rational>,
    pub stars: usize,
    /// Levels relabeled since the previous move.
    pub relabels: Vec<usize>,
    pub fired: Vec<MonitorKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Relabel { from: usize, to: usize },
    Play { ball: Ball, note: Annotation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Loop,
    Schedule { left: usize, first: bool },
    Cleanup(u8),
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CaseIII {
    k: usize,
    step: Step,
    threshold: Rational,
    /// Highest target index the loop clears.
    loop_max: usize,
    /// Highest target index certified at close.
    certify_max: usize,
    /// Loop move at `A_H` before the two cleanups.
    extra_move: bool,
    extended: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Phase {
    Start,
    AfterII,
    III(CaseIII),
}

#[derive(Debug, Clone)]
pub struct StrategyState {
    pub sys: SystemSpec,
    pub beta: Rational,
    pub twist: TwistSequence,
    pub consts: Option<StrategyConstants>,
    pub levels: Vec<LevelState>,
    pub targets: Vec<Target>,
    pub monitors: Vec<MonitorRecord>,
    pending: Vec<usize>,
    phase: Phase,
    /// Branch of `T^{n-1}` on the current level's balls.
    branch: Branch,
    n: usize,
    last_iii: Option<usize>,
    last_ii: Option<usize>,
    ii_since_iii: bool,
    chain_from: Option<usize>,
    fired: Vec<MonitorKind>,
}

impl StrategyState {
    pub fn new(sys: SystemSpec, beta: Rational, twist: TwistSequence) -> Self {
        StrategyState {
            sys,
            beta,
            twist,
            consts: None,
            levels: Vec::new(),
            targets: Vec::new(),
            monitors: Vec::new(),
            pending: Vec::new(),
            phase: Phase::Start,
            branch: Branch::identity(sys),
            n: 1,
            last_iii: None,
            last_ii: None,
            ii_since_iii: false,
            chain_from: None,
            fired: Vec::new(),
        }
    }

    /// Current level index.
    pub fn level(&self) -> usize {
        self.n
    }

    pub fn constants(&self) -> Option<&StrategyConstants> {
        self.consts.as_ref()
    }

    /// The certified separation `delta`.
    pub fn certified_delta(&self) -> Option<Rational> {
        self.consts.as_ref().map(|c| c.delta.clone())
    }

    /// Derives the constants from Bob's first ball.
    pub fn init_constants(&mut self, first: &Ball) -> Result<&StrategyConstants> {
        let rho1_1 = first.diameter();
        let consts = match self.sys {
            SystemSpec::Beta { gamma } => derive_constants_i(gamma, &self.beta, &rho1_1),
            SystemSpec::Gauss => derive_constants_ii(&self.beta, &rho1_1, &expansion_constant())?,
        };
        Ok(self.consts.insert(consts))
    }

    fn consts(&self) -> &StrategyConstants {
        self.consts.as_ref().expect("constants derived at the first move")
    }

    fn monitor(&mut self, kind: MonitorKind, pass: bool, detail: String) {
        self.monitors.push(MonitorRecord {
            kind,
            level: self.n,
            pass,
            detail,
        });
        self.fired.push(kind);
    }

    /// Runs directives until a ball is emitted.
    pub fn next_alice_move(&mut self, gs: &GameState) -> Result<(Ball, Annotation)> {
        let mut relabels = Vec::new();
        loop {
            match self.step(gs)? {
                Directive::Relabel { from, .. } => relabels.push(from),
                Directive::Play { ball, mut note } => {
                    note.relabels = relabels;
                    return Ok((ball, note));
                }
            }
        }
    }

    pub fn step(&mut self, gs: &GameState) -> Result<Directive> {
        if gs.to_move() != Player::Alice {
            return Err(StrategyError::NotAliceTurn);
        }
        let ball = gs.last_bob().expect("Bob has moved").clone();
        if self.consts.is_none() {
            self.init_constants(&ball)?;
        }
        let round = gs.round();
        match self.phase.clone() {
            Phase::Start => self.open_level(&ball, round),
            Phase::AfterII => {
                self.levels.last_mut().expect("open level").moves += 1;
                Ok(self.advance())
            }
            Phase::III(st) => self.case_iii(st, &ball),
        }
    }

    fn advance(&mut self) -> Directive {
        let from = self.n;
        self.n += 1;
        self.phase = Phase::Start;
        Directive::Relabel { from, to: self.n }
    }

    fn image(&self, ball: &Ball) -> Interval {
        self.branch.forward_interval(&ball.interval())
    }

    fn threshold(&self, big_n: Option<&BigInt>) -> Rational {
        match self.sys {
            SystemSpec::Beta { gamma } => &self.consts().rho / int(gamma as i64),
            SystemSpec::Gauss => {
                let nn = Rational::from_integer(big_n.cloned().unwrap_or_else(BigInt::one));
                &self.beta * &self.beta / (int(4) * &nn * &nn)
            }
        }
    }

    fn open_level(&mut self, ball: &Ball, round: usize) -> Result<Directive> {
        self.fired.clear();
        let n = self.n;
        if n >= 2 {
            let prev = self.image(ball);
            let ok = !interior_has_first_order_vertex(self.sys, &prev);
            self.monitor(
                MonitorKind::InteriorVertex,
                ok,
                format!("image={prev}"),
            );
            if !ok {
                return Err(StrategyError::InteriorVertex { level: n, order: n - 1 });
            }
            let probe = prev.midpoint();
            let digit = digit_of(self.sys, &probe);
            self.branch.push(&digit);
        }
        let image = self.image(ball);
        let rho1 = image.length();
        let (rho, beta_rho) = {
            let c = self.consts();
            (c.rho.clone(), &c.rho * &self.beta)
        };
        self.monitor(
            MonitorKind::RadiusFloor,
            le(&beta_rho, &rho1),
            format!("rho1={} beta_rho={}", format_rational(&rho1), format_rational(&beta_rho)),
        );
        if self.ii_since_iii {
            self.monitor(
                MonitorKind::RadiusFloorStrong,
                le(&rho, &rho1),
                format!("rho1={} rho={}", format_rational(&rho1), format_rational(&rho)),
            );
        }
        if let Some(from) = self.chain_from.take() {
            self.monitor(
                MonitorKind::RadiusChain,
                le(&rho, &rho1),
                format!(
                    "closed={from} rho1={} rho={}",
                    format_rational(&rho1),
                    format_rational(&rho)
                ),
            );
        }

        // star point of the previous level's target
        let target = if n >= 2 {
            let prev = &self.levels[n - 2];
            let y = self.twist.eval(n - 1, &prev.c);
            let z = self.branch.preimage(&y);
            self.targets.push(Target {
                k: n - 1,
                y: y.clone(),
                z,
                branch: self.branch.clone(),
                margin: None,
            });
            self.pending.push(self.targets.len() - 1);
            Some(y)
        } else {
            None
        };

        let verts = first_order_vertices(self.sys, &image);
        let big_n = match self.sys {
            SystemSpec::Gauss => verts
                .rightmost
                .as_ref()
                .filter(|v| v.is_positive())
                .map(|v| v.recip().to_integer()),
            SystemSpec::Beta { .. } => None,
        };
        let thr = self.threshold(big_n.as_ref());
        let count = verts.count;
        let c1 = count == Some(0);
        let c2 = count == Some(1) && rho1 < thr;
        let c3 = count != Some(0) && rho1 >= thr;
        let holds = [c1, c2, c3].iter().filter(|&&b| b).count();
        self.monitor(
            MonitorKind::Trichotomy,
            holds == 1,
            format!("clauses={holds} rho1={} threshold={}", format_rational(&rho1), format_rational(&thr)),
        );
        if holds != 1 {
            return Err(StrategyError::Trichotomy(n));
        }
        let level_type = if c1 {
            LevelType::I
        } else if c2 {
            LevelType::II
        } else {
            LevelType::III
        };
        let j = self.last_iii.unwrap_or(0);
        let star_count = self.pending_in(&ball.interval(), n.saturating_sub(2));
        self.levels.push(LevelState {
            n,
            b1: ball.clone(),
            c: ball.center().clone(),
            level_type,
            target,
            star_count,
            j,
            h: None,
            l: None,
            big_n: big_n.clone(),
            big_k: None,
            rho1: rho1.clone(),
            image: image.clone(),
            subcase: None,
            round_start: round,
            moves: 0,
        });

        match level_type {
            LevelType::I => Ok(self.advance()),
            LevelType::II => {
                if let Some(m) = self.last_ii {
                    let ok = self.last_iii.is_some_and(|t| t > m);
                    self.monitor(MonitorKind::NoDoubleTypeII, ok, format!("previous={m}"));
                }
                self.last_ii = Some(n);
                self.ii_since_iii = true;
                let w = verts.leftmost.expect("one vertex");
                let v = self.branch.preimage(&w);
                let radius = mul_q(&self.beta, ball.radius());
                let note = self.note("II", Some(v.clone()), 0);
                self.phase = Phase::AfterII;
                Ok(Directive::Play {
                    ball: Ball::new(v, radius)?,
                    note,
                })
            }
            LevelType::III => {
                let lambda = self.consts().lambda;
                if let Some(m) = self.last_iii {
                    self.monitor(
                        MonitorKind::TypeIIIGap,
                        n - m <= lambda as usize,
                        format!("gap={} lambda={lambda}", n - m),
                    );
                }
                self.monitor(
                    MonitorKind::StarCount,
                    star_count as u64 <= lambda,
                    format!("stars={star_count} lambda={lambda}"),
                );
                self.last_iii = Some(n);
                self.ii_since_iii = false;
                match self.sys {
                    SystemSpec::Beta { .. } => {
                        let st = CaseIII {
                            k: 1,
                            step: Step::Loop,
                            threshold: thr,
                            loop_max: n.saturating_sub(2),
                            certify_max: n - 1,
                            extra_move: false,
                            extended: false,
                        };
                        self.case_iii_move(st, ball)
                    }
                    SystemSpec::Gauss => self.place_first(ball, &image, thr),
                }
            }
        }
    }

    fn note(&self, case: &str, target: Option<Rational>, stars: usize) -> Annotation {
        let level = self.levels.last();
        Annotation {
            level: self.n,
            level_type: level.map(|l| l.level_type),
            case: case.to_string(),
            target,
            stars,
            relabels: Vec::new(),
            fired: self.fired.clone(),
        }
    }

    /// Distinct pending star points with index `<= max_k` inside `iv`.
    fn pending_in(&self, iv: &Interval, max_k: usize) -> usize {
        let mut zs: Vec<&Rational> = self
            .pending
            .iter()
            .map(|&i| &self.targets[i])
            .filter(|t| t.k <= max_k && iv.contains_point(&t.z))
            .map(|t| &t.z)
            .collect();
        zs.sort();
        zs.dedup();
        zs.len()
    }

    /// Pending star points within `beta r` of the ball, oldest first.
    fn threats(&self, ball: &Ball, max_k: usize) -> Vec<usize> {
        let reach = mul_q(&self.beta, ball.radius());
        let lo = sub_q(&ball.left(), &reach);
        let hi = add_q(&ball.right(), &reach);
        self.pending
            .iter()
            .copied()
            .filter(|&i| {
                let t = &self.targets[i];
                t.k <= max_k && lt(&lo, &t.z) && lt(&t.z, &hi)
            })
            .collect()
    }

    /// Order-`n` vertex in the ball, if exactly one.
    fn single_vertex(&self, ball: &Ball) -> Option<Rational> {
        let verts = first_order_vertices(self.sys, &self.image(ball));
        (verts.count == Some(1)).then(|| self.branch.preimage(&verts.leftmost.expect("one vertex")))
    }

    fn regular_move(&mut self, ball: &Ball, max_k: usize, case: &str) -> Result<Directive> {
        let threats = self.threats(ball, max_k);
        let radius = mul_q(&self.beta, ball.radius());
        let center = match threats.first() {
            Some(&i) => self.targets[i].z.clone(),
            None => ball.center().clone(),
        };
        let note = self.note(case, Some(center.clone()), threats.len());
        self.levels.last_mut().expect("open level").moves += 1;
        Ok(Directive::Play {
            ball: Ball::new(center, radius)?,
            note,
        })
    }

    fn play_at(&mut self, ball: &Ball, center: Rational, case: &str, max_k: usize) -> Result<Directive> {
        let stars = self.threats(ball, max_k).len();
        let radius = mul_q(&self.beta, ball.radius());
        let note = self.note(case, Some(center.clone()), stars);
        self.levels.last_mut().expect("open level").moves += 1;
        Ok(Directive::Play {
            ball: Ball::new(center, radius)?,
            note,
        })
    }

    /// First deletion of a Type III level on the Gauss map: the ball of
    /// radius `beta r` flush with the end of `B1` whose image is leftmost.
    fn place_first(&mut self, b1: &Ball, image: &Interval, thr: Rational) -> Result<Directive> {
        let n = self.n;
        let s = mul_q(&self.beta, b1.radius());
        let iv = b1.interval();
        let (center, far) = if self.branch.reverses() {
            let c = sub_q(&iv.hi, &s);
            let far = sub_q(&c, &s);
            (c, far)
        } else {
            let c = add_q(&iv.lo, &s);
            let far = add_q(&c, &s);
            (c, far)
        };
        let center = center.max(Rational::zero()).min(Rational::one());
        let far_in = iv.contains_point(&far);
        let (count, big_k, vertex) = if far_in {
            let a = self.branch.forward(&far);
            let rest = Interval::spanning(a.clone(), image.hi.clone());
            let verts = first_order_vertices(self.sys, &rest);
            // the endpoint at `a` lies in the deleted ball
            let mut count = verts.count;
            if verts.leftmost.as_ref() == Some(&a) {
                count = count.map(|c| c - 1);
            }
            let big_k = if a.is_positive() {
                Some(a.recip().ceil().to_integer() - BigInt::one())
            } else {
                None
            };
            let vertex = verts
                .rightmost
                .filter(|v| v != &a)
                .map(|v| self.branch.preimage(&v));
            (count, big_k, vertex)
        } else {
            (Some(0), None, None)
        };
        let subcase = if matches!(count, Some(c) if c <= 1) { 1 } else { 2 };
        let level = self.levels.last_mut().expect("open level");
        level.subcase = Some(subcase);
        level.big_k = big_k.clone();
        let big_n = level.big_n.clone();
        if subcase == 2 {
            if let (Some(nn), Some(kk)) = (big_n, big_k) {
                let lhs = Rational::new(BigInt::one(), nn);
                let rhs = (int(1) + &self.beta / int(2)) / Rational::from_integer(kk);
                self.monitor(
                    MonitorKind::NkComparison,
                    lhs < rhs,
                    format!("inv_n={} bound={}", format_rational(&lhs), format_rational(&rhs)),
                );
            }
        }
        let lambda = self.consts().lambda;
        let st = if subcase == 1 {
            let _ = vertex;
            CaseIII {
                k: 2,
                step: Step::Schedule {
                    left: ceil_log2(lambda + 2) as usize,
                    first: true,
                },
                threshold: thr,
                loop_max: n.saturating_sub(2),
                certify_max: n.saturating_sub(2),
                extra_move: false,
                extended: false,
            }
        } else {
            CaseIII {
                k: 2,
                step: Step::Loop,
                threshold: thr,
                loop_max: n.saturating_sub(2),
                certify_max: n - 1,
                extra_move: true,
                extended: false,
            }
        };
        self.phase = Phase::III(st);
        let stars = self.threats(b1, n.saturating_sub(2)).len();
        let note = self.note(&format!("III-place-{subcase}"), Some(center.clone()), stars);
        self.levels.last_mut().expect("open level").moves += 1;
        Ok(Directive::Play {
            ball: Ball::new(center, s)?,
            note,
        })
    }

    fn case_iii(&mut self, mut st: CaseIII, ball: &Ball) -> Result<Directive> {
        self.fired.clear();
        st.k += 1;
        self.case_iii_move(st, ball)
    }

    /// Move `A_k` of a Type III level, with `B_k = ball`.
    fn case_iii_move(&mut self, mut st: CaseIII, ball: &Ball) -> Result<Directive> {
        let n = self.n;
        let image = self.image(ball);
        {
            let level = self.levels.last_mut().expect("open level");
            if level.l.is_none() && lt(&image.length(), &st.threshold) {
                level.l = Some(st.k);
            }
        }
        match st.step {
            Step::Loop => {
                let threats = self.threats(ball, st.loop_max);
                let few = first_order_vertices(self.sys, &image).at_most_one();
                let exit = threats.is_empty() && lt(&image.length(), &st.threshold) && few;
                if !exit {
                    self.phase = Phase::III(st.clone());
                    return self.regular_move(ball, st.loop_max, "III-loop");
                }
                self.levels.last_mut().expect("open level").h = Some(st.k);
                self.check_h_bound(st.k);
                if st.extra_move {
                    st.step = Step::Cleanup(0);
                    self.phase = Phase::III(st.clone());
                    return self.regular_move(ball, st.loop_max, "III-loop");
                }
                st.step = Step::Cleanup(0);
                self.case_iii_move(st, ball)
            }
            Step::Cleanup(0) => {
                st.step = Step::Cleanup(1);
                self.phase = Phase::III(st.clone());
                match self.single_vertex(ball) {
                    Some(v) => self.play_at(ball, v, "III-vertex", n - 1),
                    None => self.regular_move(ball, n - 1, "III-vertex"),
                }
            }
            Step::Cleanup(_) => {
                st.step = Step::Close;
                self.phase = Phase::III(st.clone());
                let own = self
                    .threats(ball, n - 1)
                    .into_iter()
                    .find(|&i| self.targets[i].k + 1 == n);
                match own {
                    Some(i) => {
                        let z = self.targets[i].z.clone();
                        self.play_at(ball, z, "III-star", n - 1)
                    }
                    None => self.regular_move(ball, n - 1, "III-star"),
                }
            }
            Step::Schedule { left, first } => {
                if left == 0 {
                    let threats = self.threats(ball, st.loop_max);
                    let clean = !interior_has_first_order_vertex(self.sys, &image);
                    if threats.is_empty() && clean {
                        if st.extended {
                            self.monitor(MonitorKind::SubcaseOneSchedule, false, format!("moves={}", st.k - 1));
                        } else {
                            self.monitor(MonitorKind::SubcaseOneSchedule, true, format!("moves={}", st.k - 1));
                        }
                        return self.close_iii(&st, ball);
                    }
                    st.extended = true;
                    self.phase = Phase::III(st.clone());
                    return match self.single_vertex(ball) {
                        Some(v) if threats.is_empty() => self.play_at(ball, v, "III-schedule", st.loop_max),
                        _ => self.regular_move(ball, st.loop_max, "III-schedule"),
                    };
                }
                st.step = Step::Schedule {
                    left: left - 1,
                    first: false,
                };
                self.phase = Phase::III(st.clone());
                if first {
                    if let Some(v) = self.single_vertex(ball) {
                        return self.play_at(ball, v, "III-schedule", st.loop_max);
                    }
                }
                self.regular_move(ball, st.loop_max, "III-schedule")
            }
            Step::Close => self.close_iii(&st, ball),
        }
    }

    fn check_h_bound(&mut self, h: usize) {
        let cl = self.consts().ceil_log2_lambda() as usize;
        let l = self.levels.last().and_then(|x| x.l);
        let ok = l.is_some_and(|l| h <= l + cl);
        self.monitor(
            MonitorKind::HBound,
            ok,
            format!("h={h} l={} log2_lambda={cl}", l.map(|v| v.to_string()).unwrap_or_default()),
        );
    }

    fn close_iii(&mut self, st: &CaseIII, ball: &Ball) -> Result<Directive> {
        let iv = ball.interval();
        let reach = mul_q(&self.beta, ball.radius());
        let delta = self.consts().delta.clone();
        let mut kept = Vec::new();
        let mut cleared = true;
        let mut worst: Option<Rational> = None;
        for i in std::mem::take(&mut self.pending) {
            let t = &self.targets[i];
            if t.k > st.certify_max {
                kept.push(i);
                continue;
            }
            if lt(&iv.distance_to(&t.z), &reach) {
                cleared = false;
                kept.push(i);
                continue;
            }
            let m = t.margin_on(&iv);
            if worst.as_ref().is_none_or(|w| lt(&m, w)) {
                worst = Some(m.clone());
            }
            self.targets[i].margin = Some(m);
        }
        self.pending = kept;
        self.monitor(MonitorKind::StarClearance, cleared, format!("pending={}", self.pending.len()));
        if let Some(w) = worst {
            self.monitor(
                MonitorKind::Separation,
                w >= delta,
                format!("margin={} delta={}", format_rational(&w), format_rational(&delta)),
            );
        }
        self.chain_from = Some(self.n);
        Ok(self.advance())
    }

    /// Targets certified so far, by index.
    pub fn certified(&self) -> impl Iterator<Item = &Target> {
        self.targets.iter().filter(|t| t.margin.is_some())
    }

    /// Largest `m` such that every target `1..=m` is certified.
    pub fn certified_depth(&self) -> usize {
        let mut depth = 0;
        for t in &self.targets {
            if t.margin.is_some() && t.k == depth + 1 {
                depth = t.k;
            } else {
                break;
            }
        }
        depth
    }
}

/// Exact distance helper re-exported for monitors.
pub fn margin_between(a: &Rational, b: &Rational) -> Rational {
    distance(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameConfig;
    use crate::numerics::rat;

    #[test]
    fn constants_i_example() {
        let c = derive_constants_i(2, &rat(1, 4), &rat(1, 2));
        assert_eq!(c.rho_sharp, int(64));
        assert_eq!(c.rho, rat(1, 8));
        assert_eq!(c.lambda, 6);
        assert_eq!(c.delta, rat(1, 8_388_608));
        assert_eq!(c.delta_final, rat(1, 16_777_216));
    }

    #[test]
    fn constants_i_full_ball() {
        for beta in [rat(1, 20), rat(1, 5), rat(3, 10)] {
            let c = derive_constants_i(3, &beta, &int(1));
            assert_eq!(c.rho, beta);
        }
    }

    #[test]
    fn lambda_i_matches_logs() {
        // independent check with floating point logs away from integer boundaries
        for gamma in [2u64, 3, 10] {
            for beta in [rat(1, 20), rat(1, 5), rat(3, 10)] {
                let c = derive_constants_i(gamma, &beta, &rat(7, 9));
                let rho = c.rho.to_f64().unwrap();
                let b = beta.to_f64().unwrap();
                let real = (-rho.ln() - b.ln()) / (gamma as f64).ln();
                assert_eq!(c.lambda, real.ceil() as u64 + 1);
            }
        }
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(6), 3);
        assert_eq!(ceil_log2(8), 3);
        assert_eq!(ceil_log2(9), 4);
    }

    fn system_holds(beta: &Rational, r: &Rational, lambda: u64) -> bool {
        // rational bounds on psi^(lambda-1) with a fresh precision
        let (lo, _) = psi_pow_bounds(lambda - 1, 64);
        let cl = ceil_log2(lambda);
        let q = beta / int(4);
        let lhs = int(4) / (r * beta) / &lo;
        lhs <= rat(1, 2) * pow(&q, cl + 6) && lhs < rat(1, 32) * pow(&q, cl + 7)
    }

    #[test]
    fn constants_ii_example() {
        let beta = rat(1, 4);
        let r = rat(1, 4);
        let c = derive_constants_ii(&beta, &int(1), &r).unwrap();
        assert!(system_holds(&beta, &r, c.lambda));
        for smaller in 2..c.lambda {
            let (_, hi) = psi_pow_bounds(smaller - 1, 64);
            let cl = ceil_log2(smaller);
            let q = &beta / int(4);
            let lo_end = int(4) / (&r * &beta) / hi;
            let fails = lo_end > rat(1, 2) * pow(&q, cl + 6) || lo_end >= rat(1, 32) * pow(&q, cl + 7);
            assert!(fails, "lambda {smaller} should be rejected");
        }
        // the system's two inequalities at rho_sharp
        let (psi_lo, _) = psi_pow_bounds(c.lambda - 1, 64);
        let cl = c.ceil_log2_lambda();
        assert!(pow(&(&beta / int(4)), cl + 6) >= &c.rho_sharp * int(2));
        assert!(&r / int(4) * &beta * psi_lo >= c.rho_sharp.recip());
        assert_eq!(c.rho, c.rho_sharp);
    }

    #[test]
    fn constants_ii_small_first_ball() {
        let beta = rat(1, 5);
        let c = derive_constants_ii(&beta, &rat(1, 1_000_000_000), &rat(1, 5)).unwrap();
        assert!(c.rho_sharp < rat(1, 1_000_000_000) || c.rho == rat(1, 1_000_000_000));
        assert!(c.delta.is_positive());
    }

    #[test]
    fn expansion_constant_is_half_of_first_ratio() {
        let r = expansion_constant();
        assert!(r > rat(19, 100) && r < rat(2, 10));
    }

    fn play_one(sys: SystemSpec, beta: Rational, bob: Ball) -> (StrategyState, GameState) {
        let mut gs = GameState::new(GameConfig::absolute(beta.clone(), 10).unwrap());
        assert!(gs.play(Player::Bob, bob).is_accept());
        let st = StrategyState::new(sys, beta, TwistSequence::identity());
        (st, gs)
    }

    #[test]
    fn type_i_level_relabels() {
        let sys = SystemSpec::beta(2).unwrap();
        let (mut st, gs) = play_one(sys, rat(1, 4), Ball::new(rat(5, 32), rat(1, 64)).unwrap());
        // level 1 image is the ball itself, free of 0, 1/2, 1
        let d = st.step(&gs).unwrap();
        assert_eq!(d, Directive::Relabel { from: 1, to: 2 });
        assert_eq!(st.levels[0].level_type, LevelType::I);
    }

    #[test]
    fn type_ii_level_deletes_vertex() {
        let sys = SystemSpec::beta(2).unwrap();
        let (mut st, gs) = play_one(sys, rat(1, 4), Ball::new(rat(1, 2), rat(1, 100)).unwrap());
        // force rho = 1/8 as in the worked example
        st.consts = Some(derive_constants_i(2, &rat(1, 4), &rat(1, 2)));
        match st.step(&gs).unwrap() {
            Directive::Play { ball, note } => {
                assert_eq!(ball.center(), &rat(1, 2));
                assert_eq!(ball.radius(), &rat(1, 400));
                assert_eq!(note.level_type, Some(LevelType::II));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_iii_gauss_classification() {
        let (mut st, gs) = play_one(SystemSpec::Gauss, rat(1, 4), Ball::new(rat(1, 2), rat(1, 5)).unwrap());
        let d = st.step(&gs).unwrap();
        assert!(matches!(d, Directive::Play { .. }));
        assert_eq!(st.levels[0].level_type, LevelType::III);
        assert_eq!(st.levels[0].big_n, Some(BigInt::from(2)));
    }
}
