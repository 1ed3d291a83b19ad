//! Running games, transcripts, verification and the brute-force oracles.
//!
//! A transcript is line oriented text. Every line is one record: a tag
//! followed by `key=value` pairs, rationals written `p/q`. The last line is
//! a SHA-256 digest of everything before it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num::bigint::BigInt;
use num::{Integer, One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::{BobPolicy, BobPolicySpec, TwistFamily, TwistSequence};
use crate::dynamics::{expansion_oracle, Branch, Continuants, CylinderAddress, SystemSpec};
use crate::game::{GameConfig, GameState, Outcome, Player, Reason, RuleSet, Status, Verdict};
use crate::numerics::{cmp_q, distance, format_rational, int, le, lt, parse_rational, Ball, Interval, Rational};
use crate::quadratic::fibonacci;
use crate::strategy::{
    derive_constants_i, derive_constants_ii, expansion_constant, Annotation, LevelType, MonitorKind,
    MonitorRecord, StrategyConstants, StrategyState,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MonitorMode {
    All,
    Minimal,
}

impl fmt::Display for MonitorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MonitorMode::All => "all",
            MonitorMode::Minimal => "minimal",
        })
    }
}

impl FromStr for MonitorMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "all" => Ok(MonitorMode::All),
            "minimal" => Ok(MonitorMode::Minimal),
            _ => Err(format!("unknown monitor mode {s:?}")),
        }
    }
}

impl MonitorMode {
    fn keeps(&self, kind: MonitorKind) -> bool {
        *self == MonitorMode::All || kind.is_minimal()
    }
}

fn format_rules(rules: &RuleSet) -> String {
    match rules {
        RuleSet::Absolute => "absolute".to_string(),
        RuleSet::Schmidt { alpha } => format!("schmidt:{}", format_rational(alpha)),
    }
}

pub fn parse_rules(s: &str) -> std::result::Result<RuleSet, String> {
    if s == "absolute" {
        return Ok(RuleSet::Absolute);
    }
    s.strip_prefix("schmidt:")
        .and_then(|a| parse_rational(a).ok())
        .map(|alpha| RuleSet::Schmidt { alpha })
        .ok_or_else(|| format!("unknown rule set {s:?}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub beta: Rational,
    pub rules: RuleSet,
    pub rounds: usize,
    /// Bob's policy; the seed of a random Bob lives here.
    pub bob: BobPolicySpec,
    pub twist: TwistSequence,
    pub monitors: MonitorMode,
    pub unsafe_beta_third: bool,
}

impl RunConfig {
    pub fn new(system: SystemSpec, beta: Rational, rounds: usize, bob: BobPolicySpec, twist: TwistSequence) -> Self {
        RunConfig {
            system,
            beta,
            rules: RuleSet::Absolute,
            rounds,
            bob,
            twist,
            monitors: MonitorMode::All,
            unsafe_beta_third: false,
        }
    }

    pub fn game_config(&self) -> Result<GameConfig> {
        let cfg = match &self.rules {
            RuleSet::Absolute => GameConfig::absolute_with(self.beta.clone(), self.rounds, self.unsafe_beta_third),
            RuleSet::Schmidt { alpha } => GameConfig::schmidt(alpha.clone(), self.beta.clone(), self.rounds),
        };
        cfg.map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.game_config()?;
        if self.rules != RuleSet::Absolute {
            return Err(HarnessError::Config(
                "the strategy plays the absolute game only".to_string(),
            ));
        }
        Ok(())
    }

    fn header_line(&self) -> String {
        format!(
            "config system={} beta={} rules={} rounds={} bob={} twist={} monitors={} unsafe_beta_third={}",
            self.system,
            format_rational(&self.beta),
            format_rules(&self.rules),
            self.rounds,
            self.bob,
            self.twist,
            self.monitors,
            self.unsafe_beta_third
        )
    }
}

/// Constants as recorded, kept as text-exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstantsRecord {
    pub rho: Rational,
    pub rho_sharp: Rational,
    pub lambda: u64,
    pub delta: Rational,
    pub delta_final: Rational,
    pub r: Option<Rational>,
}

impl From<&StrategyConstants> for ConstantsRecord {
    fn from(c: &StrategyConstants) -> Self {
        ConstantsRecord {
            rho: c.rho.clone(),
            rho_sharp: c.rho_sharp.clone(),
            lambda: c.lambda,
            delta: c.delta.clone(),
            delta_final: c.delta_final.clone(),
            r: c.r_expansion.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveRecord {
    pub round: usize,
    pub player: Player,
    pub ball: Ball,
    pub verdict: Verdict,
    pub note: Option<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalRecord {
    pub deepest: Interval,
    pub witness: Rational,
    /// Largest `m` with every target up to `m` certified.
    pub depth: usize,
    /// First level whose ball is within the equicontinuity scale.
    pub start: Option<usize>,
    pub margins: Vec<(usize, Rational)>,
    /// Continued fraction prefix of the witness (Gauss map only).
    pub cf: Vec<BigInt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Config(RunConfig),
    Constants(ConstantsRecord),
    Move(MoveRecord),
    Monitor(MonitorRecord),
    Error(String),
    Outcome(String),
    Final(FinalRecord),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub records: Vec<Record>,
}

fn opt_rat(x: &Option<Rational>) -> String {
    x.as_ref().map(format_rational).unwrap_or_else(|| "-".to_string())
}

fn join_or_dash<T: ToString>(items: &[T], sep: &str) -> String {
    if items.is_empty() {
        "-".to_string()
    } else {
        items.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep)
    }
}

fn format_verdict(v: &Verdict) -> String {
    match v {
        Verdict::Accept => "accept".to_string(),
        Verdict::Reject(r) => format!("reject:{r}"),
    }
}

fn parse_reason(s: &str) -> Option<Reason> {
    Some(match s {
        "NotNested" => Reason::NotNested,
        "RadiusTooSmall" => Reason::RadiusTooSmall,
        "RadiusTooLarge" => Reason::RadiusTooLarge,
        "RadiusMismatch" => Reason::RadiusMismatch,
        "WrongTurn" => Reason::WrongTurn,
        _ => return None,
    })
}

fn format_outcome(status: &Status) -> String {
    match status {
        Status::InProgress => "in-progress".to_string(),
        Status::Finished(Outcome::RoundsExhausted) => "rounds-exhausted".to_string(),
        Status::Finished(Outcome::AliceByDefault) => "alice-by-default".to_string(),
        Status::Finished(Outcome::BobForfeit(r)) => format!("bob-forfeit:{r}"),
        Status::Finished(Outcome::AliceForfeit(r)) => format!("alice-forfeit:{r}"),
    }
}

impl Record {
    fn to_line(&self) -> String {
        match self {
            Record::Config(cfg) => cfg.header_line(),
            Record::Constants(c) => format!(
                "constants rho={} rho_sharp={} lambda={} delta={} delta_final={} r={}",
                format_rational(&c.rho),
                format_rational(&c.rho_sharp),
                c.lambda,
                format_rational(&c.delta),
                format_rational(&c.delta_final),
                opt_rat(&c.r)
            ),
            Record::Move(m) => {
                let mut s = format!(
                    "move round={} player={} center={} radius={} verdict={}",
                    m.round,
                    m.player,
                    format_rational(m.ball.center()),
                    format_rational(m.ball.radius()),
                    format_verdict(&m.verdict)
                );
                if let Some(n) = &m.note {
                    s.push_str(&format!(
                        " level={} type={} case={} target={} stars={} relabels={} fired={}",
                        n.level,
                        n.level_type.map(|t| t.to_string()).unwrap_or_else(|| "-".to_string()),
                        n.case,
                        opt_rat(&n.target),
                        n.stars,
                        join_or_dash(&n.relabels, ","),
                        join_or_dash(&n.fired, ",")
                    ));
                }
                s
            }
            Record::Monitor(m) => format!(
                "monitor name={} level={} pass={} detail={}",
                m.kind, m.level, m.pass, m.detail
            ),
            Record::Error(e) => format!("error message={e}"),
            Record::Outcome(o) => format!("outcome value={o}"),
            Record::Final(f) => {
                let margins: Vec<String> = f
                    .margins
                    .iter()
                    .map(|(k, m)| format!("{k}:{}", format_rational(m)))
                    .collect();
                format!(
                    "final lo={} hi={} witness={} depth={} start={} margins={} cf={}",
                    format_rational(&f.deepest.lo),
                    format_rational(&f.deepest.hi),
                    format_rational(&f.witness),
                    f.depth,
                    f.start.map(|s| s.to_string()).unwrap_or_else(|| "-".to_string()),
                    join_or_dash(&margins, ";"),
                    join_or_dash(&f.cf, ",")
                )
            }
        }
    }
}

/// Fields of one record line. A trailing free-text key swallows the rest.
struct Fields<'a> {
    map: BTreeMap<&'a str, &'a str>,
    line: usize,
}

impl<'a> Fields<'a> {
    fn parse(rest: &'a str, line: usize, tail: Option<&'static str>) -> Result<Self> {
        let mut head = rest;
        let mut tail_value = None;
        if let Some(key) = tail {
            let marker = format!("{key}=");
            if let Some(pos) = rest.find(&marker) {
                head = &rest[..pos];
                tail_value = Some((key, &rest[pos + marker.len()..]));
            }
        }
        let mut map = BTreeMap::new();
        for tok in head.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| HarnessError::Parse {
                line,
                msg: format!("expected key=value, got {tok:?}"),
            })?;
            map.insert(k, v);
        }
        if let Some((k, v)) = tail_value {
            map.insert(k, v);
        }
        Ok(Fields { map, line })
    }

    fn err(&self, msg: String) -> HarnessError {
        HarnessError::Parse { line: self.line, msg }
    }

    fn get(&self, key: &str) -> Result<&'a str> {
        self.map
            .get(key)
            .copied()
            .ok_or_else(|| self.err(format!("missing field {key}")))
    }

    fn rational(&self, key: &str) -> Result<Rational> {
        let v = self.get(key)?;
        parse_rational(v).map_err(|e| self.err(format!("{key}: {e}")))
    }

    fn opt_rational(&self, key: &str) -> Result<Option<Rational>> {
        match self.get(key)? {
            "-" => Ok(None),
            _ => self.rational(key).map(Some),
        }
    }

    fn number<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse().map_err(|_| self.err(format!("{key}: bad number {v:?}")))
    }

    fn list(&self, key: &str, sep: char) -> Result<Vec<&'a str>> {
        Ok(match self.get(key)? {
            "-" => Vec::new(),
            v => v.split(sep).collect(),
        })
    }
}

fn parse_record(text: &str, line: usize) -> Result<Record> {
    let (tag, rest) = text.split_once(' ').unwrap_or((text, ""));
    let bad = |msg: String| HarnessError::Parse { line, msg };
    match tag {
        "config" => {
            let f = Fields::parse(rest, line, None)?;
            let system = f.get("system")?.parse().map_err(|e: String| bad(e))?;
            let bob = f.get("bob")?.parse().map_err(|e| bad(format!("{e}")))?;
            let twist = f.get("twist")?.parse().map_err(|e| bad(format!("{e}")))?;
            Ok(Record::Config(RunConfig {
                system,
                beta: f.rational("beta")?,
                rules: parse_rules(f.get("rules")?).map_err(bad)?,
                rounds: f.number("rounds")?,
                bob,
                twist,
                monitors: f.get("monitors")?.parse().map_err(bad)?,
                unsafe_beta_third: f.number("unsafe_beta_third")?,
            }))
        }
        "constants" => {
            let f = Fields::parse(rest, line, None)?;
            Ok(Record::Constants(ConstantsRecord {
                rho: f.rational("rho")?,
                rho_sharp: f.rational("rho_sharp")?,
                lambda: f.number("lambda")?,
                delta: f.rational("delta")?,
                delta_final: f.rational("delta_final")?,
                r: f.opt_rational("r")?,
            }))
        }
        "move" => {
            let f = Fields::parse(rest, line, None)?;
            let player = match f.get("player")? {
                "bob" => Player::Bob,
                "alice" => Player::Alice,
                p => return Err(bad(format!("unknown player {p:?}"))),
            };
            let ball = Ball::new(f.rational("center")?, f.rational("radius")?)
                .map_err(|e| bad(e.to_string()))?;
            let verdict = match f.get("verdict")? {
                "accept" => Verdict::Accept,
                v => {
                    let reason = v
                        .strip_prefix("reject:")
                        .and_then(parse_reason)
                        .ok_or_else(|| bad(format!("unknown verdict {v:?}")))?;
                    Verdict::Reject(reason)
                }
            };
            let note = if f.map.contains_key("level") {
                let level_type = match f.get("type")? {
                    "-" => None,
                    "I" => Some(LevelType::I),
                    "II" => Some(LevelType::II),
                    "III" => Some(LevelType::III),
                    t => return Err(bad(format!("unknown level type {t:?}"))),
                };
                let relabels = f
                    .list("relabels", ',')?
                    .into_iter()
                    .map(|s| s.parse().map_err(|_| bad(format!("bad relabel {s:?}"))))
                    .collect::<Result<Vec<usize>>>()?;
                let fired = f
                    .list("fired", ',')?
                    .into_iter()
                    .map(|s| MonitorKind::from_name(s).ok_or_else(|| bad(format!("unknown monitor {s:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                Some(Annotation {
                    level: f.number("level")?,
                    level_type,
                    case: f.get("case")?.to_string(),
                    target: f.opt_rational("target")?,
                    stars: f.number("stars")?,
                    relabels,
                    fired,
                })
            } else {
                None
            };
            Ok(Record::Move(MoveRecord {
                round: f.number("round")?,
                player,
                ball,
                verdict,
                note,
            }))
        }
        "monitor" => {
            let f = Fields::parse(rest, line, Some("detail"))?;
            let kind = MonitorKind::from_name(f.get("name")?)
                .ok_or_else(|| bad(format!("unknown monitor {:?}", f.get("name"))))?;
            Ok(Record::Monitor(MonitorRecord {
                kind,
                level: f.number("level")?,
                pass: f.number("pass")?,
                detail: f.get("detail")?.to_string(),
            }))
        }
        "error" => {
            let f = Fields::parse(rest, line, Some("message"))?;
            Ok(Record::Error(f.get("message")?.to_string()))
        }
        "outcome" => {
            let f = Fields::parse(rest, line, None)?;
            Ok(Record::Outcome(f.get("value")?.to_string()))
        }
        "final" => {
            let f = Fields::parse(rest, line, None)?;
            let margins = f
                .list("margins", ';')?
                .into_iter()
                .map(|m| {
                    let (k, v) = m.split_once(':').ok_or_else(|| bad(format!("bad margin {m:?}")))?;
                    let k = k.parse().map_err(|_| bad(format!("bad margin index {k:?}")))?;
                    let v = parse_rational(v).map_err(|e| bad(e.to_string()))?;
                    Ok((k, v))
                })
                .collect::<Result<Vec<_>>>()?;
            let cf = f
                .list("cf", ',')?
                .into_iter()
                .map(|s| s.parse().map_err(|_| bad(format!("bad quotient {s:?}"))))
                .collect::<Result<Vec<BigInt>>>()?;
            let start = match f.get("start")? {
                "-" => None,
                _ => Some(f.number("start")?),
            };
            let deepest = Interval::new(f.rational("lo")?, f.rational("hi")?).map_err(|e| bad(e.to_string()))?;
            Ok(Record::Final(FinalRecord {
                deepest,
                witness: f.rational("witness")?,
                depth: f.number("depth")?,
                start,
                margins,
                cf,
            }))
        }
        _ => Err(bad(format!("unknown record {tag:?}"))),
    }
}

fn digest_of(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

impl Transcript {
    pub fn config(&self) -> Option<&RunConfig> {
        self.records.iter().find_map(|r| match r {
            Record::Config(c) => Some(c),
            _ => None,
        })
    }

    pub fn constants(&self) -> Option<&ConstantsRecord> {
        self.records.iter().find_map(|r| match r {
            Record::Constants(c) => Some(c),
            _ => None,
        })
    }

    pub fn moves(&self) -> impl Iterator<Item = &MoveRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Move(m) => Some(m),
            _ => None,
        })
    }

    pub fn monitors(&self) -> impl Iterator<Item = &MonitorRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Monitor(m) => Some(m),
            _ => None,
        })
    }

    pub fn errors(&self) -> impl Iterator<Item = &str> {
        self.records.iter().filter_map(|r| match r {
            Record::Error(e) => Some(e.as_str()),
            _ => None,
        })
    }

    pub fn outcome(&self) -> Option<&str> {
        self.records.iter().find_map(|r| match r {
            Record::Outcome(o) => Some(o.as_str()),
            _ => None,
        })
    }

    pub fn final_record(&self) -> Option<&FinalRecord> {
        self.records.iter().find_map(|r| match r {
            Record::Final(f) => Some(f),
            _ => None,
        })
    }

    pub fn bob_balls(&self) -> Vec<Ball> {
        self.moves()
            .filter(|m| m.player == Player::Bob)
            .map(|m| m.ball.clone())
            .collect()
    }

    /// Alice moves rejected by the referee.
    pub fn illegal_alice_moves(&self) -> usize {
        self.moves()
            .filter(|m| m.player == Player::Alice && !m.verdict.is_accept())
            .count()
    }

    pub fn failed_monitors(&self) -> Vec<&MonitorRecord> {
        self.monitors().filter(|m| !m.pass).collect()
    }

    pub fn body(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_line());
            s.push('\n');
        }
        s
    }

    pub fn digest(&self) -> String {
        digest_of(&self.body())
    }

    pub fn to_text(&self) -> String {
        let body = self.body();
        let d = digest_of(&body);
        format!("{body}digest sha256={d}\n")
    }

    /// Parses a transcript without checking its digest.
    pub fn parse(text: &str) -> Result<(Transcript, Option<String>)> {
        let mut records = Vec::new();
        let mut digest = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if digest.is_some() {
                return Err(HarnessError::Parse {
                    line: n,
                    msg: "record after digest".to_string(),
                });
            }
            if let Some(d) = line.strip_prefix("digest sha256=") {
                digest = Some(d.to_string());
                continue;
            }
            records.push(parse_record(line, n)?);
        }
        Ok((Transcript { records }, digest))
    }

    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("partial");
        fs::write(&tmp, self.to_text())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Transcript> {
        let text = fs::read_to_string(path)?;
        Ok(Transcript::parse(&text)?.0)
    }
}

/// Replaces a replay spec's empty ball list with the Bob moves of the file.
pub fn resolve_bob(spec: &BobPolicySpec) -> Result<BobPolicySpec> {
    match spec {
        BobPolicySpec::Replay { path, balls } if balls.is_empty() => {
            let tr = Transcript::read(Path::new(path))?;
            Ok(BobPolicySpec::Replay {
                path: path.clone(),
                balls: tr.bob_balls(),
            })
        }
        other => Ok(other.clone()),
    }
}

pub fn run_game(cfg: &RunConfig) -> Result<Transcript> {
    cfg.validate()?;
    let bob = resolve_bob(&cfg.bob)?;
    Ok(play(cfg, BobPolicy::new(bob)))
}

fn flush_monitors(tr: &mut Transcript, st: &StrategyState, seen: &mut usize, mode: MonitorMode) {
    for m in &st.monitors[*seen..] {
        if mode.keeps(m.kind) {
            tr.records.push(Record::Monitor(m.clone()));
        }
    }
    *seen = st.monitors.len();
}

fn play(cfg: &RunConfig, mut bob: BobPolicy) -> Transcript {
    let mut tr = Transcript {
        records: vec![Record::Config(cfg.clone())],
    };
    if cfg.rounds == 0 {
        return tr;
    }
    let mut gs = GameState::new(cfg.game_config().expect("validated config"));
    let mut st = StrategyState::new(cfg.system, cfg.beta.clone(), cfg.twist.clone());
    let mut seen = 0;
    let mut stopped = None;
    while !gs.is_finished() {
        let Some(ball) = bob.next(&gs, cfg.system, &cfg.twist) else {
            stopped = Some("bob-no-move".to_string());
            break;
        };
        let round = gs.round();
        let verdict = gs.play(Player::Bob, ball.clone());
        tr.records.push(Record::Move(MoveRecord {
            round,
            player: Player::Bob,
            ball: ball.clone(),
            verdict,
            note: None,
        }));
        if !verdict.is_accept() || gs.is_finished() {
            break;
        }
        if st.consts.is_none() {
            match st.init_constants(&ball) {
                Ok(c) => tr.records.push(Record::Constants(c.into())),
                Err(e) => {
                    tr.records.push(Record::Error(e.to_string()));
                    stopped = Some("strategy-error".to_string());
                    break;
                }
            }
        }
        let step = st.next_alice_move(&gs);
        flush_monitors(&mut tr, &st, &mut seen, cfg.monitors);
        match step {
            Ok((ball, note)) => {
                let verdict = gs.play(Player::Alice, ball.clone());
                tr.records.push(Record::Move(MoveRecord {
                    round,
                    player: Player::Alice,
                    ball,
                    verdict,
                    note: Some(note),
                }));
                if !verdict.is_accept() {
                    break;
                }
            }
            Err(e) => {
                tr.records.push(Record::Error(e.to_string()));
                stopped = Some("strategy-error".to_string());
                break;
            }
        }
    }
    tr.records.push(Record::Outcome(
        stopped.unwrap_or_else(|| format_outcome(&gs.status)),
    ));
    if let (Some(_), Ok(deepest)) = (st.consts.as_ref(), gs.deepest_interval()) {
        let (fin, checks) = final_assessment(&st, &deepest);
        for m in checks {
            if cfg.monitors.keeps(m.kind) {
                tr.records.push(Record::Monitor(m));
            }
        }
        tr.records.push(Record::Final(fin));
    }
    tr
}

/// Partial quotients of `x` in `(0,1)`: `x = [0; a_1, a_2, ...]`.
pub fn continued_fraction(x: &Rational) -> Vec<BigInt> {
    let mut out = Vec::new();
    let (mut p, mut q) = (x.numer().clone(), x.denom().clone());
    // skip the integer part
    let (_, r) = p.div_mod_floor(&q);
    p = r;
    while !p.is_zero() {
        let (a, r) = q.div_mod_floor(&p);
        out.push(a);
        q = p;
        p = r;
    }
    out
}

/// End-of-game checks on the deepest interval: nesting of the certified
/// margins, the equicontinuity step from `f_n(c)` to `f_n(w)`, and for the
/// Gauss map with `f = 0` the bound on partial quotients.
pub fn final_assessment(st: &StrategyState, deepest: &Interval) -> (FinalRecord, Vec<MonitorRecord>) {
    let consts = st.constants().expect("constants derived");
    let depth = st.certified_depth();
    let witness = deepest.midpoint();
    let mut checks = Vec::new();
    let check = |kind, pass, detail: String| MonitorRecord {
        kind,
        level: depth,
        pass,
        detail,
    };

    let mut margins = Vec::new();
    let mut monotone = true;
    let mut worst: Option<(usize, Rational)> = None;
    for t in st.certified() {
        let now = t.margin_on(deepest);
        let then = t.margin.as_ref().expect("certified");
        if lt(&now, then) {
            monotone = false;
        }
        if worst.as_ref().is_none_or(|(_, w)| lt(&now, w)) {
            worst = Some((t.k, now.clone()));
        }
        margins.push((t.k, now));
    }
    if let Some((k, w)) = &worst {
        checks.push(check(
            MonitorKind::MarginMonotone,
            monotone && le(&consts.delta, w),
            format!("worst_k={k} margin={} delta={}", format_rational(w), format_rational(&consts.delta)),
        ));
    }

    let scale = st.twist.modulus_inverse(&consts.delta_final);
    let start = st
        .levels
        .iter()
        .find(|l| lt(&l.b1.diameter(), &scale))
        .map(|l| l.n);
    let mut worst_final: Option<(usize, Rational)> = None;
    if let Some(n0) = start {
        let points = [deepest.lo.clone(), witness.clone(), deepest.hi.clone()];
        for t in st.targets.iter().filter(|t| t.k >= n0 && t.k <= depth) {
            for x in &points {
                let d = distance(&t.branch.forward(x), &st.twist.eval(t.k, x));
                if worst_final.as_ref().is_none_or(|(_, w)| lt(&d, w)) {
                    worst_final = Some((t.k, d));
                }
            }
        }
    }
    let (pass, detail) = match &worst_final {
        Some((k, d)) => (
            le(&consts.delta_final, d),
            format!("start={} worst_k={k} dist={} bound={}", start.unwrap_or(0), format_rational(d), format_rational(&consts.delta_final)),
        ),
        None => (
            true,
            format!("start={} depth={depth} empty", start.map(|s| s.to_string()).unwrap_or_else(|| "-".into())),
        ),
    };
    checks.push(check(MonitorKind::FinalSeparation, pass, detail));

    let mut cf = Vec::new();
    if st.sys == SystemSpec::Gauss {
        cf = continued_fraction(&witness);
        cf.truncate(depth + 1);
        if matches!(st.twist.family, TwistFamily::Constant(ref v) if v.is_zero()) {
            let bound = consts.delta.recip().ceil().to_integer() + BigInt::one();
            // a_{k+1} is controlled by T^k w for certified k >= 1
            let worst = cf.iter().skip(1).max().cloned();
            let pass = worst.as_ref().is_none_or(|a| a <= &bound);
            checks.push(check(
                MonitorKind::ContinuedFraction,
                pass,
                format!(
                    "max_quotient={} bound={bound} checked={}",
                    worst.map(|a| a.to_string()).unwrap_or_else(|| "-".into()),
                    cf.len().saturating_sub(1)
                ),
            ));
        }
    }

    (
        FinalRecord {
            deepest: deepest.clone(),
            witness,
            depth,
            start,
            margins,
            cf,
        },
        checks,
    )
}

/// A named reason a transcript does not verify.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    Parse { line: usize, msg: String },
    MissingDigest,
    DigestMismatch,
    MissingConfig,
    InvalidConfig(String),
    RefereeMismatch { index: usize, recorded: String, replayed: String },
    IllegalAliceMove { round: usize, reason: String },
    ConstantsMismatch,
    StrategyMismatch { index: usize },
    StrategyError(String),
    MonitorFailed { kind: MonitorKind, level: usize, detail: String },
}

impl Finding {
    pub fn name(&self) -> &'static str {
        match self {
            Finding::Parse { .. } => "parse-error",
            Finding::MissingDigest => "missing-digest",
            Finding::DigestMismatch => "digest-mismatch",
            Finding::MissingConfig => "missing-config",
            Finding::InvalidConfig(_) => "invalid-config",
            Finding::RefereeMismatch { .. } => "referee-mismatch",
            Finding::IllegalAliceMove { .. } => "illegal-alice-move",
            Finding::ConstantsMismatch => "constants-mismatch",
            Finding::StrategyMismatch { .. } => "strategy-mismatch",
            Finding::StrategyError(_) => "strategy-error",
            Finding::MonitorFailed { .. } => "monitor-failed",
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::Parse { line, msg } => write!(f, "parse-error line={line} {msg}"),
            Finding::RefereeMismatch { index, recorded, replayed } => {
                write!(f, "referee-mismatch move={index} recorded={recorded} replayed={replayed}")
            }
            Finding::IllegalAliceMove { round, reason } => write!(f, "illegal-alice-move round={round} reason={reason}"),
            Finding::StrategyMismatch { index } => write!(f, "strategy-mismatch record={index}"),
            Finding::StrategyError(e) => write!(f, "strategy-error {e}"),
            Finding::InvalidConfig(e) => write!(f, "invalid-config {e}"),
            Finding::MonitorFailed { kind, level, detail } => {
                write!(f, "monitor-failed name={kind} level={level} {detail}")
            }
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MonitorReport {
    /// Pass and fail counts per monitor.
    pub tally: BTreeMap<MonitorKind, (usize, usize)>,
    pub findings: Vec<Finding>,
}

impl MonitorReport {
    pub fn ok(&self) -> bool {
        self.findings.is_empty()
    }

    /// Whether the transcript was rejected for reasons other than monitor failures.
    pub fn integrity_ok(&self) -> bool {
        self.findings
            .iter()
            .all(|f| matches!(f, Finding::MonitorFailed { .. }))
    }
}

impl fmt::Display for MonitorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (kind, (pass, fail)) in &self.tally {
            writeln!(f, "{kind}\tpass={pass}\tfail={fail}")?;
        }
        for finding in &self.findings {
            writeln!(f, "FAIL {finding}")?;
        }
        write!(f, "{}", if self.ok() { "VERIFIED" } else { "REJECTED" })
    }
}

pub fn verify_bytes(bytes: &[u8]) -> MonitorReport {
    match std::str::from_utf8(bytes) {
        Ok(text) => verify_transcript(text),
        Err(e) => MonitorReport {
            tally: BTreeMap::new(),
            findings: vec![Finding::Parse {
                line: 0,
                msg: format!("invalid utf-8: {e}"),
            }],
        },
    }
}

pub fn verify_file(path: &Path) -> Result<MonitorReport> {
    Ok(verify_bytes(&fs::read(path)?))
}

/// Full re-validation of a transcript: digest, referee replay, constants,
/// strategy replay against the recorded Bob moves, and monitor verdicts.
pub fn verify_transcript(text: &str) -> MonitorReport {
    let mut report = MonitorReport::default();
    let (tr, digest) = match Transcript::parse(text) {
        Ok(x) => x,
        Err(HarnessError::Parse { line, msg }) => {
            report.findings.push(Finding::Parse { line, msg });
            return report;
        }
        Err(e) => {
            report.findings.push(Finding::Parse { line: 0, msg: e.to_string() });
            return report;
        }
    };
    match digest {
        None => {
            report.findings.push(Finding::MissingDigest);
            return report;
        }
        Some(d) if d != tr.digest() => {
            report.findings.push(Finding::DigestMismatch);
            return report;
        }
        _ => {}
    }
    let Some(cfg) = tr.config().cloned() else {
        report.findings.push(Finding::MissingConfig);
        return report;
    };
    if let Err(e) = cfg.validate() {
        report.findings.push(Finding::InvalidConfig(e.to_string()));
        return report;
    }

    // referee replay, independent of the strategy
    let mut gs = GameState::new(cfg.game_config().expect("validated"));
    for (i, m) in tr.moves().enumerate() {
        let v = gs.play(m.player, m.ball.clone());
        if v != m.verdict {
            report.findings.push(Finding::RefereeMismatch {
                index: i,
                recorded: format_verdict(&m.verdict),
                replayed: format_verdict(&v),
            });
            return report;
        }
        if m.player == Player::Alice {
            if let Verdict::Reject(r) = v {
                report.findings.push(Finding::IllegalAliceMove {
                    round: m.round,
                    reason: r.to_string(),
                });
            }
        }
    }

    // constants from the first Bob ball
    if let (Some(rec), Some(first)) = (tr.constants(), tr.bob_balls().first()) {
        let rho1_1 = first.diameter();
        let fresh = match cfg.system {
            SystemSpec::Beta { gamma } => Some(derive_constants_i(gamma, &cfg.beta, &rho1_1)),
            SystemSpec::Gauss => derive_constants_ii(&cfg.beta, &rho1_1, &expansion_constant()).ok(),
        };
        if fresh.as_ref().map(ConstantsRecord::from).as_ref() != Some(rec) {
            report.findings.push(Finding::ConstantsMismatch);
        }
    }

    // strategy replay against Bob's recorded moves
    let replay_cfg = RunConfig {
        bob: BobPolicySpec::Replay {
            path: String::new(),
            balls: tr.bob_balls(),
        },
        ..cfg.clone()
    };
    let mut replayed = play(&replay_cfg, BobPolicy::new(replay_cfg.bob.clone()));
    // the replay's config line names the replay policy; restore the original
    replayed.records[0] = Record::Config(cfg.clone());
    if let Some(index) = first_difference(&tr.records, &replayed.records) {
        report.findings.push(Finding::StrategyMismatch { index });
    }
    for e in tr.errors() {
        report.findings.push(Finding::StrategyError(e.to_string()));
    }

    for m in tr.monitors() {
        let entry = report.tally.entry(m.kind).or_insert((0, 0));
        if m.pass {
            entry.0 += 1;
        } else {
            entry.1 += 1;
            report.findings.push(Finding::MonitorFailed {
                kind: m.kind,
                level: m.level,
                detail: m.detail.clone(),
            });
        }
    }
    report
}

fn first_difference(a: &[Record], b: &[Record]) -> Option<usize> {
    let n = a.len().max(b.len());
    (0..n).find(|&i| a.get(i) != b.get(i))
}

/// Compact per-game line for batch reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameSummary {
    pub config: String,
    pub outcome: String,
    pub moves: usize,
    pub illegal_alice: usize,
    pub errors: usize,
    pub monitor_failures: BTreeMap<MonitorKind, usize>,
    pub min_margin: Option<Rational>,
    pub depth: usize,
    pub digest: String,
}

impl GameSummary {
    pub fn of(tr: &Transcript) -> Self {
        let mut monitor_failures = BTreeMap::new();
        for m in tr.failed_monitors() {
            *monitor_failures.entry(m.kind).or_insert(0) += 1;
        }
        let fin = tr.final_record();
        GameSummary {
            config: tr.config().map(RunConfig::header_line).unwrap_or_default(),
            outcome: tr.outcome().unwrap_or("-").to_string(),
            moves: tr.moves().count(),
            illegal_alice: tr.illegal_alice_moves(),
            errors: tr.errors().count(),
            monitor_failures,
            min_margin: fin.and_then(|f| f.margins.iter().map(|(_, m)| m.clone()).min_by(cmp_q)),
            depth: fin.map(|f| f.depth).unwrap_or(0),
            digest: tr.digest(),
        }
    }
}

impl fmt::Display for GameSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fails: Vec<String> = self
            .monitor_failures
            .iter()
            .map(|(k, n)| format!("{k}:{n}"))
            .collect();
        write!(
            f,
            "{}\toutcome={}\tmoves={}\tillegal={}\terrors={}\tdepth={}\tmin_margin={}\tfailures={}\tdigest={}",
            self.config,
            self.outcome,
            self.moves,
            self.illegal_alice,
            self.errors,
            self.depth,
            opt_rat(&self.min_margin),
            join_or_dash(&fails, ","),
            self.digest
        )
    }
}

/// Runs games in parallel; summaries come back in input order.
pub fn run_batch(cfgs: &[RunConfig]) -> Vec<Result<GameSummary>> {
    cfgs.par_iter()
        .map(|cfg| run_game(cfg).map(|tr| GameSummary::of(&tr)))
        .collect()
}

pub fn batch_report(summaries: &[Result<GameSummary>]) -> String {
    let mut out = String::new();
    for s in summaries {
        match s {
            Ok(s) => out.push_str(&s.to_string()),
            Err(e) => out.push_str(&format!("error\t{e}")),
        }
        out.push('\n');
    }
    out.push_str(&format!("aggregate sha256={}\n", digest_of(&out)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Expansion,
    Distortion,
    Cylinders,
    Fibonacci,
}

impl FromStr for OracleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "expansion" => Ok(OracleKind::Expansion),
            "distortion" => Ok(OracleKind::Distortion),
            "cylinders" => Ok(OracleKind::Cylinders),
            "fibonacci" => Ok(OracleKind::Fibonacci),
            _ => Err(format!("unknown oracle {s:?}")),
        }
    }
}

impl OracleKind {
    pub fn max_depth(&self) -> usize {
        match self {
            OracleKind::Expansion | OracleKind::Distortion => 15,
            OracleKind::Cylinders | OracleKind::Fibonacci => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleRow {
    pub depth: usize,
    pub checked: u64,
    pub passed: u64,
    /// Extreme value seen at this depth.
    pub extreme: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleTable {
    pub kind: OracleKind,
    pub rows: Vec<OracleRow>,
    /// Largest value attained anywhere, for the distortion table.
    pub attained_max: Option<Rational>,
}

impl OracleTable {
    pub fn ok(&self) -> bool {
        self.rows.iter().all(|r| r.checked == r.passed)
    }
}

impl fmt::Display for OracleTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "depth\tchecked\tpassed\textreme")?;
        for r in &self.rows {
            writeln!(
                f,
                "{}\t{}\t{}\t{}",
                r.depth,
                r.checked,
                r.passed,
                format_rational(&r.extreme)
            )?;
        }
        Ok(())
    }
}

/// Largest digit in the exhaustive cylinder tables.
pub const CYLINDER_DIGIT_CAP: i64 = 4;
/// Largest digit in the exhaustive distortion sweep.
pub const DISTORTION_DIGIT_CAP: i64 = 2;
/// Random same-cylinder pairs per depth in the distortion table.
pub const DISTORTION_PAIRS: usize = 1000;

fn addresses(depth: usize, cap: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..depth {
        out = out
            .into_iter()
            .flat_map(|a| {
                (1..=cap).map(move |d| {
                    let mut b = a.clone();
                    b.push(d);
                    b
                })
            })
            .collect();
    }
    out
}

pub fn oracle_suite(kind: OracleKind, max_depth: usize) -> Result<OracleTable> {
    if max_depth > kind.max_depth() {
        return Err(HarnessError::Config(format!(
            "depth {max_depth} exceeds the cap {} for this oracle",
            kind.max_depth()
        )));
    }
    let mut attained_max = None;
    let rows = match kind {
        OracleKind::Expansion => {
            let r = expansion_constant();
            expansion_oracle(max_depth)
                .into_iter()
                .map(|row| OracleRow {
                    depth: row.n,
                    checked: row.cylinders,
                    passed: if row.min_ratio >= r { row.cylinders } else { 0 },
                    extreme: row.min_ratio,
                })
                .collect()
        }
        OracleKind::Cylinders | OracleKind::Fibonacci => (1..=max_depth)
            .map(|n| {
                let addrs = addresses(n, CYLINDER_DIGIT_CAP);
                let mut passed = 0;
                let mut extreme: Option<Rational> = None;
                for a in &addrs {
                    let digits: Vec<BigInt> = a.iter().map(|&d| BigInt::from(d)).collect();
                    let c = Continuants::from_digits(&digits);
                    let (ok, value) = if kind == OracleKind::Cylinders {
                        let br = Branch::from_address(SystemSpec::Gauss, &CylinderAddress::new(a.iter().copied()))
                            .expect("positive digits");
                        let want = Rational::new(BigInt::one(), &c.q_n * (&c.q_n + &c.q_prev));
                        let diam = br.cylinder().length();
                        (diam == want, diam)
                    } else {
                        let f = fibonacci(n as u64);
                        let ratio = Rational::new(c.q_n.clone(), f.clone());
                        (c.q_n >= f, ratio)
                    };
                    if ok {
                        passed += 1;
                    }
                    let smaller = extreme.as_ref().is_none_or(|e| &value < e);
                    if smaller {
                        extreme = Some(value);
                    }
                }
                OracleRow {
                    depth: n,
                    checked: addrs.len() as u64,
                    passed,
                    extreme: extreme.expect("nonempty"),
                }
            })
            .collect(),
        OracleKind::Distortion => {
            let rows: Vec<OracleRow> = (1..=max_depth).into_par_iter().map(distortion_row).collect();
            attained_max = rows.iter().map(|r| r.extreme.clone()).max();
            rows
        }
    };
    Ok(OracleTable {
        kind,
        rows,
        attained_max,
    })
}

fn in_distortion_range(x: &Rational) -> bool {
    let quarter = Rational::new(BigInt::one(), BigInt::from(4));
    x >= &quarter && x <= &int(4)
}

fn distortion_row(m: usize) -> OracleRow {
    let mut checked = 0u64;
    let mut passed = 0u64;
    let mut extreme = Rational::one();
    let mut record = |r: Rational| {
        checked += 1;
        if in_distortion_range(&r) {
            passed += 1;
        }
        let r = if r < Rational::one() { r.recip() } else { r };
        if r > extreme {
            extreme = r;
        }
    };
    // exhaustive over small digits: derivative ratio between the two ends
    if m <= 12 {
        for a in addresses(m, DISTORTION_DIGIT_CAP) {
            let br = Branch::from_address(SystemSpec::Gauss, &CylinderAddress::new(a)).expect("positive digits");
            let cyl = br.cylinder();
            record(br.derivative(&cyl.lo) / br.derivative(&cyl.hi));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
    for _ in 0..DISTORTION_PAIRS {
        let digits: Vec<i64> = (0..m)
            .map(|_| {
                // mostly small digits with an occasional large one
                if rng.gen_bool(0.8) {
                    rng.gen_range(1..=6)
                } else {
                    rng.gen_range(7..=1000)
                }
            })
            .collect();
        let br = Branch::from_address(SystemSpec::Gauss, &CylinderAddress::new(digits)).expect("positive digits");
        let cyl = br.cylinder();
        let den = 1_000_000i64;
        let s = Rational::new(BigInt::from(rng.gen_range(0..=den)), BigInt::from(den));
        let t = Rational::new(BigInt::from(rng.gen_range(0..=den)), BigInt::from(den));
        let x = &cyl.lo + cyl.length() * s;
        let y = &cyl.lo + cyl.length() * t;
        record(br.derivative(&x) / br.derivative(&y));
    }
    OracleRow {
        depth: m,
        checked,
        passed,
        extreme,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rat;

    fn cfg(sys: SystemSpec, rounds: usize, bob: BobPolicySpec) -> RunConfig {
        RunConfig::new(sys, rat(1, 4), rounds, bob, TwistSequence::identity())
    }

    #[test]
    fn zero_rounds_is_header_only() {
        let tr = run_game(&cfg(SystemSpec::Gauss, 0, BobPolicySpec::Chaser)).unwrap();
        assert_eq!(tr.records.len(), 1);
        assert!(verify_transcript(&tr.to_text()).ok());
    }

    #[test]
    fn continued_fraction_of_small_rationals() {
        let q = |v: &[i64]| v.iter().map(|&x| BigInt::from(x)).collect::<Vec<_>>();
        assert_eq!(continued_fraction(&rat(3, 7)), q(&[2, 3]));
        assert_eq!(continued_fraction(&rat(13, 21)), q(&[1, 1, 1, 1, 1, 2]));
    }

    #[test]
    fn text_round_trip() {
        let tr = run_game(&cfg(SystemSpec::beta(2).unwrap(), 20, BobPolicySpec::Random(3))).unwrap();
        let text = tr.to_text();
        let (back, digest) = Transcript::parse(&text).unwrap();
        assert_eq!(back, tr);
        assert_eq!(digest.unwrap(), tr.digest());
    }

    #[test]
    fn truncated_line_names_the_line() {
        let tr = run_game(&cfg(SystemSpec::beta(3).unwrap(), 5, BobPolicySpec::Chaser)).unwrap();
        let text = tr.to_text();
        let cut: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        let cut = &cut[..cut.len() - 4];
        let report = verify_transcript(cut);
        assert!(matches!(report.findings[0], Finding::Parse { line: 3, .. }), "{report}");
    }

    #[test]
    fn schmidt_rules_rejected_for_runs() {
        let mut c = cfg(SystemSpec::Gauss, 5, BobPolicySpec::Chaser);
        c.rules = RuleSet::Schmidt { alpha: rat(1, 2) };
        assert!(matches!(run_game(&c), Err(HarnessError::Config(_))));
    }

    #[test]
    fn cylinder_oracle_small() {
        let t = oracle_suite(OracleKind::Cylinders, 3).unwrap();
        assert!(t.ok());
        assert_eq!(t.rows[2].checked, 64);
        assert!(oracle_suite(OracleKind::Cylinders, 7).is_err());
    }
}
