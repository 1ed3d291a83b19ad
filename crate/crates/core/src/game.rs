//! Referee for the absolute game and Schmidt's game on `[0,1]`.

use std::fmt;

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::numerics::{add_q, format_rational, interval_minus, le, lt, mul_q, rat, sub_q, Ball, Interval, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleSet {
    Absolute,
    Schmidt { alpha: Rational },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error("beta must lie in (0,1/3) for the absolute game, got {0}")]
    BetaOutOfRange(String),
    #[error("alpha must lie in (0,1), got {0}")]
    AlphaOutOfRange(String),
    #[error("no Bob move has been played")]
    EmptyHistory,
    #[error("game already finished")]
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameConfig {
    pub rule_set: RuleSet,
    pub beta: Rational,
    pub max_rounds: usize,
    /// Admits `beta = 1/3` in the absolute game.
    pub unsafe_beta_third: bool,
}

impl GameConfig {
    pub fn absolute(beta: Rational, max_rounds: usize) -> Result<Self, GameError> {
        Self::absolute_with(beta, max_rounds, false)
    }

    pub fn absolute_with(
        beta: Rational,
        max_rounds: usize,
        unsafe_beta_third: bool,
    ) -> Result<Self, GameError> {
        let third = rat(1, 3);
        let ok = beta.is_positive() && (beta < third || (unsafe_beta_third && beta == third));
        if !ok {
            return Err(GameError::BetaOutOfRange(format_rational(&beta)));
        }
        Ok(GameConfig {
            rule_set: RuleSet::Absolute,
            beta,
            max_rounds,
            unsafe_beta_third,
        })
    }

    pub fn schmidt(alpha: Rational, beta: Rational, max_rounds: usize) -> Result<Self, GameError> {
        if !(alpha.is_positive() && alpha < Rational::one()) {
            return Err(GameError::AlphaOutOfRange(format_rational(&alpha)));
        }
        if !(beta.is_positive() && beta < Rational::one()) {
            return Err(GameError::BetaOutOfRange(format_rational(&beta)));
        }
        Ok(GameConfig {
            rule_set: RuleSet::Schmidt { alpha },
            beta,
            max_rounds,
            unsafe_beta_third: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    Bob,
    Alice,
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Player::Bob => "bob",
            Player::Alice => "alice",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Move {
    pub player: Player,
    pub ball: Ball,
    pub round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reason {
    NotNested,
    RadiusTooSmall,
    RadiusTooLarge,
    RadiusMismatch,
    WrongTurn,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(Reason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    RoundsExhausted,
    /// Bob had no legal reply.
    AliceByDefault,
    /// Bob's policy produced an illegal ball.
    BobForfeit(Reason),
    /// Alice's strategy produced an illegal ball.
    AliceForfeit(Reason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    InProgress,
    Finished(Outcome),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameState {
    pub config: GameConfig,
    pub history: Vec<Move>,
    pub status: Status,
}

/// Range of centers `c` in `[0,1]` for which the clipped ball `B(c, s)`
/// lies inside `comp`.
pub fn host_center_range(comp: &Interval, s: &Rational) -> Option<(Rational, Rational)> {
    let lo = if comp.lo.is_positive() {
        add_q(&comp.lo, s)
    } else {
        Rational::zero()
    };
    let hi = if comp.hi.numer() < comp.hi.denom() {
        sub_q(&comp.hi, s)
    } else {
        Rational::one()
    };
    le(&lo, &hi).then_some((lo, hi))
}

/// Like [`host_center_range`] but only for balls that are not clipped.
pub fn unclipped_center_range(comp: &Interval, s: &Rational) -> Option<(Rational, Rational)> {
    let lo = add_q(&comp.lo, s);
    let hi = sub_q(&comp.hi, s);
    le(&lo, &hi).then_some((lo, hi))
}

/// Unclipped placement when possible, clipped otherwise.
pub fn placement_range(comp: &Interval, s: &Rational) -> Option<(Rational, Rational)> {
    unclipped_center_range(comp, s).or_else(|| host_center_range(comp, s))
}

impl GameState {
    pub fn new(config: GameConfig) -> Self {
        let status = if config.max_rounds == 0 {
            Status::Finished(Outcome::RoundsExhausted)
        } else {
            Status::InProgress
        };
        GameState {
            config,
            history: Vec::new(),
            status,
        }
    }

    pub fn to_move(&self) -> Player {
        if self.history.len().is_multiple_of(2) {
            Player::Bob
        } else {
            Player::Alice
        }
    }

    /// Round of the next move, starting at 1.
    pub fn round(&self) -> usize {
        self.history.len() / 2 + 1
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.status, Status::Finished(_))
    }

    pub fn last_bob(&self) -> Option<&Ball> {
        self.history
            .iter()
            .rev()
            .find(|m| m.player == Player::Bob)
            .map(|m| &m.ball)
    }

    pub fn last_alice(&self) -> Option<&Ball> {
        self.history
            .iter()
            .rev()
            .find(|m| m.player == Player::Alice)
            .map(|m| &m.ball)
    }

    pub fn bob_balls(&self) -> impl Iterator<Item = &Ball> {
        self.history
            .iter()
            .filter(|m| m.player == Player::Bob)
            .map(|m| &m.ball)
    }

    pub fn alice_balls(&self) -> impl Iterator<Item = &Ball> {
        self.history
            .iter()
            .filter(|m| m.player == Player::Alice)
            .map(|m| &m.ball)
    }

    /// Minimum radius of Bob's next ball, `None` before the first move.
    pub fn bob_min_radius(&self) -> Option<Rational> {
        match &self.config.rule_set {
            RuleSet::Absolute => self.last_bob().map(|b| mul_q(&self.config.beta, b.radius())),
            RuleSet::Schmidt { .. } => self.last_alice().map(|a| mul_q(&self.config.beta, a.radius())),
        }
    }

    /// Components of the region Bob must play inside. Before the first move
    /// this is `[0,1]`.
    pub fn bob_region(&self) -> Vec<Interval> {
        match (&self.config.rule_set, self.last_bob(), self.last_alice()) {
            (_, None, _) => vec![Interval::unit()],
            (RuleSet::Absolute, Some(b), Some(a)) => interval_minus(&b.interval(), &a.interval()),
            (RuleSet::Schmidt { .. }, Some(_), Some(a)) => vec![a.interval()],
            (_, Some(b), None) => vec![b.interval()],
        }
    }

    /// Components that can host a legal Bob ball.
    pub fn legal_bob_components(&self) -> Vec<Interval> {
        let min_r = self.bob_min_radius();
        self.bob_region()
            .into_iter()
            .filter(|c| match &min_r {
                Some(s) => host_center_range(c, s).is_some(),
                None => true,
            })
            .collect()
    }

    pub fn validate_bob_move(&self, ball: &Ball) -> Verdict {
        if self.to_move() != Player::Bob || self.is_finished() {
            return Verdict::Reject(Reason::WrongTurn);
        }
        let Some(prev_bob) = self.last_bob() else {
            return Verdict::Accept;
        };
        let beta = &self.config.beta;
        match &self.config.rule_set {
            RuleSet::Absolute => {
                let alice = self.last_alice().expect("alternation");
                let iv = ball.interval();
                let nested = interval_minus(&prev_bob.interval(), &alice.interval())
                    .iter()
                    .any(|c| c.contains(&iv));
                if !nested {
                    return Verdict::Reject(Reason::NotNested);
                }
                if lt(ball.radius(), &mul_q(beta, prev_bob.radius())) {
                    return Verdict::Reject(Reason::RadiusTooSmall);
                }
                Verdict::Accept
            }
            RuleSet::Schmidt { .. } => {
                let alice = self.last_alice().expect("alternation");
                if !alice.interval().contains(&ball.interval()) {
                    return Verdict::Reject(Reason::NotNested);
                }
                if ball.radius() != &mul_q(beta, alice.radius()) {
                    return Verdict::Reject(Reason::RadiusMismatch);
                }
                Verdict::Accept
            }
        }
    }

    pub fn validate_alice_move(&self, ball: &Ball) -> Verdict {
        if self.to_move() != Player::Alice || self.is_finished() {
            return Verdict::Reject(Reason::WrongTurn);
        }
        let bob = self.last_bob().expect("alternation");
        match &self.config.rule_set {
            RuleSet::Absolute => {
                if lt(&mul_q(&self.config.beta, bob.radius()), ball.radius()) {
                    Verdict::Reject(Reason::RadiusTooLarge)
                } else {
                    Verdict::Accept
                }
            }
            RuleSet::Schmidt { alpha } => {
                if !bob.interval().contains(&ball.interval()) {
                    return Verdict::Reject(Reason::NotNested);
                }
                if ball.radius() != &mul_q(alpha, bob.radius()) {
                    return Verdict::Reject(Reason::RadiusMismatch);
                }
                Verdict::Accept
            }
        }
    }

    /// Validates and records a move. Illegal moves end the game as a forfeit
    /// of the mover, except for turn errors which leave the state untouched.
    pub fn play(&mut self, player: Player, ball: Ball) -> Verdict {
        if self.to_move() != player || self.is_finished() {
            return Verdict::Reject(Reason::WrongTurn);
        }
        let verdict = match player {
            Player::Bob => self.validate_bob_move(&ball),
            Player::Alice => self.validate_alice_move(&ball),
        };
        match verdict {
            Verdict::Reject(reason) => {
                self.status = Status::Finished(match player {
                    Player::Bob => Outcome::BobForfeit(reason),
                    Player::Alice => Outcome::AliceForfeit(reason),
                });
            }
            Verdict::Accept => {
                let round = self.round();
                self.history.push(Move {
                    player,
                    ball,
                    round,
                });
                self.settle();
            }
        }
        verdict
    }

    fn settle(&mut self) {
        if self.to_move() != Player::Bob {
            return;
        }
        if self.history.len() / 2 >= self.config.max_rounds {
            self.status = Status::Finished(Outcome::RoundsExhausted);
        } else if self.legal_bob_components().is_empty() {
            self.status = Status::Finished(Outcome::AliceByDefault);
        }
    }

    /// The last Bob ball as an interval; by nesting it is the intersection
    /// of all Bob balls so far.
    pub fn deepest_interval(&self) -> Result<Interval, GameError> {
        self.last_bob()
            .map(Ball::interval)
            .ok_or(GameError::EmptyHistory)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::int;

    fn b(c: Rational, r: Rational) -> Ball {
        Ball::new(c, r).unwrap()
    }

    fn absolute_position() -> GameState {
        let mut gs = GameState::new(GameConfig::absolute(rat(3, 10), 10).unwrap());
        assert!(gs.play(Player::Bob, b(rat(1, 2), rat(1, 10))).is_accept());
        assert!(gs.play(Player::Alice, b(rat(1, 2), rat(3, 100))).is_accept());
        gs
    }

    #[test]
    fn bob_absolute_examples() {
        let gs = absolute_position();
        // flush against the left end of the left component [2/5, 47/100]
        assert_eq!(gs.validate_bob_move(&b(rat(43, 100), rat(3, 100))), Verdict::Accept);
        assert_eq!(
            gs.validate_bob_move(&b(rat(2, 5), rat(3, 100))),
            Verdict::Reject(Reason::NotNested)
        );
        assert_eq!(
            gs.validate_bob_move(&b(rat(43, 100), rat(1, 50))),
            Verdict::Reject(Reason::RadiusTooSmall)
        );
    }

    #[test]
    fn alice_absolute_examples() {
        let mut gs = GameState::new(GameConfig::absolute(rat(3, 10), 10).unwrap());
        gs.play(Player::Bob, b(rat(1, 2), rat(1, 10)));
        assert_eq!(gs.validate_alice_move(&b(rat(13, 25), rat(3, 100))), Verdict::Accept);
        assert_eq!(
            gs.validate_alice_move(&b(rat(1, 2), rat(1, 25))),
            Verdict::Reject(Reason::RadiusTooLarge)
        );
        // far outside Bob's ball is fine
        assert_eq!(gs.validate_alice_move(&b(int(0), rat(1, 100))), Verdict::Accept);
    }

    #[test]
    fn schmidt_examples() {
        let mut gs = GameState::new(GameConfig::schmidt(rat(1, 2), rat(1, 2), 10).unwrap());
        gs.play(Player::Bob, b(rat(1, 2), rat(1, 4)));
        gs.play(Player::Alice, b(rat(1, 2), rat(1, 8)));
        assert_eq!(gs.validate_bob_move(&b(rat(9, 16), rat(1, 16))), Verdict::Accept);
        assert_eq!(
            gs.validate_bob_move(&b(rat(9, 16), rat(1, 32))),
            Verdict::Reject(Reason::RadiusMismatch)
        );

        let mut gs = GameState::new(GameConfig::schmidt(rat(1, 3), rat(1, 2), 10).unwrap());
        gs.play(Player::Bob, b(rat(1, 2), rat(3, 10)));
        assert_eq!(gs.validate_alice_move(&b(rat(1, 2), rat(1, 10))), Verdict::Accept);
    }

    #[test]
    fn turn_order() {
        let gs = absolute_position();
        assert_eq!(
            gs.validate_alice_move(&b(rat(1, 2), rat(1, 100))),
            Verdict::Reject(Reason::WrongTurn)
        );
        let fresh = GameState::new(GameConfig::absolute(rat(1, 4), 3).unwrap());
        assert_eq!(
            fresh.validate_alice_move(&b(rat(1, 2), rat(1, 100))),
            Verdict::Reject(Reason::WrongTurn)
        );
    }

    #[test]
    fn beta_range() {
        assert!(GameConfig::absolute(rat(1, 3), 1).is_err());
        assert!(GameConfig::absolute_with(rat(1, 3), 1, true).is_ok());
        assert!(GameConfig::absolute(int(0), 1).is_err());
        assert!(GameConfig::schmidt(int(1), rat(1, 2), 1).is_err());
    }

    #[test]
    fn deepest_interval_examples() {
        let mut gs = GameState::new(GameConfig::absolute(rat(1, 4), 5).unwrap());
        assert_eq!(gs.deepest_interval(), Err(GameError::EmptyHistory));
        gs.play(Player::Bob, b(rat(1, 2), rat(1, 4)));
        assert_eq!(gs.deepest_interval().unwrap(), Interval::new(rat(1, 4), rat(3, 4)).unwrap());
    }

    #[test]
    fn rounds_finish_game() {
        let mut gs = GameState::new(GameConfig::absolute(rat(1, 4), 1).unwrap());
        gs.play(Player::Bob, b(rat(1, 2), rat(1, 4)));
        gs.play(Player::Alice, b(rat(1, 2), rat(1, 16)));
        assert_eq!(gs.status, Status::Finished(Outcome::RoundsExhausted));
        assert!(GameState::new(GameConfig::absolute(rat(1, 4), 0).unwrap()).is_finished());
    }

    #[test]
    fn default_win_when_bob_is_stuck() {
        let mut gs = GameState::new(GameConfig::absolute_with(rat(1, 3), 5, true).unwrap());
        gs.play(Player::Bob, b(rat(1, 2), rat(3, 10)));
        // deleting the middle third leaves two pieces of length exactly 1/5 = 2 beta r
        gs.play(Player::Alice, b(rat(1, 2), rat(1, 10)));
        assert_eq!(gs.status, Status::InProgress);
        // a misconfigured beta above 1/3 can leave Bob without a reply
        let cfg = GameConfig {
            rule_set: RuleSet::Absolute,
            beta: rat(2, 5),
            max_rounds: 5,
            unsafe_beta_third: true,
        };
        let mut gs = GameState::new(cfg);
        gs.play(Player::Bob, b(rat(1, 2), rat(3, 10)));
        gs.play(Player::Alice, b(rat(1, 2), rat(3, 25)));
        assert_eq!(gs.status, Status::Finished(Outcome::AliceByDefault));
    }

    #[test]
    fn illegal_move_forfeits() {
        let mut gs = absolute_position();
        let v = gs.play(Player::Bob, b(rat(1, 2), rat(1, 10)));
        assert_eq!(v, Verdict::Reject(Reason::NotNested));
        assert_eq!(gs.status, Status::Finished(Outcome::BobForfeit(Reason::NotNested)));
    }

    #[test]
    fn host_range_respects_clipping() {
        let comp = Interval::new(int(0), rat(1, 5)).unwrap();
        assert_eq!(host_center_range(&comp, &rat(1, 5)), Some((int(0), int(0))));
        let comp = Interval::new(rat(1, 5), rat(2, 5)).unwrap();
        assert_eq!(host_center_range(&comp, &rat(1, 10)), Some((rat(3, 10), rat(3, 10))));
        assert_eq!(host_center_range(&comp, &rat(1, 5)), None);
    }
}
