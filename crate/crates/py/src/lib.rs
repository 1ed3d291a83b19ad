//! Python bindings for the `absgame` crate.
//!
//! Rationals cross the boundary as `"p/q"` strings, which
//! `fractions.Fraction` parses directly.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use absgame::adversary::{BobPolicySpec, TwistSequence};
use absgame::dynamics::SystemSpec;
use absgame::game::{GameConfig, GameState, Player, Verdict};
use absgame::harness::{self, MonitorMode, OracleKind, RunConfig};
use absgame::numerics::{ball_contains, format_rational, parse_rational, Rational};
use absgame::strategy;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn q(s: &str) -> PyResult<Rational> {
    parse_rational(s).map_err(value_err)
}

fn verdict_text(v: Verdict) -> String {
    match v {
        Verdict::Accept => "accept".into(),
        Verdict::Reject(r) => format!("reject:{r}"),
    }
}

fn player(s: &str) -> PyResult<Player> {
    match s {
        "bob" | "Bob" => Ok(Player::Bob),
        "alice" | "Alice" => Ok(Player::Alice),
        _ => Err(value_err(format!("unknown player {s:?}"))),
    }
}

/// Closed ball of `[0,1]`, clipped at the ends.
#[pyclass(name = "Ball", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyBall {
    inner: absgame::numerics::Ball,
}

#[pymethods]
impl PyBall {
    #[new]
    fn new(center: &str, radius: &str) -> PyResult<Self> {
        let inner = absgame::numerics::Ball::new(q(center)?, q(radius)?).map_err(value_err)?;
        Ok(PyBall { inner })
    }

    #[getter]
    fn center(&self) -> String {
        format_rational(self.inner.center())
    }

    #[getter]
    fn radius(&self) -> String {
        format_rational(self.inner.radius())
    }

    fn interval(&self) -> (String, String) {
        (format_rational(&self.inner.left()), format_rational(&self.inner.right()))
    }

    fn contains(&self, other: &PyBall) -> bool {
        ball_contains(&self.inner, &other.inner)
    }

    fn __repr__(&self) -> String {
        self.inner.to_string()
    }
}

/// Referee for one game.
#[pyclass(name = "Game")]
struct PyGame {
    inner: GameState,
}

#[pymethods]
impl PyGame {
    /// `rules` is `"absolute"` or `"schmidt:<alpha>"`.
    #[new]
    #[pyo3(signature = (beta, rounds, rules = "absolute"))]
    fn new(beta: &str, rounds: usize, rules: &str) -> PyResult<Self> {
        let beta = q(beta)?;
        let cfg = match harness::parse_rules(rules).map_err(value_err)? {
            absgame::game::RuleSet::Absolute => GameConfig::absolute(beta, rounds),
            absgame::game::RuleSet::Schmidt { alpha } => GameConfig::schmidt(alpha, beta, rounds),
        }
        .map_err(value_err)?;
        Ok(PyGame {
            inner: GameState::new(cfg),
        })
    }

    fn validate(&self, who: &str, ball: &PyBall) -> PyResult<String> {
        Ok(verdict_text(match player(who)? {
            Player::Bob => self.inner.validate_bob_move(&ball.inner),
            Player::Alice => self.inner.validate_alice_move(&ball.inner),
        }))
    }

    fn play(&mut self, who: &str, ball: &PyBall) -> PyResult<String> {
        Ok(verdict_text(self.inner.play(player(who)?, ball.inner.clone())))
    }

    fn to_move(&self) -> &'static str {
        match self.inner.to_move() {
            Player::Bob => "bob",
            Player::Alice => "alice",
        }
    }

    fn is_finished(&self) -> bool {
        self.inner.is_finished()
    }

    fn deepest_interval(&self) -> PyResult<(String, String)> {
        let iv = self.inner.deepest_interval().map_err(value_err)?;
        Ok((format_rational(&iv.lo), format_rational(&iv.hi)))
    }
}

/// Result of one strategy run.
#[pyclass(name = "Transcript", frozen)]
struct PyTranscript {
    inner: harness::Transcript,
}

#[pymethods]
impl PyTranscript {
    fn text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn digest(&self) -> String {
        self.inner.digest()
    }

    #[getter]
    fn outcome(&self) -> Option<String> {
        self.inner.outcome().map(str::to_string)
    }

    #[getter]
    fn illegal_alice_moves(&self) -> usize {
        self.inner.illegal_alice_moves()
    }

    #[getter]
    fn moves(&self) -> usize {
        self.inner.moves().count()
    }

    /// `(name, level, detail)` for every failed monitor.
    fn failed_monitors(&self) -> Vec<(String, usize, String)> {
        self.inner
            .failed_monitors()
            .into_iter()
            .map(|m| (m.kind.name().to_string(), m.level, m.detail.clone()))
            .collect()
    }

    /// Certified depth, witness and the worst recorded margin.
    fn final_summary(&self) -> Option<(usize, String, Option<String>)> {
        self.inner.final_record().map(|f| {
            let worst = f
                .margins
                .iter()
                .map(|(_, m)| m)
                .min_by(|a, b| absgame::numerics::cmp_q(a, b))
                .map(format_rational);
            (f.depth, format_rational(&f.witness), worst)
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        self.inner.write_atomic(std::path::Path::new(path)).map_err(value_err)
    }
}

/// Plays one game of the strategy against a Bob policy.
#[pyfunction]
#[pyo3(signature = (system = "beta:2", beta = "1/4", rounds = 300, bob = "random:1", twist = "identity", monitors = "all", rules = "absolute"))]
#[allow(clippy::too_many_arguments)]
fn run_game(
    py: Python<'_>,
    system: &str,
    beta: &str,
    rounds: usize,
    bob: &str,
    twist: &str,
    monitors: &str,
    rules: &str,
) -> PyResult<PyTranscript> {
    let system: SystemSpec = system.parse().map_err(value_err)?;
    let bob: BobPolicySpec = bob.parse().map_err(value_err)?;
    let twist: TwistSequence = twist.parse().map_err(value_err)?;
    let mut cfg = RunConfig::new(system, q(beta)?, rounds, bob, twist);
    cfg.monitors = monitors.parse::<MonitorMode>().map_err(value_err)?;
    cfg.rules = harness::parse_rules(rules).map_err(value_err)?;
    let inner = py.detach(|| harness::run_game(&cfg)).map_err(value_err)?;
    Ok(PyTranscript { inner })
}

/// Verifies transcript text; returns `(verified, integrity_ok, findings)`.
#[pyfunction]
fn verify(py: Python<'_>, text: &str) -> (bool, bool, Vec<String>) {
    let report = py.detach(|| harness::verify_transcript(text));
    (
        report.ok(),
        report.integrity_ok(),
        report.findings.iter().map(|f| f.to_string()).collect(),
    )
}

/// Oracle table rows as `(depth, checked, passed, extreme)`.
#[pyfunction]
#[pyo3(signature = (kind, depth = None))]
fn oracle(py: Python<'_>, kind: &str, depth: Option<usize>) -> PyResult<Vec<(usize, u64, u64, String)>> {
    let kind: OracleKind = kind.parse().map_err(value_err)?;
    let depth = depth.unwrap_or_else(|| kind.max_depth());
    let table = py
        .detach(|| harness::oracle_suite(kind, depth))
        .map_err(value_err)?;
    Ok(table
        .rows
        .iter()
        .map(|r| (r.depth, r.checked, r.passed, format_rational(&r.extreme)))
        .collect())
}

/// Strategy constants for a system, `beta` and first Bob radius, as `(name, value)` pairs.
#[pyfunction]
fn constants(system: &str, beta: &str, diameter: &str) -> PyResult<Vec<(String, String)>> {
    let system: SystemSpec = system.parse().map_err(value_err)?;
    let (beta, d) = (q(beta)?, q(diameter)?);
    let c = match system {
        SystemSpec::Beta { gamma } => strategy::derive_constants_i(gamma, &beta, &d),
        SystemSpec::Gauss => {
            strategy::derive_constants_ii(&beta, &d, &strategy::expansion_constant()).map_err(value_err)?
        }
    };
    let mut out = vec![
        ("rho".into(), format_rational(&c.rho)),
        ("rho_sharp".into(), format_rational(&c.rho_sharp)),
        ("lambda".into(), c.lambda.to_string()),
        ("delta".into(), format_rational(&c.delta)),
        ("delta_final".into(), format_rational(&c.delta_final)),
    ];
    if let Some(r) = &c.r_expansion {
        out.push(("r".into(), format_rational(r)));
    }
    Ok(out)
}

/// Partial quotients of a rational in `[0,1)`, as decimal strings.
#[pyfunction]
fn continued_fraction(x: &str) -> PyResult<Vec<String>> {
    Ok(harness::continued_fraction(&q(x)?)
        .iter()
        .map(|a| a.to_string())
        .collect())
}

#[pymodule]
pub fn absgame_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBall>()?;
    m.add_class::<PyGame>()?;
    m.add_class::<PyTranscript>()?;
    m.add_function(wrap_pyfunction!(run_game, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(continued_fraction, m)?)?;
    Ok(())
}
