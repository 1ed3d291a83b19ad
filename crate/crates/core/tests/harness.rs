use absgame::adversary::{BobPolicySpec, TwistSequence};
use absgame::dynamics::SystemSpec;
use absgame::harness::{
    batch_report, run_batch, run_game, verify_file, verify_transcript, Finding, RunConfig, Transcript,
};
use absgame::numerics::{format_rational, parse_rational, rat, Ball, Rational};

fn cfg(system: &str, beta: (i64, i64), rounds: usize, bob: &str, twist: &str) -> RunConfig {
    RunConfig::new(
        system.parse::<SystemSpec>().unwrap(),
        rat(beta.0, beta.1),
        rounds,
        bob.parse::<BobPolicySpec>().unwrap(),
        twist.parse::<TwistSequence>().unwrap(),
    )
}

fn reseal(text: &str) -> String {
    Transcript::parse(text).unwrap().0.to_text()
}

/// Rewrites field `key` of the `n`th line starting with `prefix`.
fn edit_field(text: &str, prefix: &str, n: usize, key: &str, f: impl Fn(&str) -> String) -> Option<String> {
    let mut seen = 0;
    let mut hit = false;
    let lines: Vec<String> = text
        .lines()
        .map(|line| {
            if !line.starts_with(prefix) {
                return line.to_string();
            }
            seen += 1;
            if seen != n {
                return line.to_string();
            }
            hit = true;
            line.split(' ')
                .map(|tok| match tok.strip_prefix(&format!("{key}=")) {
                    Some(v) => format!("{key}={}", f(v)),
                    None => tok.to_string(),
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    hit.then(|| lines.join("\n") + "\n")
}

#[test]
fn run_then_verify_agree() {
    for c in [
        cfg("beta:2", (1, 4), 60, "random:1", "const:0"),
        cfg("beta:3", (1, 5), 60, "chaser", "identity"),
        cfg("gauss", (1, 5), 40, "extremal:right", "affine:1/2"),
    ] {
        let tr = run_game(&c).unwrap();
        assert_eq!(tr.illegal_alice_moves(), 0);
        let report = verify_transcript(&tr.to_text());
        assert!(report.integrity_ok(), "{report}");
        let failed = tr.failed_monitors().len();
        let reported = report
            .findings
            .iter()
            .filter(|f| matches!(f, Finding::MonitorFailed { .. }))
            .count();
        assert_eq!(failed, reported);
        assert_eq!(report.ok(), failed == 0);
        // idempotent
        assert_eq!(report, verify_transcript(&tr.to_text()));
    }
}

#[test]
fn runs_are_byte_identical() {
    let c = cfg("gauss", (1, 5), 50, "random:9", "identity");
    assert_eq!(run_game(&c).unwrap().to_text(), run_game(&c).unwrap().to_text());
}

#[test]
fn zero_rounds_is_header_only() {
    let tr = run_game(&cfg("beta:2", (1, 4), 0, "random:1", "identity")).unwrap();
    let text = tr.to_text();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[0].starts_with("config "));
    assert!(lines[1].starts_with("digest sha256="));
    assert!(verify_transcript(&text).ok());
}

#[test]
fn transcript_text_round_trips_through_a_file() {
    let tr = run_game(&cfg("beta:10", (3, 10), 30, "random:4", "const:1/3")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("game.txt");
    tr.write_atomic(&path).unwrap();
    assert_eq!(Transcript::read(&path).unwrap(), tr);
    assert!(verify_file(&path).unwrap().integrity_ok());
    assert!(!dir.path().join("game.partial").exists());
}

#[test]
fn truncated_file_names_the_line() {
    let text = run_game(&cfg("beta:2", (1, 4), 10, "random:3", "identity")).unwrap().to_text();
    let cut = text.find("player=alice").unwrap() + 20;
    let line = text[..cut].lines().count();
    let report = verify_transcript(&text[..cut]);
    match &report.findings[..] {
        [Finding::Parse { line: l, .. }] => assert_eq!(*l, line),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn missing_or_wrong_digest_is_named() {
    let text = run_game(&cfg("beta:2", (1, 4), 5, "random:3", "identity")).unwrap().to_text();
    let body: String = text.lines().filter(|l| !l.starts_with("digest")).map(|l| format!("{l}\n")).collect();
    assert_eq!(verify_transcript(&body).findings, vec![Finding::MissingDigest]);
    let edited = edit_field(&text, "move", 1, "center", |_| "1/3".into()).unwrap();
    assert_eq!(verify_transcript(&edited).findings, vec![Finding::DigestMismatch]);
}

/// Endpoint arithmetic for the absolute game: inside Bob's last ball, clear
/// of Alice's open ball, radius at least `beta` times Bob's last radius.
fn bob_move_is_legal(beta: &Rational, prev: &Ball, alice: &Ball, ball: &Ball) -> bool {
    let (l, r) = (ball.left(), ball.right());
    prev.left() <= l
        && r <= prev.right()
        && (r <= alice.left() || l >= alice.right())
        && ball.radius() >= &(beta * prev.radius())
}

#[test]
fn tiny_bob_perturbations_are_rejected_or_legal() {
    let tiny = rat(1, 10_000_000_000);
    let beta = rat(1, 4);
    let text = run_game(&cfg("beta:2", (1, 4), 12, "extremal:left", "identity")).unwrap().to_text();
    let (mut rejected, mut legal) = (0, 0);
    for n in 2..=12 {
        for (key, sign) in [("center", 1), ("center", -1), ("radius", -1)] {
            let Some(edited) = edit_field(&text, "move round", 2 * n - 1, key, |v| {
                let x = parse_rational(v).unwrap() + &tiny * rat(sign, 1);
                format_rational(&x)
            }) else {
                continue;
            };
            let sealed = reseal(&edited);
            let report = verify_transcript(&sealed);
            let tr = Transcript::parse(&sealed).unwrap().0;
            let balls: Vec<_> = tr.moves().map(|m| m.ball.clone()).collect();
            let i = 2 * n - 2;
            if bob_move_is_legal(&beta, &balls[i - 2], &balls[i - 1], &balls[i]) {
                // legal here; any conflict must come from a later move
                let ok = match report.findings.first() {
                    Some(Finding::RefereeMismatch { index, .. }) => *index > i,
                    Some(Finding::StrategyMismatch { .. }) => true,
                    _ => report.integrity_ok(),
                };
                assert!(ok, "bob move {n} {key} {sign}: {:?}", report.findings.first());
                legal += 1;
                continue;
            }
            match report.findings.first() {
                Some(Finding::RefereeMismatch { index, replayed, .. }) => {
                    assert_eq!(*index, i);
                    assert!(
                        replayed.contains("NotNested") || replayed.contains("Radius"),
                        "{replayed}"
                    );
                    rejected += 1;
                }
                other => panic!("bob move {n} {key} {sign}: {other:?}"),
            }
        }
    }
    assert!(rejected > 0 && legal > 0, "rejected={rejected} legal={legal}");
}

#[test]
fn resealed_alice_move_edits_are_caught() {
    let text = run_game(&cfg("gauss", (1, 5), 20, "random:5", "identity")).unwrap().to_text();
    for n in [1, 5, 10] {
        let edited = edit_field(&text, "move round", 2 * n, "center", |v| {
            format_rational(&(parse_rational(v).unwrap() + rat(1, 1_000_000_000_000)))
        })
        .unwrap();
        let report = verify_transcript(&reseal(&edited));
        assert!(
            report.findings.iter().any(|f| matches!(
                f,
                Finding::RefereeMismatch { .. } | Finding::StrategyMismatch { .. }
            )),
            "alice move {n}: {:?}",
            report.findings
        );
    }
}

#[test]
fn batch_report_is_stable() {
    let base = cfg("beta:3", (1, 5), 30, "random:1", "identity");
    let cfgs: Vec<RunConfig> = (1..=100)
        .map(|seed| RunConfig {
            bob: BobPolicySpec::Random(seed),
            ..base.clone()
        })
        .collect();
    let a = batch_report(&run_batch(&cfgs));
    let b = batch_report(&run_batch(&cfgs));
    assert_eq!(a, b);
    assert_eq!(a.lines().filter(|l| l.contains("random:")).count(), 100);
}

#[test]
fn invalid_configs_name_the_constraint() {
    let mut c = cfg("beta:2", (1, 2), 10, "random:1", "identity");
    let err = c.validate().unwrap_err().to_string();
    assert!(err.contains("beta"), "{err}");
    c.beta = rat(1, 3);
    assert!(c.validate().is_err());
    c.unsafe_beta_third = true;
    assert!(c.validate().is_ok());
    assert!("beta:1".parse::<SystemSpec>().is_err());
}
