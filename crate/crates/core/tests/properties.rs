use num::{BigInt, One, Zero};
use proptest::prelude::*;

use absgame::adversary::{BobPolicySpec, TwistSequence};
use absgame::dynamics::{Branch, CylinderAddress, SystemSpec};
use absgame::harness::{continued_fraction, run_game, RunConfig, Transcript};
use absgame::numerics::{
    add_q, ball_contains, cmp_q, div_q, mul_q, rat, reduced, sub_q, Ball, Rational,
};

fn big() -> impl Strategy<Value = BigInt> {
    prop::collection::vec(any::<u32>(), 1..8).prop_flat_map(|limbs| {
        any::<bool>().prop_map(move |neg| {
            let mut n = BigInt::zero();
            for l in &limbs {
                n = (n << 32) + BigInt::from(*l);
            }
            if neg {
                -n
            } else {
                n
            }
        })
    })
}

fn q() -> impl Strategy<Value = Rational> {
    (big(), big()).prop_filter_map("nonzero denominator", |(n, d)| {
        (!d.is_zero()).then(|| Rational::new(n, d))
    })
}

fn unit_point() -> impl Strategy<Value = Rational> {
    (0i64..=1_000_000, 1i64..=1_000_000).prop_map(|(a, b)| rat(a.min(b), b))
}

proptest! {
    #[test]
    fn exact_arithmetic_matches_num(a in q(), b in q()) {
        prop_assert_eq!(add_q(&a, &b), &a + &b);
        prop_assert_eq!(sub_q(&a, &b), &a - &b);
        prop_assert_eq!(mul_q(&a, &b), &a * &b);
        if !b.is_zero() {
            prop_assert_eq!(div_q(&a, &b), &a / &b);
        }
        prop_assert_eq!(cmp_q(&a, &b), a.cmp(&b));
    }

    #[test]
    fn reduced_is_canonical(n in big(), d in big()) {
        prop_assume!(!d.is_zero());
        let r = reduced(n.clone(), d.clone());
        prop_assert_eq!(&r, &Rational::new(n, d));
        prop_assert!(r.denom() > &BigInt::zero());
    }

    #[test]
    fn balls_are_clipped_to_the_unit_interval(c in unit_point(), r in unit_point()) {
        prop_assume!(!r.is_zero());
        let b = Ball::new(c, r).unwrap();
        prop_assert!(b.left() >= Rational::zero());
        prop_assert!(b.right() <= Rational::one());
        prop_assert!(ball_contains(&b, &b));
        let inner = Ball::new(b.center().clone(), b.radius() / rat(2, 1)).unwrap();
        prop_assert!(ball_contains(&b, &inner));
    }

    #[test]
    fn beta_branches_invert_the_map(gamma in 2u64..=10, raw in prop::collection::vec(0i64..10, 1..8), y in unit_point()) {
        let sys = SystemSpec::beta(gamma).unwrap();
        let digits: Vec<i64> = raw.iter().map(|d| d % gamma as i64).collect();
        let br = Branch::from_address(sys, &CylinderAddress::new(digits)).unwrap();
        let x = br.preimage(&y);
        prop_assert!(br.cylinder().contains_point(&x));
        prop_assert_eq!(br.forward(&x), y);
    }

    #[test]
    fn gauss_branches_invert_the_map(digits in prop::collection::vec(1i64..50, 1..8), y in unit_point()) {
        let br = Branch::from_address(SystemSpec::Gauss, &CylinderAddress::new(digits)).unwrap();
        let x = br.preimage(&y);
        prop_assert!(br.cylinder().contains_point(&x));
        prop_assert_eq!(br.forward(&x), y);
    }

    #[test]
    fn continued_fraction_rebuilds_the_number(x in unit_point()) {
        prop_assume!(x < Rational::one());
        let mut v = Rational::zero();
        for a in continued_fraction(&x).iter().rev() {
            prop_assert!(*a >= BigInt::one());
            v = (Rational::from_integer(a.clone()) + v).recip();
        }
        prop_assert_eq!(v, x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn games_stay_nested_and_legal(seed in 1u64..1_000_000, sys in 0usize..4, b in 0usize..3) {
        let system = ["beta:2", "beta:3", "beta:10", "gauss"][sys].parse::<SystemSpec>().unwrap();
        let beta = [rat(1, 20), rat(1, 5), rat(3, 10)][b].clone();
        let cfg = RunConfig::new(system, beta.clone(), 25, BobPolicySpec::Random(seed), TwistSequence::identity());
        let tr = run_game(&cfg).unwrap();
        prop_assert_eq!(tr.illegal_alice_moves(), 0);
        prop_assert_eq!(tr.errors().count(), 0);

        let bobs = tr.bob_balls();
        for w in bobs.windows(2) {
            prop_assert!(ball_contains(&w[0], &w[1]));
            prop_assert!(w[1].radius() >= &(&beta * w[0].radius()));
        }
        let moves: Vec<_> = tr.moves().collect();
        for pair in moves.windows(2) {
            if pair[1].player == absgame::game::Player::Alice {
                prop_assert!(pair[1].ball.radius() <= &(&beta * pair[0].ball.radius()));
            }
        }
        let (back, digest) = Transcript::parse(&tr.to_text()).unwrap();
        prop_assert_eq!(digest, Some(tr.digest()));
        prop_assert_eq!(back, tr);
    }
}
