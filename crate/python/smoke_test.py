"""Smoke test for the absgame_py extension.

Build and install first, e.g.

    pip install --no-build-isolation ./crates/py
"""

from fractions import Fraction

import absgame_py as ag


def main():
    b = ag.Ball("1/2", "1/4")
    assert b.interval() == ("1/4", "3/4")
    assert b.contains(ag.Ball("1/2", "1/8"))
    assert not b.contains(ag.Ball("1/8", "1/8"))

    g = ag.Game("1/4", 5)
    assert g.to_move() == "bob"
    assert g.play("bob", ag.Ball("1/2", "1/2")) == "accept"
    assert g.validate("alice", ag.Ball("1/2", "1/2")).startswith("reject")
    assert g.play("alice", ag.Ball("1/4", "1/8")) == "accept"
    lo, hi = g.deepest_interval()
    assert Fraction(lo) <= Fraction(hi)

    tr = ag.run_game(system="beta:2", beta="1/4", rounds=40, bob="random:7")
    assert tr.illegal_alice_moves == 0
    assert tr.outcome == "rounds-exhausted", tr.outcome
    text = tr.text()
    assert text.rstrip().splitlines()[-1] == "digest sha256=" + tr.digest

    # monitor failures are reported but do not break the transcript
    verified, intact, findings = ag.verify(text)
    assert intact, findings
    assert verified == (not findings)
    assert all(f.startswith("monitor-failed") for f in findings), findings

    again = ag.run_game(system="beta:2", beta="1/4", rounds=40, bob="random:7")
    assert again.text() == text

    broken = text.replace(tr.digest, "0" * 64)
    verified, intact, findings = ag.verify(broken)
    assert not intact and not verified
    assert any("digest" in f for f in findings), findings

    gauss = ag.run_game(system="gauss", beta="1/5", rounds=30, bob="chaser", twist="const:0")
    depth, witness, worst = gauss.final_summary()
    cf = ag.continued_fraction(witness)
    assert all(int(a) >= 1 for a in cf)

    consts = dict(ag.constants("gauss", "1/5", "1/2"))
    assert Fraction(consts["delta_final"]) * 2 == Fraction(consts["delta"])
    assert Fraction(consts["r"]) > 0

    rows = ag.oracle("distortion", 4)
    assert rows and all(checked == passed for _, checked, passed, _ in rows)

    print("smoke test ok: depth", depth, "moves", tr.moves)


if __name__ == "__main__":
    main()
