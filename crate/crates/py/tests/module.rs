use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(code: &str) -> PyResult<()> {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(absgame_py::absgame_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("ag", m)?;
        let code = std::ffi::CString::new(code).unwrap();
        py.run(&code, Some(&globals), None)
    })
}

#[test]
fn balls_and_referee() {
    with_module(
        r#"
b = ag.Ball("1/2", "1/4")
assert b.interval() == ("1/4", "3/4"), b.interval()
assert ag.Ball("0", "1/4").interval() == ("0/1", "1/4")
g = ag.Game("3/10", 4)
assert g.play("bob", ag.Ball("1/2", "1/10")) == "accept"
assert g.validate("alice", ag.Ball("1/2", "1/25")) == "reject:RadiusTooLarge"
assert g.play("alice", ag.Ball("1/2", "3/100")) == "accept"
assert g.validate("bob", ag.Ball("2/5", "3/100")) == "reject:NotNested"
assert g.validate("bob", ag.Ball("43/100", "3/100")) == "accept"
assert g.to_move() == "bob"
"#,
    )
    .unwrap();
}

#[test]
fn games_verify_and_errors_are_value_errors() {
    with_module(
        r#"
tr = ag.run_game(system="beta:3", beta="1/5", rounds=20, bob="chaser", twist="const:1/2")
ok, intact, findings = ag.verify(tr.text())
assert intact, findings
assert tr.illegal_alice_moves == 0
assert ag.continued_fraction("3/8") == ["2", "1", "2"]
for bad in [lambda: ag.Ball("x", "1/2"), lambda: ag.run_game(beta="1/2"), lambda: ag.oracle("nope")]:
    try:
        bad()
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")
"#,
    )
    .unwrap();
}
