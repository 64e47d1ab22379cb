"""Smoke test for the rrnet_py extension.

Build with `maturin develop -m crates/python/Cargo.toml` (or `pip install
--no-build-isolation crates/python`), then run `pytest python/`.
"""

import math

import rrnet_py

SMALL = {
    "topology.graph": "ring",
    "topology.agents": "8",
    "objective.kind": "quadratic",
    "objective.dim": "3",
    "objective.m": "4",
    "run.epochs": "30",
    "run.seeds": "0,1",
    "run.methods": "gtrr,drr",
    "schedule.stepsize": "auto",
}


def test_config_hash_is_stable():
    a = rrnet_py.config_hash(SMALL)
    b = rrnet_py.config_hash(dict(reversed(list(SMALL.items()))))
    assert a == b
    assert len(a) == 16
    assert a != rrnet_py.config_hash({**SMALL, "run.epochs": "31"})


def test_spectrum_ring():
    s = rrnet_py.spectrum({"topology.graph": "ring", "topology.agents": "16"})
    expected = 1 / 3 + 2 / 3 * math.cos(2 * math.pi / 16)
    assert abs(s["lambda"] - expected) < 1e-10
    assert len(s["eigenvalues"]) == 16


def test_run_and_determinism():
    first = rrnet_py.run(SMALL, workers=2)
    second = rrnet_py.run(SMALL, workers=1)
    assert [(r["method"], r["seed"]) for r in first] == [
        ("gtrr", 0), ("gtrr", 1), ("drr", 0), ("drr", 1)
    ]
    for a, b in zip(first, second):
        assert not a["diverged"]
        assert len(a["t"]) == 31
        assert a["grad_norm_sq"] == b["grad_norm_sq"]
        assert a["fgap_bar"][-1] < a["fgap_bar"][0]


def test_bad_key_raises():
    try:
        rrnet_py.config_hash({"objective.nope": "1"})
    except ValueError:
        return
    raise AssertionError("expected ValueError")


def test_verify_suites_pass():
    for suite in ["abc", "shuffle", "spectral", "gradcheck"]:
        checks = rrnet_py.verify(suite)
        assert checks
        failed = [c for c in checks if not c[1]]
        assert not failed, failed


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print("ok", name)
