"""Smoke test for the chainscope Python bindings.

Build first: pip install --no-build-isolation -e crates/py
Run: python python/smoke_test.py   (or pytest python/)
"""
import tempfile
from pathlib import Path

import chainscope_py as cs


def test_knee_and_rolling_mean():
    xs = [100.0 * i for i in range(1, 13)]
    ys = [min(x, 800.0) * 0.5 for x in xs]
    k = cs.detect_knee(list(zip(xs, ys)))
    assert k["trend"] == "plateau"
    assert k["knee_x"] == 800.0
    r = cs.rolling_mean([(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)], 3)
    assert [y for _, y in r] == [1.5, 2.0, 2.5]


def test_simulate_and_errors():
    with tempfile.TemporaryDirectory() as d:
        csv = cs.simulate(400.0, d, arch="quorum", seed=1)
        assert Path(csv).read_text().startswith("#")
        try:
            cs.analyze(csv, str(Path(d) / "a"), arch="quorum")
        except RuntimeError as e:
            assert "point" in str(e)
        else:
            raise AssertionError("a single step cannot be analyzed")
    try:
        cs.detect_knee([(1.0, 1.0)])
    except ValueError:
        pass
    else:
        raise AssertionError("too few points accepted")


def test_fabric_run():
    with tempfile.TemporaryDirectory() as d:
        out = cs.run(d, arch="fabric")
        assert out["top"] in ("peer-vscc", "peer-mvcc")
        assert Path(out["report"]).read_text().startswith("# Bottleneck report")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")
