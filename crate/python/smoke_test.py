"""Smoke test for the randsum extension module.

Build and install first:

    pip install --no-build-isolation ./crates/py
    python python/smoke_test.py
"""

import json
import math

import randsum


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    u = randsum.Distribution.uniform(-1.0, 1.0)
    assert close(u.variance(), 1.0 / 3.0, 1e-15)
    assert close(u.cdf(0.0), 0.5, 1e-15)
    assert close(randsum.Distribution.rademacher().char_fn(1.0).real, math.cos(1.0), 1e-15)
    back = randsum.Distribution.from_json(u.to_json())
    assert back.to_json() == u.to_json()

    ix = randsum.RandomIndex.poisson(16.0)
    assert close(ix.mean(), 16.0, 1e-12)
    assert ix.truncation(1e-10) > 16

    a = randsum.TriangularArray.iid(u)
    assert close(sum(a.row_variances(16)), 1.0, 1e-12)

    # a deterministic index reproduces the classical value
    l, _ = randsum.classical("L", a, 8, epsilon=0.3)
    rl, _ = randsum.randomized("L", a, randsum.RandomIndex.deterministic(8), 8, epsilon=0.3)
    assert close(l, rl, 1e-10), (l, rl)

    rep = randsum.condition_report(a, 16, 0.5, index=ix)
    names = [v["functional"] for v in rep["randomized"]]
    assert "RL" in names and "RF" in names, names

    suite = randsum.implication_suite(a, ix, [4, 16], [0.1, 1.0], [1.0])
    assert all(c["holds"] for c in suite["checks"] if c["required"])

    # Shiryaev rows: F = 1/2 while the row sum is exactly N(0, 1)
    s = randsum.TriangularArray.shiryaev()
    f, _ = randsum.classical("F", s, 16)
    assert close(f, 0.5, 1e-12), f
    d, bound = randsum.row_sum_distance(s.row(16))
    assert d + bound <= 1e-10

    z, _ = randsum.zeta(randsum.Distribution.rademacher(), randsum.Distribution.normal(), 2)
    z2, _ = randsum.zeta(randsum.Distribution.rademacher().scaled(2.0), randsum.Distribution.normal(0.0, 4.0), 2)
    assert close(z2, 4.0 * z, 1e-8 * z2)

    series = randsum.TriangularArray.power_variance(randsum.Distribution.normal(), 1.0)
    geo = randsum.RandomIndex.geometric(1.0 / 64.0)
    mix, mix_bound = randsum.exact_delta(series, geo, 64, kind="mixture", self_normalized=True)
    assert mix + mix_bound <= 1e-10
    emp, dkw = randsum.empirical_delta(series, geo, 64, samples=20_000, seed=7, self_normalized=True)
    assert emp <= dkw and close(dkw, randsum.dkw_bound(20_000, 0.01), 1e-15)

    report = randsum.counterexample(seed=1, oracle_samples=5_000)
    assert report["passed"], report

    check = randsum.selfcheck(42)
    assert check["passed"] and json.dumps(check) == json.dumps(randsum.selfcheck(42))

    config = json.dumps({
        "array": {"array": "iid", "base": {"family": "uniform", "a": -1, "b": 1}},
        "index": {"family": "poisson", "mean": "n"},
        "grids": {"n": [16, 64], "epsilon": [0.1]},
        "monte_carlo": {"samples": 5000},
        "distances": {"mixture": False, "randomsum": False},
    })
    study = randsum.run_study(config, seed=3)
    assert len(study["cells"]) == 2 and study["seed"] == 3

    try:
        randsum.Distribution.normal(0.0, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative variance accepted")

    print("randsum smoke test ok")


if __name__ == "__main__":
    main()
