import math
import subprocess
import sys

import numpy as np
import pytest

from mixedbo.problems import REGISTRY, branin, get_problem, mixed_int_f1


def ackley_scalar(xs):
    d = len(xs)
    s1 = math.sqrt(sum(x * x for x in xs) / d)
    s2 = sum(math.cos(2 * math.pi * x) for x in xs) / d
    return -20 * math.exp(-0.2 * s1) - math.exp(s2) + 20 + math.e


def branin_scalar(x0, x1):
    return ((x1 - 5.1 / (4 * math.pi ** 2) * x0 ** 2 + 5 / math.pi * x0 - 6) ** 2
            + 10 * (1 - 1 / (8 * math.pi)) * math.cos(x0) + 10)


def test_ackley_examples():
    from mixedbo.problems import ackley
    assert ackley(np.zeros(13)) == pytest.approx(0.0, abs=1e-12)
    prob = get_problem("ackley13")
    point = np.r_[np.zeros(10), np.zeros(3)]
    assert prob.evaluate(point)[0] == pytest.approx(ackley_scalar([-1.0] * 10 + [0.0] * 3), rel=1e-12)
    X = prob.space.sobol_init(10 ** 4, seed=0)
    vals = np.array([prob.objective(x) for x in X])
    assert np.all(vals >= 0) and np.all(vals >= prob.optimum - 1e-12)


def test_rosenbrock_examples():
    from mixedbo.problems import rosenbrock
    assert rosenbrock(np.ones(10)) == 0.0
    assert rosenbrock(np.zeros(10)) == 9.0
    prob = get_problem("rosenbrock10")
    # ordinal index 1 is the level 0
    assert prob.evaluate(np.r_[np.ones(6), np.zeros(4)])[0] == 9.0


def test_branin_binary_examples():
    prob = get_problem("branin_binary")
    assert prob.evaluate([-math.pi, 0])[0] == pytest.approx(branin_scalar(-math.pi, 0.0), rel=1e-12)
    assert prob.evaluate([2.0, 1])[0] == pytest.approx(branin_scalar(2.0, 15.0), rel=1e-12)
    assert branin(np.pi, 2.275) == pytest.approx(0.397887, abs=1e-6)
    grid = np.linspace(-5, 10, 200001)
    dense = min(branin(grid, 0.0).min(), branin(grid, 15.0).min())
    assert prob.optimum == pytest.approx(dense, abs=1e-6)
    assert prob.evaluate([1.0, 1])[0] == prob.evaluate([1.0, 1])[0]


def test_mixed_int_f1_construction():
    prob = mixed_int_f1(seed=3)
    x_opt, f_opt = prob.info["x_opt"], prob.info["f_opt"]
    from mixedbo.problems import MIXED_INT_LEVELS
    idx = [int(np.argmin(np.abs(lv - x_opt[i]))) for i, lv in enumerate(MIXED_INT_LEVELS)]
    point = np.r_[idx, x_opt[8:]]
    expected = f_opt + sum((lv[j] - x_opt[i]) ** 2 for i, (lv, j) in enumerate(zip(MIXED_INT_LEVELS, idx)))
    assert prob.evaluate(point)[0] == pytest.approx(expected, rel=1e-12)
    assert prob.optimum == pytest.approx(expected, rel=1e-12)
    assert f_opt == round(f_opt) and -1000 <= f_opt <= 1000


def test_mixed_int_f1_seed_reproducible_across_processes():
    code = "from mixedbo.problems import mixed_int_f1; p = mixed_int_f1(11); print(repr(p.info['f_opt']), repr(p.optimum))"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout.split()
    prob = mixed_int_f1(11)
    assert out == [repr(prob.info["f_opt"]), repr(prob.optimum)]


def test_toy_constrained_examples():
    prob = get_problem("toy_constrained")
    assert prob.evaluate([0, 0, 0.0, 0.0])[1][0] == 1.0
    assert prob.evaluate([1, 3, 2.0, -2.0])[1][0] < 0
    assert not prob.is_feasible([1, 3, 2.0, 2.0])


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_optimum_lower_bounds_random_samples(name):
    prob = get_problem(name)
    rng = np.random.default_rng(0)
    lo, hi = prob.space.relaxed_bounds()
    best = np.inf
    for _ in range(10):
        X = prob.space.discretize(rng.uniform(lo, hi, size=(10 ** 5, prob.space.relaxed_dim)))
        vals, cons = prob.evaluate_batch(X)
        feas = np.all(cons >= 0, axis=1)
        best = min(best, vals[feas].min())
    assert best >= prob.optimum - 1e-9


def test_batch_matches_pointwise():
    for name in sorted(REGISTRY):
        prob = get_problem(name)
        X = prob.space.sobol_init(16, seed=2)
        vals, cons = prob.evaluate_batch(X)
        for x, v, c in zip(X, vals, cons):
            o, cs = prob.evaluate(x)
            assert o == pytest.approx(v, rel=1e-12, abs=1e-12)
            np.testing.assert_allclose(cs, c, rtol=1e-12)


def test_registry_and_errors():
    assert {"ackley13", "mixed_int_f1", "rosenbrock10", "branin_binary", "toy_constrained"} <= set(REGISTRY)
    with pytest.raises(ValueError):
        get_problem("welded_beam")
    prob = get_problem("ackley13")
    with pytest.raises(ValueError):
        prob.evaluate(np.full(13, 2.0))
