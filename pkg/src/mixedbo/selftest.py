"""Fast invariant checks runnable without the test suite (``mixedbo selftest``)."""

from __future__ import annotations

import numpy as np

from . import reparam
from .acquisition import AcquisitionFunction
from .problems import get_problem
from .space import ParameterDescriptor as P
from .space import SearchSpace
from .surrogate import fit_gp


def _toy():
    space = SearchSpace([P.binary(), P.ordinal(4), P.categorical(3), P.continuous(-1, 1)])
    X = space.sobol_init(12, seed=0)
    y = np.sin(3 * X[:, 3]) + 0.3 * X[:, 1] - 0.5 * X[:, 0] + 0.2 * X[:, 2]
    model = fit_gp((X, y), space, seed=0)
    return space, AcquisitionFunction("ei", model, incumbent=float(y.max()))


def check_normalization(rng):
    space, _ = _toy()
    configs = space.enumerate_discrete()
    lay = reparam.layout(space)
    lo, hi = lay.phi_bounds()
    for _ in range(20):
        theta, _ = reparam.transform(space, rng.uniform(lo, hi))
        total = reparam.probability(space, theta, configs).sum()
        if abs(total - 1) > 1e-9:
            return False, f"mass sums to {total}"
    return True, "probabilities sum to one"


def check_score_identity(rng):
    space, _ = _toy()
    lo, hi = reparam.layout(space).phi_bounds()
    theta, _ = reparam.transform(space, rng.uniform(lo, hi))
    z = reparam.sample(space, theta, 20000, rng)
    _, score = reparam.log_prob(space, theta, z)
    se = score.std(0) / np.sqrt(len(z))
    ok = np.all(np.abs(score.mean(0)) <= 4 * se + 1e-12)
    return bool(ok), "mean score within 4 SE of zero"


def check_gradients(rng):
    space, af = _toy()
    lo, hi = reparam.layout(space).phi_bounds()
    theta, _ = reparam.transform(space, rng.uniform(lo, hi))
    x = np.array([0.2])
    _, g_theta, g_x = reparam.analytic_po(af, space, x, theta)
    h = 1e-5
    fd = np.array([(reparam.analytic_po(af, space, x, theta + h * e)[0]
                    - reparam.analytic_po(af, space, x, theta - h * e)[0]) / (2 * h) for e in np.eye(len(theta))])
    fdx = (reparam.analytic_po(af, space, x + h, theta)[0] - reparam.analytic_po(af, space, x - h, theta)[0]) / (2 * h)
    err = max(np.max(np.abs(fd - g_theta)) / max(np.max(np.abs(g_theta)), 1e-12),
              abs(fdx - g_x[0]) / max(abs(g_x[0]), 1e-12))
    return bool(err < 1e-4), f"relative gradient error {err:.2e}"


def check_samplers(rng):
    space, _ = _toy()
    lo, hi = reparam.layout(space).phi_bounds()
    theta, _ = reparam.transform(space, rng.uniform(lo, hi))
    n = 50000
    a = reparam.sample(space, theta, n, rng)
    b = reparam.saa_sample(space, theta, rng.uniform(size=(n, space.n_discrete)))
    gap = max(np.max(np.abs(np.mean(a == v, 0) - np.mean(b == v, 0))) for v in range(4))
    return bool(gap < 0.02), f"max frequency gap {gap:.4f}"


def check_problems(rng):
    worst = 0.0
    for name in ("ackley13", "rosenbrock10", "branin_binary", "mixed_int_f1"):
        prob = get_problem(name)
        X = prob.space.sobol_init(256, seed=int(rng.integers(1 << 30)))
        vals = np.array([prob.evaluate(x)[0] for x in X])
        worst = min(worst, vals.min() - prob.optimum)
    return bool(worst >= -1e-9), "stored optima lower-bound random samples"


CHECKS = (check_normalization, check_score_identity, check_gradients, check_samplers, check_problems)


def run(seed: int = 0, stream=print) -> bool:
    rng = np.random.default_rng(seed)
    ok_all = True
    for check in CHECKS:
        ok, msg = check(rng)
        ok_all &= ok
        stream(f"{'PASS' if ok else 'FAIL'} {check.__name__[6:]}: {msg}")
    return ok_all
