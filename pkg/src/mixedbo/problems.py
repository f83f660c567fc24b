"""Synthetic benchmark problems (minimized).

Design points hold integer indices for discrete parameters; each problem
maps those indices to its own numeric levels.  ``Problem.evaluate``
returns ``(objective, constraints)`` where a constraint is satisfied when
``>= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .space import ParameterDescriptor as P
from .space import SearchSpace


@dataclass(frozen=True)
class Problem:
    name: str
    space: SearchSpace
    objective: Callable
    constraints: tuple = ()
    optimum: float | None = None
    noise_sd: float = 0.0
    info: dict = field(default_factory=dict, compare=False)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def evaluate(self, point):
        """Objective and constraint values at one design point."""
        x = np.asarray(point, dtype=float)
        self.space.validate(x)
        return float(self.objective(x)), tuple(float(c(x)) for c in self.constraints)

    def is_feasible(self, point) -> bool:
        return all(c >= 0 for c in self.evaluate(point)[1])

    def evaluate_batch(self, X):
        """Vectorized objective and constraints, shapes ``(n,)`` and ``(n, n_constraints)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.space.validate(X)
        cons = np.stack([np.asarray(c(X), dtype=float) for c in self.constraints], axis=-1) if self.constraints \
            else np.zeros((len(X), 0))
        return np.asarray(self.objective(X), dtype=float), cons


# --------------------------------------------------------------------- Ackley
def ackley(x, a=20.0, b=0.2, c=2 * np.pi):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    s1 = np.sqrt(np.sum(x ** 2, axis=-1) / d)
    s2 = np.sum(np.cos(c * x), axis=-1) / d
    return -a * np.exp(-b * s1) - np.exp(s2) + a + np.e


def ackley13() -> Problem:
    """10 binaries mapped to {-1, 1} followed by 3 continuous in [-1, 1]."""
    space = SearchSpace([P.binary(f"z{i}") for i in range(10)] + [P.continuous(-1, 1, f"x{i}") for i in range(3)])

    def f(p):
        v = np.array(p, dtype=float)
        v[..., :10] = 2 * v[..., :10] - 1
        return ackley(v)

    best = ackley(np.r_[np.ones(10), np.zeros(3)])
    return Problem("ackley13", space, f, optimum=float(best))


# ---------------------------------------------------------------- Mixed Int F1
MIXED_INT_LEVELS = (
    [np.array([-5.0, 5.0])] * 2
    + [np.array([-5.0, 0.0, 5.0])] * 2
    + [np.linspace(-5, 5, 5)] * 2
    + [np.linspace(-5, 5, 7)] * 2
)


def mixed_int_f1(seed: int = 0) -> Problem:
    """Shifted 16-d sphere with 8 discretized coordinates; shift and offset fixed by ``seed``."""
    rng = np.random.default_rng(seed)
    x_opt = rng.uniform(-4, 4, 16)
    # Cauchy draw via the tan transform of a uniform, scaled so half the mass is in [-100, 100]
    f_opt = float(np.round(np.clip(100 * np.tan(np.pi * (rng.uniform() - 0.5)), -1000, 1000)))
    params = [P.binary(f"b{i}") for i in range(2)]
    params += [P.ordinal(len(lv), f"o{i}") for i, lv in enumerate(MIXED_INT_LEVELS[2:])]
    params += [P.continuous(-5, 5, f"x{i}") for i in range(8)]
    space = SearchSpace(params)
    levels = MIXED_INT_LEVELS

    def to_values(p):
        v = np.array(p, dtype=float)
        for i, lv in enumerate(levels):
            v[..., i] = lv[v[..., i].astype(int)]
        return v

    def f(p):
        return np.sum((to_values(p) - x_opt) ** 2, axis=-1) + f_opt

    best = f_opt + sum(np.min((lv - x_opt[i]) ** 2) for i, lv in enumerate(levels))
    return Problem("mixed_int_f1", space, f, optimum=float(best), info={"x_opt": x_opt, "f_opt": f_opt, "seed": seed})


# ------------------------------------------------------------------ Rosenbrock
ROSEN_LEVELS = np.array([-5.0, 0.0, 5.0, 10.0])


def rosenbrock(x):
    x = np.asarray(x, dtype=float)
    return np.sum(100 * (x[..., 1:] - x[..., :-1] ** 2) ** 2 + (x[..., :-1] - 1) ** 2, axis=-1)


@lru_cache(maxsize=1)
def _rosenbrock10_optimum() -> float:
    # The continuous tail x7..x10 couples to the ordinals only through x6.
    tail = {}
    for v6 in ROSEN_LEVELS:
        best = np.inf
        for start in np.linspace(-5, 10, 7):
            for x7 in (v6 ** 2 if v6 ** 2 <= 10 else 10.0, start):
                x0 = np.array([x7, start, start, start])
                res = minimize(lambda t: rosenbrock(np.r_[v6, t]), x0, method="L-BFGS-B",
                               bounds=[(-5, 10)] * 4, options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-12})
                best = min(best, res.fun)
        tail[v6] = best
    grid = np.array(np.meshgrid(*[ROSEN_LEVELS] * 6, indexing="ij")).reshape(6, -1).T
    head = rosenbrock(grid)
    return float(np.min(head + np.array([tail[v] for v in grid[:, 5]])))


def rosenbrock10() -> Problem:
    """10-d Rosenbrock; the first 6 coordinates are ordinals over {-5, 0, 5, 10}."""
    space = SearchSpace([P.ordinal(4, f"o{i}") for i in range(6)] + [P.continuous(-5, 10, f"x{i}") for i in range(4)])

    def f(p):
        v = np.array(p, dtype=float)
        v[..., :6] = ROSEN_LEVELS[v[..., :6].astype(int)]
        return rosenbrock(v)

    return Problem("rosenbrock10", space, f, optimum=_rosenbrock10_optimum())


# -------------------------------------------------------------- binary Branin
def branin(x0, x1):
    a, b, c = 1.0, 5.1 / (4 * np.pi ** 2), 5.0 / np.pi
    r, s, t = 6.0, 10.0, 1.0 / (8 * np.pi)
    return a * (x1 - b * x0 ** 2 + c * x0 - r) ** 2 + s * (1 - t) * np.cos(x0) + s


@lru_cache(maxsize=1)
def _branin_binary_optimum() -> float:
    best = np.inf
    grid = np.linspace(-5, 10, 15001)
    for x1 in (0.0, 15.0):
        vals = branin(grid, x1)
        x0 = grid[np.argmin(vals)]
        res = minimize_scalar(lambda t: branin(t, x1), bounds=(max(-5, x0 - 0.01), min(10, x0 + 0.01)),
                              method="bounded", options={"xatol": 1e-12})
        best = min(best, vals.min(), res.fun)
    return float(best)


def branin_binary() -> Problem:
    """Branin with the first axis continuous and the second restricted to {0, 15}."""
    space = SearchSpace([P.continuous(-5, 10, "x0"), P.binary("z0")])
    return Problem("branin_binary", space, lambda p: branin(p[..., 0], 15.0 * p[..., 1]),
                   optimum=_branin_binary_optimum())


# ------------------------------------------------------------ constrained toy
TOY_CENTER = np.array([0.0, 0.0])


def _toy_objective(p):
    zb, zo, x1, x2 = (p[..., k] for k in range(4)) if isinstance(p, np.ndarray) else p
    return (x1 - 1.5) ** 2 + (x2 - 1.0) ** 2 + 0.25 * (zo - 2) ** 2 - 0.5 * zb * x1


def _toy_constraint(p):
    return 1.0 - np.sum((np.asarray(p)[..., 2:] - TOY_CENTER) ** 2, axis=-1)


@lru_cache(maxsize=1)
def _toy_constrained_optimum() -> float:
    g = np.linspace(-2, 2, 801)
    X1, X2 = np.meshgrid(g, g)
    best = np.inf
    for zb in (0, 1):
        for zo in range(4):
            vals = _toy_objective((zb, zo, X1, X2))
            feas = 1.0 - (X1 - TOY_CENTER[0]) ** 2 - (X2 - TOY_CENTER[1]) ** 2 >= 0
            k = np.argmin(np.where(feas, vals, np.inf))
            start = np.array([X1.flat[k], X2.flat[k]])
            res = minimize(lambda t: _toy_objective((zb, zo, *t)), start, method="SLSQP",
                           bounds=[(-2, 2)] * 2,
                           constraints=[{"type": "ineq", "fun": lambda t: 1.0 - np.sum((t - TOY_CENTER) ** 2)}],
                           options={"ftol": 1e-14, "maxiter": 500})
            cand = vals.flat[k]
            if res.success and _toy_constraint(np.r_[zb, zo, res.x]) >= 0:
                cand = min(cand, res.fun)
            best = min(best, cand)
    return float(best)


def toy_constrained() -> Problem:
    """Quadratic objective on a binary, an ordinal (C=4) and two continuous
    parameters in [-2, 2], feasible inside the unit disc."""
    space = SearchSpace([P.binary("zb"), P.ordinal(4, "zo"), P.continuous(-2, 2, "x1"), P.continuous(-2, 2, "x2")])
    return Problem("toy_constrained", space, _toy_objective, constraints=(_toy_constraint,),
                   optimum=_toy_constrained_optimum())


# ------------------------------------------------------------ 64-config toy
TOY64_CENTERS = np.array([0.2, 0.8, 0.5, 0.35])
TOY64_OFFSETS = np.array([0.3, 0.0, 0.6, 0.15])


def _toy64_objective(p):
    b1, b2, o, k, x1, x2 = (p[..., j] for j in range(6))
    k = k.astype(int)
    return (4 * (x1 - TOY64_CENTERS[k]) ** 2 + 4 * (x2 - 0.3 - 0.2 * b1) ** 2 + 0.3 * (o - 1) ** 2
            + 0.5 * b1 * (1 - b2) + 0.3 * b2 + TOY64_OFFSETS[k])


def mixed_toy64() -> Problem:
    """Two binaries, an ordinal (C=4), a categorical (C=4) and two continuous
    parameters in [0, 1]: 64 configurations, enumerable."""
    space = SearchSpace([P.binary("b1"), P.binary("b2"), P.ordinal(4, "o"), P.categorical(4, "k"),
                         P.continuous(0, 1, "x1"), P.continuous(0, 1, "x2")])
    # separable: continuous terms reach 0 for every configuration
    configs = space.enumerate_discrete()
    best = min(_toy64_objective(np.r_[c, TOY64_CENTERS[int(c[3])], 0.3 + 0.2 * c[0]]) for c in configs)
    return Problem("mixed_toy64", space, _toy64_objective, optimum=float(best))


REGISTRY = {
    "ackley13": ackley13,
    "mixed_int_f1": mixed_int_f1,
    "rosenbrock10": rosenbrock10,
    "branin_binary": branin_binary,
    "toy_constrained": toy_constrained,
    "mixed_toy64": mixed_toy64,
}


def get_problem(name: str, seed: int = 0) -> Problem:
    """Look up a problem by id; ``seed`` only affects seeded problems."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; expected one of {sorted(REGISTRY)}") from None
    return factory(seed) if name == "mixed_int_f1" else factory()
