"""TuRBO-style trust region over continuous and ordinal (C >= 3) parameters."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import acqopt
from .space import SearchSpace

L_INIT = 0.8
L_MIN = 0.5 ** 7
L_MAX = 1.6
SUCCESS_TOLERANCE = 3


def tr_dims(space: SearchSpace) -> np.ndarray:
    """Parameters covered by the trust region."""
    return np.array([i for i, p in enumerate(space.parameters)
                     if p.kind == "continuous" or (p.kind == "ordinal" and p.cardinality >= 3)], dtype=int)


@dataclass(frozen=True)
class TrustRegionState:
    base_length: float = L_INIT
    center: np.ndarray | None = None
    success_count: int = 0
    failure_count: int = 0
    success_tolerance: int = SUCCESS_TOLERANCE
    failure_tolerance: int = 4
    restart_flag: bool = False

    def __post_init__(self):
        if self.success_count < 0 or self.failure_count < 0:
            raise ValueError("counters must be non-negative")
        if self.success_count and self.failure_count:
            raise ValueError("success and failure counters are mutually exclusive")

    @classmethod
    def initial(cls, space: SearchSpace, center=None) -> "TrustRegionState":
        return cls(center=center, failure_tolerance=max(4, len(tr_dims(space))))

    def with_center(self, center) -> "TrustRegionState":
        return replace(self, center=np.asarray(center, dtype=float))


def tr_bounds(state: TrustRegionState, space: SearchSpace, model):
    """Design-unit box around ``state.center``.

    Side lengths (in normalized units) are ``base_length * ls_i / geomean(ls)``
    over the covered parameters; all other parameters keep their full range.
    """
    lo, hi = space.design_bounds()
    dims = tr_dims(space)
    if state.center is None or dims.size == 0:
        return lo, hi
    ls_map = model.lengthscales_by_param()
    ls = np.array([ls_map[i] for i in dims])
    weights = ls / np.exp(np.mean(np.log(ls)))
    half = 0.5 * state.base_length * weights
    span = hi[dims] - lo[dims]
    c = (state.center[dims] - lo[dims]) / span
    new_lo = lo.copy()
    new_hi = hi.copy()
    new_lo[dims] = lo[dims] + np.clip(c - half, 0, 1) * span
    new_hi[dims] = lo[dims] + np.clip(c + half, 0, 1) * span
    ords = [i for i in dims if space.parameters[i].kind == "ordinal"]
    for i in ords:
        # keep at least the center level
        new_lo[i] = min(np.ceil(new_lo[i] - 1e-9), state.center[i])
        new_hi[i] = max(np.floor(new_hi[i] + 1e-9), state.center[i])
    return new_lo, new_hi


def tr_update(state: TrustRegionState, improved: bool) -> TrustRegionState:
    """Count a success or failure and resize the region."""
    if improved:
        s, f = state.success_count + 1, 0
    else:
        s, f = 0, state.failure_count + 1
    L = state.base_length
    if s >= state.success_tolerance:
        L, s = min(2.0 * L, L_MAX), 0
    elif f >= state.failure_tolerance:
        L, f = L / 2.0, 0
    if L < L_MIN:
        return replace(state, base_length=L_INIT, success_count=0, failure_count=0, restart_flag=True)
    return replace(state, base_length=L, success_count=s, failure_count=f, restart_flag=False)


def constrained_optimize(af, space: SearchSpace, cfg, state: TrustRegionState, model=None):
    """Run the configured optimizer restricted to the trust region."""
    model = af.objective_model if model is None else model
    bounds = tr_bounds(state, space, model)
    result = acqopt.optimize(af, space, cfg, bounds=bounds)
    return result, bounds
