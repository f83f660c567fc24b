"""Mixed search spaces: parameter descriptors, encodings and initial designs.

A design point is a float vector with one entry per parameter.  Continuous
entries are real values in original units; binary, ordinal and categorical
entries hold integer indices ``0 .. C-1``.

A relaxed point is the continuous relaxation of a design point.  Each
continuous, binary or ordinal parameter owns one slot and each categorical
parameter owns a block of ``C`` slots:

=========== ====================== ==========================
kind        relaxed domain         discretization
=========== ====================== ==========================
continuous  ``[lower, upper]``     clamp
binary      ``[0, 1]``             round (half up)
ordinal     ``[-0.5, C - 0.5)``    round (half up), clamp
categorical ``[0, 1]^C``           argmax (lowest index wins)
=========== ====================== ==========================

The "unit" relaxed representation used internally rescales continuous
slots to ``[0, 1]`` and ordinal slots by ``1 / (C - 1)``.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.stats import qmc

from .exceptions import LayoutMismatch, OutOfDomain

KINDS = ("continuous", "binary", "ordinal", "categorical")


@dataclass(frozen=True)
class ParameterDescriptor:
    kind: str
    name: str = ""
    bounds: tuple[float, float] | None = None
    cardinality: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown parameter kind {self.kind!r}")
        if self.kind == "continuous":
            if self.bounds is None or len(self.bounds) != 2:
                raise ValueError("continuous parameter needs (lower, upper) bounds")
            lo, hi = float(self.bounds[0]), float(self.bounds[1])
            if not lo < hi:
                raise ValueError(f"continuous bounds must satisfy lower < upper, got {self.bounds}")
            object.__setattr__(self, "bounds", (lo, hi))
            object.__setattr__(self, "cardinality", None)
        elif self.kind == "binary":
            if self.cardinality not in (None, 2):
                raise ValueError("binary parameters have cardinality 2")
            object.__setattr__(self, "cardinality", 2)
            object.__setattr__(self, "bounds", None)
        else:
            if self.cardinality is None or int(self.cardinality) < 2:
                raise ValueError(f"{self.kind} parameter needs cardinality >= 2")
            object.__setattr__(self, "cardinality", int(self.cardinality))
            object.__setattr__(self, "bounds", None)

    @classmethod
    def continuous(cls, lower, upper, name=""):
        return cls("continuous", name=name, bounds=(lower, upper))

    @classmethod
    def binary(cls, name=""):
        return cls("binary", name=name)

    @classmethod
    def ordinal(cls, cardinality, name=""):
        return cls("ordinal", name=name, cardinality=cardinality)

    @classmethod
    def categorical(cls, cardinality, name=""):
        return cls("categorical", name=name, cardinality=cardinality)

    @property
    def is_discrete(self) -> bool:
        return self.kind != "continuous"

    @property
    def relaxed_width(self) -> int:
        return self.cardinality if self.kind == "categorical" else 1

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.kind == "continuous":
            out["bounds"] = list(self.bounds)
        elif self.kind != "binary":
            out["cardinality"] = self.cardinality
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterDescriptor":
        bounds = d.get("bounds")
        return cls(
            kind=d["kind"],
            name=d.get("name", ""),
            bounds=tuple(bounds) if bounds is not None else None,
            cardinality=d.get("cardinality"),
        )


class SearchSpace:
    """Ordered, immutable collection of parameter descriptors.

    The order of ``parameters`` fixes every vector layout in the package
    (design points, relaxed points, distribution parameters).
    """

    def __init__(self, parameters):
        params = tuple(parameters)
        if not params:
            raise ValueError("a search space needs at least one parameter")
        for p in params:
            if not isinstance(p, ParameterDescriptor):
                raise TypeError(f"expected ParameterDescriptor, got {type(p).__name__}")
        self._parameters = params

    @property
    def parameters(self) -> tuple[ParameterDescriptor, ...]:
        return self._parameters

    def __len__(self):
        return len(self._parameters)

    def __iter__(self):
        return iter(self._parameters)

    def __eq__(self, other):
        return isinstance(other, SearchSpace) and self._parameters == other._parameters

    def __hash__(self):
        return hash(self._parameters)

    def __repr__(self):
        counts = {k: len(self.indices(k)) for k in KINDS}
        body = ", ".join(f"{k}={v}" for k, v in counts.items() if v)
        return f"SearchSpace({body})"

    # ----------------------------------------------------------------- layout
    def indices(self, kind: str) -> np.ndarray:
        return np.array([i for i, p in enumerate(self._parameters) if p.kind == kind], dtype=int)

    @cached_property
    def continuous_indices(self) -> np.ndarray:
        return self.indices("continuous")

    @cached_property
    def discrete_indices(self) -> np.ndarray:
        return np.array([i for i, p in enumerate(self._parameters) if p.is_discrete], dtype=int)

    @property
    def n_continuous(self) -> int:
        return len(self.continuous_indices)

    @property
    def n_discrete(self) -> int:
        return len(self.discrete_indices)

    @cached_property
    def relaxed_slices(self) -> tuple[slice, ...]:
        out, start = [], 0
        for p in self._parameters:
            out.append(slice(start, start + p.relaxed_width))
            start += p.relaxed_width
        return tuple(out)

    @property
    def relaxed_dim(self) -> int:
        return self.relaxed_slices[-1].stop

    @cached_property
    def continuous_lower(self) -> np.ndarray:
        return np.array([self._parameters[i].bounds[0] for i in self.continuous_indices], dtype=float)

    @cached_property
    def continuous_upper(self) -> np.ndarray:
        return np.array([self._parameters[i].bounds[1] for i in self.continuous_indices], dtype=float)

    @cached_property
    def cardinalities(self) -> np.ndarray:
        """Cardinality of each discrete parameter, in discrete order."""
        return np.array([self._parameters[i].cardinality for i in self.discrete_indices], dtype=int)

    @property
    def n_configurations(self) -> int:
        return int(np.prod(self.cardinalities, dtype=object)) if self.n_discrete else 1

    def enumerate_discrete(self) -> np.ndarray:
        """All discrete configurations, shape ``(n_configurations, n_discrete)``."""
        if self.n_discrete == 0:
            return np.zeros((1, 0))
        grid = itertools.product(*(range(c) for c in self.cardinalities))
        return np.array(list(grid), dtype=float)

    # ---------------------------------------------------------------- domains
    def design_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-parameter (lower, upper) in design units."""
        lo = np.zeros(len(self))
        hi = np.zeros(len(self))
        for i, p in enumerate(self._parameters):
            if p.kind == "continuous":
                lo[i], hi[i] = p.bounds
            else:
                hi[i] = p.cardinality - 1
        return lo, hi

    def validate(self, points) -> None:
        """Raise :class:`OutOfDomain` at the first invalid coordinate."""
        X = np.asarray(points, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[-1] != len(self):
            raise LayoutMismatch(f"expected {len(self)} coordinates, got {X.shape[-1]}")
        for i, p in enumerate(self._parameters):
            col = X[:, i]
            if p.kind == "continuous":
                bad = ~((col >= p.bounds[0]) & (col <= p.bounds[1]))
            else:
                bad = ~((col == np.round(col)) & (col >= 0) & (col <= p.cardinality - 1))
            if bad.any():
                raise OutOfDomain(i, float(col[np.argmax(bad)]))

    def is_valid(self, points) -> bool:
        try:
            self.validate(points)
        except OutOfDomain:
            return False
        return True

    # -------------------------------------------------------------- encodings
    def discretize(self, relaxed) -> np.ndarray:
        """Map relaxed points to design points."""
        R = np.asarray(relaxed, dtype=float)
        single = R.ndim == 1
        R = np.atleast_2d(R)
        if R.shape[-1] != self.relaxed_dim:
            raise LayoutMismatch(f"expected relaxed length {self.relaxed_dim}, got {R.shape[-1]}")
        X = np.empty((R.shape[0], len(self)))
        for i, (p, sl) in enumerate(zip(self._parameters, self.relaxed_slices)):
            if p.kind == "continuous":
                X[:, i] = np.clip(R[:, sl.start], *p.bounds)
            elif p.kind == "categorical":
                X[:, i] = np.argmax(R[:, sl], axis=1)
            else:
                X[:, i] = np.clip(np.floor(R[:, sl.start] + 0.5), 0, p.cardinality - 1)
        return X[0] if single else X

    def one_hot_encode(self, points, validate=True) -> np.ndarray:
        """Map design points to relaxed points (categoricals become one-hot blocks)."""
        X = np.asarray(points, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if validate:
            self.validate(X)
        R = np.zeros((X.shape[0], self.relaxed_dim))
        rows = np.arange(X.shape[0])
        for i, (p, sl) in enumerate(zip(self._parameters, self.relaxed_slices)):
            if p.kind == "categorical":
                R[rows, sl.start + X[:, i].astype(int)] = 1.0
            else:
                R[:, sl.start] = X[:, i]
        return R[0] if single else R

    @cached_property
    def _unit_offset_scale(self) -> tuple[np.ndarray, np.ndarray]:
        offset = np.zeros(self.relaxed_dim)
        scale = np.ones(self.relaxed_dim)
        for p, sl in zip(self._parameters, self.relaxed_slices):
            if p.kind == "continuous":
                offset[sl] = p.bounds[0]
                scale[sl] = p.bounds[1] - p.bounds[0]
            elif p.kind == "ordinal":
                scale[sl] = p.cardinality - 1
        return offset, scale

    def to_unit(self, relaxed) -> np.ndarray:
        offset, scale = self._unit_offset_scale
        return (np.asarray(relaxed, dtype=float) - offset) / scale

    def from_unit(self, unit) -> np.ndarray:
        offset, scale = self._unit_offset_scale
        return np.asarray(unit, dtype=float) * scale + offset

    @property
    def unit_scale(self) -> np.ndarray:
        """d(relaxed)/d(unit) for every relaxed slot."""
        return self._unit_offset_scale[1]

    def relaxed_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.zeros(self.relaxed_dim)
        hi = np.ones(self.relaxed_dim)
        for p, sl in zip(self._parameters, self.relaxed_slices):
            if p.kind == "continuous":
                lo[sl], hi[sl] = p.bounds
            elif p.kind == "ordinal":
                lo[sl], hi[sl] = -0.5, p.cardinality - 0.5
        return lo, hi

    def unit_to_relaxed_from_cube(self, U) -> np.ndarray:
        """Map points of the unit cube ``[0, 1]^relaxed_dim`` onto the relaxed domain."""
        lo, hi = self.relaxed_bounds()
        return lo + np.asarray(U, dtype=float) * (hi - lo)

    # ------------------------------------------------------- initial designs
    def sobol_relaxed(self, n: int, seed) -> np.ndarray:
        """``n`` scrambled-Sobol points over the relaxed domain."""
        if n < 1:
            raise ValueError("n must be >= 1")
        sampler = qmc.Sobol(d=self.relaxed_dim, scramble=True, seed=seed)
        with warnings.catch_warnings():
            # Sobol balance warning for non powers of two is irrelevant here.
            warnings.simplefilter("ignore", UserWarning)
            U = sampler.random(n)
        return self.unit_to_relaxed_from_cube(U)

    def sobol_init(self, n: int, seed) -> np.ndarray:
        """``n`` design points from a scrambled Sobol sequence, discretized."""
        return self.discretize(self.sobol_relaxed(n, seed))

    @property
    def effective_dim(self) -> int:
        return self.relaxed_dim

    # ---------------------------------------------------------- persistence
    def to_json(self) -> str:
        return json.dumps([p.to_dict() for p in self._parameters])

    @classmethod
    def from_json(cls, text) -> "SearchSpace":
        data = json.loads(text) if isinstance(text, str) else text
        return cls(ParameterDescriptor.from_dict(d) for d in data)


# Module-level aliases for the functional API.
def validate(space: SearchSpace, point) -> None:
    space.validate(point)


def discretize(space: SearchSpace, relaxed) -> np.ndarray:
    return space.discretize(relaxed)


def one_hot_encode(space: SearchSpace, point) -> np.ndarray:
    return space.one_hot_encode(point)


def sobol_init(space: SearchSpace, n: int, seed) -> np.ndarray:
    return space.sobol_init(n, seed)


def effective_dim(space: SearchSpace) -> int:
    return space.effective_dim
