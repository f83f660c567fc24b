"""Probabilistic reparameterization of discrete parameters.

Each discrete parameter ``z_i`` is replaced by an independent random
variable with continuous parameters ``theta_i``:

* binary: ``Z ~ Bernoulli(theta)``, ``theta in [0, 1]``
* ordinal: ``Z = floor(theta) + Bernoulli(theta - floor(theta))``,
  ``theta in [0, C - 1]``
* categorical: ``Z ~ Categorical(theta)``, ``theta`` on the simplex

``theta`` is produced from unconstrained-in-a-box raw parameters ``phi``
through a temperature-``tau`` sigmoid/softmax so every configuration keeps
positive mass.  The probabilistic objective ``E_{Z ~ p(.|theta)}[af(x, Z)]``
is then differentiable in ``(x, phi)``.

Layout: ``theta`` and ``phi`` vectors use the relaxed layout restricted to
the discrete parameters (one slot per binary/ordinal, ``C`` per
categorical).  Batches broadcast over leading axes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import expit, softmax
from scipy.stats import qmc

from .exceptions import SpaceTooLarge, ZeroProbability
from .space import SearchSpace

ENUMERATION_CAP = 4096
CHUNK_SIZE = 32


class DiscreteLayout:
    """Index bookkeeping for the discrete part of a search space."""

    def __init__(self, space: SearchSpace):
        self.space = space
        self.kinds = [space.parameters[i].kind for i in space.discrete_indices]
        self.cardinalities = [int(c) for c in space.cardinalities]
        self.slices = []
        start = 0
        for kind, c in zip(self.kinds, self.cardinalities):
            width = c if kind == "categorical" else 1
            self.slices.append(slice(start, start + width))
            start += width
        self.dim = start
        self.n_discrete = len(self.kinds)

    def phi_bounds(self, design_lo=None, design_hi=None):
        """Box for ``phi``; ordinal boxes follow optional design-unit bounds."""
        lo = np.zeros(self.dim)
        hi = np.ones(self.dim)
        disc = self.space.discrete_indices
        for j, (kind, c, sl) in enumerate(zip(self.kinds, self.cardinalities, self.slices)):
            if kind == "ordinal":
                a, b = 0, c - 1
                if design_lo is not None:
                    a = int(design_lo[disc[j]])
                    b = int(design_hi[disc[j]])
                lo[sl], hi[sl] = a, b
        return lo, hi


@lru_cache(maxsize=64)
def layout(space: SearchSpace) -> DiscreteLayout:
    return DiscreteLayout(space)


# ---------------------------------------------------------------- transform
def _ordinal_floor(phi, lo, hi):
    # floor(k) = k at integers, except the top of the box which stays in the
    # last unit cell so theta never leaves [lo, hi].
    return np.clip(np.floor(phi), lo, np.maximum(hi - 1, lo))


def transform(space: SearchSpace, phi, tau=0.1, ordinal_bounds=None):
    """Map raw parameters ``phi`` to distribution parameters ``theta``.

    Parameters
    ----------
    phi : array_like, shape (..., m)
    tau : float
        Temperature, > 0.
    ordinal_bounds : tuple of arrays, optional
        ``(lo, hi)`` in the ``phi`` layout restricting ordinal supports
        (used inside trust regions).  Defaults to ``(0, C - 1)``.

    Returns
    -------
    theta : ndarray, shape (..., m)
    jac : ndarray, shape (..., m, m)
        ``jac[..., j, k] = d theta_j / d phi_k``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    lay = layout(space)
    phi = np.asarray(phi, dtype=float)
    theta = np.empty_like(phi)
    jac = np.zeros(phi.shape + (lay.dim,))
    if ordinal_bounds is None:
        ordinal_bounds = lay.phi_bounds()
    blo, bhi = ordinal_bounds
    for kind, sl in zip(lay.kinds, lay.slices):
        p = phi[..., sl]
        if kind == "binary":
            t = expit((p - 0.5) / tau)
            theta[..., sl] = t
            jac[..., sl, sl] = (t * (1 - t) / tau)[..., None]
        elif kind == "ordinal":
            lo, hi = blo[sl.start], bhi[sl.start]
            if hi <= lo:
                theta[..., sl] = lo
                continue
            fl = _ordinal_floor(p, lo, hi)
            s = expit((p - fl - 0.5) / tau)
            theta[..., sl] = fl + s
            jac[..., sl, sl] = (s * (1 - s) / tau)[..., None]
        else:
            t = softmax((p - 0.5) / tau, axis=-1)
            theta[..., sl] = t
            eye = np.eye(sl.stop - sl.start)
            jac[..., sl, sl] = (t[..., :, None] * eye - t[..., :, None] * t[..., None, :]) / tau
    return theta, jac


def inverse_transform_for_mass(space: SearchSpace, z, tau=0.1, mass=0.75, ordinal_bounds=None):
    """Raw parameters whose distribution puts ``mass`` on configuration ``z``.

    ``z`` has shape ``(..., n_discrete)``; the remaining mass goes to one
    neighbour for binary/ordinal parameters and is spread evenly over the
    other categories.
    """
    lay = layout(space)
    z = np.asarray(z, dtype=float)
    phi = np.empty(z.shape[:-1] + (lay.dim,))
    if ordinal_bounds is None:
        ordinal_bounds = lay.phi_bounds()
    blo, bhi = ordinal_bounds
    logit = np.log(mass / (1 - mass))
    for j, (kind, c, sl) in enumerate(zip(lay.kinds, lay.cardinalities, lay.slices)):
        zj = z[..., j]
        if kind == "binary":
            phi[..., sl.start] = 0.5 + tau * np.where(zj > 0.5, logit, -logit)
        elif kind == "ordinal":
            lo, hi = blo[sl.start], bhi[sl.start]
            if hi <= lo:
                phi[..., sl.start] = lo
                continue
            zj = np.clip(zj, lo, hi)
            # theta = z + (1 - mass) inside the box, z - (1 - mass) at its top
            top = zj >= hi
            fl = np.where(top, zj - 1, zj)
            frac = np.where(top, mass, 1 - mass)
            phi[..., sl.start] = fl + 0.5 + tau * np.log(frac / (1 - frac))
        else:
            delta = np.log(mass * (c - 1) / (1 - mass))
            half = np.clip(tau * delta / 2, 0, 0.5)
            block = np.full(zj.shape + (c,), 0.5 - half)
            np.put_along_axis(block, zj.astype(int)[..., None], 0.5 + half, axis=-1)
            phi[..., sl] = block
    return phi


# ----------------------------------------------------------- probabilities
def _factors(lay: DiscreteLayout, theta, z, with_grad=True):
    """Per-parameter masses ``p(z_i | theta_i)`` and their theta-derivatives."""
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    shape = np.broadcast_shapes(theta.shape[:-1], z.shape[:-1])
    f = np.empty(shape + (lay.n_discrete,))
    df = np.zeros(shape + (lay.dim,)) if with_grad else None
    for j, (kind, sl) in enumerate(zip(lay.kinds, lay.slices)):
        zj = z[..., j]
        if kind == "binary":
            t = theta[..., sl.start]
            one = zj > 0.5
            f[..., j] = np.where(one, t, 1.0 - t)
            if with_grad:
                df[..., sl.start] = np.where(one, 1.0, -1.0)
        elif kind == "ordinal":
            t = theta[..., sl.start]
            fl = np.floor(t)
            frac = t - fl
            at_fl = zj == fl
            at_up = zj == fl + 1
            f[..., j] = np.where(at_fl, 1.0 - frac, 0.0) + np.where(at_up, frac, 0.0)
            if with_grad:
                df[..., sl.start] = np.where(at_fl, -1.0, 0.0) + np.where(at_up, 1.0, 0.0)
        else:
            t = theta[..., sl]
            total = t.sum(-1)
            idx = np.broadcast_to(zj.astype(int), shape)
            tz = np.take_along_axis(np.broadcast_to(t, shape + t.shape[-1:]), idx[..., None], axis=-1)[..., 0]
            f[..., j] = tz / total
            if with_grad:
                onehot = (np.arange(t.shape[-1]) == idx[..., None]).astype(float)
                df[..., sl] = onehot / total[..., None] - (tz / total ** 2)[..., None]
    return f, df


def log_prob(space: SearchSpace, theta, z):
    """Log mass of discrete configurations and the score ``d log p / d theta``.

    ``theta`` has shape ``(..., m)`` and ``z`` shape ``(..., n_discrete)``;
    leading axes broadcast.
    """
    lay = layout(space)
    f, df = _factors(lay, theta, z)
    if np.any(f <= 0):
        raise ZeroProbability("configuration has zero probability under theta")
    logp = np.log(f).sum(-1)
    score = np.empty_like(df)
    for j, sl in enumerate(lay.slices):
        score[..., sl] = df[..., sl] / f[..., j:j + 1]
    return logp, score


def probability(space: SearchSpace, theta, z) -> np.ndarray:
    f, _ = _factors(layout(space), theta, z, with_grad=False)
    return f.prod(-1)


def _prob_and_grad(lay, theta, z):
    f, df = _factors(lay, theta, z)
    p = f.prod(-1)
    dp = np.empty_like(df)
    for j, sl in enumerate(lay.slices):
        others = np.prod(np.delete(f, j, axis=-1), axis=-1)
        dp[..., sl] = df[..., sl] * others[..., None]
    return p, dp


# ----------------------------------------------------------------- sampling
def sample(space: SearchSpace, theta, n: int, rng) -> np.ndarray:
    """``n`` iid draws from ``p(Z | theta)``; shape ``theta.shape[:-1] + (n, n_discrete)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lay = layout(space)
    theta = np.asarray(theta, dtype=float)
    lead = theta.shape[:-1]
    out = np.empty(lead + (n, lay.n_discrete))
    for j, (kind, sl) in enumerate(zip(lay.kinds, lay.slices)):
        if kind == "binary":
            t = np.broadcast_to(theta[..., None, sl.start], lead + (n,))
            out[..., j] = rng.binomial(1, t)
        elif kind == "ordinal":
            t = theta[..., None, sl.start]
            fl = np.floor(t)
            out[..., j] = fl + rng.binomial(1, np.broadcast_to(t - fl, lead + (n,)))
        else:
            t = theta[..., None, sl]
            with np.errstate(divide="ignore"):
                logits = np.log(t)
            gumbel = rng.gumbel(size=lead + (n, sl.stop - sl.start))
            out[..., j] = np.argmax(logits + gumbel, axis=-1)
    return out


@dataclass(frozen=True)
class BaseSampleSet:
    """Fixed uniforms for sample-average approximation, shape ``(..., N, n_discrete)``."""

    base: np.ndarray
    seed: int | None = None

    @classmethod
    def sobol(cls, n: int, n_discrete: int, seed=None, batch: int | None = None) -> "BaseSampleSet":
        rng = np.random.default_rng(seed)
        count = 1 if batch is None else batch
        blocks = []
        for _ in range(count):
            d = max(n_discrete, 1)
            sampler = qmc.Sobol(d=d, scramble=True, seed=rng)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                u = sampler.random(n)[:, :n_discrete]
            blocks.append(np.minimum(u, np.nextafter(1.0, 0.0)))
        base = blocks[0] if batch is None else np.stack(blocks)
        return cls(base, seed)


def saa_sample(space: SearchSpace, theta, base) -> np.ndarray:
    """Inverse-CDF samples ``z = h(theta, u)`` for fixed base uniforms.

    ``theta`` has shape ``(..., m)`` and ``base`` ``(..., N, n_discrete)``.
    """
    lay = layout(space)
    U = base.base if isinstance(base, BaseSampleSet) else np.asarray(base, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if U.shape[-1] != lay.n_discrete:
        raise ValueError(f"base samples need {lay.n_discrete} columns, got {U.shape[-1]}")
    lead = np.broadcast_shapes(theta.shape[:-1], U.shape[:-2])
    out = np.empty(lead + U.shape[-2:])
    for j, (kind, sl) in enumerate(zip(lay.kinds, lay.slices)):
        u = U[..., j]
        if kind == "binary":
            out[..., j] = (u < theta[..., None, sl.start]).astype(float)
        elif kind == "ordinal":
            t = theta[..., None, sl.start]
            fl = np.floor(t)
            out[..., j] = fl + (u < t - fl)
        else:
            cdf = np.cumsum(theta[..., sl], axis=-1)
            cdf[..., -1] = np.inf
            out[..., j] = np.argmax(u[..., None] < cdf[..., None, :], axis=-1)
    return out


# ------------------------------------------------------ probabilistic objective
def assemble(space: SearchSpace, x, z) -> np.ndarray:
    """Design points from continuous parts ``x (..., d)`` and discrete parts ``z (..., N, d_z)``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    lead = np.broadcast_shapes(x.shape[:-1], z.shape[:-2])
    X = np.empty(lead + z.shape[-2:-1] + (len(space),))
    X[..., space.continuous_indices] = np.broadcast_to(x[..., None, :], lead + z.shape[-2:-1] + x.shape[-1:])
    X[..., space.discrete_indices] = z
    return X


def _eval_af(af, X, with_grad, chunk_size=None):
    flat = X.reshape(-1, X.shape[-1])
    # Samples repeat heavily once theta concentrates; evaluate each design once.
    flat, inverse = np.unique(flat, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    if chunk_size is None or flat.shape[0] <= chunk_size:
        vals, grads = af(flat, with_grad=with_grad)
    else:
        pieces = [af(flat[i:i + chunk_size], with_grad=with_grad) for i in range(0, flat.shape[0], chunk_size)]
        vals = np.concatenate([p[0] for p in pieces])
        grads = np.concatenate([p[1] for p in pieces]) if with_grad else None
    vals = vals[inverse]
    grads = grads[inverse] if with_grad else None
    vals = vals.reshape(X.shape[:-1])
    if with_grad:
        grads = grads.reshape(X.shape[:-1] + grads.shape[-1:])
    return vals, grads


def analytic_po(af, space: SearchSpace, x, theta):
    """Exact probabilistic objective by enumeration of all configurations.

    Returns ``(value, grad_theta, grad_x)``; ``x`` and ``theta`` may carry a
    common leading batch axis.
    """
    if space.n_configurations > ENUMERATION_CAP:
        raise SpaceTooLarge(f"{space.n_configurations} configurations exceed the cap of {ENUMERATION_CAP}")
    lay = layout(space)
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    configs = space.enumerate_discrete()
    p, dp = _prob_and_grad(lay, theta[..., None, :], configs)
    X = assemble(space, x, configs)
    vals, gx = _eval_af(af, X, with_grad=True)
    value = (p * vals).sum(-1)
    grad_theta = (vals[..., None] * dp).sum(-2)
    grad_x = (p[..., None] * gx).sum(-2)
    return value, grad_theta, grad_x


def mc_po(af, space: SearchSpace, x, theta=None, samples=None, chunk_size=CHUNK_SIZE) -> float:
    """Monte-Carlo estimate of the probabilistic objective from given samples."""
    z = np.atleast_2d(np.asarray(samples, dtype=float))
    if z.shape[0] < 1:
        raise ValueError("need at least one sample")
    vals, _ = _eval_af(af, assemble(space, x, z), False, chunk_size)
    return vals.mean(-1)


def mc_po_grad(af, space: SearchSpace, x, theta, samples, baseline=0.0, phi_jacobian=None,
               chunk_size=CHUNK_SIZE):
    """Score-function gradient estimate of the probabilistic objective.

    ``grad_theta = mean((af - baseline) * score)`` and ``grad_x =
    mean(d af / dx)``.  ``baseline`` may be a float or a
    :class:`BaselineState`.  If ``phi_jacobian`` is given the theta
    gradient is chained to raw parameters.
    """
    if isinstance(baseline, BaselineState):
        baseline = baseline.value if baseline.initialized else 0.0
    z = np.asarray(samples, dtype=float)
    vals, gx = _eval_af(af, assemble(space, x, z), True, chunk_size)
    _, score = log_prob(space, np.asarray(theta)[..., None, :], z)
    grad_theta = ((vals - np.asarray(baseline)[..., None])[..., None] * score).mean(-2)
    grad_x = gx.mean(-2)
    if phi_jacobian is not None:
        grad_theta = np.einsum("...j,...jk->...k", grad_theta, phi_jacobian)
    return grad_theta, grad_x


@dataclass(frozen=True)
class BaselineState:
    value: float = 0.0
    decay: float = 0.7
    initialized: bool = False

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")


def update_baseline(state: BaselineState, batch_mean_af) -> BaselineState:
    """Exponential moving average; the first call adopts the batch mean."""
    if not state.initialized:
        return replace(state, value=batch_mean_af, initialized=True)
    return replace(state, value=state.decay * state.value + (1 - state.decay) * batch_mean_af)
