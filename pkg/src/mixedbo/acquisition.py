"""Analytic acquisition functions on GP posteriors (maximization convention)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .surrogate import GPModel, Posterior

KINDS = ("ei", "constrained_ei", "ucb")
SIGMA_FLOOR = 1e-9
INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _pdf(u):
    return INV_SQRT_2PI * np.exp(-0.5 * u * u)


def expected_improvement(mu, sigma, incumbent):
    """Closed-form EI, ``max(mu - incumbent, 0)`` where ``sigma`` is below the floor."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    small = sigma < SIGMA_FLOOR
    s = np.where(small, 1.0, sigma)
    u = (mu - incumbent) / s
    ei = s * (u * ndtr(u) + _pdf(u))
    return np.where(small, np.maximum(mu - incumbent, 0.0), np.maximum(ei, 0.0))


def upper_confidence_bound(mu, sigma, beta):
    return np.asarray(mu, dtype=float) + np.sqrt(beta) * np.asarray(sigma, dtype=float)


def ucb_beta(iteration: int, d_eff: int) -> float:
    """Scheduled UCB trade-off ``0.2 * d_eff * log(2 t)``."""
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    return 0.2 * d_eff * np.log(2.0 * iteration)


def _ei_with_grad(post: Posterior, incumbent, with_grad):
    mu, var = post.mean, post.variance
    sigma = np.sqrt(var)
    small = sigma < SIGMA_FLOOR
    s = np.where(small, 1.0, sigma)
    u = (mu - incumbent) / s
    cdf, pdf = ndtr(u), _pdf(u)
    value = np.where(small, np.maximum(mu - incumbent, 0.0), np.maximum(s * (u * cdf + pdf), 0.0))
    if not with_grad:
        return value, None
    dsigma = post.d_variance / (2.0 * s[:, None])
    grad = post.d_mean * cdf[:, None] + dsigma * pdf[:, None]
    grad = np.where(small[:, None], post.d_mean * (mu > incumbent)[:, None], grad)
    return value, grad


def _feasibility_with_grad(post: Posterior, with_grad):
    sigma = np.sqrt(post.variance)
    small = sigma < SIGMA_FLOOR
    s = np.where(small, 1.0, sigma)
    u = post.mean / s
    pf = np.where(small, (post.mean >= 0).astype(float), ndtr(u))
    if not with_grad:
        return pf, None
    du = post.d_mean / s[:, None] - (post.mean / s ** 2)[:, None] * post.d_variance / (2.0 * s[:, None])
    grad = np.where(small[:, None], 0.0, _pdf(u)[:, None] * du)
    return pf, grad


@dataclass(frozen=True)
class AcquisitionFunction:
    """An acquisition function bound to fitted models.

    ``kind`` is one of ``"ei"``, ``"constrained_ei"`` or ``"ucb"``.  The
    objective model should model the quantity to be *maximized*; each
    constraint model models a quantity that is feasible when ``>= 0``.
    """

    kind: str
    objective_model: GPModel
    incumbent: float | None = None
    beta: float | None = None
    constraint_models: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown acquisition kind {self.kind!r}")
        if self.kind in ("ei", "constrained_ei") and self.incumbent is None:
            raise ValueError(f"{self.kind} needs an incumbent")
        if self.kind == "ucb" and (self.beta is None or self.beta <= 0):
            raise ValueError("ucb needs beta > 0")
        if self.kind == "constrained_ei" and not self.constraint_models:
            raise ValueError("constrained_ei needs at least one constraint model")
        object.__setattr__(self, "constraint_models", tuple(self.constraint_models))

    @property
    def space(self):
        return self.objective_model.space

    @property
    def accepts_relaxed(self) -> bool:
        models = (self.objective_model, *self.constraint_models)
        return all(m.fmap.n_cat == 0 for m in models)

    def _combine(self, post, con_posts, with_grad):
        if self.kind == "ucb":
            sigma = np.sqrt(post.variance)
            value = post.mean + np.sqrt(self.beta) * sigma
            if not with_grad:
                return value, None
            return value, post.d_mean + np.sqrt(self.beta) * post.d_variance / (2.0 * sigma[:, None])
        value, grad = _ei_with_grad(post, self.incumbent, with_grad)
        if self.kind == "ei":
            return value, grad
        feas = [_feasibility_with_grad(p, with_grad) for p in con_posts]
        pfs = np.array([f[0] for f in feas])
        total = np.prod(pfs, axis=0)
        if not with_grad:
            return value * total, None
        out = grad * total[:, None]
        for v, (_, dpf) in enumerate(feas):
            others = np.prod(np.delete(pfs, v, axis=0), axis=0)
            out = out + (value * others)[:, None] * dpf
        return value * total, out

    def __call__(self, points, with_grad=False, wrt="continuous"):
        """Evaluate at design points.

        Returns ``values`` of shape ``(n,)`` and, if ``with_grad``, the
        gradient with respect to the continuous coordinates (``wrt=
        "continuous"``) or to the relaxed slots at the one-hot encoding
        (``wrt="relaxed"``, used by straight-through estimation).
        """
        post = self.objective_model.posterior(points, with_grad, wrt=wrt)
        cons = [m.posterior(points, with_grad, wrt=wrt) for m in self.constraint_models]
        return self._combine(post, cons, with_grad)

    def evaluate_relaxed(self, relaxed, with_grad=False):
        """Evaluate at relaxed points; gradients are w.r.t. relaxed slots."""
        post = self.objective_model.posterior_relaxed(relaxed, with_grad)
        cons = [m.posterior_relaxed(relaxed, with_grad) for m in self.constraint_models]
        return self._combine(post, cons, with_grad)


def evaluate(spec: AcquisitionFunction, space, point, with_grad_x=False):
    """Validate ``point`` and evaluate ``spec`` there."""
    space.validate(point)
    X = np.atleast_2d(np.asarray(point, dtype=float))
    value, grad = spec(X, with_grad=with_grad_x)
    if np.ndim(point) == 1:
        return float(value[0]), (grad[0] if grad is not None else None)
    return value, grad
