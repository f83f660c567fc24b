"""Acquisition maximization over mixed spaces.

All methods return a :class:`CandidateResult` whose ``af_value`` is the
acquisition value freshly recomputed at the returned (valid) design point.
Restarts are optimized together as one batch: every surrogate call covers
all restarts at once, which is much cheaper than looping over them.

Optional ``bounds=(lo, hi)`` in design units restrict continuous and
ordinal parameters (used by trust regions).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from . import reparam
from .exceptions import KernelIncompatible, NonFiniteGradient, SpaceTooLarge
from .space import SearchSpace

METHODS = ("pr_adam", "pr_saa", "cont_relax", "exact_round_fd", "exact_round_ste", "enumeration")
ORDINAL_EDGE = 1e-6


@dataclass(frozen=True)
class AcqOptimizerConfig:
    """Settings shared by every acquisition optimizer.

    ``fd_step`` is measured in units of one ordinal level (normalized
    relaxed coordinates).  ``sga`` swaps Adam for plain stochastic gradient
    ascent with a ``t**-0.7`` decay.  ``enum_restarts`` is the number of
    continuous starts per configuration in enumeration.
    """

    method: str = "pr_adam"
    restarts: int = 20
    max_iterations: int = 200
    mc_samples: int = 128
    learning_rate: float = 1.0 / 40.0
    tau: float = 0.1
    raw_candidates: int = 1024
    boltzmann_temperature: float = 1.0
    seed: int = 0
    fd_step: float = 0.51
    final_samples_per_restart: int = 8
    start_mass: float = 0.75
    sga: bool = False
    enum_restarts: int = 4
    trace_path: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        for name in ("restarts", "max_iterations", "mc_samples", "raw_candidates",
                     "final_samples_per_restart", "enum_restarts"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.boltzmann_temperature <= 0:
            raise ValueError("boltzmann_temperature must be positive")
        if not 0 < self.start_mass < 1:
            raise ValueError("start_mass must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class CandidateResult:
    point: np.ndarray
    af_value: float
    restart_index: int
    trajectory: list | None = field(default=None)


class _Tracer:
    def __init__(self, path):
        self._fh = open(path, "a") if path else None

    def log(self, step, values, grad_norms):
        if self._fh is None:
            return
        for r, (v, g) in enumerate(zip(values, grad_norms)):
            self._fh.write(json.dumps({"restart": r, "step": int(step), "po_value": float(v),
                                       "grad_norm": float(g)}) + "\n")

    def close(self):
        if self._fh is not None:
            self._fh.close()


# ------------------------------------------------------------------ domains
def _design_bounds(space: SearchSpace, bounds):
    lo, hi = space.design_bounds()
    if bounds is not None:
        blo, bhi = (np.asarray(b, dtype=float) for b in bounds)
        lo, hi = np.maximum(lo, blo), np.minimum(hi, bhi)
        disc = space.discrete_indices
        lo[disc], hi[disc] = np.ceil(lo[disc] - 1e-9), np.floor(hi[disc] + 1e-9)
        if np.any(lo > hi):
            raise ValueError("empty bounds")
    return lo, hi


def _relaxed_box(space: SearchSpace, dlo, dhi):
    """Relaxed-domain box matching design bounds (ordinal cells end just below +0.5)."""
    lo, hi = space.relaxed_bounds()
    for i, (p, sl) in enumerate(zip(space.parameters, space.relaxed_slices)):
        if p.kind == "continuous":
            lo[sl], hi[sl] = dlo[i], dhi[i]
        elif p.kind == "ordinal":
            lo[sl], hi[sl] = dlo[i] - 0.5, dhi[i] + 0.5 - ORDINAL_EDGE
    return lo, hi


def _sobol(d, n, rng):
    sampler = qmc.Sobol(d=max(d, 1), scramble=True, seed=rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return sampler.random(n)[:, :d]


def _true_values(af, X):
    vals, _ = af(X)
    return np.asarray(vals, dtype=float)


def _select(af, points, restart_ids, trajectories=None):
    """Argmax of the true AF; ties go to the lowest restart index."""
    vals = _true_values(af, points)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    order = np.lexsort((restart_ids, -vals))
    best = order[0]
    r = int(restart_ids[best])
    point = points[best].copy()
    value = float(_true_values(af, point[None, :])[0])
    traj = trajectories[r] if trajectories is not None else None
    return CandidateResult(point, value, r, traj)


# --------------------------------------------------------- Boltzmann starts
def boltzmann_init(af, space: SearchSpace, cfg: AcqOptimizerConfig, bounds=None, rng=None) -> np.ndarray:
    """Pick ``cfg.restarts`` relaxed starting points by Boltzmann sampling.

    Evaluates the AF at the discretization of ``cfg.raw_candidates``
    scrambled-Sobol points and samples without replacement with
    probability proportional to ``exp(eta * standardized utility)``, where
    ``eta`` maps the utility range onto a logit range of ``6 /
    boltzmann_temperature``.

    Returns
    -------
    ndarray, shape (restarts, relaxed_dim)
    """
    if cfg.raw_candidates < cfg.restarts:
        raise ValueError("raw_candidates must be >= restarts")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    dlo, dhi = _design_bounds(space, bounds)
    lo, hi = _relaxed_box(space, dlo, dhi)
    R = lo + _sobol(space.relaxed_dim, cfg.raw_candidates, rng) * (hi - lo)
    if cfg.raw_candidates == cfg.restarts:
        return R
    util = _true_values(af, space.discretize(R))
    util = np.where(np.isfinite(util), util, np.nanmin(np.where(np.isfinite(util), util, np.inf)))
    sd = util.std()
    z = (util - util.mean()) / sd if sd > 0 else np.zeros_like(util)
    spread = z.max() - z.min()
    logits = 6.0 * (z - z.max()) / spread / cfg.boltzmann_temperature if spread > 0 else np.zeros_like(z)
    keys = logits + rng.gumbel(size=logits.shape)
    chosen = np.argsort(-keys, kind="stable")[:cfg.restarts]
    return R[chosen]


# ------------------------------------------------------------ PR optimizers
class _PRProblem:
    """(x, phi) bookkeeping for a batch of PR restarts.

    ``x`` is kept in unit coordinates of the full continuous box.
    """

    def __init__(self, af, space, cfg, dlo, dhi):
        self.af, self.space, self.cfg = af, space, cfg
        self.lay = reparam.layout(space)
        cont = space.continuous_indices
        self.x_lo, self.x_span = space.continuous_lower, space.continuous_upper - space.continuous_lower
        self.x_span = np.where(self.x_span > 0, self.x_span, 1.0)
        self.ux_lo = (dlo[cont] - self.x_lo) / self.x_span
        self.ux_hi = (dhi[cont] - self.x_lo) / self.x_span
        self.ord_bounds = self.lay.phi_bounds(dlo, dhi)
        self.lo = np.concatenate([self.ux_lo, self.ord_bounds[0]])
        self.hi = np.concatenate([self.ux_hi, self.ord_bounds[1]])
        self.d = len(cont)

    def split(self, P):
        return self.x_lo + P[:, :self.d] * self.x_span, P[:, self.d:]

    def start(self, R):
        space = self.space
        D = space.discretize(R)
        ux = (D[:, space.continuous_indices] - self.x_lo) / self.x_span
        phi = reparam.inverse_transform_for_mass(space, D[:, space.discrete_indices], self.cfg.tau,
                                                 self.cfg.start_mass, self.ord_bounds)
        return np.clip(np.concatenate([ux, phi], axis=1), self.lo, self.hi)

    def theta(self, P):
        _, phi = self.split(P)
        return reparam.transform(self.space, phi, self.cfg.tau, self.ord_bounds)

    def estimate(self, P, z, baseline):
        """Per-restart PO estimate and gradient w.r.t. ``P`` from samples ``z``."""
        x, _ = self.split(P)
        theta, jac = self.theta(P)
        vals, gx = reparam._eval_af(self.af, reparam.assemble(self.space, x, z), True)
        _, score = reparam.log_prob(self.space, theta[:, None, :], z)
        g_theta = ((vals - baseline[:, None])[..., None] * score).mean(1)
        g_phi = np.einsum("rj,rjk->rk", g_theta, jac)
        g_ux = gx.mean(1) * self.x_span
        return vals.mean(1), np.concatenate([g_ux, g_phi], axis=1)

    def value(self, P, z):
        x, _ = self.split(P)
        vals, _ = reparam._eval_af(self.af, reparam.assemble(self.space, x, z), False)
        return vals.mean(1)


def _finite_rows(G):
    return np.all(np.isfinite(G), axis=1)


def optimize_pr(af, space: SearchSpace, cfg: AcqOptimizerConfig, bounds=None) -> CandidateResult:
    """Maximize the probabilistic objective (``pr_adam`` or ``pr_saa``)."""
    if cfg.method not in ("pr_adam", "pr_saa"):
        raise ValueError("optimize_pr needs method pr_adam or pr_saa")
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng, opt_rng, final_rng = (np.random.default_rng(s) for s in seeds)
    dlo, dhi = _design_bounds(space, bounds)
    prob = _PRProblem(af, space, cfg, dlo, dhi)
    P = prob.start(boltzmann_init(af, space, cfg, bounds, init_rng))
    n_r = P.shape[0]
    n_samples = cfg.mc_samples if prob.lay.n_discrete else 1
    alive = np.ones(n_r, dtype=bool)
    traj = [[] for _ in range(n_r)]
    tracer = _Tracer(cfg.trace_path)
    try:
        if cfg.method == "pr_adam":
            _run_adam(prob, P, n_samples, opt_rng, alive, traj, tracer)
        else:
            _run_saa(prob, P, n_samples, opt_rng, alive, traj, tracer)
    finally:
        tracer.close()
    if not alive.any():
        raise NonFiniteGradient("every PR restart produced a non-finite gradient")
    idx = np.flatnonzero(alive)
    theta, _ = prob.theta(P[idx])
    z = reparam.sample(space, theta, cfg.final_samples_per_restart, final_rng)
    x, _ = prob.split(P[idx])
    X = reparam.assemble(space, x, z).reshape(-1, len(space))
    X[:, space.continuous_indices] = np.clip(X[:, space.continuous_indices], dlo[space.continuous_indices],
                                             dhi[space.continuous_indices])
    ids = np.repeat(idx, cfg.final_samples_per_restart)
    return _select(af, X, ids, traj)


def _run_adam(prob, P, n_samples, rng, alive, traj, tracer):
    cfg = prob.cfg
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = np.zeros_like(P)
    v = np.zeros_like(P)
    baselines = [reparam.BaselineState() for _ in range(P.shape[0])]
    for t in range(1, cfg.max_iterations + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            return
        theta, _ = prob.theta(P[idx])
        z = reparam.sample(prob.space, theta, n_samples, rng)
        base = np.array([baselines[r].value for r in idx])
        po, G = prob.estimate(P[idx], z, base)
        ok = _finite_rows(G) & np.isfinite(po)
        alive[idx[~ok]] = False
        idx, po, G = idx[ok], po[ok], G[ok]
        for r, val in zip(idx, po):
            baselines[r] = reparam.update_baseline(baselines[r], val)
            traj[r].append(float(val))
        if cfg.sga:
            step = cfg.learning_rate * t ** -0.7 * G
        else:
            m[idx] = b1 * m[idx] + (1 - b1) * G
            v[idx] = b2 * v[idx] + (1 - b2) * G ** 2
            step = cfg.learning_rate * (m[idx] / (1 - b1 ** t)) / (np.sqrt(v[idx] / (1 - b2 ** t)) + eps)
        P[idx] = np.clip(P[idx] + step, prob.lo, prob.hi)
        tracer.log(t, po, np.linalg.norm(G, axis=1))


def _run_saa(prob, P, n_samples, rng, alive, traj, tracer, max_halvings=8, init_step=0.1):
    cfg = prob.cfg
    n_r = P.shape[0]
    seed = int(rng.integers(2 ** 32))
    base = reparam.BaseSampleSet.sobol(n_samples, prob.lay.n_discrete, seed=seed, batch=n_r).base
    active = alive.copy()
    zero = np.zeros(n_r)

    def draw(Pi, idx):
        theta, _ = prob.theta(Pi)
        return reparam.saa_sample(prob.space, theta, base[idx])

    idx = np.arange(n_r)
    f, G = prob.estimate(P, draw(P, idx), zero)
    for t in range(1, cfg.max_iterations + 1):
        bad = ~(_finite_rows(G) & np.isfinite(f))
        alive[bad & active] = False
        active &= ~bad
        idx = np.flatnonzero(active)
        if idx.size == 0:
            return
        for r in idx:
            traj[r].append(float(f[r]))
        gmax = np.abs(G[idx]).max(axis=1)
        step = np.where(gmax > 0, init_step / np.where(gmax > 0, gmax, 1.0), 0.0)
        pending = idx[gmax > 0]
        active[idx[gmax == 0]] = False
        step = dict(zip(idx, step))
        for _ in range(max_halvings + 1):
            if pending.size == 0:
                break
            s = np.array([step[r] for r in pending])[:, None]
            cand = np.clip(P[pending] + s * G[pending], prob.lo, prob.hi)
            f_new = prob.value(cand, draw(cand, pending))
            accept = np.isfinite(f_new) & (f_new >= f[pending]) & np.any(cand != P[pending], axis=1)
            acc = pending[accept]
            P[acc] = cand[accept]
            for r in pending[~accept]:
                step[r] *= 0.5
            pending = pending[~accept]
        active[pending] = False
        moved = np.setdiff1d(idx, pending)
        if moved.size:
            f[moved], G[moved] = prob.estimate(P[moved], draw(P[moved], moved), zero[moved])
        tracer.log(t, f[idx], np.linalg.norm(G[idx], axis=1))


# ------------------------------------------------------- relaxation methods
def _batched_lbfgs(fun, U0, lo, hi, maxiter, tracer=None):
    """Maximize ``fun`` for every row of ``U0`` with one L-BFGS-B run on the sum.

    ``fun(U)`` returns ``(values (r,), grads (r, D))``.
    """
    r, D = U0.shape
    state = {"step": 0}

    def objective(flat):
        U = flat.reshape(r, D)
        vals, grads = fun(U)
        vals = np.where(np.isfinite(vals), vals, -1e10)
        grads = np.where(np.isfinite(grads), grads, 0.0)
        if tracer is not None:
            state["step"] += 1
            tracer.log(state["step"], vals, np.linalg.norm(grads, axis=1))
        return -vals.sum(), -grads.ravel()

    if D == 0:
        return U0
    res = minimize(objective, U0.ravel(), jac=True, method="L-BFGS-B",
                   bounds=list(zip(np.tile(lo, r), np.tile(hi, r))),
                   options={"maxiter": maxiter, "ftol": 1e-12, "gtol": 1e-9})
    return np.clip(res.x.reshape(r, D), lo, hi)


def _relaxation_setup(af, space, cfg, bounds):
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(seeds[0])
    dlo, dhi = _design_bounds(space, bounds)
    lo, hi = _relaxed_box(space, dlo, dhi)
    R0 = boltzmann_init(af, space, cfg, bounds, rng)
    scale = space.unit_scale
    offset = space.from_unit(np.zeros(space.relaxed_dim))
    return (R0 - offset) / scale, (lo - offset) / scale, (hi - offset) / scale, scale, offset


def _finish_relaxed(af, space, U, scale, offset):
    X = space.discretize(U * scale + offset)
    return _select(af, X, np.arange(X.shape[0]))


def optimize_cont_relax(af, space: SearchSpace, cfg: AcqOptimizerConfig, bounds=None) -> CandidateResult:
    """Optimize the AF on the continuous relaxation, then discretize."""
    if not af.accepts_relaxed:
        raise KernelIncompatible("continuous relaxation needs a surrogate that accepts relaxed inputs")
    U0, lo, hi, scale, offset = _relaxation_setup(af, space, cfg, bounds)

    def fun(U):
        vals, grads = af.evaluate_relaxed(U * scale + offset, with_grad=True)
        return vals, grads * scale

    tracer = _Tracer(cfg.trace_path)
    try:
        U = _batched_lbfgs(fun, U0, lo, hi, cfg.max_iterations, tracer)
    finally:
        tracer.close()
    return _finish_relaxed(af, space, U, scale, offset)


def _rounded_gradient(af, space, R, scale):
    """AF at ``discretize(R)`` and its gradient w.r.t. the continuous slots (unit coords)."""
    X = space.discretize(R)
    vals, gc = af(X, with_grad=True, wrt="continuous")
    grads = np.zeros_like(R)
    cont_slots = [space.relaxed_slices[i].start for i in space.continuous_indices]
    grads[:, cont_slots] = gc * scale[cont_slots]
    return X, vals, grads


def optimize_exact_round(af, space: SearchSpace, cfg: AcqOptimizerConfig, bounds=None) -> CandidateResult:
    """Gradient ascent with the AF evaluated at rounded points and finite differences for discrete slots."""
    U0, lo, hi, scale, offset = _relaxation_setup(af, space, cfg, bounds)
    disc_slots = np.array([j for i in space.discrete_indices for j in range(space.relaxed_slices[i].start,
                                                                          space.relaxed_slices[i].stop)], dtype=int)
    # one ordinal level in unit coordinates; binary/categorical slots already span 1
    steps = np.where(scale[disc_slots] > 1, cfg.fd_step / scale[disc_slots], cfg.fd_step)

    def fun(U):
        R = U * scale + offset
        _, vals, grads = _rounded_gradient(af, space, R, scale)
        if disc_slots.size:
            r = U.shape[0]
            shifted = []
            for j, h in zip(disc_slots, steps):
                for sign in (1.0, -1.0):
                    V = U.copy()
                    V[:, j] = np.clip(V[:, j] + sign * h, lo[j], hi[j])
                    shifted.append(V)
            V = np.concatenate(shifted)
            fv = _true_values(af, space.discretize(V * scale + offset)).reshape(len(disc_slots), 2, r)
            width = np.stack([s[:, disc_slots] for s in shifted[0::2]]) - np.stack(
                [s[:, disc_slots] for s in shifted[1::2]])
            width = np.array([width[k, :, k] for k in range(len(disc_slots))])
            with np.errstate(invalid="ignore", divide="ignore"):
                fd = np.where(width > 0, (fv[:, 0] - fv[:, 1]) / width, 0.0)
            grads[:, disc_slots] = fd.T
        return vals, grads

    tracer = _Tracer(cfg.trace_path)
    try:
        U = _batched_lbfgs(fun, U0, lo, hi, cfg.max_iterations, tracer)
    finally:
        tracer.close()
    return _finish_relaxed(af, space, U, scale, offset)


def optimize_exact_round_ste(af, space: SearchSpace, cfg: AcqOptimizerConfig, bounds=None) -> CandidateResult:
    """Exact rounding in the forward pass, identity (straight-through) in the backward pass."""
    U0, lo, hi, scale, offset = _relaxation_setup(af, space, cfg, bounds)

    def fun(U):
        X = space.discretize(U * scale + offset)
        vals, grads = af(X, with_grad=True, wrt="relaxed")
        return vals, grads * scale

    tracer = _Tracer(cfg.trace_path)
    try:
        U = _batched_lbfgs(fun, U0, lo, hi, cfg.max_iterations, tracer)
    finally:
        tracer.close()
    return _finish_relaxed(af, space, U, scale, offset)


# -------------------------------------------------------------- enumeration
def optimize_enumeration(af, space: SearchSpace, cfg: AcqOptimizerConfig, bounds=None) -> CandidateResult:
    """Exhaustive search over configurations with continuous multi-start ascent.

    For each configuration the best ``enum_restarts`` of a shared Sobol
    set of continuous candidates are refined by L-BFGS-B.
    """
    if space.n_configurations > reparam.ENUMERATION_CAP:
        raise SpaceTooLarge(f"{space.n_configurations} configurations exceed the cap of {reparam.ENUMERATION_CAP}")
    dlo, dhi = _design_bounds(space, bounds)
    disc, cont = space.discrete_indices, space.continuous_indices
    configs = space.enumerate_discrete()
    if disc.size:
        keep = np.all((configs >= dlo[disc]) & (configs <= dhi[disc]), axis=1)
        configs = configs[keep]
    K, d = configs.shape[0], cont.size
    if d == 0:
        X = np.empty((K, len(space)))
        X[:, disc] = configs
        return _select(af, X, np.arange(K))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    lo, hi = dlo[cont], dhi[cont]
    span = np.where(hi > lo, hi - lo, 1.0)
    n_raw = int(min(cfg.raw_candidates, max(64, 2 ** 18 // K)))
    ux = _sobol(d, n_raw, rng)
    Xc = np.empty((K, n_raw, len(space)))
    Xc[:, :, disc] = configs[:, None, :]
    Xc[:, :, cont] = lo + ux[None, :, :] * (hi - lo)
    vals = _true_values(af, Xc.reshape(-1, len(space))).reshape(K, n_raw)
    n_keep = min(cfg.enum_restarts, n_raw)
    top = np.argsort(-vals, axis=1, kind="stable")[:, :n_keep]
    starts = Xc[np.arange(K)[:, None], top].reshape(K * n_keep, len(space))
    U0 = (starts[:, cont] - lo) / span

    def fun(U):
        X = starts.copy()
        X[:, cont] = lo + U * span
        v, g = af(X, with_grad=True)
        return v, g * span

    tracer = _Tracer(cfg.trace_path)
    try:
        U = _batched_lbfgs(fun, U0, np.zeros(d), (hi - lo) / span, cfg.max_iterations, tracer)
    finally:
        tracer.close()
    X = starts.copy()
    X[:, cont] = np.clip(lo + U * span, lo, hi)
    return _select(af, X, np.repeat(np.arange(K), n_keep))


# --------------------------------------------------------------- dispatcher
_DISPATCH = {
    "pr_adam": optimize_pr,
    "pr_saa": optimize_pr,
    "cont_relax": optimize_cont_relax,
    "exact_round_fd": optimize_exact_round,
    "exact_round_ste": optimize_exact_round_ste,
    "enumeration": optimize_enumeration,
}


def optimize(af, space: SearchSpace, cfg: AcqOptimizerConfig, bounds=None) -> CandidateResult:
    """Run the optimizer selected by ``cfg.method``."""
    return _DISPATCH[cfg.method](af, space, cfg, bounds)


def with_overrides(cfg: AcqOptimizerConfig, **changes) -> AcqOptimizerConfig:
    return replace(cfg, **changes)
