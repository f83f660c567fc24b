"""Gaussian-process regression over mixed inputs.

Two kernel structures are supported.

``mixed_sum_product``
    ``k_ord`` is an isotropic Matern-5/2 over binary inputs times an ARD
    Matern-5/2 over ordinal and continuous inputs (both rescaled to
    ``[0, 1]``).  With categorical parameters present, the kernel becomes
    ``s1 * k_cat * k_ord + s2 * k_cat + s3 * k_ord`` where ``k_cat`` is a
    weighted overlap kernel ``exp(sum_i w_i * ([z_i == z'_i] - 1))``.

``matern_onehot``
    A single ARD Matern-5/2 over the unit relaxed encoding, with each
    categorical expanded to a one-hot block.  This is the kernel usable by
    continuous relaxations of categorical parameters.

All hyperparameters except the mean constant are fitted in log space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

from .exceptions import CholeskyFailure, DimensionMismatch, FitFailure, KernelIncompatible
from .space import SearchSpace

STRUCTURES = ("mixed_sum_product", "matern_onehot")

SQRT5 = np.sqrt(5.0)
LOG_2PI = np.log(2.0 * np.pi)

LENGTHSCALE_BOUNDS = (0.005, 10.0)
NOISE_BOUNDS = (1e-6, 1.0)
OUTPUTSCALE_BOUNDS = (0.01, 100.0)
CAT_WEIGHT_BOUNDS = (0.01, 20.0)
MEAN_BOUNDS = (-10.0, 10.0)
VARIANCE_FLOOR = 1e-12

JITTER_START = 1e-8
JITTER_MAX = 1e-4


def matern52(r):
    s = SQRT5 * r
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def _matern52_g(r):
    # -(dM/dr) / r, finite at r = 0
    s = SQRT5 * r
    return (5.0 / 3.0) * (1.0 + s) * np.exp(-s)


def _sq_dist(A, B):
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


@dataclass(frozen=True)
class KernelConfig:
    """Kernel structure, group sizes and hyperparameter values."""

    structure: str
    n_binary: int
    n_ard: int
    n_cat: int
    lengthscale_binary: float = 1.0
    lengthscales: tuple = ()
    cat_weights: tuple = ()
    outputscales: tuple = ()

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown kernel structure {self.structure!r}")
        if not self.lengthscales:
            object.__setattr__(self, "lengthscales", (1.0,) * self.n_ard)
        if not self.cat_weights:
            object.__setattr__(self, "cat_weights", (1.0,) * self.n_cat)
        if not self.outputscales:
            object.__setattr__(self, "outputscales", (1.0,) * self.n_terms)
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in self.lengthscales))
        object.__setattr__(self, "cat_weights", tuple(float(v) for v in self.cat_weights))
        object.__setattr__(self, "outputscales", tuple(float(v) for v in self.outputscales))
        if len(self.lengthscales) != self.n_ard or len(self.cat_weights) != self.n_cat:
            raise DimensionMismatch("hyperparameter lengths do not match group sizes")
        if len(self.outputscales) != self.n_terms:
            raise DimensionMismatch(f"expected {self.n_terms} outputscales")
        values = (self.lengthscale_binary, *self.lengthscales, *self.cat_weights, *self.outputscales)
        if min(values) <= 0:
            raise ValueError("kernel hyperparameters must be positive")

    @property
    def has_ordinal_part(self) -> bool:
        return self.n_binary + self.n_ard > 0

    @property
    def n_terms(self) -> int:
        return 3 if (self.n_cat and self.has_ordinal_part) else 1

    @property
    def n_numeric(self) -> int:
        return self.n_binary + self.n_ard

    @property
    def prior_variance(self) -> float:
        return float(sum(self.outputscales))

    # log-parameter vector: [ls_bin?], ls_ard, w_cat, outputscales
    def to_log_vector(self) -> np.ndarray:
        parts = []
        if self.n_binary:
            parts.append([self.lengthscale_binary])
        parts += [self.lengthscales, self.cat_weights, self.outputscales]
        return np.log(np.concatenate([np.asarray(p, dtype=float) for p in parts]))

    def with_log_vector(self, v) -> "KernelConfig":
        v = np.exp(np.asarray(v, dtype=float))
        i = 0
        ls_b = self.lengthscale_binary
        if self.n_binary:
            ls_b, i = float(v[0]), 1
        ls = v[i:i + self.n_ard]
        i += self.n_ard
        w = v[i:i + self.n_cat]
        i += self.n_cat
        s = v[i:i + self.n_terms]
        return replace(self, lengthscale_binary=ls_b, lengthscales=tuple(ls),
                       cat_weights=tuple(w), outputscales=tuple(s))

    def log_bounds(self) -> list[tuple[float, float]]:
        n_ls = self.n_ard + (1 if self.n_binary else 0)
        b = [LENGTHSCALE_BOUNDS] * n_ls + [CAT_WEIGHT_BOUNDS] * self.n_cat + [OUTPUTSCALE_BOUNDS] * self.n_terms
        return [(np.log(lo), np.log(hi)) for lo, hi in b]

    def to_dict(self) -> dict:
        return {
            "structure": self.structure, "n_binary": self.n_binary, "n_ard": self.n_ard,
            "n_cat": self.n_cat, "lengthscale_binary": self.lengthscale_binary,
            "lengthscales": list(self.lengthscales), "cat_weights": list(self.cat_weights),
            "outputscales": list(self.outputscales),
        }

    @classmethod
    def from_dict(cls, d) -> "KernelConfig":
        return cls(**{**d, "lengthscales": tuple(d["lengthscales"]), "cat_weights": tuple(d["cat_weights"]),
                      "outputscales": tuple(d["outputscales"])})


class FeatureMap:
    """Maps design or relaxed points to kernel feature columns.

    Feature columns are ordered ``[binary | ard | categorical]``.  Every
    numeric column is an affine function of exactly one input coordinate,
    which is what makes the input gradients cheap to chain.
    """

    def __init__(self, space: SearchSpace, structure: str = "mixed_sum_product"):
        if structure not in STRUCTURES:
            raise ValueError(f"unknown kernel structure {structure!r}")
        self.space = space
        self.structure = structure
        params = space.parameters
        slots = space.relaxed_slices
        unit_scale = space.unit_scale
        if structure == "mixed_sum_product":
            self.binary_params = space.indices("binary")
            self.ard_params = np.array([i for i, p in enumerate(params) if p.kind in ("ordinal", "continuous")],
                                       dtype=int)
            self.cat_params = space.indices("categorical")
            self.n_binary, self.n_ard, self.n_cat = len(self.binary_params), len(self.ard_params), len(self.cat_params)
            numeric = np.concatenate([self.binary_params, self.ard_params]).astype(int)
            self._numeric_slots = np.array([slots[i].start for i in numeric], dtype=int)
            self._ard_offset = np.array([params[i].bounds[0] if params[i].kind == "continuous" else 0.0
                                         for i in self.ard_params])
            self._ard_scale = np.array([params[i].bounds[1] - params[i].bounds[0] if params[i].kind == "continuous"
                                        else params[i].cardinality - 1 for i in self.ard_params])
            # feature column of every relaxed slot (-1 if none)
            self.relaxed_col = -np.ones(space.relaxed_dim, dtype=int)
            self.relaxed_col[self._numeric_slots] = np.arange(len(numeric))
            param_col = {int(p): c for c, p in enumerate(numeric)}
        else:
            self.binary_params = self.ard_params = self.cat_params = np.zeros(0, dtype=int)
            self.n_binary, self.n_ard, self.n_cat = 0, space.relaxed_dim, 0
            self.relaxed_col = np.arange(space.relaxed_dim)
            param_col = {i: slots[i].start for i, p in enumerate(params) if p.kind != "categorical"}
        self.relaxed_scale = unit_scale.copy()
        cont = space.continuous_indices
        self.continuous_cols = np.array([param_col[int(i)] for i in cont], dtype=int)
        self.continuous_scale = space.continuous_upper - space.continuous_lower
        self.param_col = param_col

    @property
    def n_features(self) -> int:
        return self.n_binary + self.n_ard + self.n_cat

    def kernel_config(self, **hyper) -> KernelConfig:
        return KernelConfig(self.structure, self.n_binary, self.n_ard, self.n_cat, **hyper)

    def from_design(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[-1] != len(self.space):
            raise DimensionMismatch(f"expected {len(self.space)} coordinates, got {X.shape[-1]}")
        if self.structure == "matern_onehot":
            return self.space.to_unit(self.space.one_hot_encode(X, validate=False))
        return np.concatenate([
            X[:, self.binary_params],
            (X[:, self.ard_params] - self._ard_offset) / self._ard_scale,
            X[:, self.cat_params],
        ], axis=1)

    def from_relaxed(self, R) -> np.ndarray:
        R = np.atleast_2d(np.asarray(R, dtype=float))
        if R.shape[-1] != self.space.relaxed_dim:
            raise DimensionMismatch(f"expected relaxed length {self.space.relaxed_dim}, got {R.shape[-1]}")
        if self.n_cat:
            raise KernelIncompatible("the categorical kernel needs discrete inputs")
        U = self.space.to_unit(R)
        if self.structure == "matern_onehot":
            return U
        return U[:, self._numeric_slots]


def _kernel_parts(cfg: KernelConfig, A, B, need_grad=False):
    """Pieces of the kernel shared by values and gradients."""
    nb, na, nc = cfg.n_binary, cfg.n_ard, cfg.n_cat
    parts = {}
    ones = np.ones((A.shape[0], B.shape[0]))
    if nb:
        r2 = _sq_dist(A[:, :nb], B[:, :nb]) / cfg.lengthscale_binary ** 2
        r = np.sqrt(r2)
        parts["Mb"] = matern52(r)
        if need_grad:
            parts["Gb"], parts["rb2"] = _matern52_g(r), r2
    else:
        parts["Mb"] = ones
    if na:
        ls = np.asarray(cfg.lengthscales)
        r = np.sqrt(_sq_dist(A[:, nb:nb + na] / ls, B[:, nb:nb + na] / ls))
        parts["Ma"] = matern52(r)
        if need_grad:
            parts["Ga"] = _matern52_g(r)
    else:
        parts["Ma"] = ones
    if nc:
        eq = (A[:, None, nb + na:] == B[None, :, nb + na:]).astype(float)
        w = np.asarray(cfg.cat_weights)
        parts["kc"] = np.exp((eq - 1.0) @ w)
        if need_grad:
            parts["eq"] = eq
    parts["ko"] = parts["Mb"] * parts["Ma"]
    return parts


def _combine(cfg: KernelConfig, parts):
    s = cfg.outputscales
    if cfg.n_cat and cfg.has_ordinal_part:
        kc, ko = parts["kc"], parts["ko"]
        return s[0] * kc * ko + s[1] * kc + s[2] * ko
    if cfg.n_cat:
        return s[0] * parts["kc"]
    return s[0] * parts["ko"]


def _ordinal_multiplier(cfg, parts):
    """d K / d k_ord."""
    s = cfg.outputscales
    if cfg.n_cat and cfg.has_ordinal_part:
        return s[0] * parts["kc"] + s[2]
    return s[0]


def kernel_matrix(cfg: KernelConfig, A, B) -> np.ndarray:
    """Kernel matrix between feature matrices ``A`` and ``B``."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape[1] != cfg.n_binary + cfg.n_ard + cfg.n_cat or B.shape[1] != A.shape[1]:
        raise DimensionMismatch("feature width does not match kernel configuration")
    return _combine(cfg, _kernel_parts(cfg, A, B))


def kernel_matrix_and_grads(cfg: KernelConfig, F):
    """``K(F, F)`` and its derivatives with respect to the log-hyperparameters."""
    parts = _kernel_parts(cfg, F, F, need_grad=True)
    K = _combine(cfg, parts)
    grads = []
    nb, na = cfg.n_binary, cfg.n_ard
    mult = _ordinal_multiplier(cfg, parts)
    if nb:
        grads.append(mult * parts["Ma"] * parts["Gb"] * parts["rb2"])
    if na:
        base = mult * parts["Mb"] * parts["Ga"]
        for j, ls in enumerate(cfg.lengthscales):
            col = F[:, nb + j] / ls
            grads.append(base * (col[:, None] - col[None, :]) ** 2)
    if cfg.n_cat:
        s = cfg.outputscales
        cat_mult = (s[0] * parts["ko"] + s[1]) if cfg.has_ordinal_part else s[0]
        kc = parts["kc"]
        for i, w in enumerate(cfg.cat_weights):
            grads.append(cat_mult * kc * w * (parts["eq"][:, :, i] - 1.0))
    s = cfg.outputscales
    if cfg.n_cat and cfg.has_ordinal_part:
        terms = [parts["kc"] * parts["ko"], parts["kc"], parts["ko"]]
    elif cfg.n_cat:
        terms = [parts["kc"]]
    else:
        terms = [parts["ko"]]
    grads += [st * t for st, t in zip(s, terms)]
    return K, grads


def build_kernel_matrix(cfg: KernelConfig, space: SearchSpace, A, B) -> np.ndarray:
    """Kernel matrix between two batches of design points."""
    fmap = FeatureMap(space, cfg.structure)
    space.validate(A)
    space.validate(B)
    return kernel_matrix(cfg, fmap.from_design(A), fmap.from_design(B))


def jittered_cholesky(K) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K`` with escalating diagonal jitter."""
    n = K.shape[0]
    scale = max(np.trace(K) / n, 1e-300)
    jitter = JITTER_START
    while True:
        try:
            L = linalg.cholesky(K + (jitter * scale) * np.eye(n), lower=True, check_finite=False)
            if np.all(np.isfinite(L)):
                return L, jitter * scale
        except (linalg.LinAlgError, ValueError):
            pass
        jitter *= 10.0
        if jitter > JITTER_MAX * (1 + 1e-9):
            raise CholeskyFailure("kernel matrix not positive definite after jitter escalation")


def _lml_from_features(cfg, mean, noise, F, y, with_grad=True):
    n = F.shape[0]
    if with_grad:
        K, dKs = kernel_matrix_and_grads(cfg, F)
    else:
        K = kernel_matrix(cfg, F, F)
    K = K + noise * np.eye(n)
    L, _ = jittered_cholesky(K)
    r = y - mean
    alpha = linalg.cho_solve((L, True), r, check_finite=False)
    value = -0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI
    if not with_grad:
        return value, None
    Kinv = linalg.cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    g = [0.5 * np.sum(W * dK) for dK in dKs]
    g.append(0.5 * noise * np.trace(W))
    g.append(alpha.sum())
    return value, np.asarray(g)


def log_marginal_likelihood(cfg: KernelConfig, mean: float, noise: float, data, space=None):
    """Exact Gaussian log marginal likelihood and its gradient.

    Parameters
    ----------
    cfg : KernelConfig
    mean : float
        Constant prior mean.
    noise : float
        Observation noise variance.
    data : tuple
        ``(X, y)``.  ``X`` are design points when ``space`` is given,
        otherwise kernel feature rows.

    Returns
    -------
    value : float
    grad : ndarray
        Gradient with respect to ``[cfg.to_log_vector(), log noise, mean]``.
    """
    X, y = data
    y = np.asarray(y, dtype=float).ravel()
    if len(y) < 1:
        raise ValueError("need at least one observation")
    F = FeatureMap(space, cfg.structure).from_design(X) if space is not None else np.atleast_2d(X)
    return _lml_from_features(cfg, float(mean), float(noise), F, y)


@dataclass
class Posterior:
    mean: np.ndarray
    variance: np.ndarray
    d_mean: np.ndarray | None = None
    d_variance: np.ndarray | None = None


@dataclass(eq=False)
class GPModel:
    """A fitted (or hand-specified) GP conditioned on training data.

    Targets are stored raw; the GP itself works on standardized targets
    ``(y - target_mean) / target_std``.  Instances are read-only after
    construction and can be shared between threads.
    """

    space: SearchSpace
    kernel: KernelConfig
    mean_constant: float
    noise_variance: float
    train_inputs: np.ndarray
    train_targets_raw: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0
    degenerate: bool = False
    fmap: FeatureMap = field(init=False, repr=False)

    def __post_init__(self):
        self.train_inputs = np.atleast_2d(np.asarray(self.train_inputs, dtype=float))
        self.train_targets_raw = np.asarray(self.train_targets_raw, dtype=float).ravel()
        self.fmap = FeatureMap(self.space, self.kernel.structure)
        self._F = self.fmap.from_design(self.train_inputs)
        K = kernel_matrix(self.kernel, self._F, self._F) + self.noise_variance * np.eye(len(self._F))
        self.cholesky_factor, self.jitter = jittered_cholesky(K)
        self._alpha = linalg.cho_solve((self.cholesky_factor, True), self.train_targets - self.mean_constant,
                                       check_finite=False)
        self._L_inv = linalg.solve_triangular(self.cholesky_factor, np.eye(len(self._F)), lower=True,
                                              check_finite=False)

    @property
    def train_targets(self) -> np.ndarray:
        return (self.train_targets_raw - self.target_mean) / self.target_std

    @property
    def prior_mean(self) -> float:
        """Prior mean in original target units."""
        return self.mean_constant * self.target_std + self.target_mean

    @property
    def prior_variance(self) -> float:
        return self.kernel.prior_variance * self.target_std ** 2

    @classmethod
    def condition(cls, space, X, y, kernel=None, mean_constant=0.0, noise_variance=1e-4, standardize=False):
        """Build a model with given hyperparameters (no fitting)."""
        y = np.asarray(y, dtype=float).ravel()
        mu, sd, degenerate = _standardization(y) if standardize else (0.0, 1.0, False)
        kernel = kernel or FeatureMap(space).kernel_config()
        return cls(space, kernel, float(mean_constant), float(noise_variance), X, y, mu, sd, degenerate)

    def lengthscales_by_param(self) -> dict[int, float]:
        """Normalized-unit lengthscale of every continuous/ordinal parameter."""
        out = {}
        nb = self.kernel.n_binary
        for p, col in self.fmap.param_col.items():
            if self.space.parameters[p].kind in ("continuous", "ordinal"):
                out[p] = self.kernel.lengthscales[col - nb]
        return out

    # -------------------------------------------------------------- posterior
    def _posterior_features(self, Q, grad_cols=None, chunk=4096):
        n_q = Q.shape[0]
        mean = np.empty(n_q)
        var = np.empty(n_q)
        want_grad = grad_cols is not None and len(grad_cols) > 0
        if want_grad:
            dmean = np.zeros((n_q, len(grad_cols)))
            dvar = np.zeros((n_q, len(grad_cols)))
        cfg = self.kernel
        for start in range(0, n_q, chunk):
            q = Q[start:start + chunk]
            parts = _kernel_parts(cfg, q, self._F, need_grad=want_grad)
            ks = _combine(cfg, parts)
            m = self.mean_constant + ks @ self._alpha
            v = self._L_inv @ ks.T
            var_q = cfg.prior_variance - np.einsum("ij,ij->j", v, v)
            mean[start:start + chunk] = m
            var[start:start + chunk] = var_q
            if want_grad:
                kinv_ks = (self._L_inv.T @ v).T
                mult = _ordinal_multiplier(cfg, parts)
                nb = cfg.n_binary
                for out_j, col in enumerate(grad_cols):
                    if col < 0:
                        continue
                    diff = q[:, col][:, None] - self._F[:, col][None, :]
                    if col < nb:
                        dk = -mult * parts["Ma"] * parts["Gb"] * diff / cfg.lengthscale_binary ** 2
                    else:
                        ls = cfg.lengthscales[col - nb]
                        dk = -mult * parts["Mb"] * parts["Ga"] * diff / ls ** 2
                    dmean[start:start + chunk, out_j] = dk @ self._alpha
                    dvar[start:start + chunk, out_j] = -2.0 * np.einsum("ij,ij->i", dk, kinv_ks)
        floor_hit = var < VARIANCE_FLOOR
        var = np.maximum(var, VARIANCE_FLOOR)
        sd = self.target_std
        mean = mean * sd + self.target_mean
        var = var * sd ** 2
        if not want_grad:
            return Posterior(mean, var)
        dvar[floor_hit] = 0.0
        return Posterior(mean, var, dmean * sd, dvar * sd ** 2)

    def posterior(self, points, with_gradients=False, wrt="continuous") -> Posterior:
        """Predictive mean and variance at design points.

        Parameters
        ----------
        points : array_like, shape (n, n_params)
        with_gradients : bool
            Also return derivatives of mean and variance.
        wrt : {"continuous", "relaxed"}
            ``"continuous"`` differentiates with respect to the continuous
            coordinates (original units).  ``"relaxed"`` differentiates with
            respect to every relaxed slot at the one-hot encoding of the
            point; slots without a numeric kernel feature get zero.
        """
        X = np.atleast_2d(np.asarray(points, dtype=float))
        Q = self.fmap.from_design(X)
        if not with_gradients:
            return self._posterior_features(Q)
        if wrt == "continuous":
            post = self._posterior_features(Q, self.fmap.continuous_cols)
            scale = self.fmap.continuous_scale
        elif wrt == "relaxed":
            post = self._posterior_features(Q, self.fmap.relaxed_col)
            scale = self.fmap.relaxed_scale
        else:
            raise ValueError(f"unknown gradient target {wrt!r}")
        post.d_mean = post.d_mean / scale
        post.d_variance = post.d_variance / scale
        return post

    def posterior_relaxed(self, relaxed, with_gradients=False) -> Posterior:
        """Predictive distribution at relaxed (possibly non-integer) points."""
        Q = self.fmap.from_relaxed(relaxed)
        if not with_gradients:
            return self._posterior_features(Q)
        post = self._posterior_features(Q, self.fmap.relaxed_col)
        post.d_mean = post.d_mean / self.fmap.relaxed_scale
        post.d_variance = post.d_variance / self.fmap.relaxed_scale
        return post

    # ---------------------------------------------------------- persistence
    def to_dict(self) -> dict:
        return {
            "space": json.loads(self.space.to_json()),
            "kernel": self.kernel.to_dict(),
            "mean_constant": self.mean_constant,
            "noise_variance": self.noise_variance,
            "train_inputs": self.train_inputs.tolist(),
            "train_targets": self.train_targets_raw.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "degenerate": self.degenerate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text) -> "GPModel":
        d = json.loads(text) if isinstance(text, str) else text
        return cls(SearchSpace.from_json(d["space"]), KernelConfig.from_dict(d["kernel"]), d["mean_constant"],
                   d["noise_variance"], np.asarray(d["train_inputs"]), np.asarray(d["train_targets"]),
                   d["target_mean"], d["target_std"], d["degenerate"])


def _standardization(y):
    mu = float(np.mean(y))
    sd = float(np.std(y))
    if not np.isfinite(sd) or sd < 1e-12 * max(1.0, abs(mu)):
        return mu, 1.0, True
    return mu, sd, False


def fit_gp(data, space: SearchSpace, seed=0, structure="mixed_sum_product", n_restarts=5, maxiter=100) -> GPModel:
    """Fit GP hyperparameters by multi-start L-BFGS-B on the log marginal likelihood.

    The first start uses unit lengthscales, weights and outputscales; the
    remaining ``n_restarts - 1`` starts are drawn log-uniformly.  Targets
    are standardized before fitting.
    """
    X, y = data
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) < 2:
        raise ValueError("fit_gp needs at least two observations")
    space.validate(X)
    fmap = FeatureMap(space, structure)
    F = fmap.from_design(X)
    mu, sd, degenerate = _standardization(y)
    ys = (y - mu) / sd
    template = fmap.kernel_config()
    bounds = template.log_bounds() + [tuple(np.log(NOISE_BOUNDS)), MEAN_BOUNDS]
    n_kernel = len(template.to_log_vector())
    rng = np.random.default_rng(seed)

    def unpack(v):
        return template.with_log_vector(v[:n_kernel]), float(np.exp(v[n_kernel])), float(v[n_kernel + 1])

    def objective(v):
        cfg, noise, mean = unpack(v)
        try:
            val, g = _lml_from_features(cfg, mean, noise, F, ys)
        except CholeskyFailure:
            return 1e10, np.zeros_like(v)
        if not np.isfinite(val) or not np.all(np.isfinite(g)):
            return 1e10, np.zeros_like(v)
        return -val, -g

    starts = [np.concatenate([template.to_log_vector(), [np.log(1e-3), 0.0]])]
    lo_rand = np.log(np.array([0.05] * (template.n_ard + (1 if template.n_binary else 0))
                              + [0.1] * template.n_cat + [0.1] * template.n_terms))
    hi_rand = np.log(np.array([5.0] * (template.n_ard + (1 if template.n_binary else 0))
                              + [5.0] * template.n_cat + [10.0] * template.n_terms))
    for _ in range(n_restarts - 1):
        kern = rng.uniform(lo_rand, hi_rand)
        starts.append(np.concatenate([kern, [rng.uniform(np.log(1e-6), np.log(1e-1))], [rng.uniform(-1, 1)]]))

    best_v, best_val = None, np.inf
    for v0 in starts:
        res = optimize.minimize(objective, v0, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": maxiter})
        if res.fun < best_val and res.fun < 1e10:
            best_val, best_v = float(res.fun), res.x
    if best_v is None:
        raise FitFailure("every fitting restart failed")
    cfg, noise, mean = unpack(best_v)
    try:
        return GPModel(space, cfg, mean, noise, X, y, mu, sd, degenerate)
    except CholeskyFailure as exc:
        raise FitFailure(str(exc)) from exc
