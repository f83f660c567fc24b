"""Outer Bayesian-optimization loop, replications, regret and export.

Problems are minimized; surrogates model the negated objective so that
acquisition functions are maximized.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import acqopt, trustregion
from .acquisition import AcquisitionFunction, ucb_beta
from .exceptions import EmptyHistory, FitFailure, MixedBOError
from .problems import get_problem
from .surrogate import fit_gp

log = logging.getLogger(__name__)

CSV_COLUMNS = ("method", "problem", "replicate", "iteration", "objective", "incumbent", "feasible",
               "regret_log10", "wall_time_s")
ACQF_ALIASES = {"ei": "ei", "cei": "constrained_ei", "constrained_ei": "constrained_ei", "ucb": "ucb"}
REGRET_SHIFT = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a problem, an optimizer and a replication budget.

    ``acq`` holds :class:`~mixedbo.acqopt.AcqOptimizerConfig` overrides
    (the method itself comes from ``method``).  ``record_time=False``
    writes zero wall times, which makes exported CSVs byte-reproducible.
    """

    problem: str
    method: str = "pr_adam"
    tr: bool = False
    acqf: str = "ei"
    n_init: int | None = None
    n_iterations: int = 20
    replications: int = 1
    seed: int = 0
    out_dir: str | None = None
    acq: dict = field(default_factory=dict)
    problem_seed: int = 0
    gp_restarts: int = 5
    record_time: bool = True

    def __post_init__(self):
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.acqf not in ACQF_ALIASES:
            raise ValueError(f"unknown acquisition {self.acqf!r}")
        if self.method not in acqopt.METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "acq", dict(self.acq))

    @property
    def label(self) -> str:
        return f"{self.method}+tr" if self.tr else self.method

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable hash of the settings that affect results."""
    d = cfg.to_dict()
    d.pop("out_dir", None)
    d.pop("replications", None)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    problem: str
    method: str
    replicate: int
    seed: list
    config_hash: str
    n_init: int
    points: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    feasible: list = field(default_factory=list)
    incumbents: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    iteration_times: list = field(default_factory=list)
    tr_log: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.objectives)

    def append(self, point, objective, constraints, wall, total):
        feas = all(c >= 0 for c in constraints)
        prev = self.incumbents[-1] if self.incumbents else np.nan
        inc = objective if feas and not (objective >= prev) else prev
        self.points.append([float(v) for v in point])
        self.objectives.append(float(objective))
        self.constraints.append([float(c) for c in constraints])
        self.feasible.append(bool(feas))
        self.incumbents.append(float(inc))
        self.wall_times.append(float(wall))
        self.iteration_times.append(float(total))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "RunRecord":
        return cls(**d)


# -------------------------------------------------------------------- loop
def _incumbent_index(objectives, constraints):
    """Feasibility-first best index: best feasible objective, else least violation."""
    obj = np.asarray(objectives)
    viol = np.array([sum(max(-c, 0.0) for c in cs) for cs in constraints])
    feas = viol == 0
    if feas.any():
        return int(np.flatnonzero(feas)[np.argmin(obj[feas])])
    return int(np.argmin(viol))


def _seed_int(rng) -> int:
    return int(rng.integers(2 ** 31 - 1))


def run_bo(cfg: ExperimentConfig, replicate_index: int = 0) -> RunRecord:
    """Run one BO replication; deterministic given ``(cfg, replicate_index)``."""
    problem = get_problem(cfg.problem, cfg.problem_seed)
    space = problem.space
    d_eff = space.effective_dim
    n_init = cfg.n_init if cfg.n_init is not None else min(20, 2 * d_eff)
    init_ss, loop_ss = np.random.SeedSequence([cfg.seed, replicate_index]).spawn(2)
    rng = np.random.default_rng(loop_ss)
    acqf = ACQF_ALIASES[cfg.acqf]
    if problem.n_constraints and acqf == "ei":
        acqf = "constrained_ei"
    structure = "matern_onehot" if cfg.method == "cont_relax" and len(space.indices("categorical")) else \
        "mixed_sum_product"
    record = RunRecord(cfg.problem, cfg.label, replicate_index, [cfg.seed, replicate_index], config_hash(cfg), n_init)
    clock = time.perf_counter if cfg.record_time else (lambda: 0.0)

    X0 = space.sobol_init(n_init, seed=np.random.default_rng(init_ss))
    for x in X0:
        obj, cons = _observe(problem, x, rng)
        record.append(x, obj, cons, 0.0, 0.0)

    state = trustregion.TrustRegionState.initial(space) if cfg.tr else None
    for t in range(1, cfg.n_iterations + 1):
        start = clock()
        X = np.asarray(record.points)
        y = -np.asarray(record.objectives)
        best_before = record.incumbents[-1]
        acq_time = 0.0
        if state is not None and state.restart_flag:
            x_next = space.sobol_init(1, seed=rng.spawn(1)[0])[0]
            record.events.append({"iteration": t, "event": "tr_restart"})
            state = trustregion.TrustRegionState.initial(space)
        else:
            try:
                model = fit_gp((X, y), space, seed=_seed_int(rng), structure=structure, n_restarts=cfg.gp_restarts)
                cons_models = tuple(
                    fit_gp((X, np.asarray(record.constraints)[:, j]), space, seed=_seed_int(rng),
                           structure=structure, n_restarts=cfg.gp_restarts)
                    for j in range(problem.n_constraints)) if acqf == "constrained_ei" else ()
            except MixedBOError as exc:
                raise FitFailure(f"iteration {t}: surrogate fit failed: {exc}") from exc
            af = _build_acquisition(acqf, model, cons_models, record, t, d_eff)
            acq_cfg = acqopt.AcqOptimizerConfig(**{**cfg.acq, "method": cfg.method, "seed": _seed_int(rng)})
            a0 = clock()
            try:
                if state is not None:
                    center = X[_incumbent_index(record.objectives, record.constraints)]
                    state = state.with_center(center)
                    result, bounds = trustregion.constrained_optimize(af, space, acq_cfg, state, model)
                    record.tr_log.append({"iteration": t, "base_length": state.base_length,
                                          "lower": list(map(float, bounds[0])), "upper": list(map(float, bounds[1]))})
                else:
                    result = acqopt.optimize(af, space, acq_cfg)
                x_next = result.point
            except (MixedBOError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                log.warning("iteration %d: acquisition optimization failed (%s); using a Sobol point", t, exc)
                record.events.append({"iteration": t, "event": "acq_fallback", "error": repr(exc)})
                x_next = space.sobol_init(1, seed=rng.spawn(1)[0])[0]
            acq_time = clock() - a0
        obj, cons = _observe(problem, x_next, rng)
        record.append(x_next, obj, cons, acq_time, clock() - start)
        if state is not None and not state.restart_flag:
            now = record.incumbents[-1]
            improved = bool(np.isnan(best_before) and not np.isnan(now)) or bool(now < best_before)
            state = trustregion.tr_update(state, improved)
    return record


def _observe(problem, x, rng):
    obj, cons = problem.evaluate(x)
    if problem.noise_sd > 0:
        obj += problem.noise_sd * rng.standard_normal()
    return obj, cons


def _build_acquisition(kind, model, cons_models, record, t, d_eff):
    if kind == "ucb":
        return AcquisitionFunction("ucb", model, beta=ucb_beta(t, d_eff))
    feas = np.asarray(record.feasible)
    neg = -np.asarray(record.objectives)
    # with no feasible point yet, sit one std below the worst observation so EI stays informative
    incumbent = float(neg[feas].max()) if feas.any() else float(neg.min() - neg.std())
    if kind == "constrained_ei":
        return AcquisitionFunction("constrained_ei", model, incumbent=incumbent, constraint_models=cons_models)
    return AcquisitionFunction("ei", model, incumbent=incumbent)


def _workers(n_jobs: int) -> int:
    cap = os.environ.get("MIXEDBO_WORKERS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def _run_one(args):
    cfg, rep = args
    return run_bo(cfg, rep)


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """All replications of ``cfg``; parallel up to ``MIXEDBO_WORKERS`` processes."""
    jobs = [(cfg, r) for r in range(cfg.replications)]
    n = _workers(len(jobs))
    if n == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_one, jobs))


# ------------------------------------------------------------------ regret
def compute_regret(records, f_star=None) -> list[np.ndarray]:
    """Per-evaluation log10 regret for every record.

    ``f*`` is ``f_star`` if given, else the best feasible incumbent pooled
    over all records; it is shifted down by 0.1 before taking
    ``log10(incumbent - f*)``.  Iterations before the first feasible
    point use the worst objective observed across the records.
    """
    records = list(records)
    if not records or any(len(r) == 0 for r in records):
        raise EmptyHistory("regret needs at least one non-empty record")
    incs = [np.asarray(r.incumbents, dtype=float) for r in records]
    if f_star is None:
        finite = np.concatenate([i[np.isfinite(i)] for i in incs])
        if finite.size == 0:
            raise EmptyHistory("no feasible observation in any record")
        f_star = float(finite.min())
    shifted = f_star - REGRET_SHIFT
    worst = max(max(r.objectives) for r in records)
    return [np.log10(np.where(np.isfinite(i), i, worst) - shifted) for i in incs]


def aggregate(series) -> dict:
    """Pointwise mean and ``mean +- 2 SE`` bands over replications."""
    S = np.asarray(list(series), dtype=float)
    if S.ndim != 2 or S.shape[0] < 2:
        raise ValueError("aggregate needs at least two equally long series")
    mean = S.mean(0)
    se = S.std(0, ddof=1) / np.sqrt(S.shape[0])
    return {"mean": mean, "se": se, "lower": mean - 2 * se, "upper": mean + 2 * se, "n": S.shape[0]}


# ------------------------------------------------------------------ export
def _known_optimum(problem_id, problem_seed=0):
    try:
        return get_problem(problem_id, problem_seed).optimum
    except ValueError:
        return None


def regret_by_record(records, pool=False, problem_seed=0) -> list[np.ndarray]:
    """Regret series grouped per problem.

    Uses the problem's stored optimum unless ``pool`` is set (or no optimum
    exists), in which case ``f*`` is the best incumbent across records.
    """
    out = [None] * len(records)
    by_problem = {}
    for k, r in enumerate(records):
        by_problem.setdefault(r.problem, []).append(k)
    for prob, idx in by_problem.items():
        f_star = None if pool else _known_optimum(prob, problem_seed)
        for k, s in zip(idx, compute_regret([records[k] for k in idx], f_star)):
            out[k] = s
    return out


def _fmt(v) -> str:
    return repr(float(v))


def export(records, out_dir, formats=("csv", "jsonl"), pool=False, problem_seed=0) -> dict:
    """Write ``results.csv`` and/or ``records.jsonl`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    if "csv" in formats:
        regrets = regret_by_record(records, pool, problem_seed)
        path = out / "results.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r, reg in zip(records, regrets):
                for i in range(len(r)):
                    w.writerow([r.method, r.problem, r.replicate, i, _fmt(r.objectives[i]), _fmt(r.incumbents[i]),
                                int(r.feasible[i]), _fmt(reg[i]), _fmt(r.wall_times[i])])
        paths["csv"] = path
    if "jsonl" in formats:
        path = out / "records.jsonl"
        with open(path, "w") as fh:
            for r in records:
                fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
        paths["jsonl"] = path
    return paths


def load_records(path) -> list[RunRecord]:
    with open(path) as fh:
        return [RunRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def load_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k in ("replicate", "iteration", "feasible"):
            row[k] = int(row[k])
        for k in ("objective", "incumbent", "regret_log10", "wall_time_s"):
            row[k] = float(row[k])
    return rows


def regret_table(rows) -> dict:
    """Group CSV rows into ``{(problem, method): array (replicates, iterations)}``."""
    groups = {}
    for row in rows:
        groups.setdefault((row["problem"], row["method"]), {}).setdefault(row["replicate"], []).append(
            (row["iteration"], row["regret_log10"]))
    return {key: np.array([[v for _, v in sorted(reps[r])] for r in sorted(reps)]) for key, reps in groups.items()}
