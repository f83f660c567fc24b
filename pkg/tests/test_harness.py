import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedbo import harness
from mixedbo.exceptions import EmptyHistory
from mixedbo.harness import (CSV_COLUMNS, REGRET_SHIFT, ExperimentConfig, RunRecord, aggregate, compute_regret,
                             config_hash, export, load_csv, load_records, regret_table, run_bo)
from mixedbo.problems import get_problem

QUICK_ACQ = {"restarts": 4, "max_iterations": 30, "raw_candidates": 64, "mc_samples": 16}


def quick(method="enumeration", problem="branin_binary", **kw):
    base = dict(problem=problem, method=method, n_init=4, n_iterations=3, acq=QUICK_ACQ, gp_restarts=2,
                record_time=False)
    base.update(kw)
    return ExperimentConfig(**base)


def make_record(incumbents, objectives=None, feasible=None, method="m", problem="p", rep=0):
    objectives = list(incumbents) if objectives is None else objectives
    r = RunRecord(problem, method, rep, [0, rep], "h", 1)
    r.objectives = list(map(float, objectives))
    r.incumbents = list(map(float, incumbents))
    r.feasible = [True] * len(objectives) if feasible is None else feasible
    r.points = [[0.0]] * len(objectives)
    r.constraints = [[]] * len(objectives)
    r.wall_times = [0.0] * len(objectives)
    r.iteration_times = [0.0] * len(objectives)
    return r


def test_config_validation_and_roundtrip():
    with pytest.raises(ValueError):
        ExperimentConfig("ackley13", method="sgd")
    with pytest.raises(ValueError):
        ExperimentConfig("ackley13", replications=0)
    with pytest.raises(ValueError):
        ExperimentConfig("ackley13", acqf="pi")
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"problem": "ackley13", "bogus": 1})
    cfg = quick(tr=True)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert cfg.label == "enumeration+tr"


def test_zero_iterations_is_init_only():
    rec = run_bo(quick(n_iterations=0))
    assert len(rec) == 4 and rec.n_init == 4
    prob = get_problem("branin_binary")
    X0 = prob.space.sobol_init(4, seed=np.random.default_rng(np.random.SeedSequence([0, 0]).spawn(2)[0]))
    np.testing.assert_array_equal(rec.points, X0)


def test_default_n_init():
    rec = run_bo(ExperimentConfig("branin_binary", method="enumeration", n_iterations=0))
    assert rec.n_init == min(20, 2 * get_problem("branin_binary").space.effective_dim)


@pytest.mark.parametrize("method", ["pr_saa", "enumeration"])
def test_run_is_valid_monotone_and_deterministic(method):
    cfg = quick(method)
    a, b = run_bo(cfg, 1), run_bo(cfg, 1)
    assert a.to_dict() == b.to_dict()
    assert len(a) == cfg.n_init + cfg.n_iterations
    space = get_problem(cfg.problem).space
    for p in a.points:
        space.validate(np.array(p))
    assert np.all(np.diff(a.incumbents) <= 0)
    # different replicates draw different designs
    assert run_bo(cfg, 2).points != a.points


def test_constrained_problem_and_tr():
    cfg = quick("pr_adam", problem="toy_constrained", tr=True, n_iterations=4)
    rec = run_bo(cfg)
    assert len(rec) == cfg.n_init + 4
    assert all(len(c) == 1 for c in rec.constraints)
    assert rec.feasible == [c[0] >= 0 for c in rec.constraints]
    assert rec.tr_log and all(set(e) >= {"iteration", "base_length", "lower", "upper"} for e in rec.tr_log)
    inc = np.array(rec.incumbents)
    finite = inc[np.isfinite(inc)]
    assert np.all(np.diff(finite) <= 0)
    feas_obj = np.array(rec.objectives)[rec.feasible]
    if feas_obj.size:
        assert inc[-1] == feas_obj.min()


def test_ucb_run():
    rec = run_bo(quick("exact_round_fd", acqf="ucb", n_iterations=2))
    assert len(rec) == 6


def test_acquisition_failure_falls_back(monkeypatch):
    def broken(*args, **kwargs):
        raise FloatingPointError("boom")
    monkeypatch.setattr(harness.acqopt, "optimize", broken)
    rec = run_bo(quick(n_iterations=2))
    assert len(rec) == 6
    assert [e["event"] for e in rec.events] == ["acq_fallback", "acq_fallback"]


def test_fit_failure_carries_iteration(monkeypatch):
    from mixedbo.exceptions import CholeskyFailure, FitFailure

    def broken(*args, **kwargs):
        raise CholeskyFailure("not positive definite")
    monkeypatch.setattr(harness, "fit_gp", broken)
    with pytest.raises(FitFailure, match="iteration 1"):
        run_bo(quick(n_iterations=1))


def test_regret_examples():
    f_star = 2.0
    shifted = f_star - REGRET_SHIFT
    [s] = compute_regret([make_record([shifted + 1, shifted + 0.1])], f_star=f_star)
    np.testing.assert_allclose(s, [0.0, -1.0], atol=1e-12)
    # pooled f*: best incumbent is 2.0 so the last entry sits at log10(0.1)
    [s] = compute_regret([make_record([3.0, 2.0])])
    assert s[-1] == pytest.approx(-1.0)
    with pytest.raises(EmptyHistory):
        compute_regret([])
    with pytest.raises(EmptyHistory):
        compute_regret([make_record([])])


def test_regret_infeasible_prefix_uses_worst():
    a = make_record([np.nan, 1.0], objectives=[7.0, 1.0], feasible=[False, True])
    b = make_record([5.0, 4.0], objectives=[5.0, 4.0])
    ra, rb = compute_regret([a, b])
    assert ra[0] == pytest.approx(np.log10(7.0 - (1.0 - REGRET_SHIFT)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=8), st.floats(-5, 10))
def test_pooled_regret_monotone_in_new_record(values, better):
    inc = list(np.minimum.accumulate(values))
    base = compute_regret([make_record(inc)])[0]
    extended = compute_regret([make_record(inc), make_record([better])])[0]
    # a lower pooled f* widens every gap
    assert np.all(extended >= base)
    if better >= min(inc):
        np.testing.assert_allclose(extended, base)


def test_aggregate_examples():
    agg = aggregate([[0.0, 1.0], [2.0, 1.0]])
    assert agg["mean"][0] == 1.0 and agg["se"][0] == pytest.approx(1.0)
    assert agg["lower"][0] == pytest.approx(-1.0) and agg["upper"][0] == pytest.approx(3.0)
    # identical replications give a zero-width band
    assert agg["lower"][1] == agg["upper"][1] == 1.0
    with pytest.raises(ValueError):
        aggregate([[1.0, 2.0]])


def test_band_shrinks_as_inverse_sqrt_r():
    rng = np.random.default_rng(0)
    widths = {}
    for R in (16, 256):
        w = [np.ptp([aggregate(rng.standard_normal((R, 1)))[k][0] for k in ("lower", "upper")]) for _ in range(400)]
        widths[R] = np.mean(w)
    assert widths[16] / widths[256] == pytest.approx(4.0, rel=0.05)


def test_export_header_and_roundtrip(tmp_path):
    cfg = quick()
    records = [run_bo(cfg, r) for r in range(2)]
    paths = export(records, tmp_path)
    first = paths["csv"].read_bytes().split(b"\n", 1)[0]
    assert first == b"method,problem,replicate,iteration,objective,incumbent,feasible,regret_log10,wall_time_s"
    assert tuple(first.decode().split(",")) == CSV_COLUMNS
    back = load_records(paths["jsonl"])
    assert [r.to_dict() for r in back] == [r.to_dict() for r in records]
    assert all(r.config_hash == config_hash(cfg) for r in back)
    rows = load_csv(paths["csv"])
    assert len(rows) == sum(len(r) for r in records)
    table = regret_table(rows)[("branin_binary", "enumeration")]
    direct = harness.regret_by_record(records)
    np.testing.assert_array_equal(table, np.array(direct))
    np.testing.assert_array_equal(aggregate(table)["mean"], aggregate(harness.regret_by_record(back))["mean"])


def test_config_hash_stable_across_processes():
    cfg = quick(tr=True, seed=4)
    code = ("from mixedbo.harness import ExperimentConfig, config_hash; import json, sys; "
            "print(config_hash(ExperimentConfig.from_dict(json.loads(sys.argv[1]))))")
    out = subprocess.run([sys.executable, "-c", code, json.dumps(cfg.to_dict())], capture_output=True, text=True,
                         check=True).stdout.strip()
    assert out == config_hash(cfg)
    assert config_hash(quick(seed=5)) != config_hash(quick(seed=4))
    # where results land does not change the hash
    assert config_hash(quick(out_dir="a")) == config_hash(quick(out_dir="b"))


def test_workers_env(monkeypatch):
    monkeypatch.setenv("MIXEDBO_WORKERS", "1")
    assert harness._workers(10) == 1
    monkeypatch.setenv("MIXEDBO_WORKERS", "3")
    assert harness._workers(2) == 2
