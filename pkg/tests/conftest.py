import numpy as np
import pytest

from mixedbo.acquisition import AcquisitionFunction
from mixedbo.problems import get_problem
from mixedbo.space import ParameterDescriptor as P
from mixedbo.space import SearchSpace
from mixedbo.surrogate import fit_gp


def fitted_ei(problem_id, n, seed=0, structure="mixed_sum_product"):
    """EI on a GP fitted to ``n`` Sobol points of a problem (negated objective)."""
    prob = get_problem(problem_id)
    X = prob.space.sobol_init(n, seed=seed)
    y = -np.array([prob.evaluate(x)[0] for x in X])
    model = fit_gp((X, y), prob.space, seed=seed, structure=structure)
    return prob, AcquisitionFunction("ei", model, incumbent=float(y.max()))


@pytest.fixture(scope="session")
def branin_ei():
    return fitted_ei("branin_binary", 10)


@pytest.fixture(scope="session")
def mixed_space():
    return SearchSpace([P.binary("b"), P.continuous(-1, 2, "x"), P.ordinal(4, "o"), P.categorical(3, "c"),
                        P.continuous(0, 1, "w")])


@pytest.fixture(scope="session")
def mixed_model(mixed_space):
    X = mixed_space.sobol_init(16, seed=3)
    y = np.sin(X.sum(1)) + 0.3 * X[:, 3] - 0.4 * X[:, 0]
    return fit_gp((X, y), mixed_space, seed=0), y


@pytest.fixture(scope="session")
def mixed_ei(mixed_model):
    model, y = mixed_model
    return AcquisitionFunction("ei", model, incumbent=float(y.max()))


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def report():
    """Record one pass/fail line per acceptance criterion."""
    def _report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
