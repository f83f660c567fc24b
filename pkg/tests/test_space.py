import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedbo.exceptions import LayoutMismatch, OutOfDomain
from mixedbo.space import ParameterDescriptor as P
from mixedbo.space import SearchSpace


def space_strategy():
    param = st.one_of(
        st.builds(lambda lo, w: P.continuous(lo, lo + w), st.floats(-10, 10), st.floats(0.1, 10)),
        st.just(P.binary()),
        st.integers(2, 6).map(P.ordinal),
        st.integers(2, 5).map(P.categorical),
    )
    return st.lists(param, min_size=1, max_size=6).map(SearchSpace)


def test_validate_examples():
    with pytest.raises(OutOfDomain):
        SearchSpace([P.binary()]).validate([2])
    SearchSpace([P.continuous(-1, 1)]).validate([0.0])
    SearchSpace([P.ordinal(4)]).validate([3])
    with pytest.raises(OutOfDomain) as info:
        SearchSpace([P.continuous(0, 1), P.ordinal(3)]).validate([0.5, 1.5])
    assert info.value.index == 1
    with pytest.raises(LayoutMismatch):
        SearchSpace([P.binary()]).validate([0, 1])


def test_discretize_table_examples():
    assert SearchSpace([P.binary()]).discretize([0.7])[0] == 1
    assert SearchSpace([P.ordinal(3)]).discretize([2.49])[0] == 2
    assert SearchSpace([P.categorical(3)]).discretize([0.2, 0.5, 0.3])[0] == 1


def test_discretize_boundary_rules():
    sp = SearchSpace([P.ordinal(4), P.categorical(3), P.continuous(0, 1)])
    # round half up, clamp at the top, lowest index on ties, clamp continuous drift
    out = sp.discretize([[0.5, 0.4, 0.4, 0.1, 1.0 + 1e-12], [3.5, 0.0, 0.0, 0.0, -1e-12]])
    np.testing.assert_array_equal(out, [[1, 0, 1.0], [3, 0, 0.0]])


def test_one_hot_examples():
    sp = SearchSpace([P.categorical(3)])
    np.testing.assert_array_equal(sp.one_hot_encode([1]), [0, 1, 0])
    sc = SearchSpace([P.continuous(-2, 3), P.continuous(0, 1)])
    np.testing.assert_array_equal(sc.one_hot_encode([1.5, 0.25]), [1.5, 0.25])


def test_effective_dim_examples():
    assert SearchSpace([P.continuous(0, 1)] * 3 + [P.binary()] * 10).effective_dim == 13
    assert SearchSpace([P.categorical(4)]).effective_dim == 4
    assert SearchSpace([P.continuous(0, 1)] * 2 + [P.ordinal(5)]).effective_dim == 3


def test_sobol_init_deterministic_and_valid(mixed_space):
    a = mixed_space.sobol_init(20, seed=7)
    b = mixed_space.sobol_init(20, seed=7)
    np.testing.assert_array_equal(a, b)
    mixed_space.validate(a)


def test_sobol_binary_balance():
    sp = SearchSpace([P.binary()] * 4 + [P.continuous(0, 1)])
    X = sp.sobol_init(4096, seed=1)
    freq = X[:, :4].mean(0)
    assert np.all((freq > 0.45) & (freq < 0.55))


def test_json_roundtrip(mixed_space):
    assert SearchSpace.from_json(mixed_space.to_json()) == mixed_space


def test_enumerate_discrete():
    sp = SearchSpace([P.binary(), P.continuous(0, 1), P.categorical(3)])
    configs = sp.enumerate_discrete()
    assert configs.shape == (6, 2)
    assert len({tuple(c) for c in configs}) == 6
    assert sp.n_configurations == 6


@settings(max_examples=60, deadline=None)
@given(space_strategy(), st.integers(0, 2 ** 31 - 1))
def test_roundtrip_properties(space, seed):
    rng = np.random.default_rng(seed)
    lo, hi = space.relaxed_bounds()
    R = rng.uniform(lo - 0.1, hi + 0.1, size=(8, space.relaxed_dim))
    X = space.discretize(R)
    space.validate(X)
    np.testing.assert_array_equal(space.discretize(space.one_hot_encode(X)), X)
    np.testing.assert_array_equal(space.discretize(space.one_hot_encode(space.discretize(R))), X)
    np.testing.assert_allclose(space.from_unit(space.to_unit(R)), R, atol=1e-12)
