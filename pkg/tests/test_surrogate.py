import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedbo.space import ParameterDescriptor as P
from mixedbo.space import SearchSpace
from mixedbo.surrogate import (FeatureMap, GPModel, KernelConfig, build_kernel_matrix, fit_gp,
                               log_marginal_likelihood, matern52)


def test_matern_closed_form():
    r = 0.7
    s = np.sqrt(5) * r
    assert matern52(np.array(r)) == pytest.approx((1 + s + s * s / 3) * np.exp(-s), rel=1e-14)
    assert matern52(np.array(0.0)) == 1.0


def test_kernel_diagonal_and_categorical_overlap(mixed_space):
    fmap = FeatureMap(mixed_space)
    cfg = fmap.kernel_config()
    X = mixed_space.sobol_init(5, seed=0)
    K = build_kernel_matrix(cfg, mixed_space, X, X)
    np.testing.assert_allclose(np.diag(K), cfg.prior_variance)
    # pure continuous space: diagonal is the single outputscale
    sc = SearchSpace([P.continuous(0, 1), P.binary()])
    cc = FeatureMap(sc).kernel_config()
    Xc = sc.sobol_init(3, seed=0)
    np.testing.assert_allclose(np.diag(build_kernel_matrix(cc, sc, Xc, Xc)), cc.outputscales[0])


def test_categorical_kernel_overlap_term():
    sp = SearchSpace([P.categorical(3), P.categorical(2)])
    cfg = FeatureMap(sp).kernel_config()
    K = build_kernel_matrix(cfg, sp, [[1, 0], [1, 0], [2, 0]], [[1, 0]])
    assert K[0, 0] == pytest.approx(cfg.outputscales[0])
    w = cfg.cat_weights
    assert K[2, 0] == pytest.approx(cfg.outputscales[0] * np.exp(-w[0]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_kernel_symmetric_psd(seed):
    mixed_space = SearchSpace([P.binary(), P.continuous(-1, 2), P.ordinal(4), P.categorical(3)])
    rng = np.random.default_rng(seed)
    fmap = FeatureMap(mixed_space)
    template = fmap.kernel_config()
    lo, hi = np.array(template.log_bounds()).T
    cfg = template.with_log_vector(rng.uniform(np.maximum(lo, -3), np.minimum(hi, 2)))
    X = mixed_space.sobol_init(12, seed=int(seed))
    K = build_kernel_matrix(cfg, mixed_space, X, X)
    assert np.max(np.abs(K - K.T)) < 1e-12
    assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_lml_single_observation():
    sp = SearchSpace([P.continuous(0, 1)])
    cfg = FeatureMap(sp).kernel_config()
    # outputscale 1 - noise so that k(x,x) + noise = 1
    cfg = KernelConfig(**{**cfg.to_dict(), "outputscales": (0.5,)})
    value, _ = log_marginal_likelihood(cfg, 0.0, 0.5, ([[0.3]], [0.0]), sp)
    # the starting jitter (1e-8 of the mean diagonal) shifts the value by ~5e-9
    assert value == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-7)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_lml_gradient_matches_finite_differences(seed):
    sp = SearchSpace([P.binary(), P.continuous(-1, 2), P.ordinal(4), P.categorical(3)])
    rng = np.random.default_rng(seed)
    X = sp.sobol_init(10, seed=seed)
    y = rng.normal(size=10)
    template = FeatureMap(sp).kernel_config()
    v = rng.uniform(-1.5, 1.0, size=len(template.to_log_vector()))
    log_noise, mean = rng.uniform(np.log(1e-3), np.log(0.3)), rng.uniform(-0.5, 0.5)

    def f(vec):
        cfg = template.with_log_vector(vec[:-2])
        return log_marginal_likelihood(cfg, vec[-1], np.exp(vec[-2]), (X, y), sp)

    full = np.r_[v, log_noise, mean]
    _, grad = f(full)
    h = 1e-5
    fd = np.array([(f(full + h * e)[0] - f(full - h * e)[0]) / (2 * h) for e in np.eye(len(full))])
    np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-6 * max(1.0, np.abs(fd).max()))


def test_duplicate_points_do_not_raise():
    sp = SearchSpace([P.continuous(0, 1)])
    cfg = FeatureMap(sp).kernel_config()
    value, _ = log_marginal_likelihood(cfg, 0.0, 1e-6, ([[0.2], [0.2], [0.2]], [1.0, 1.0, 1.0]), sp)
    assert np.isfinite(value)


def test_fit_recovers_lengthscale():
    sp = SearchSpace([P.continuous(0, 1)])
    rng = np.random.default_rng(0)
    X = np.sort(rng.uniform(size=(64, 1)), axis=0)
    cfg = KernelConfig("mixed_sum_product", n_binary=0, n_ard=1, n_cat=0, lengthscales=(0.2,), outputscales=(1.0,))
    K = build_kernel_matrix(cfg, sp, X, X) + 1e-4 * np.eye(64)
    y = np.linalg.cholesky(K) @ rng.normal(size=64)
    model = fit_gp((X, y), sp, seed=0)
    assert 0.1 <= model.kernel.lengthscales[0] <= 0.4


def test_fit_deterministic(mixed_space):
    X = mixed_space.sobol_init(12, seed=1)
    y = np.cos(X.sum(1))
    a, b = fit_gp((X, y), mixed_space, seed=4), fit_gp((X, y), mixed_space, seed=4)
    assert a.kernel == b.kernel
    assert a.noise_variance == b.noise_variance and a.mean_constant == b.mean_constant


def test_fit_constant_targets(mixed_space):
    X = mixed_space.sobol_init(8, seed=2)
    model = fit_gp((X, np.full(8, 3.0)), mixed_space, seed=0)
    post = model.posterior(mixed_space.sobol_init(5, seed=9))
    np.testing.assert_allclose(post.mean, 3.0, atol=1e-6)
    assert np.all(np.isfinite(post.variance))


def test_interpolation_and_prior_reversion():
    sp = SearchSpace([P.continuous(0, 100)])
    X = np.array([[10.0], [20.0], [30.0]])
    y = np.array([1.0, -0.5, 0.3])
    cfg = KernelConfig("mixed_sum_product", n_binary=0, n_ard=1, n_cat=0, lengthscales=(0.02,), outputscales=(1.3,))
    model = GPModel.condition(sp, X, y, kernel=cfg, mean_constant=0.2, noise_variance=1e-8)
    np.testing.assert_allclose(model.posterior(X).mean, y, atol=1e-3)
    far = model.posterior([[95.0]])
    assert far.mean[0] == pytest.approx(0.2, abs=1e-6)
    assert far.variance[0] == pytest.approx(1.3, rel=1e-6)


def test_posterior_gradients_match_finite_differences(mixed_model, mixed_space):
    model, _ = mixed_model
    X = mixed_space.sobol_init(20, seed=11)
    post = model.posterior(X, with_gradients=True)
    h = 1e-5
    for k, col in enumerate(mixed_space.continuous_indices):
        Xp, Xm = X.copy(), X.copy()
        Xp[:, col] += h
        Xm[:, col] -= h
        pp, pm = model.posterior(Xp), model.posterior(Xm)
        np.testing.assert_allclose(post.d_mean[:, k], (pp.mean - pm.mean) / (2 * h), rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(post.d_variance[:, k], (pp.variance - pm.variance) / (2 * h), rtol=1e-4,
                                   atol=1e-8)


def test_variance_nonnegative_and_standardization(mixed_model, mixed_space):
    model, y = mixed_model
    post = model.posterior(mixed_space.sobol_init(64, seed=3))
    assert np.all(post.variance >= 1e-12 * model.target_std ** 2 * 0.999)
    # affine consistency: scaling targets scales predictions
    scaled = GPModel(model.space, model.kernel, model.mean_constant, model.noise_variance, model.train_inputs,
                     3 * model.train_targets_raw + 2, 3 * model.target_mean + 2, 3 * model.target_std)
    X = mixed_space.sobol_init(8, seed=4)
    np.testing.assert_allclose(scaled.posterior(X).mean, 3 * model.posterior(X).mean + 2, rtol=1e-10)
    np.testing.assert_allclose(scaled.posterior(X).variance, 9 * model.posterior(X).variance, rtol=1e-10)


def test_model_json_roundtrip(mixed_model, mixed_space):
    model, _ = mixed_model
    clone = GPModel.from_json(model.to_json())
    X = mixed_space.sobol_init(6, seed=8)
    np.testing.assert_allclose(clone.posterior(X).mean, model.posterior(X).mean, rtol=1e-12)
