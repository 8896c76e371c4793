import numpy as np
import pytest
from scipy.optimize import minimize

from dbpm.problems import (LabeledDataset, SeparableQuadraticOracle, ZeroOracle, estimate_bounds, load_dataset_csv,
                           logistic_l1_oracle, make_quadratic_targets, make_synthetic_clusters, save_dataset_csv)


def small_logistic(lam=0.1, n_agents=4):
    return logistic_l1_oracle(make_synthetic_clusters(24, 3, 2.0, 5, n_agents), lam, n_agents)


def test_clusters_balanced_and_dealt_round_robin():
    d = make_synthetic_clusters(240, 49, 3.0, 2, 48)
    assert d.features.shape == (240, 49) and d.dim == 50
    assert (d.labels == 1).sum() == 120
    assert np.all(d.samples_per_agent() == 5)
    assert np.array_equal(d.agent_of, np.arange(240) % 48)


def test_clusters_are_deterministic():
    a = make_synthetic_clusters(20, 3, 1.0, 9, 2)
    b = make_synthetic_clusters(20, 3, 1.0, 9, 2)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)


def test_dataset_validation():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((3, 2)), np.array([1, 0, 1]), np.zeros(3))
    with pytest.raises(ValueError):
        make_synthetic_clusters(5, 2)


def test_dataset_csv_round_trip(tmp_path):
    d = make_synthetic_clusters(12, 3, 1.0, 0, 3)
    save_dataset_csv(d, tmp_path / "d.csv")
    back = load_dataset_csv(tmp_path / "d.csv", 3)
    assert np.array_equal(back.features, d.features)
    assert np.array_equal(back.labels, d.labels)


def test_logistic_cost_at_zero():
    o = small_logistic(lam=0.3)
    # every sample contributes log 2; each agent averages its own
    assert o.cost(np.zeros(o.n)) == pytest.approx(o.n_agents * np.log(2.0), rel=1e-14)


def test_logistic_subgradient_matches_finite_difference(rng):
    o = small_logistic(lam=0.0)
    x = rng.standard_normal(o.n)
    g = o.full_subgradient(x)
    h = 1e-6
    fd = np.array([(o.cost(x + h * e) - o.cost(x - h * e)) / (2 * h) for e in np.eye(o.n)])
    np.testing.assert_allclose(g, fd, atol=1e-6)


def test_logistic_stochastic_subgradient_is_unbiased(rng):
    o = small_logistic(lam=0.2)
    x = rng.standard_normal(o.n)
    for i in range(o.n_agents):
        samples = np.arange(o.offsets[i], o.offsets[i + 1])
        g = o.subgradient(np.full(samples.size, i), np.tile(x, (samples.size, 1)), samples)
        np.testing.assert_allclose(g.mean(axis=0), o.local_subgradient(i, x), atol=1e-14)


def test_l1_subgradient_uses_zero_sign_at_zero():
    o = small_logistic(lam=1.0)
    x = np.zeros(o.n)
    g = o.subgradient(np.array([0]), x[None, :], np.array([o.offsets[0]]))
    q = o.q[o.offsets[0]]
    np.testing.assert_allclose(g[0], -o.b[o.offsets[0]] * q * 0.5, atol=1e-15)


def test_logistic_minimum_matches_scipy():
    o = small_logistic(lam=0.05)
    n = o.n

    def split(z):
        return z[:n] - z[n:]

    def fun(z):
        x = split(z)
        smooth = o.cost(x) - o.lam * np.abs(x).sum()
        return smooth + o.lam * z.sum()

    res = minimize(fun, np.zeros(2 * n), method="L-BFGS-B", bounds=[(0, None)] * (2 * n))
    from dbpm.reference import centralized_solve
    sol = centralized_solve(o, 20_000)
    assert sol.f == pytest.approx(res.fun, abs=1e-3)


def test_quadratic_oracle_optimum_and_noise(rng):
    T = make_quadratic_targets(6, 4, 1.0, 3)
    o = SeparableQuadraticOracle(T, 0.5)
    x = o.optimum
    np.testing.assert_allclose(sum(o.local_subgradient(i, x) for i in range(6)), 0, atol=1e-14)
    draws = o.draw_samples(rng, 0, 20_000)
    assert draws.shape == (20_000, 4)
    assert abs(draws.std() - 0.5) < 0.01
    with pytest.raises(ValueError):
        SeparableQuadraticOracle(T, -1.0)


def test_quadratic_block_gradient_is_slice():
    o = SeparableQuadraticOracle(np.arange(12.0).reshape(3, 4), 0.0)
    X = np.ones((2, 4))
    s = np.zeros((2, 4))
    full = o.subgradient(np.array([0, 2]), X, s)
    np.testing.assert_array_equal(o.block_gradient(np.array([0, 2]), X, s, slice(1, 3)), full[:, 1:3])


def test_zero_oracle():
    o = ZeroOracle(3, 2)
    assert o.cost(np.ones(3)) == 0
    assert not np.any(o.subgradient(np.array([0]), np.ones((1, 3)), np.zeros(1)))


def test_estimate_bounds_dominates_draws(rng):
    o = small_logistic(lam=0.1)
    G, Gbar = estimate_bounds(o, 20, seed=1)
    assert np.array_equal(Gbar, G**2)
    for i in range(o.n_agents):
        samples = np.arange(o.offsets[i], o.offsets[i + 1])
        x = rng.uniform(-1, 1, o.n)
        g = o.subgradient(np.full(samples.size, i), np.tile(x, (samples.size, 1)), samples)
        # bound is a sup over the data; the l1 term and sigmoid are at most 1
        assert np.linalg.norm(g, axis=1).max() <= np.linalg.norm(o.q[samples], axis=1).max() + o.lam * np.sqrt(o.n)
        assert G[i] > 0
