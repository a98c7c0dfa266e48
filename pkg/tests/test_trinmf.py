import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmflab.classify import encode_hard
from nmflab.matcore import DomainError, ShapeError
from nmflab.trinmf import (
    ConfigError,
    InitMode,
    TriNmfConfig,
    TriNmfModel,
    fit,
    init_factors,
    reconstruct,
    update_step,
)


def loss(y, x, theta, a):
    return float(((y - x @ theta @ a) ** 2).sum())


def planted(seed, p=6, q=3, r=4, n=10):
    g = np.random.default_rng(seed)
    x = g.uniform(size=(p, q))
    x /= x.sum(axis=0)
    theta = g.uniform(0.5, 2.0, size=(q, r))
    a = g.uniform(size=(r, n))
    return x @ theta @ a, a


def test_identity_problem_fits_exactly():
    cfg = TriNmfConfig(rank_q=3, init_mode="identity", rel_tol=1e-12, max_iter=20000)
    model, rep = fit(np.eye(3), np.eye(3), cfg)
    assert rep.final_loss < 1e-8
    np.testing.assert_allclose(model.x @ model.theta, np.eye(3), atol=1e-4)


def test_scalar_update_by_hand():
    # Y=2, A=1, X=1 (fixed by normalization), theta=1: the ratio gives 2.
    x, theta = update_step([[2.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]], eps=1e-12)
    assert x.tolist() == [[1.0]]
    assert theta[0, 0] == pytest.approx(2.0, rel=1e-10)


def test_exact_solution_is_fixed_point(rng):
    x = rng.uniform(size=(4, 2))
    x /= x.sum(axis=0)
    theta = rng.uniform(0.5, 2, size=(2, 3))
    a = rng.uniform(size=(3, 7))
    y = x @ theta @ a
    x1, t1 = update_step(y, y, x, theta, a)
    assert np.abs(x1 - x).max() < 1e-8
    assert np.abs(t1 - theta).max() < 1e-8


def test_zero_row_decreases_monotonically():
    y = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
    a = np.eye(3)
    cfg = TriNmfConfig(rank_q=2, init_mode="random", seed=3, max_iter=200, rel_tol=1e-14)
    model, rep = fit(y, a, cfg)
    diffs = np.diff(rep.losses)
    assert np.all(diffs <= 1e-12 * max(rep.losses))
    assert rep.losses[-1] < rep.losses[0]


@pytest.mark.parametrize("seed", range(20))
def test_loss_non_increasing(seed):
    g = np.random.default_rng(seed)
    p = int(g.integers(2, 21))
    n = int(g.integers(2, 51))
    r = int(g.integers(1, 8))
    q = int(g.integers(1, min(p, n) + 1))
    y = g.uniform(size=(p, n))
    a = g.uniform(size=(r, n))
    cfg = TriNmfConfig(rank_q=q, init_mode="random", seed=seed, max_iter=150, rel_tol=1e-15)
    _, rep = fit(y, a, cfg)
    losses = np.array(rep.losses)
    assert np.all(losses[1:] <= losses[:-1] + 1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 6), st.integers(2, 8))
def test_invariants_hold_every_iteration(seed, p, n):
    g = np.random.default_rng(seed)
    y = g.uniform(size=(p, n))
    a = g.uniform(size=(3, n))
    seen = []

    def check(t, x, theta, l):
        assert np.all(np.abs(x.sum(axis=0) - 1) <= 1e-9)
        assert (x >= 0).all() and (theta >= 0).all()
        assert np.isfinite(x).all() and np.isfinite(theta).all()
        seen.append(t)

    cfg = TriNmfConfig(rank_q=min(2, p), init_mode="random", seed=seed, max_iter=60, rel_tol=1e-15)
    fit(y, a, cfg, callback=check)
    assert seen and seen[0] == 1


@pytest.mark.parametrize("mode", ["random", "kmeans"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_recovers_planted_factorization(mode, seed):
    y, a = planted(seed)
    cfg = TriNmfConfig(rank_q=3, init_mode=mode, seed=seed, max_iter=20000, rel_tol=1e-10)
    _, rep = fit(y, a, cfg)
    assert rep.final_loss / (y ** 2).sum() <= 1e-4


def test_scale_consistency():
    y, a = planted(4)
    cfg = TriNmfConfig(rank_q=3, init_mode="random", seed=4, max_iter=3000, rel_tol=1e-12)
    m1, _ = fit(y, a, cfg)
    m2, _ = fit(10.0 * y, a, cfg)
    np.testing.assert_allclose(m2.x, m1.x, atol=1e-6)
    np.testing.assert_allclose(m2.theta, 10.0 * m1.theta, rtol=1e-5, atol=1e-8)


def test_orthodont_forward_profiles(orthodont_raw):
    ds = orthodont_raw
    enc = encode_hard(ds.labels, ("Male", "Female"))
    y = ds.samples.T
    cfg = TriNmfConfig(rank_q=4, init_mode="identity")
    model, _ = fit(y, enc.columns, cfg)
    xt = model.x @ model.theta
    np.testing.assert_allclose(xt[:, 0], [22.88, 23.81, 25.72, 27.47], atol=0.15)
    np.testing.assert_allclose(xt[:, 1], [21.18, 22.23, 23.09, 24.09], atol=0.15)


def test_identity_init():
    x0, theta0 = init_factors(np.ones((3, 5)), np.ones((2, 5)), TriNmfConfig(rank_q=3))
    np.testing.assert_array_equal(x0, np.eye(3))
    # Mean of the initial reconstruction matches mean(Y).
    assert (x0 @ theta0 @ np.ones((2, 5))).mean() == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        init_factors(np.ones((3, 5)), np.ones((2, 5)), TriNmfConfig(rank_q=2))


def test_random_init_is_seeded():
    y, a = np.ones((4, 6)), np.ones((2, 6))
    cfg = TriNmfConfig(rank_q=2, init_mode="random", seed=7)
    x1, _ = init_factors(y, a, cfg)
    x2, _ = init_factors(y, a, cfg)
    np.testing.assert_array_equal(x1, x2)
    x3, _ = init_factors(y, a, TriNmfConfig(rank_q=2, init_mode="random", seed=8))
    assert not np.array_equal(x1, x3)
    np.testing.assert_allclose(x1.sum(axis=0), 1.0)


def test_kmeans_init_with_one_cluster_per_sample():
    y = np.array([[1.0, 0.0, 0.2], [0.0, 1.0, 0.3], [0.0, 0.0, 0.5]])
    x0, _ = init_factors(y, np.ones((1, 3)), TriNmfConfig(rank_q=3, init_mode=InitMode.KMEANS))
    # Centroids are the columns themselves, up to order.
    got = sorted(map(tuple, np.round(x0.T, 12)))
    want = sorted(map(tuple, np.round(y.T / y.sum(axis=0)[:, None], 12)))
    assert got == want


def test_explicit_init_and_reconstruct(rng):
    y, a = planted(5)
    x0 = rng.uniform(size=(6, 3))
    theta0 = rng.uniform(size=(3, 4))
    cfg = TriNmfConfig(rank_q=3, max_iter=5)
    model, rep = fit(y, a, cfg, init=(x0, theta0))
    assert rep.losses[0] == pytest.approx(loss(y, x0, theta0, a))
    np.testing.assert_allclose(reconstruct(model, a), model.x @ model.theta @ a)


def test_stops_on_tolerance_or_budget():
    y, a = planted(6)
    _, rep = fit(y, a, TriNmfConfig(rank_q=3, init_mode="random", max_iter=3))
    assert rep.iterations_run == 3 and not rep.converged and len(rep.losses) == 4
    _, rep = fit(y, a, TriNmfConfig(rank_q=3, init_mode="random", rel_tol=1e-2))
    assert rep.converged and rep.iterations_run < 5000


def test_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        TriNmfConfig(rank_q=0)
    with pytest.raises(ConfigError):
        TriNmfConfig(rank_q=1, eps=0)
    with pytest.raises(ConfigError):
        fit(np.ones((2, 3)), np.ones((1, 3)), TriNmfConfig(rank_q=3, init_mode="random"))
    with pytest.raises(ShapeError):
        fit(np.ones((2, 3)), np.ones((1, 4)), TriNmfConfig(rank_q=2))
    with pytest.raises(DomainError):
        fit(-np.ones((2, 3)), np.ones((1, 3)), TriNmfConfig(rank_q=2))
    with pytest.raises(ValueError):
        TriNmfModel(np.ones((2, 2)), np.ones((2, 1)))
