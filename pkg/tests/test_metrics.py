import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from ocapotts.metrics import brier_score, crps_empirical, mean_crps, rmse
from ocapotts.sampler import make_rng

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_rmse_examples():
    assert rmse([0.35, 0.35], 0.35) == 0.0
    assert rmse([0.3, 0.4], 0.35) == pytest.approx(0.05, abs=1e-15)
    with pytest.raises(ValueError):
        rmse([], 0.0)


def test_rmse_two_pass_reference():
    est = make_rng(0).normal(0.4, 0.1, 1000)
    s = 0.0
    for v in est:
        s += (v - 0.35) ** 2
    assert rmse(est, 0.35) == pytest.approx((s / est.size) ** 0.5, abs=1e-14)


def test_brier_examples():
    truth = np.array([0, 2, 1])
    assert brier_score(np.eye(3)[truth], truth) == 0.0
    assert brier_score(np.full((3, 3), 1 / 3), truth) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        brier_score([[0.5, 0.6]], [0])


@settings(max_examples=50)
@given(st.integers(1, 30), st.integers(2, 5), st.integers(0, 10 ** 6))
def test_brier_bounds_and_permutation(n, k, seed):
    rng = make_rng(seed)
    f = rng.dirichlet(np.ones(k), n)
    t = rng.integers(0, k, n)
    b = brier_score(f, t)
    assert 0.0 <= b <= 2.0
    perm = rng.permutation(k)
    inv = np.argsort(perm)
    assert brier_score(f[:, perm], inv[t]) == pytest.approx(b, abs=1e-12)


def test_crps_examples():
    assert crps_empirical([1.5, 1.5, 1.5], 1.5) == 0.0
    assert crps_empirical([0.0, 2.0], 1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        crps_empirical([], 0.0)


def test_crps_normal_closed_form():
    x = make_rng(1).standard_normal(100_000)
    closed = 2 * stats.norm.pdf(0) - 1 / np.sqrt(np.pi)
    assert closed == pytest.approx(0.2337, abs=1e-4)
    assert crps_empirical(x, 0.0) == pytest.approx(closed, abs=0.005)


@settings(max_examples=50)
@given(st.lists(finite, min_size=1, max_size=20), finite, st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3))
def test_crps_nonnegative_and_scale_equivariant(sample, y, a):
    c = crps_empirical(sample, y)
    assert c >= -1e-9 * (1 + max(abs(v) for v in sample + [y]))
    scaled = crps_empirical([a * v for v in sample], a * y)
    assert scaled == pytest.approx(abs(a) * c, rel=1e-10, abs=1e-9)


def _crps_riemann(sample, y):
    x = np.sort(np.asarray(sample))
    lo, hi = min(x[0], y) - 1.0, max(x[-1], y) + 1.0
    grid = np.linspace(lo, hi, 400_001)
    cdf = np.searchsorted(x, grid, side="right") / x.size
    step = (grid >= y).astype(float)
    return integrate.trapezoid((cdf - step) ** 2, grid)


@pytest.mark.parametrize("seed", range(6))
def test_crps_matches_integral(seed):
    rng = make_rng(seed)
    sample = rng.normal(0, 1, rng.integers(1, 8))
    y = rng.normal()
    assert crps_empirical(sample, y) == pytest.approx(_crps_riemann(sample, y), abs=1e-4)


def test_mean_crps():
    truth = np.array([0.0, 1.0, 2.0])
    assert mean_crps({0: [0.0], 2: [0.0, 4.0]}, truth) == pytest.approx(0.5 * (0 + 1.0))
    with pytest.raises(ValueError):
        mean_crps({}, truth)
