import numpy as np


def rmse(estimates, truth: float) -> float:
    est = np.asarray(estimates, dtype=float).reshape(-1)
    if est.size == 0:
        raise ValueError("rmse of an empty sequence")
    return float(np.sqrt(np.mean((est - truth) ** 2)))


def brier_score(forecasts, truth, atol: float = 1e-9) -> float:
    """Mean over sites of the squared distance between forecast vector and one-hot truth.

    ``forecasts`` is ``(n, K)`` with rows summing to one; ``truth`` holds
    labels ``0..K-1``.
    """
    f = np.asarray(forecasts, dtype=float)
    t = np.asarray(truth, dtype=np.int64).reshape(-1)
    if f.ndim != 2 or f.shape[0] != t.shape[0]:
        raise ValueError(f"forecast shape {f.shape} does not match {t.shape[0]} labels")
    if f.shape[0] == 0:
        raise ValueError("brier score of an empty forecast set")
    bad = np.abs(f.sum(axis=1) - 1.0) > atol
    if bad.any():
        raise ValueError(f"forecast rows {np.flatnonzero(bad)[:5].tolist()} do not sum to 1")
    if t.min() < 0 or t.max() >= f.shape[1]:
        raise ValueError("truth labels out of range")
    o = np.zeros_like(f)
    o[np.arange(t.size), t] = 1.0
    return float(np.mean(np.sum((f - o) ** 2, axis=1)))


def crps_empirical(sample, y: float) -> float:
    """CRPS of the empirical distribution of ``sample`` at ``y``.

    Uses E|X - y| - E|X - X'| / 2 with the pair sum taken over sorted values,
    O(m log m).
    """
    x = np.sort(np.asarray(sample, dtype=float).reshape(-1))
    m = x.size
    if m == 0:
        raise ValueError("crps of an empty sample")
    first = np.mean(np.abs(x - y))
    # sum_{i,j} |x_i - x_j| = 2 sum_i (2i - m + 1) x_(i), 0-based i
    pair = 2.0 * np.dot(2.0 * np.arange(m) - m + 1.0, x) / (m * m)
    return float(first - 0.5 * pair)


def mean_crps(samples: dict, truth) -> float:
    """Average CRPS over a ``{site: sample}`` mapping against ``truth[site]``."""
    if not samples:
        raise ValueError("no predictive samples to score")
    t = np.asarray(truth, dtype=float).reshape(-1)
    return float(np.mean([crps_empirical(v, t[s]) for s, v in samples.items()]))
