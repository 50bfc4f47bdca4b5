"""Brute-force enumeration of every configuration on a tiny grid.

Configuration codes put site 0 in the most significant base-K digit, so all
configurations sharing a prefix ``z_0..z_{i-1}`` form one contiguous block.
"""
from functools import lru_cache

import numpy as np

from .lattice import Lattice

MAX_ENUMERATION = 2 ** 24


class CapacityError(RuntimeError):
    """Raised when an exact computation would enumerate too many states."""


def check_capacity(n: int, k_states: int, limit: int = MAX_ENUMERATION) -> int:
    total = k_states ** n
    if total > limit:
        raise CapacityError(f"K^n = {k_states}^{n} exceeds the enumeration limit {limit}")
    return total


def site_labels(codes: np.ndarray, site: int, n: int, k_states: int) -> np.ndarray:
    return (codes // k_states ** (n - 1 - site)) % k_states


@lru_cache(maxsize=32)
def agreement_counts(n1: int, n2: int, k_states: int) -> np.ndarray:
    """S(a) for every configuration code ``a`` (read-only array)."""
    lattice = Lattice(n1, n2)
    total = check_capacity(lattice.n, k_states)
    codes = np.arange(total, dtype=np.int64)
    counts = np.zeros(total, dtype=np.int32)
    for a, b in lattice.edges():
        counts += site_labels(codes, a, lattice.n, k_states) == site_labels(codes, b, lattice.n, k_states)
    counts.flags.writeable = False
    return counts


def all_labels(n: int, k_states: int) -> np.ndarray:
    """Every configuration as rows of labels, in code order."""
    total = check_capacity(n, k_states)
    codes = np.arange(total, dtype=np.int64)
    return np.stack([site_labels(codes, s, n, k_states) for s in range(n)], axis=1)


def encode(z, k_states: int) -> int:
    code = 0
    for v in np.asarray(z, dtype=np.int64):
        code = code * k_states + int(v)
    return code
