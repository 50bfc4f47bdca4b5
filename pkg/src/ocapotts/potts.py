"""Observed Potts model: exact and ordered-conditional densities, pseudo-likelihood, and
maximum-likelihood estimation of the inverse temperature.

Throughout, ``p(z | beta) ∝ exp(+beta * S(z))`` with ``S`` the number of
agreeing first-order neighbour pairs, so positive ``beta`` favours clustering.
Label fields are integer arrays of length ``n`` with values ``0..K-1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from ._enumerate import agreement_counts, check_capacity, encode
from .lattice import Lattice, LatticeError, OcaPlan
from .parallel import using_threads


class NumericalError(ArithmeticError):
    def __init__(self, message, beta=None):
        super().__init__(message)
        self.beta = beta


def check_field(z, n: int, k_states: int) -> np.ndarray:
    z = np.asarray(z)
    if z.ndim != 1 or z.shape[0] != n:
        raise LatticeError(f"label field must have length {n}, got shape {z.shape}")
    if k_states < 2:
        raise LatticeError(f"need at least 2 states, got K={k_states}")
    if z.size and (z.min() < 0 or z.max() >= k_states):
        raise LatticeError(f"labels must lie in 0..{k_states - 1}")
    return z.astype(np.int64, copy=False)


def summary_stat(z, lattice: Lattice) -> int:
    """Number of neighbour pairs with equal labels, each pair counted once."""
    grid = np.asarray(z).reshape(lattice.shape)
    return int(np.count_nonzero(grid[:, 1:] == grid[:, :-1]) + np.count_nonzero(grid[1:, :] == grid[:-1, :]))


def log_potential(z, beta: float, lattice: Lattice) -> float:
    return beta * summary_stat(z, lattice)


def log_normalizer(beta: float, lattice: Lattice, k_states: int) -> float:
    """log N_beta by enumeration (oracle only)."""
    s = agreement_counts(lattice.n1, lattice.n2, k_states)
    values, counts = np.unique(s, return_counts=True)
    return float(logsumexp(beta * values, b=counts))


def exact_log_density(z, beta: float, lattice: Lattice, k_states: int) -> float:
    z = check_field(z, lattice.n, k_states)
    check_capacity(lattice.n, k_states)
    return log_potential(z, beta, lattice) - log_normalizer(beta, lattice, k_states)


def exact_conditionals(z, beta: float, lattice: Lattice, k_states: int) -> np.ndarray:
    """``(n, K)`` table of exact ordered conditionals p(z_i = k | z_{1:i-1}).

    Sums over every completion of the future sites by enumeration.
    """
    z = check_field(z, lattice.n, k_states)
    n = lattice.n
    logw = beta * agreement_counts(lattice.n1, lattice.n2, k_states).astype(float)
    out = np.empty((n, k_states))
    for i in range(n):
        prefix = encode(z[:i], k_states)
        block = logw.reshape(k_states ** i, k_states, k_states ** (n - i - 1))[prefix]
        a = logsumexp(block, axis=1)
        out[i] = np.exp(a - logsumexp(a))
    return out


def exact_conditional(i: int, z, k: int, beta: float, lattice: Lattice, k_states: int) -> float:
    """Exact p(z_i = k | z_{1:i-1}); only ``z[:i]`` is read."""
    z = np.array(z, dtype=np.int64)
    z[i:] = 0
    return float(exact_conditionals(z, beta, lattice, k_states)[i, k])


def _labels_in_window(i, labels, plan: OcaPlan) -> dict:
    out = {}
    for j in plan.window(i):
        j = int(j)
        try:
            v = labels[j]
        except (KeyError, IndexError):
            v = None
        if v is None or int(v) < 0:
            raise LatticeError(f"no label supplied for window member {j} of site {i}")
        out[j] = int(v)
    return out


def modified_hamiltonian(i: int, labels, beta: float, plan: OcaPlan) -> float:
    """beta times the number of agreeing pairs of ``H_i``.

    ``labels`` is a full field or a mapping site -> label covering ``V_i``.
    """
    lab = _labels_in_window(i, labels, plan)
    return beta * sum(lab[a] == lab[b] for a, b in plan.pairs(i))


def _plan_args(plan: OcaPlan):
    return (plan.members, plan.member_ptr, plan.n_past, plan.pair_a, plan.pair_b, plan.pair_ptr)


def oca_conditional_vector(i: int, z, beta: float, plan: OcaPlan, k_states: int) -> np.ndarray:
    """Approximate p(z_i = k | z_{1:i-1}) for all ``k``; reads only ``z[g(i)]``."""
    z = np.asarray(z, dtype=np.int64)
    a = np.empty(k_states)
    _kernels._window_scores(i, z, *_plan_args(plan), float(beta), np.zeros((1, 1)),
                            k_states, _kernels.OBSERVED, a)
    return np.exp(a - logsumexp(a))


def oca_conditional(i: int, z, k: int, beta: float, plan: OcaPlan, k_states: int) -> float:
    return float(oca_conditional_vector(i, z, beta, plan, k_states)[k])


def oca_conditionals(z, beta: float, plan: OcaPlan, k_states: int, threads=None) -> np.ndarray:
    """``(n, K)`` table of OCA conditionals, each row given the past of ``z``."""
    z = check_field(z, plan.n, k_states)
    with using_threads(threads):
        return _kernels.conditional_table(z, *_plan_args(plan), float(beta), np.zeros((1, 1)),
                                          k_states, _kernels.OBSERVED)


def oca_log_terms(z, beta: float, plan: OcaPlan, k_states: int, threads=None) -> np.ndarray:
    z = check_field(z, plan.n, k_states)
    with using_threads(threads):
        return _kernels.observed_terms(z, *_plan_args(plan), float(beta), k_states)


def oca_log_likelihood(z, beta: float, plan: OcaPlan, k_states: int, threads=None) -> float:
    """Sum of log OCA conditionals.

    The per-site terms are independent and computed in parallel; the sum is
    taken afterwards in site order (``math.fsum``), so the result does not
    depend on the thread count.
    """
    total = math.fsum(oca_log_terms(z, beta, plan, k_states, threads))
    if math.isnan(total):
        raise NumericalError(f"OCA log-likelihood is NaN at beta={beta}", beta)
    return total


def neighbor_label_counts(z, lattice: Lattice, k_states: int) -> np.ndarray:
    """``(n, K)`` counts of each label among the lattice neighbours of every site."""
    z = np.asarray(z, dtype=np.int64)
    counts = np.zeros((lattice.n, k_states), dtype=np.int64)
    e = lattice.edges()
    np.add.at(counts, (e[:, 0], z[e[:, 1]]), 1)
    np.add.at(counts, (e[:, 1], z[e[:, 0]]), 1)
    return counts


def pseudo_log_likelihood(z, beta: float, lattice: Lattice, k_states: int) -> float:
    """Besag's log pseudo-likelihood: the sum of log full conditionals."""
    z = check_field(z, lattice.n, k_states)
    eta = beta * neighbor_label_counts(z, lattice, k_states)
    return math.fsum(eta[np.arange(lattice.n), z] - logsumexp(eta, axis=1))


@dataclass(frozen=True)
class FitResult:
    beta: float
    objective: float
    at_boundary: bool
    evaluations: int


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(fn, lo: float, hi: float, tol: float = 1e-4):
    """Maximise a unimodal ``fn`` on ``[lo, hi]``; returns ``(x, fn(x), evals)``.

    Endpoints are compared against the final interior point, so a monotone
    objective returns the boundary.
    """
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        v = fn(x)
        if not math.isfinite(v):
            raise NumericalError(f"objective is not finite at beta={x!r}: {v!r}", beta=x)
        return v

    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    for x in (lo, hi):
        fx = f(x)
        if fx > best_f:
            best_x, best_f = x, fx
    return best_x, best_f, evals


def fit_beta(z, plan: OcaPlan, k_states: int, objective: str = "oca",
             beta_max: float = 2.0, tol: float = 1e-4, threads=None) -> FitResult:
    """Maximum (pseudo- or OCA-) likelihood estimate of beta by golden-section search."""
    z = check_field(z, plan.n, k_states)
    if objective == "oca":
        fn = lambda b: oca_log_likelihood(z, b, plan, k_states, threads)  # noqa: E731
    elif objective == "pseudo":
        fn = lambda b: pseudo_log_likelihood(z, b, plan.lattice, k_states)  # noqa: E731
    else:
        raise ValueError(f"unknown objective {objective!r}")
    beta, value, evals = golden_section_max(fn, 0.0, float(beta_max), tol)
    boundary = beta >= beta_max - 2 * tol or beta <= 2 * tol
    return FitResult(beta=float(beta), objective=float(value), at_boundary=bool(boundary), evaluations=evals)


def loglik_curve(z, betas, plan: OcaPlan, k_states: int, threads=None) -> np.ndarray:
    return np.array([oca_log_likelihood(z, b, plan, k_states, threads) for b in betas])
