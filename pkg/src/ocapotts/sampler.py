"""Direct OCA joint sampling plus Swendsen-Wang and exact reference samplers.

Randomness comes from ``numpy.random.Generator`` objects. Replicate streams
are derived with ``SeedSequence`` keyed on ``(seed, *indices)``, so any single
replicate can be regenerated without running the others.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._enumerate import agreement_counts, all_labels, check_capacity
from .lattice import Lattice, OcaPlan
from .potts import _plan_args, check_field, summary_stat


def make_rng(seed, *key) -> np.random.Generator:
    """PCG64 stream for ``seed`` and an optional replicate key."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, key)])))


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    beta: float
    k_states: int
    sweeps: int = 200

    def rng(self, *key) -> np.random.Generator:
        return make_rng(self.seed, *key)


def oca_sample(plan: OcaPlan, beta: float, k_states: int, rng: np.random.Generator,
               return_probs: bool = False):
    """One-pass joint draw from the OCA Potts model.

    Consumes exactly ``n`` uniforms from ``rng``.
    """
    u = rng.random(plan.n)
    z = np.zeros(plan.n, dtype=np.int64)
    probs = np.empty((plan.n, k_states))
    _kernels.sequential_sample(*_plan_args(plan), float(beta), np.zeros((1, 1)), k_states,
                               _kernels.OBSERVED, u, z, probs)
    return (z, probs) if return_probs else z


def oca_sample_many(plan: OcaPlan, beta: float, k_states: int, rng: np.random.Generator,
                    draws: int) -> np.ndarray:
    return np.stack([oca_sample(plan, beta, k_states, rng) for _ in range(draws)])


def bond_probability(beta: float) -> float:
    return 1.0 if math.isinf(beta) else -math.expm1(-beta)


def swendsen_wang(z, beta: float, k_states: int, rng: np.random.Generator, lattice: Lattice,
                  sweeps: int = 1):
    """Run ``sweeps`` Swendsen-Wang cluster updates; returns ``(z, S trace)``.

    Agreeing neighbours bond with probability ``1 - exp(-beta)``; each
    connected cluster is relabelled uniformly at random. Each sweep consumes
    ``n_edges + n`` uniforms.
    """
    z = check_field(z, lattice.n, k_states).copy()
    edges = lattice.edges()
    stats = np.empty(sweeps, dtype=np.int64)
    chunk = max(1, min(sweeps, 2 ** 22 // max(1, edges.shape[0] + lattice.n)))
    done = 0
    while done < sweeps:
        m = min(chunk, sweeps - done)
        bond_u = rng.random((m, edges.shape[0]))
        label_u = rng.random((m, lattice.n))
        stats[done:done + m] = _kernels.swendsen_wang_sweeps(
            z, edges, bond_probability(beta), k_states, bond_u, label_u)
        done += m
    return z, stats


def swendsen_wang_step(z, beta: float, k_states: int, rng: np.random.Generator,
                       lattice: Lattice) -> np.ndarray:
    return swendsen_wang(z, beta, k_states, rng, lattice, sweeps=1)[0]


def sw_sample(lattice: Lattice, beta: float, k_states: int, rng: np.random.Generator,
              burn_in: int = 200) -> np.ndarray:
    """Swendsen-Wang chain from an iid-uniform start, returned after ``burn_in`` sweeps."""
    z0 = rng.integers(0, k_states, lattice.n)
    return swendsen_wang(z0, beta, k_states, rng, lattice, sweeps=burn_in)[0]


def exact_distribution(lattice: Lattice, beta: float, k_states: int, limit: int = 2 ** 20) -> np.ndarray:
    """Probabilities of every configuration code (site 0 most significant)."""
    check_capacity(lattice.n, k_states, limit)
    logw = beta * agreement_counts(lattice.n1, lattice.n2, k_states).astype(float)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def exact_sample(lattice: Lattice, beta: float, k_states: int, rng: np.random.Generator,
                 size: int | None = None) -> np.ndarray:
    """Draw configurations exactly by enumeration and inverse CDF (tiny grids)."""
    p = exact_distribution(lattice, beta, k_states)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    m = 1 if size is None else size
    codes = np.searchsorted(cdf, rng.random(m), side="right")
    labels = all_labels(lattice.n, k_states)[codes]
    return labels[0] if size is None else labels


SAMPLERS = ("oca", "sw")


def summary_experiment(betas, replicates: int, sampler: str, lattice: Lattice, k_states: int,
                       seed: int, m_f: int = 4, m_g: int | None = None, sw_burn_in: int = 200,
                       plan: OcaPlan | None = None):
    """Raw ``(beta, replicate, S)`` rows from independent draws per beta.

    Replicate ``r`` at grid point ``b`` uses the stream keyed ``(seed, b, r)``.
    """
    from .lattice import build_oca_plan

    if sampler not in SAMPLERS:
        raise ValueError(f"sampler must be one of {SAMPLERS}, got {sampler!r}")
    if sampler == "oca" and plan is None:
        plan = build_oca_plan(lattice, 2 * m_f if m_g is None else m_g, m_f)
    rows = []
    for b_idx, beta in enumerate(betas):
        for r in range(replicates):
            rng = make_rng(seed, b_idx, r)
            if sampler == "oca":
                z = oca_sample(plan, beta, k_states, rng)
            else:
                z = sw_sample(lattice, beta, k_states, rng, sw_burn_in)
            rows.append((float(beta), r, summary_stat(z, lattice)))
    return rows


def summarize(rows):
    """Collapse raw rows to ``(beta, mean_S, sd_S)`` per beta (sd with ddof=1)."""
    out = []
    for beta in sorted({r[0] for r in rows}):
        s = np.array([r[2] for r in rows if r[0] == beta], dtype=float)
        sd = float(s.std(ddof=1)) if s.size > 1 else 0.0
        out.append((beta, float(s.mean()), sd))
    return out


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
