"""Spatially independent baseline: 1-D k-means and a Bayesian Gaussian mixture
with a Dirichlet prior on the class probabilities, fitted by Gibbs sampling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hidden import (EmissionModel, GibbsResult, GibbsState, Priors, _finish, _predictive_draws,
                     as_observations, emission_table, update_emission_params)


def _assign(y, centers):
    d = np.abs(y[:, None] - centers[None, :])
    return np.argmin(d, axis=1)


def kmeans(y, k_states: int, seed: int = 0, max_iter: int = 100, return_history: bool = False):
    """Lloyd's algorithm on scalar data; returns ``(labels, means, sds)`` with means ascending.

    Centres start at evenly spaced sample quantiles, so the result does not
    depend on ``seed`` unless a cluster empties and is reseeded (to the point
    farthest from its centre, ties broken by a seeded draw).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if k_states < 1:
        raise ValueError(f"K must be positive, got {k_states}")
    if k_states > y.size:
        raise ValueError(f"K={k_states} exceeds the number of observations {y.size}")
    rng = np.random.default_rng(seed)
    centers = np.quantile(y, (np.arange(k_states) + 0.5) / k_states)
    labels = _assign(y, centers)
    history = []
    for _ in range(max_iter):
        for j in range(k_states):
            members = labels == j
            if members.any():
                centers[j] = y[members].mean()
            else:
                far = np.abs(y - centers[labels])
                cands = np.flatnonzero(far == far.max())
                pick = cands[rng.integers(cands.size)]
                centers[j] = y[pick]
                labels[pick] = j
        history.append(float(np.sum((y - centers[labels]) ** 2)))
        new = _assign(y, centers)
        if np.array_equal(new, labels):
            break
        labels = new
    order = np.argsort(centers, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(k_states)
    labels = rank[labels]
    centers = centers[order]
    sds = np.array([y[labels == j].std() if np.any(labels == j) else 0.0 for j in range(k_states)])
    out = (labels.astype(np.int64), centers, sds)
    return out + (history,) if return_history else out


@dataclass
class GmmState:
    z: np.ndarray
    pi: np.ndarray
    emission: EmissionModel
    dirichlet: np.ndarray


def sample_labels(logf, pi, rng):
    """Independent categorical draw per site with p(z_i = k) ∝ pi_k f(y_i | k)."""
    logits = np.log(pi)[None, :] + logf
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    u = rng.random(p.shape[0])
    z = (np.cumsum(p, axis=1) <= u[:, None]).sum(axis=1)
    return np.minimum(z, p.shape[1] - 1).astype(np.int64), p


def dirichlet_posterior(z, dirichlet, k_states: int) -> np.ndarray:
    """Conjugate Dirichlet parameters for pi given labels: hyperparameters plus class counts."""
    return np.asarray(dirichlet, dtype=float) + np.bincount(np.asarray(z, dtype=np.int64), minlength=k_states)


def gmm_gibbs(y, priors: Priors, iterations: int, burn_in: int, rng: np.random.Generator,
              dirichlet=None, init: GmmState | None = None, predict_sites=None,
              predictive_draws: int = 0) -> GibbsResult:
    """Gibbs sampler for the finite Gaussian mixture.

    Each iteration draws pi | z ~ Dirichlet(alpha + counts), class means and
    variances by the same NIG update as the hidden Potts sampler, then every
    label independently. Outputs mirror :func:`ocapotts.hidden.run_gibbs`;
    the trace columns are ``(iter, nan, mu.., sigma..)`` since there is no beta.
    """
    obs = as_observations(y)
    k_states = priors.k_states
    if not 0 <= burn_in < iterations:
        raise ValueError(f"need 0 <= burn_in < iterations, got burn_in={burn_in}, iterations={iterations}")
    alpha = np.full(k_states, 1.0 / k_states) if dirichlet is None else np.asarray(dirichlet, dtype=float)
    if alpha.shape != (k_states,) or np.any(alpha <= 0):
        raise ValueError(f"Dirichlet hyperparameters must be {k_states} positive values")
    if init is None:
        use = ~obs.overridden
        if use.sum() >= k_states:
            z0, means, sds = kmeans(obs.y[use], k_states)
            floor = 1e-3 * (float(obs.y[use].std()) or 1.0)
            emission = EmissionModel(means, np.maximum(sds, floor))
        else:
            emission = EmissionModel(priors.c, np.full(k_states, np.sqrt(priors.eta / priors.alpha)))
        z = np.argmax(emission_table(obs, emission), axis=1).astype(np.int64) if obs.n else np.zeros(0, np.int64)
        init = GmmState(z=z, pi=np.full(k_states, 1.0 / k_states), emission=emission, dirichlet=alpha)
    gstate = init
    state = GibbsState(z=gstate.z, beta=float("nan"), emission=gstate.emission)
    state.tallies = np.zeros((obs.n, k_states), dtype=np.int64)
    sites = np.asarray([] if predict_sites is None else predict_sites, dtype=np.int64)
    preds, pis = [], []
    rows = np.arange(obs.n)
    for it in range(iterations):
        gstate.pi = rng.dirichlet(dirichlet_posterior(gstate.z, gstate.dirichlet, k_states))
        # a tiny Dirichlet parameter can underflow a component to exactly 0
        gstate.pi = np.maximum(gstate.pi, np.finfo(float).tiny)
        gstate.emission = update_emission_params(gstate.z, obs, priors, rng)
        gstate.z, _ = sample_labels(emission_table(obs, gstate.emission), gstate.pi, rng)
        state.z, state.emission, state.iteration = gstate.z, gstate.emission, it + 1
        state.trace.append((it, float("nan"), *gstate.emission.mu, *gstate.emission.sigma))
        pis.append(gstate.pi.copy())
        if it >= burn_in:
            state.tallies[rows, gstate.z] += 1
            state.retained += 1
            p = _predictive_draws(sites, gstate.z, gstate.emission, predictive_draws, rng)
            if p is not None:
                preds.append(p)
    probs, hpp, trace, pred = _finish(state, preds, sites, k_states)
    return GibbsResult(state=state, probabilities=probs, hpp=hpp, trace=trace,
                       acceptance_rate=float("nan"), predictive=pred, pi_trace=np.array(pis))


def relabel_by_means(probabilities, means):
    """Reorder class columns so class means ascend (post-hoc, for comparisons)."""
    order = np.argsort(np.asarray(means), kind="stable")
    return np.asarray(probabilities)[:, order]
