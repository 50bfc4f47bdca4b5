"""Hidden Potts model with Gaussian class emissions.

Covers the OCA integrated likelihood of the observations, the OCA posterior
of the latent field (sampled in one ancestral pass), and the Gibbs sampler
over field, class means/variances and inverse temperature.

Per-site known standard deviations (``sd_override``) replace the class sd in
every emission evaluation at that site; this is how held-out pixels are
down-weighted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from ._enumerate import agreement_counts, check_capacity, site_labels
from .lattice import Lattice, OcaPlan
from .parallel import using_threads
from .potts import NumericalError, _plan_args, check_field, log_normalizer, oca_log_likelihood

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
HELDOUT_SD = 100.0


@dataclass(frozen=True)
class EmissionModel:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if mu.shape != sigma.shape:
            raise ValueError(f"mu and sigma lengths differ: {mu.shape} vs {sigma.shape}")
        if not np.all(sigma > 0):
            raise ValueError(f"class standard deviations must be positive, got {sigma}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def k_states(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class Observations:
    y: np.ndarray
    sd_override: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        object.__setattr__(self, "y", y)
        if self.sd_override is not None:
            sd = np.asarray(self.sd_override, dtype=float).reshape(-1)
            if sd.shape != y.shape:
                raise ValueError("sd_override must match the observations in length")
            given = ~np.isnan(sd)
            if np.any(sd[given] <= 0):
                raise ValueError("sd overrides must be positive")
            object.__setattr__(self, "sd_override", sd if given.any() else None)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def overridden(self) -> np.ndarray:
        if self.sd_override is None:
            return np.zeros(self.n, dtype=bool)
        return ~np.isnan(self.sd_override)


def as_observations(y) -> Observations:
    return y if isinstance(y, Observations) else Observations(y)


@dataclass(frozen=True)
class Priors:
    """mu_j ~ N(c_j, sigma0^2), sigma_j^2 ~ IG(alpha, eta); flat prior on beta >= 0."""

    c: np.ndarray
    sigma0: float
    alpha: float
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(-1))
        if self.sigma0 <= 0 or self.alpha <= 0 or self.eta <= 0:
            raise ValueError("sigma0, alpha and eta must be positive")

    @classmethod
    def simulation_defaults(cls, k_states: int) -> "Priors":
        # class means anchored at 1..K with the tight prior used for the
        # 12x12 recovery experiments
        return cls(c=np.arange(1, k_states + 1, dtype=float), sigma0=0.1, alpha=1.5, eta=0.135)

    @property
    def k_states(self) -> int:
        return self.c.shape[0]


def emission_logpdf(y, k: int, emission: EmissionModel, sd=None):
    s = emission.sigma[k] if sd is None else sd
    d = (np.asarray(y, dtype=float) - emission.mu[k]) / s
    return -0.5 * d * d - np.log(s) - _LOG_SQRT_2PI


def emission_table(y, emission: EmissionModel) -> np.ndarray:
    """``(n, K)`` table of log f(y_i | k), honouring per-site sd overrides."""
    obs = as_observations(y)
    sd = np.broadcast_to(emission.sigma, (obs.n, emission.k_states)).copy()
    if obs.sd_override is not None:
        rows = obs.overridden
        sd[rows] = obs.sd_override[rows, None]
    d = (obs.y[:, None] - emission.mu[None, :]) / sd
    return -0.5 * d * d - np.log(sd) - _LOG_SQRT_2PI


# ---------------------------------------------------------------------------
# integrated likelihood


def oca_marginal_log_terms(y, beta: float, emission: EmissionModel, plan: OcaPlan,
                           threads=None) -> np.ndarray:
    logf = emission_table(y, emission)
    with using_threads(threads):
        return _kernels.marginal_terms(logf, *_plan_args(plan), float(beta), emission.k_states)


def oca_marginal_conditional(i: int, y, beta: float, emission: EmissionModel, plan: OcaPlan) -> float:
    """Approximate density p_hat(y_i | y_{g(i)}, beta)."""
    logf = emission_table(y, emission)
    a = np.empty(emission.k_states)
    _kernels._window_scores(i, np.zeros(1, dtype=np.int64), *_plan_args(plan), float(beta), logf,
                            emission.k_states, _kernels.MARGINAL, a)
    return float(np.exp(logsumexp(a + logf[i]) - logsumexp(a)))


def oca_marginal_log_likelihood(y, beta: float, emission: EmissionModel, plan: OcaPlan,
                                threads=None) -> float:
    """OCA integrated log-likelihood; site terms in parallel, summed in site order."""
    total = math.fsum(oca_marginal_log_terms(y, beta, emission, plan, threads))
    if math.isnan(total):
        raise NumericalError(f"OCA marginal log-likelihood is NaN at beta={beta}", beta)
    return total


def _config_scores(y, beta: float, emission: EmissionModel, lattice: Lattice, limit: int):
    k = emission.k_states
    total = check_capacity(lattice.n, k, limit)
    logf = emission_table(y, emission)
    codes = np.arange(total, dtype=np.int64)
    emis = np.zeros(total)
    for s in range(lattice.n):
        emis += logf[s, site_labels(codes, s, lattice.n, k)]
    return beta * agreement_counts(lattice.n1, lattice.n2, k) + emis


def exact_marginal_log_likelihood(y, beta: float, emission: EmissionModel, lattice: Lattice,
                                  limit: int = 2 ** 20) -> float:
    """log p(y | beta) with the latent field summed out by enumeration (oracle)."""
    scores = _config_scores(y, beta, emission, lattice, limit)
    return float(logsumexp(scores) - log_normalizer(beta, lattice, emission.k_states))


def exact_latent_posterior(y, beta: float, emission: EmissionModel, lattice: Lattice,
                           limit: int = 2 ** 20) -> np.ndarray:
    """p(z | y, beta) for every configuration code, by enumeration (oracle)."""
    scores = _config_scores(y, beta, emission, lattice, limit)
    return np.exp(scores - logsumexp(scores))


# ---------------------------------------------------------------------------
# latent field


def latent_conditional(i: int, z, y, beta: float, emission: EmissionModel, plan: OcaPlan) -> np.ndarray:
    """Approximate p(z_i = k | z_{1:i-1}, y_i, y_{f(i)}) for all ``k``.

    Only ``z[g(i)]`` is read. Future labels in ``f(i)`` are summed out with
    their own emission factors.
    """
    logf = emission_table(y, emission)
    a = np.empty(emission.k_states)
    _kernels._window_scores(i, np.asarray(z, dtype=np.int64), *_plan_args(plan), float(beta), logf,
                            emission.k_states, _kernels.LATENT, a)
    a += logf[i]
    return np.exp(a - logsumexp(a))


def latent_conditionals(z, y, beta: float, emission: EmissionModel, plan: OcaPlan, threads=None) -> np.ndarray:
    z = check_field(z, plan.n, emission.k_states)
    logf = emission_table(y, emission)
    with using_threads(threads):
        return _kernels.conditional_table(z, *_plan_args(plan), float(beta), logf,
                                          emission.k_states, _kernels.LATENT)


def latent_log_probability(z, y, beta: float, emission: EmissionModel, plan: OcaPlan) -> float:
    """log of the OCA posterior product for a whole configuration."""
    z = check_field(z, plan.n, emission.k_states)
    probs = latent_conditionals(z, y, beta, emission, plan)
    return math.fsum(np.log(probs[np.arange(plan.n), z]))


def _sample_field(logf, beta, k_states, plan, rng, return_probs=False):
    u = rng.random(plan.n)
    z = np.zeros(plan.n, dtype=np.int64)
    probs = np.empty((plan.n, k_states))
    _kernels.sequential_sample(*_plan_args(plan), float(beta), logf, k_states, _kernels.LATENT, u, z, probs)
    return (z, probs) if return_probs else z


def sample_hidden_field(y, beta: float, emission: EmissionModel, plan: OcaPlan,
                        rng: np.random.Generator, return_probs: bool = False):
    """One ancestral pass through the ordering; a joint draw from the OCA posterior."""
    return _sample_field(emission_table(y, emission), beta, emission.k_states, plan, rng, return_probs)


# ---------------------------------------------------------------------------
# parameter updates


def sample_class_mean(n_j: int, ybar: float, sigma2: float, c_j: float, sigma0: float,
                      rng: np.random.Generator) -> float:
    prec = n_j / sigma2 + 1.0 / sigma0 ** 2
    c_hat = (n_j * ybar / sigma2 + c_j / sigma0 ** 2) / prec
    return float(c_hat + math.sqrt(1.0 / prec) * rng.standard_normal())


def update_emission_params(z, y, priors: Priors, rng: np.random.Generator) -> EmissionModel:
    """Normal-inverse-gamma draw of every class mean and variance given the labels.

    Sites with an sd override carry (almost) no information about the class
    parameters and are left out of the sufficient statistics. An empty class
    is redrawn from its prior.
    """
    obs = as_observations(y)
    z = np.asarray(z, dtype=np.int64)
    use = ~obs.overridden
    k_states = priors.k_states
    mu = np.empty(k_states)
    sigma = np.empty(k_states)
    for j in range(k_states):
        vals = obs.y[use & (z == j)]
        n_j = vals.size
        if n_j == 0:
            a_hat, e_hat, ybar = priors.alpha, priors.eta, 0.0
        else:
            ybar = float(vals.mean())
            a_hat = priors.alpha + (n_j - 1) / 2.0
            e_hat = priors.eta + 0.5 * float(np.sum((vals - ybar) ** 2))
        sigma2 = e_hat / rng.gamma(a_hat)
        mu[j] = sample_class_mean(n_j, ybar, sigma2, priors.c[j], priors.sigma0, rng)
        sigma[j] = math.sqrt(sigma2)
    return EmissionModel(mu, sigma)


def update_beta(z, beta: float, proposal_sd: float, plan: OcaPlan, k_states: int,
                rng: np.random.Generator, current_loglik: float | None = None):
    """Random-walk Metropolis step on beta under the OCA likelihood and a flat prior on [0, inf).

    Always consumes one normal and one uniform. Returns
    ``(beta, accepted, loglik at returned beta)``.
    """
    proposal = beta + proposal_sd * rng.standard_normal()
    u = rng.random()
    if proposal < 0:
        return beta, False, current_loglik
    if current_loglik is None:
        current_loglik = oca_log_likelihood(z, beta, plan, k_states)
    prop_loglik = oca_log_likelihood(z, proposal, plan, k_states)
    if u == 0.0 or math.log(u) < prop_loglik - current_loglik:
        return float(proposal), True, prop_loglik
    return beta, False, current_loglik


# ---------------------------------------------------------------------------
# Gibbs sampler


@dataclass
class GibbsState:
    z: np.ndarray
    beta: float
    emission: EmissionModel
    iteration: int = 0
    tallies: np.ndarray | None = None
    retained: int = 0
    accepted: int = 0
    trace: list = field(default_factory=list)


@dataclass
class GibbsResult:
    state: GibbsState
    probabilities: np.ndarray
    hpp: np.ndarray
    trace: np.ndarray
    acceptance_rate: float
    predictive: dict | None = None
    pi_trace: np.ndarray | None = None

    @property
    def tallies(self) -> np.ndarray:
        return self.state.tallies


def coarse_beta(z, plan: OcaPlan, k_states: int, grid=None) -> float:
    grid = np.linspace(0.0, 2.0, 21) if grid is None else np.asarray(grid)
    vals = [oca_log_likelihood(z, b, plan, k_states) for b in grid]
    return float(grid[int(np.argmax(vals))])


def initial_state(y, k_states: int, plan: OcaPlan, seed: int = 0, emission: EmissionModel | None = None,
                  beta: float | None = None) -> GibbsState:
    """k-means emission, per-site maximum-likelihood labels, beta by grid search."""
    from .gmm import kmeans

    obs = as_observations(y)
    if emission is None:
        use = ~obs.overridden
        _, means, sds = kmeans(obs.y[use], k_states, seed=seed)
        floor = 1e-3 * (float(obs.y[use].std()) or 1.0)
        emission = EmissionModel(means, np.maximum(sds, floor))
    z = np.argmax(emission_table(obs, emission), axis=1).astype(np.int64)
    if beta is None:
        beta = coarse_beta(z, plan, k_states)
    return GibbsState(z=z, beta=float(beta), emission=emission)


def _predictive_draws(sites, z, emission, draws, rng):
    if draws == 0 or sites.size == 0:
        return None
    labs = z[sites]
    return emission.mu[labs][:, None] + emission.sigma[labs][:, None] * rng.standard_normal((sites.size, draws))


def _finish(state, retained_preds, sites, k_states):
    probs = state.tallies / max(state.retained, 1)
    hpp = np.argmax(state.tallies, axis=1).astype(np.int64)
    trace = np.array(state.trace, dtype=float).reshape(-1, 2 + 2 * k_states)
    pred = None
    if retained_preds:
        pooled = np.concatenate(retained_preds, axis=1)
        pred = {int(s): pooled[r] for r, s in enumerate(sites)}
    return probs, hpp, trace, pred


def run_gibbs(y, priors: Priors, plan: OcaPlan, iterations: int, burn_in: int,
              rng: np.random.Generator, init: GibbsState | None = None, proposal_sd: float = 0.05,
              predict_sites=None, predictive_draws: int = 0, update_beta_step: bool = True) -> GibbsResult:
    """Gibbs sampler: OCA posterior draw of z, NIG class update, Metropolis on beta.

    Iterations ``burn_in .. iterations-1`` are retained: their label draws are
    tallied per site, and for each ``predict_sites`` entry
    ``predictive_draws`` normals are drawn from the sampled class's mean/sd.
    The trace holds ``(iter, beta, mu_1..K, sigma_1..K)`` for every iteration.
    """
    obs = as_observations(y)
    k_states = priors.k_states
    if not 0 <= burn_in < iterations:
        raise ValueError(f"need 0 <= burn_in < iterations, got burn_in={burn_in}, iterations={iterations}")
    state = init if init is not None else initial_state(obs, k_states, plan)
    if state.tallies is None:
        state.tallies = np.zeros((obs.n, k_states), dtype=np.int64)
    sites = np.asarray([] if predict_sites is None else predict_sites, dtype=np.int64)
    preds = []
    rows = np.arange(obs.n)
    start = state.iteration
    for it in range(start, start + iterations):
        logf = emission_table(obs, state.emission)
        state.z = _sample_field(logf, state.beta, k_states, plan, rng)
        state.emission = update_emission_params(state.z, obs, priors, rng)
        if update_beta_step:
            state.beta, acc, _ = update_beta(state.z, state.beta, proposal_sd, plan, k_states, rng)
            state.accepted += int(acc)
        state.iteration = it + 1
        state.trace.append((it, state.beta, *state.emission.mu, *state.emission.sigma))
        if it - start >= burn_in:
            state.tallies[rows, state.z] += 1
            state.retained += 1
            p = _predictive_draws(sites, state.z, state.emission, predictive_draws, rng)
            if p is not None:
                preds.append(p)
    probs, hpp, trace, pred = _finish(state, preds, sites, k_states)
    rate = state.accepted / max(state.iteration, 1) if update_beta_step else float("nan")
    return GibbsResult(state=state, probabilities=probs, hpp=hpp, trace=trace, acceptance_rate=rate,
                       predictive=pred)


def mark_heldout(y, sites, sd: float = HELDOUT_SD) -> Observations:
    obs = as_observations(y)
    override = np.full(obs.n, np.nan) if obs.sd_override is None else obs.sd_override.copy()
    override[np.asarray(sites, dtype=np.int64)] = sd
    return Observations(obs.y, override)


def heldout_predict(y, heldout, priors: Priors, plan: OcaPlan, rng: np.random.Generator,
                    draws_per_site: int = 100, iterations: int = 100, burn_in: int = 50,
                    init: GibbsState | None = None, proposal_sd: float = 0.05):
    """Held-out prediction by sd-override: returns ``(GibbsResult, {site: pooled samples})``.

    Held-out sites keep their values but get known sd 100, so their data are
    effectively ignored while the sampler fills them in from neighbours.
    """
    heldout = np.asarray(heldout, dtype=np.int64)
    obs = mark_heldout(y, heldout) if heldout.size else as_observations(y)
    res = run_gibbs(obs, priors, plan, iterations, burn_in, rng, init=init, proposal_sd=proposal_sd,
                    predict_sites=heldout, predictive_draws=draws_per_site if heldout.size else 0)
    return res, (res.predictive or {})


def simulate_observations(z, emission: EmissionModel, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise per class: y_i = mu_{z_i} + sigma_{z_i} * eps_i."""
    z = np.asarray(z, dtype=np.int64)
    return emission.mu[z] + emission.sigma[z] * rng.standard_normal(z.shape[0])
