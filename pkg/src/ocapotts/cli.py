"""Command-line front end.

Every subcommand reads its settings from defaults, then an optional flat
``key = value`` config file (``--config``), then explicit flags; later
sources win. Exit codes: 0 success, 2 usage or input error, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ._enumerate import CapacityError
from .hidden import (EmissionModel, GibbsState, Observations, Priors, emission_table,
                     exact_marginal_log_likelihood, heldout_predict, mark_heldout,
                     oca_marginal_log_likelihood, run_gibbs, simulate_observations, coarse_beta)
from .gmm import gmm_gibbs, kmeans
from .io import (InputError, read_labels, read_observations, read_reals, write_labels, write_manifest,
                 write_reals, write_table)
from .lattice import Lattice, LatticeError, build_oca_plan
from .metrics import brier_score, mean_crps
from .parallel import using_threads
from .potts import NumericalError, exact_log_density, fit_beta, oca_log_likelihood, summary_stat
from .sampler import make_rng, oca_sample, summarize, summary_experiment, sw_sample

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str | None = None
    rows: int | None = None
    cols: int | None = None
    k: int | None = None
    beta: float | None = None
    betas: list[float] | None = None
    m_f: int = 2
    m_g: int | None = None
    seed: int = 0
    sampler: str = "oca"
    sweeps: int = 200
    noise: float | None = None
    mu: list[float] | None = None
    sigma: list[float] | None = None
    model: str | None = None
    objective: str = "both"
    beta_max: float = 2.0
    iterations: int = 1000
    burn_in: int | None = None
    sigma0: float = 0.1
    alpha: float = 1.5
    eta: float = 0.135
    c: list[float] | None = None
    proposal_sd: float = 0.05
    fraction: float = 0.1
    repetitions: int = 10
    repetition: int | None = None
    draws: int = 100
    replicates: int = 1
    sizes: list[int] | None = None
    thread_ladder: list[int] | None = None
    mf_ladder: list[int] | None = None
    repeats: int = 3
    oracle: bool = False
    input: str | None = None
    sd_input: str | None = None
    output: str | None = None
    obs_output: str | None = None
    samples_output: str | None = None
    truth: str | None = None
    threads: int = 1

    @property
    def mg(self) -> int:
        return 2 * self.m_f if self.m_g is None else self.m_g

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name} = {_format_value(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(**parse_config_text(text))


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _field_parser(name: str):
    hint = {f.name: f.type for f in fields(RunConfig)}[name]
    if "list[float]" in hint:
        return lambda s: [float(x) for x in s.split(",") if x.strip()]
    if "list[int]" in hint:
        return lambda s: [int(x) for x in s.split(",") if x.strip()]
    if hint.startswith("bool"):
        def parse_bool(s):
            low = s.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {s!r}")
            return low in ("true", "1", "yes")
        return parse_bool
    if hint.startswith("int"):
        return int
    if hint.startswith("float"):
        return float
    return str


def parse_config_text(text: str) -> dict:
    """Grammar: one ``key = value`` per line; ``#`` starts a comment; lists are comma separated."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        try:
            out[key] = _field_parser(key)(value)
        except ValueError as exc:
            raise UsageError(f"config line {lineno}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------


def _need(cfg: RunConfig, *names):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _check_common(cfg: RunConfig):
    if cfg.m_f < 0 or cfg.mg < 0:
        raise UsageError("--m-f and --m-g must be non-negative")
    if cfg.threads < 1:
        raise UsageError("--threads must be >= 1")
    if cfg.k is not None and cfg.k < 2:
        raise UsageError("--k must be at least 2")


def _out_path(cfg: RunConfig) -> Path:
    _need(cfg, "output")
    p = Path(cfg.output)
    if p.parent and not p.parent.exists():
        raise InputError(f"output directory {p.parent} does not exist")
    return p


def _out_dir(cfg: RunConfig) -> Path:
    _need(cfg, "output")
    p = Path(cfg.output)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {p}: {exc}") from exc
    return p


def _manifest_for(path: Path) -> Path:
    return path / "manifest.json" if path.is_dir() else path.with_name(path.name + ".manifest.json")


def _load_observations(cfg: RunConfig):
    _need(cfg, "input")
    y, lattice = read_observations(cfg.input)
    sd = None
    if cfg.sd_input:
        sd, sd_lat = read_reals(cfg.sd_input, allow_missing=True)
        if sd_lat.shape != lattice.shape:
            raise InputError("sd override grid shape differs from the observations")
    return Observations(y, sd), lattice


def _priors(cfg: RunConfig, k_states: int, fallback_means) -> Priors:
    c = cfg.c if cfg.c is not None else list(fallback_means)
    if len(c) != k_states:
        raise UsageError(f"--c needs {k_states} values")
    return Priors(c=c, sigma0=cfg.sigma0, alpha=cfg.alpha, eta=cfg.eta)


def _kmeans_emission(y, k_states, seed):
    labels, means, sds, history = kmeans(y, k_states, seed=seed, return_history=True)
    if len(history) >= 100:
        print("warning: k-means reached its iteration cap before converging", file=sys.stderr)
    floor = 1e-3 * (float(np.std(y)) or 1.0)
    return EmissionModel(means, np.maximum(sds, floor))


def cmd_simulate(cfg: RunConfig) -> int:
    _need(cfg, "rows", "cols", "beta")
    if cfg.rows < 1 or cfg.cols < 1:
        raise UsageError("--rows and --cols must be positive")
    k = cfg.k or 2
    lattice = Lattice(cfg.rows, cfg.cols)
    out = _out_path(cfg)
    rng = make_rng(cfg.seed)
    if cfg.sampler == "oca":
        z = oca_sample(build_oca_plan(lattice, cfg.mg, cfg.m_f), cfg.beta, k, rng)
    elif cfg.sampler == "sw":
        z = sw_sample(lattice, cfg.beta, k, rng, cfg.sweeps)
    else:
        raise UsageError(f"--sampler must be oca or sw, got {cfg.sampler!r}")
    write_labels(out, z, lattice)
    if cfg.obs_output:
        if cfg.noise is None or cfg.noise <= 0:
            raise UsageError("--obs-output needs a positive --noise")
        mu = cfg.mu if cfg.mu is not None else list(range(1, k + 1))
        if len(mu) != k:
            raise UsageError(f"--mu needs {k} values")
        y = simulate_observations(z, EmissionModel(mu, [cfg.noise] * k), rng)
        write_reals(cfg.obs_output, y, lattice)
    write_manifest(_manifest_for(out), cfg.seed, cfg.to_text())
    print(f"S(z) = {summary_stat(z, lattice)}")
    return EXIT_OK


def _beta_grid(cfg: RunConfig):
    if cfg.betas is not None:
        grid = list(cfg.betas)
    elif cfg.beta is not None:
        grid = [cfg.beta]
    else:
        grid = [round(b, 10) for b in np.linspace(0.0, 1.0, 21)]
    if not grid or not all(b >= 0 for b in grid):
        raise UsageError("beta values must be non-negative numbers")
    return grid


def cmd_loglik_curve(cfg: RunConfig) -> int:
    _need(cfg, "input")
    out = _out_path(cfg)
    model = cfg.model or "observed"
    betas = _beta_grid(cfg)
    rows = []
    if model == "observed":
        z, lattice = read_labels(cfg.input)
        k = cfg.k or max(2, int(z.max()) + 1)
        plan = build_oca_plan(lattice, cfg.mg, cfg.m_f)
        for b in betas:
            row = [b, oca_log_likelihood(z, b, plan, k, cfg.threads)]
            if cfg.oracle:
                row.append(exact_log_density(z, b, lattice, k))
            rows.append(row)
    elif model == "hidden":
        obs, lattice = _load_observations(cfg)
        k = cfg.k or 2
        if cfg.mu is not None:
            sigma = cfg.sigma if cfg.sigma is not None else [cfg.noise or 1.0] * k
            emission = EmissionModel(cfg.mu, sigma)
        else:
            emission = _kmeans_emission(obs.y, k, cfg.seed)
        plan = build_oca_plan(lattice, cfg.mg, cfg.m_f)
        for b in betas:
            row = [b, oca_marginal_log_likelihood(obs, b, emission, plan, cfg.threads)]
            if cfg.oracle:
                row.append(exact_marginal_log_likelihood(obs, b, emission, lattice))
            rows.append(row)
    else:
        raise UsageError(f"--model must be observed or hidden, got {model!r}")
    header = ["beta", "loglik"] + (["exact"] if cfg.oracle else [])
    write_table(out, header, rows)
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    _need(cfg, "input")
    out = _out_path(cfg)
    z, lattice = read_labels(cfg.input)
    k = cfg.k or max(2, int(z.max()) + 1)
    objectives = {"both": ["oca", "pseudo"], "oca": ["oca"], "pseudo": ["pseudo"]}.get(cfg.objective)
    if objectives is None:
        raise UsageError(f"--objective must be oca, pseudo or both, got {cfg.objective!r}")
    plan = build_oca_plan(lattice, cfg.mg, cfg.m_f)
    rows = []
    for obj in objectives:
        t0 = time.perf_counter()
        res = fit_beta(z, plan, k, obj, beta_max=cfg.beta_max, threads=cfg.threads)
        secs = time.perf_counter() - t0
        if res.at_boundary:
            print(f"warning: {obj} estimate {res.beta:.4f} is at the search boundary", file=sys.stderr)
        rows.append([obj, cfg.m_f if obj == "oca" else "", cfg.mg if obj == "oca" else "",
                     res.beta, res.objective, int(res.at_boundary), secs])
    write_table(out, ["method", "m_f", "m_g", "beta", "objective", "boundary", "seconds"], rows)
    return EXIT_OK


def cmd_sample(cfg: RunConfig) -> int:
    _need(cfg, "rows", "cols")
    outdir = _out_dir(cfg)
    lattice = Lattice(cfg.rows, cfg.cols)
    k = cfg.k or 3
    if cfg.sampler not in ("oca", "sw"):
        raise UsageError(f"--sampler must be oca or sw, got {cfg.sampler!r}")
    rows = summary_experiment(_beta_grid(cfg), cfg.replicates, cfg.sampler, lattice, k, cfg.seed,
                              m_f=cfg.m_f, m_g=cfg.mg, sw_burn_in=cfg.sweeps)
    write_table(outdir / "raw.csv", ["beta", "replicate", "S"], rows)
    write_table(outdir / "summary.csv", ["beta", "mean_S", "sd_S"], summarize(rows))
    write_manifest(outdir / "manifest.json", cfg.seed, cfg.to_text())
    return EXIT_OK


def _write_gibbs_outputs(outdir: Path, res, lattice, k):
    write_labels(outdir / "hpp.csv", res.hpp, lattice)
    for j in range(k):
        write_reals(outdir / f"prob_{j + 1}.csv", res.probabilities[:, j], lattice)
    header = ["iter", "beta"] + [f"mu_{j + 1}" for j in range(k)] + [f"sigma_{j + 1}" for j in range(k)]
    write_table(outdir / "trace.csv", header,
                [[int(r[0])] + [float(v) for v in r[1:]] for r in res.trace])


def cmd_gibbs(cfg: RunConfig) -> int:
    obs, lattice = _load_observations(cfg)
    outdir = _out_dir(cfg)
    k = cfg.k or 3
    burn = cfg.iterations // 2 if cfg.burn_in is None else cfg.burn_in
    if not 0 <= burn < cfg.iterations:
        raise UsageError("need 0 <= --burn-in < --iterations")
    use = ~obs.overridden
    emission = _kmeans_emission(obs.y[use], k, cfg.seed)
    priors = _priors(cfg, k, emission.mu)
    rng = make_rng(cfg.seed)
    model = cfg.model or "potts"
    extra = {}
    with using_threads(cfg.threads):
        if model == "potts":
            plan = build_oca_plan(lattice, cfg.mg, cfg.m_f)
            z0 = np.argmax(emission_table(obs, emission), axis=1).astype(np.int64)
            beta0 = cfg.beta if cfg.beta is not None else coarse_beta(z0, plan, k)
            init = GibbsState(z=z0, beta=beta0, emission=emission)
            res = run_gibbs(obs, priors, plan, cfg.iterations, burn, rng, init=init, proposal_sd=cfg.proposal_sd)
            extra = {"initial_beta": beta0, "acceptance_rate": res.acceptance_rate}
        elif model == "gmm":
            res = gmm_gibbs(obs, priors, cfg.iterations, burn, rng)
        else:
            raise UsageError(f"--model must be potts or gmm, got {model!r}")
    _write_gibbs_outputs(outdir, res, lattice, k)
    if cfg.truth:
        z_true, t_lat = read_labels(cfg.truth)
        if t_lat.shape != lattice.shape or z_true.max() >= k:
            raise InputError("truth grid does not match the observations or K")
        write_table(outdir / "scores.csv", ["metric", "value"],
                    [["brier", brier_score(res.probabilities, z_true)],
                     ["misclassification", float(np.mean(res.hpp != z_true))]])
    write_manifest(outdir / "manifest.json", cfg.seed, cfg.to_text(), extra)
    return EXIT_OK


def heldout_sites(n: int, fraction: float, rng) -> np.ndarray:
    count = int(round(fraction * n))
    return np.sort(rng.choice(n, count, replace=False)) if count else np.zeros(0, dtype=np.int64)


def cmd_predict_heldout(cfg: RunConfig) -> int:
    if not 0.0 < cfg.fraction < 1.0:
        raise UsageError(f"--fraction must lie in (0, 1), got {cfg.fraction}")
    obs, lattice = _load_observations(cfg)
    out = _out_path(cfg)
    k = cfg.k or 3
    burn = cfg.iterations // 2 if cfg.burn_in is None else cfg.burn_in
    if not 0 <= burn < cfg.iterations:
        raise UsageError("need 0 <= --burn-in < --iterations")
    plan = build_oca_plan(lattice, cfg.mg, cfg.m_f)
    rows, sample_rows = [], []
    reps = range(cfg.repetitions) if cfg.repetition is None else [cfg.repetition]
    for rep in reps:
        # repetition rep draws from the stream keyed (seed, rep), so it can be rerun alone
        rng = make_rng(cfg.seed, rep)
        sites = heldout_sites(lattice.n, cfg.fraction, rng)
        if sites.size == 0:
            continue
        masked = mark_heldout(obs, sites)
        emission = _kmeans_emission(obs.y[~masked.overridden], k, cfg.seed)
        priors = _priors(cfg, k, emission.mu)
        with using_threads(cfg.threads):
            z0 = np.argmax(emission_table(masked, emission), axis=1).astype(np.int64)
            init = GibbsState(z=z0, beta=coarse_beta(z0, plan, k), emission=emission)
            _, pred = heldout_predict(obs, sites, priors, plan, rng, cfg.draws, cfg.iterations, burn,
                                      init=init, proposal_sd=cfg.proposal_sd)
            g = gmm_gibbs(masked, priors, cfg.iterations, burn, rng, predict_sites=sites,
                          predictive_draws=cfg.draws)
        rows.append(["oca", rep, cfg.seed, int(sites.size), mean_crps(pred, obs.y)])
        rows.append(["gmm", rep, cfg.seed, int(sites.size), mean_crps(g.predictive, obs.y)])
        for method, samples in (("oca", pred), ("gmm", g.predictive)):
            for site, vals in samples.items():
                sample_rows.extend([method, rep, site + 1, d, float(v)] for d, v in enumerate(vals, 1))
    for method in ("oca", "gmm"):
        vals = [r[4] for r in rows if r[0] == method]
        if vals:
            rows.append([method, "mean", cfg.seed, "", float(np.mean(vals))])
    write_table(out, ["method", "repetition", "seed", "heldout", "mean_crps"], rows)
    if cfg.samples_output:
        write_table(cfg.samples_output, ["method", "repetition", "site", "draw", "value"], sample_rows)
    write_manifest(_manifest_for(out), cfg.seed, cfg.to_text())
    return EXIT_OK


def cmd_benchmark(cfg: RunConfig) -> int:
    out = _out_path(cfg)
    k = cfg.k or 3
    sizes = cfg.sizes or [32, 64, 128]
    threads = cfg.thread_ladder or [cfg.threads]
    mfs = cfg.mf_ladder or [cfg.m_f]
    rows = []
    for side in sizes:
        lattice = Lattice(side, side)
        z = make_rng(cfg.seed, side).integers(0, k, lattice.n)
        for m_f in mfs:
            m_g = 2 * m_f if cfg.m_g is None else cfg.m_g
            plan = build_oca_plan(lattice, m_g, m_f)
            for t in threads:
                with using_threads(t) as used:
                    oca_log_likelihood(z, 0.5, plan, k)
                    best = math.inf
                    for _ in range(max(1, cfg.repeats)):
                        t0 = time.perf_counter()
                        oca_log_likelihood(z, 0.5, plan, k)
                        best = min(best, time.perf_counter() - t0)
                rows.append([lattice.n, m_f, used, best])
    write_table(out, ["n", "m_f", "threads", "seconds"], rows)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "loglik-curve": cmd_loglik_curve,
    "fit": cmd_fit,
    "sample": cmd_sample,
    "gibbs": cmd_gibbs,
    "predict-heldout": cmd_predict_heldout,
    "benchmark": cmd_benchmark,
}

_HELP = {
    "simulate": "draw a Potts field (OCA or Swendsen-Wang), optionally with Gaussian observations",
    "loglik-curve": "OCA log-likelihood over a beta grid for a label field or observations",
    "fit": "estimate beta by maximum OCA likelihood and/or pseudo-likelihood",
    "sample": "replicate draws over a beta grid and summarise S(z)",
    "gibbs": "hidden Potts (or --model gmm) Gibbs segmentation of an observation grid",
    "predict-heldout": "CRPS of held-out pixel predictions, OCA Gibbs versus GMM",
    "benchmark": "time the OCA likelihood over grid sizes, thread counts and m_f",
}

_OPTIONS = {
    "rows": (int, "grid rows"),
    "cols": (int, "grid columns"),
    "k": (int, "number of classes K"),
    "beta": (float, "inverse temperature"),
    "betas": (str, "comma-separated beta grid"),
    "m_f": (int, "future conditioning-set size (default 2)"),
    "m_g": (int, "past conditioning-set size (default 2*m_f)"),
    "seed": (int, "random seed"),
    "sampler": (str, "oca or sw"),
    "sweeps": (int, "Swendsen-Wang sweeps per draw"),
    "noise": (float, "observation noise sd"),
    "mu": (str, "comma-separated class means"),
    "sigma": (str, "comma-separated class sds"),
    "model": (str, "observed|hidden (loglik-curve) or potts|gmm (gibbs)"),
    "objective": (str, "oca, pseudo or both"),
    "beta_max": (float, "upper end of the beta search"),
    "iterations": (int, "Gibbs iterations"),
    "burn_in": (int, "discarded iterations (default half)"),
    "sigma0": (float, "prior sd of the class means"),
    "alpha": (float, "inverse-gamma shape"),
    "eta": (float, "inverse-gamma scale"),
    "c": (str, "comma-separated prior class means (default: k-means centres)"),
    "proposal_sd": (float, "Metropolis proposal sd for beta"),
    "fraction": (float, "held-out fraction in (0, 1)"),
    "repetitions": (int, "held-out repetitions"),
    "repetition": (int, "rerun only this repetition index"),
    "draws": (int, "predictive draws per site and retained iteration"),
    "replicates": (int, "replicates per beta"),
    "sizes": (str, "comma-separated grid sides"),
    "thread_ladder": (str, "comma-separated thread counts"),
    "mf_ladder": (str, "comma-separated m_f values"),
    "repeats": (int, "timing repeats (minimum is reported)"),
    "input": (str, "input CSV (labels or observations, or a P2 .pgm)"),
    "sd_input": (str, "per-site known-sd CSV (blank = none)"),
    "output": (str, "output file or directory"),
    "obs_output": (str, "observation CSV written by simulate"),
    "samples_output": (str, "predict-heldout: CSV of every predictive draw"),
    "truth": (str, "true label CSV; gibbs then writes scores.csv with the Brier score"),
    "threads": (int, "worker threads"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocapotts", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HELP[name], description=_HELP[name],
                           argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="flat key = value config file; flags override it")
        p.add_argument("--dump-config", action="store_true", help="print the merged config and exit")
        p.add_argument("--oracle", action="store_true", help="add an exact-enumeration column (tiny grids)")
        for key, (typ, text) in _OPTIONS.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, help=text)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            values.update(parse_config_text(Path(cfg_path).read_text()))
        except OSError as exc:
            raise InputError(f"cannot read config {cfg_path}: {exc}") from exc
    for key, val in vars(args).items():
        if key in ("config", "dump_config"):
            continue
        if isinstance(val, str) and key in _OPTIONS and _OPTIONS[key][0] is str:
            try:
                val = _field_parser(key)(val)
            except ValueError as exc:
                raise UsageError(f"--{key.replace('_', '-')}: {exc}") from exc
        values[key] = val
    values["command"] = args.command
    return RunConfig(**values)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        _check_common(cfg)
        if getattr(args, "dump_config", False):
            sys.stdout.write(cfg.to_text())
            return EXIT_OK
        with using_threads(cfg.threads):
            return COMMANDS[cfg.command](cfg)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, InputError, LatticeError, CapacityError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["RunConfig", "main", "build_parser", "parse_config_text"]
