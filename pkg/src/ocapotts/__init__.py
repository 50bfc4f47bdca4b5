"""Ordered conditional approximations for Potts and hidden Potts models on 2-D grids."""

__version__ = "0.1.0"

from .lattice import Lattice, OcaPlan, build_oca_plan, full_plan
from .potts import fit_beta, oca_log_likelihood, pseudo_log_likelihood, summary_stat

__all__ = [
    "Lattice",
    "OcaPlan",
    "build_oca_plan",
    "fit_beta",
    "full_plan",
    "oca_log_likelihood",
    "pseudo_log_likelihood",
    "summary_stat",
]
