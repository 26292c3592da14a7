"""Bayesian panel Markov-switching model with interacting business and financial cycles."""

from .dataset import (
    MonthlySeries,
    PanelDataset,
    LatentStates,
    QuarterlySeries,
    load_dataset,
    save_dataset,
)
from .params import ModelParams, PriorConfig, default_prior
from .model import (
    FIN,
    complete_data_loglik,
    emission_logpdf,
    global_factor,
    transition_row,
)
from .sampler import McmcConfig, PosteriorDraws, gibbs_sweep, run, load_archive, save_archive
from .simulator import SimSpec, simulate
from .errors import NumericalError

__all__ = [
    "MonthlySeries",
    "QuarterlySeries",
    "PanelDataset",
    "LatentStates",
    "ModelParams",
    "PriorConfig",
    "default_prior",
    "FIN",
    "global_factor",
    "transition_row",
    "emission_logpdf",
    "complete_data_loglik",
    "McmcConfig",
    "PosteriorDraws",
    "gibbs_sweep",
    "run",
    "save_archive",
    "load_archive",
    "load_dataset",
    "save_dataset",
    "SimSpec",
    "simulate",
    "NumericalError",
]

__version__ = "0.1.0"
