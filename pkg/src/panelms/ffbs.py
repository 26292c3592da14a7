"""Forward-filter backward-sampling of the latent regime trajectories.

The full conditional of one chain's trajectory keeps that chain's own emission
and transition factors; the feedback of its states on the other chains'
transition probabilities through the global factor is not part of the
factorization. Conditioning covers the other chains' current trajectories: the
unit kernels let the hypothesized origin state contribute to the global factor,
and the financial kernel reads its own origin through the beta term.
"""

from __future__ import annotations

import numpy as np

from ._kernels import ffbs_kernel
from .dataset import LatentStates, PanelDataset
from .model import (
    FIN,
    Chain,
    _emission_loglik_matrix,
    fin_transition_matrices,
    unit_transition_matrices,
)
from .params import ModelParams


def _chain_inputs(dataset: PanelDataset, params: ModelParams,
                  states: LatentStates, chain: Chain) -> tuple[np.ndarray, np.ndarray]:
    ell = _emission_loglik_matrix(dataset, params, chain)
    if chain == FIN:
        trans = fin_transition_matrices(dataset, params, states)
    else:
        trans = unit_transition_matrices(dataset, params, states, int(chain))
    return ell, trans


def _draw(ell: np.ndarray, trans: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    t_len = ell.shape[0]
    u = rng.random(t_len)
    out_states = np.empty(t_len, dtype=np.int8)
    out_filt = np.empty((t_len, 2))
    ffbs_kernel(ell, trans, u, out_states, out_filt)
    return out_states


def ffbs_unit(dataset: PanelDataset, params: ModelParams, states: LatentStates,
              i: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a new trajectory for unit i from its full conditional."""
    ell, trans = _chain_inputs(dataset, params, states, i)
    return _draw(ell, trans, rng)


def ffbs_financial(dataset: PanelDataset, params: ModelParams, states: LatentStates,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw a new trajectory for the financial chain from its full conditional."""
    ell, trans = _chain_inputs(dataset, params, states, FIN)
    return _draw(ell, trans, rng)


def filtered_probs(dataset: PanelDataset, params: ModelParams, states: LatentStates,
                   chain: Chain) -> np.ndarray:
    """(T, 2) normalized forward-filtered state probabilities for one chain."""
    ell, trans = _chain_inputs(dataset, params, states, chain)
    t_len = ell.shape[0]
    out_states = np.empty(t_len, dtype=np.int8)
    out_filt = np.empty((t_len, 2))
    ffbs_kernel(ell, trans, np.zeros(t_len), out_states, out_filt)
    return out_filt


def smoothed_marginals(dataset: PanelDataset, params: ModelParams, states: LatentStates,
                       chain: Chain) -> np.ndarray:
    """(T, 2) smoothed per-time state marginals of the chain's full conditional."""
    ell, trans = _chain_inputs(dataset, params, states, chain)
    filt = filtered_probs(dataset, params, states, chain)
    t_len = ell.shape[0]
    back = np.ones((t_len, 2))
    for t in range(t_len - 2, -1, -1):
        e = np.exp(ell[t + 1] - ell[t + 1].max())
        v = trans[t] @ (e * back[t + 1])
        back[t] = v / v.sum()
    smoothed = filt * back
    return smoothed / smoothed.sum(axis=1, keepdims=True)
