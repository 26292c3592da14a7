"""Pure mathematical functions of the panel Markov-switching model.

All operations here are side-effect free over immutable inputs. Regime labels
are 1 (recession) and 2 (expansion); arrays index regime k at position k - 1.

The raw linear transition parametrization
    q_k = alpha * p_{lk} + beta * (s_x - 1) + gamma * m_k
does not sum to one over destinations k whenever the beta term is active, so
every row is clamped to [EPS, 1 - EPS] and renormalized; when the beta
contribution vanishes the renormalization is the identity and with alpha = 1
the row equals (p_{l1}, p_{l2}) exactly.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

from ._kernels import EPS, build_trans_fin, build_trans_unit
from .dataset import LatentStates, PanelDataset
from .params import ModelParams

FIN = "fin"
Chain = Union[int, str]
LOG_HALF = math.log(0.5)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _check_regime(k: int) -> None:
    if k not in (1, 2):
        raise ValueError(f"regime label must be 1 or 2, got {k!r}")


def global_factor(s_y_row: np.ndarray, k: int) -> float:
    """Proportion of unit chains currently in regime k."""
    _check_regime(k)
    row = np.asarray(s_y_row)
    if row.size == 0:
        raise ValueError("state row must be non-empty")
    if not np.all((row == 1) | (row == 2)):
        raise ValueError("all states must be 1 or 2")
    return float(np.count_nonzero(row == k)) / row.size


def _raw_row(p_row: np.ndarray, alpha: float, beta: float, gamma: float,
             s_x_t: int, m2: float) -> np.ndarray:
    b = beta * (s_x_t - 1)
    return np.array([
        alpha * p_row[0] + b + gamma * (1.0 - m2),
        alpha * p_row[1] + b + gamma * m2,
    ])


def _normalize_row(raw: np.ndarray) -> np.ndarray:
    clamped = np.clip(raw, EPS, 1.0 - EPS)
    return clamped / clamped.sum()


def transition_row(params: ModelParams, chain: Chain, l: int, s_x_t: int, m2: float) -> np.ndarray:
    """One row of the time-varying transition matrix: origin regime l -> (1, 2).

    `chain` is a unit index or FIN for the financial chain; m2 is the
    proportion of unit chains in regime 2 at the origin time.
    """
    _check_regime(l)
    _check_regime(s_x_t)
    if not 0.0 <= m2 <= 1.0:
        raise ValueError(f"m2 must lie in [0, 1], got {m2!r}")
    if chain == FIN:
        p_row = params.p_fin[l - 1]
        a, b, g = params.interaction_fin
    else:
        p_row = params.p_unit[int(chain), l - 1]
        a, b, g = params.interaction_unit[int(chain)]
    return _normalize_row(_raw_row(p_row, a, b, g, s_x_t, m2))


def emission_logpdf(dataset: PanelDataset, params: ModelParams, chain: Chain,
                    t: int, k: int) -> float:
    """Gaussian log-density of the observation of `chain` at time t under regime k."""
    _check_regime(k)
    if not 0 <= t < dataset.t_len:
        raise ValueError(f"t out of range: {t}")
    if chain == FIN:
        scale = float(params.tau[k - 1])
        mean = float(params.phi[k - 1] @ dataset.z_fc[t])
        obs = float(dataset.x[t])
    else:
        i = int(chain)
        scale = float(params.sigma[i, k - 1])
        mean = float(params.psi[i, k - 1] @ dataset.z_bc[t, i])
        obs = float(dataset.y[t, i])
    if scale <= 0:
        raise ValueError("emission scale must be positive")
    z = (obs - mean) / scale
    return -_LOG_SQRT_2PI - math.log(scale) - 0.5 * z * z


def _emission_loglik_matrix(dataset: PanelDataset, params: ModelParams, chain: Chain) -> np.ndarray:
    """(T, 2) matrix of per-regime emission log-densities for one chain."""
    if chain == FIN:
        obs = dataset.x
        means = dataset.z_fc @ params.phi.T        # T x 2
        scales = params.tau
    else:
        i = int(chain)
        obs = dataset.y[:, i]
        means = dataset.z_bc[:, i, :] @ params.psi[i].T
        scales = params.sigma[i]
    if np.any(scales <= 0):
        raise ValueError("emission scale must be positive")
    z = (obs[:, None] - means) / scales[None, :]
    return -_LOG_SQRT_2PI - np.log(scales)[None, :] - 0.5 * z * z


def unit_transition_matrices(dataset: PanelDataset, params: ModelParams,
                             states: LatentStates, i: int) -> np.ndarray:
    """(T-1, 2, 2) transition matrices of unit i along the current panel path.

    Entry [t, l-1, k-1] is the probability of moving from regime l at time t
    to regime k at t + 1. The global factor counts unit i itself, so the
    hypothesized origin l contributes to m2.
    """
    t_len, n = states.s_y.shape
    if t_len < 2:
        return np.zeros((0, 2, 2))
    a, b, g = params.interaction_unit[i]
    count2_other = (np.count_nonzero(states.s_y[:-1, :] == 2, axis=1)
                    - (states.s_y[:-1, i] == 2)).astype(float)
    bvec = states.s_x[:-1].astype(float) - 1.0
    out = np.empty((t_len - 1, 2, 2))
    build_trans_unit(params.p_unit[i], a, b, g, bvec, count2_other, n, out)
    return out


def fin_transition_matrices(dataset: PanelDataset, params: ModelParams,
                            states: LatentStates) -> np.ndarray:
    """(T-1, 2, 2) transition matrices of the financial chain along the path.

    The beta term reads the chain's own origin state, so row l uses s_x = l.
    """
    t_len, n = states.s_y.shape
    if t_len < 2:
        return np.zeros((0, 2, 2))
    a, b, g = params.interaction_fin
    m2 = np.count_nonzero(states.s_y[:-1, :] == 2, axis=1) / n
    out = np.empty((t_len - 1, 2, 2))
    build_trans_fin(params.p_fin, a, b, g, m2, out)
    return out


def complete_data_loglik(dataset: PanelDataset, params: ModelParams,
                         states: LatentStates) -> float:
    """Joint log-density of observations and latent trajectories given parameters.

    Emission terms for the active regimes plus the log-probability of every
    realized move from t-1 to t (evaluated with the factor and financial state
    at t-1); the t = 1 term uses the uniform initial distribution.
    """
    t_len, n = dataset.y.shape
    if states.s_y.shape != (t_len, n) or states.s_x.shape != (t_len,):
        raise ValueError("states dimensions do not match the dataset")
    total = (n + 1) * LOG_HALF

    for i in range(n):
        ll = _emission_loglik_matrix(dataset, params, i)
        total += float(np.take_along_axis(ll, states.s_y[:, i][:, None].astype(int) - 1, axis=1).sum())
        if t_len > 1:
            trans = unit_transition_matrices(dataset, params, states, i)
            origins = states.s_y[:-1, i].astype(int) - 1
            dests = states.s_y[1:, i].astype(int) - 1
            total += float(np.log(trans[np.arange(t_len - 1), origins, dests]).sum())

    ll = _emission_loglik_matrix(dataset, params, FIN)
    total += float(np.take_along_axis(ll, states.s_x[:, None].astype(int) - 1, axis=1).sum())
    if t_len > 1:
        trans = fin_transition_matrices(dataset, params, states)
        origins = states.s_x[:-1].astype(int) - 1
        dests = states.s_x[1:].astype(int) - 1
        total += float(np.log(trans[np.arange(t_len - 1), origins, dests]).sum())
    return total
