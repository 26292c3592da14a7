"""Numba kernels for the hot loops of the posterior simulator."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

EPS = 1e-10


@njit(cache=True)
def ffbs_kernel(ell, trans, u, out_states, out_filt):
    """Forward filter + backward sample of a 2-state chain.

    ell: (T, 2) emission log-likelihoods; trans: (T-1, 2, 2) row-stochastic
    transition matrices (entry [t, l, k] moves t -> t+1); u: (T,) uniforms.
    Fills out_states (values 1/2) and out_filt (normalized filtered probs).
    Initial distribution is uniform. Emission weights are exponentiated
    after subtracting the per-time max, and the filter is renormalized at
    every step, so no intermediate can underflow.
    """
    t_len = ell.shape[0]
    m = max(ell[0, 0], ell[0, 1])
    a1 = 0.5 * np.exp(ell[0, 0] - m)
    a2 = 0.5 * np.exp(ell[0, 1] - m)
    s = a1 + a2
    out_filt[0, 0] = a1 / s
    out_filt[0, 1] = a2 / s
    for t in range(1, t_len):
        m = max(ell[t, 0], ell[t, 1])
        e1 = np.exp(ell[t, 0] - m)
        e2 = np.exp(ell[t, 1] - m)
        p1 = out_filt[t - 1, 0]
        p2 = out_filt[t - 1, 1]
        a1 = e1 * (p1 * trans[t - 1, 0, 0] + p2 * trans[t - 1, 1, 0])
        a2 = e2 * (p1 * trans[t - 1, 0, 1] + p2 * trans[t - 1, 1, 1])
        s = a1 + a2
        out_filt[t, 0] = a1 / s
        out_filt[t, 1] = a2 / s
    st = 1 if u[t_len - 1] < out_filt[t_len - 1, 1] else 0
    out_states[t_len - 1] = st + 1
    for t in range(t_len - 2, -1, -1):
        w1 = out_filt[t, 0] * trans[t, 0, st]
        w2 = out_filt[t, 1] * trans[t, 1, st]
        st = 1 if u[t] < w2 / (w1 + w2) else 0
        out_states[t] = st + 1


@njit(cache=True, inline="always")
def _clamp(q):
    if q < EPS:
        return EPS
    if q > 1.0 - EPS:
        return 1.0 - EPS
    return q


@njit(cache=True)
def realized_logprobs_kernel(p, alpha, beta, gamma, origin, dest, b, m2, only_origin):
    """Sum of log clamped-normalized transition probabilities of realized moves.

    p is the 2 x 2 fixed component; only_origin restricts to one origin row
    (0 keeps every transition).
    """
    total = 0.0
    for r in range(origin.shape[0]):
        l = origin[r]
        if only_origin != 0 and l != only_origin:
            continue
        bterm = beta * b[r]
        q1 = _clamp(alpha * p[l - 1, 0] + bterm + gamma * (1.0 - m2[r]))
        q2 = _clamp(alpha * p[l - 1, 1] + bterm + gamma * m2[r])
        chosen = q1 if dest[r] == 1 else q2
        total += math.log(chosen) - math.log(q1 + q2)
    return total


@njit(cache=True)
def build_trans_unit(p, alpha, beta, gamma, b, count2_other, n_units, out):
    """Fill (T-1, 2, 2) transition matrices of a unit chain.

    b is the financial-state term (s_x - 1) at the origin times; count2_other
    counts the other units in regime 2, the hypothesized origin adds itself.
    """
    for t in range(out.shape[0]):
        bterm = beta * b[t]
        for l in range(2):
            m2 = (count2_other[t] + l) / n_units
            q1 = _clamp(alpha * p[l, 0] + bterm + gamma * (1.0 - m2))
            q2 = _clamp(alpha * p[l, 1] + bterm + gamma * m2)
            s = q1 + q2
            out[t, l, 0] = q1 / s
            out[t, l, 1] = q2 / s


@njit(cache=True)
def build_trans_fin(p, alpha, beta, gamma, m2, out):
    """Fill (T-1, 2, 2) transition matrices of the financial chain.

    The beta term reads the hypothesized origin state itself.
    """
    for t in range(out.shape[0]):
        for l in range(2):
            q1 = _clamp(alpha * p[l, 0] + beta * l + gamma * (1.0 - m2[t]))
            q2 = _clamp(alpha * p[l, 1] + beta * l + gamma * m2[t])
            s = q1 + q2
            out[t, l, 0] = q1 / s
            out[t, l, 1] = q2 / s


@njit(cache=True)
def dirichlet3_logpdf_kernel(x0, x1, x2, c0, c1, c2):
    if x0 <= 0.0 or x1 <= 0.0 or x2 <= 0.0:
        return -math.inf
    return ((c0 - 1.0) * math.log(x0) + (c1 - 1.0) * math.log(x1)
            + (c2 - 1.0) * math.log(x2)
            + math.lgamma(c0 + c1 + c2)
            - math.lgamma(c0) - math.lgamma(c1) - math.lgamma(c2))


@njit(cache=True)
def warmup():
    ell = np.zeros((3, 2))
    trans = np.full((2, 2, 2), 0.5)
    u = np.full(3, 0.25)
    states = np.zeros(3, dtype=np.int8)
    filt = np.zeros((3, 2))
    ffbs_kernel(ell, trans, u, states, filt)
    p = np.full((2, 2), 0.5)
    origin = np.ones(2, dtype=np.int64)
    dest = np.ones(2, dtype=np.int64)
    b = np.zeros(2)
    m2 = np.full(2, 0.5)
    acc = realized_logprobs_kernel(p, 1.0, 0.0, 0.0, origin, dest, b, m2, 0)
    out = np.empty((2, 2, 2))
    build_trans_unit(p, 1.0, 0.0, 0.0, b, m2, 2, out)
    build_trans_fin(p, 1.0, 0.0, 0.0, m2, out)
    acc += dirichlet3_logpdf_kernel(0.2, 0.3, 0.5, 1.0, 1.0, 1.0)
    return acc
