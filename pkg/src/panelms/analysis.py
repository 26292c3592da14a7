"""Post-processing of posterior draws: summaries, cycle extraction,
synchronization matrices and Bayes-factor model comparison."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .sampler import FIN_LABEL, PosteriorDraws, load_archive


def concordance(s_a: np.ndarray, s_b: np.ndarray) -> float:
    """Fraction of time two regime paths agree:
    (1/T) [sum (s_a-1)(s_b-1) + sum (2-s_a)(2-s_b)]."""
    a = np.asarray(s_a, dtype=float)
    b = np.asarray(s_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("state vectors must be non-empty and of equal length")
    for v in (a, b):
        if not np.all((v == 1) | (v == 2)):
            raise ValueError("states must be 1 or 2")
    return float(np.mean((a - 1.0) * (b - 1.0) + (2.0 - a) * (2.0 - b)))


@dataclass
class PosteriorSummary:
    """Parameter moments/quantiles and per-chain cycle point estimates."""

    names: list[str]
    mean: np.ndarray
    q025: np.ndarray
    q975: np.ndarray
    chain_labels: list[str]
    p_expansion: np.ndarray     # T x (N + 1)
    map_states: np.ndarray      # T x (N + 1), values 1/2
    dates: np.ndarray


def summarize(draws: PosteriorDraws) -> PosteriorSummary:
    """Empirical means, central 95% intervals and cycle point estimates.

    The per-time state point estimate is the posterior mode, which for two
    regimes coincides with thresholding the expansion probability at 0.5.
    """
    if draws.n_retained == 0:
        raise ValueError("no retained draws to summarize")
    samples = draws.param_samples()
    names = list(samples.keys())
    values = np.column_stack([samples[n] for n in names])
    mean = values.mean(axis=0)
    q025 = np.quantile(values, 0.025, axis=0)
    q975 = np.quantile(values, 0.975, axis=0)
    state = draws.state_array()
    p_exp = (state == 2).mean(axis=0)
    map_states = np.where(p_exp >= 0.5, 2, 1).astype(np.int8)
    return PosteriorSummary(
        names=names, mean=mean, q025=q025, q975=q975,
        chain_labels=list(draws.unit_labels) + [FIN_LABEL],
        p_expansion=p_exp, map_states=map_states, dates=draws.dates())


def concordance_matrix(draws: PosteriorDraws) -> tuple[np.ndarray, list[str]]:
    """Pairwise concordance of the MAP cycle paths; financial chain last."""
    summary = summarize(draws)
    paths = summary.map_states
    n_chains = paths.shape[1]
    mat = np.empty((n_chains, n_chains))
    for a in range(n_chains):
        mat[a, a] = 1.0
        for b in range(a + 1, n_chains):
            ci = concordance(paths[:, a], paths[:, b])
            mat[a, b] = ci
            mat[b, a] = ci
    return mat, summary.chain_labels


# ---------------------------------------------------------------------------
# reverse-logistic Bayes factors


@dataclass
class BayesFactorResult:
    """Fitted log Bayes factor of the first model over the second."""

    log_bf: float
    converged: bool
    separated: bool
    iterations: int
    slope: float


def _logistic_irls(x: np.ndarray, y: np.ndarray, tol: float = 1e-8,
                   max_iter: int = 100) -> tuple[float, float, bool, int]:
    """Intercept/slope of a univariate logistic regression via IRLS.

    x is standardized internally; returned coefficients are on the raw scale.
    """
    mu_x = float(x.mean())
    sd_x = float(x.std())
    if sd_x == 0:
        return 0.0, 0.0, True, 0
    xs = (x - mu_x) / sd_x
    design = np.column_stack([np.ones_like(xs), xs])
    coef = np.zeros(2)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        eta = design @ coef
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        z = eta + (y - mu) / w
        wd = design * w[:, None]
        try:
            new_coef = np.linalg.solve(design.T @ wd, wd.T @ z)
        except np.linalg.LinAlgError:
            break
        step = float(np.max(np.abs(new_coef - coef)))
        coef = new_coef
        if step < tol:
            converged = True
            break
    alpha_s, beta_s = float(coef[0]), float(coef[1])
    beta = beta_s / sd_x
    alpha = alpha_s - beta * mu_x
    return alpha, beta, converged, iterations


def _first_is_canonical(a: np.ndarray, b: np.ndarray) -> bool:
    """Deterministic ordering of the two samples, used to make the estimate
    exactly antisymmetric under argument exchange."""
    if len(a) != len(b):
        return len(a) < len(b)
    for va, vb in zip(a, b):
        if va != vb:
            return bool(va < vb)
    return True


def log_bayes_factor(loglik_j: np.ndarray, loglik_k: np.ndarray) -> BayesFactorResult:
    """Estimate log B(j, k) from per-draw log-likelihoods of two model runs.

    Pools the two samples with binary labels and fits the logistic model
    log odds = alpha + beta * loglik by IRLS (tol 1e-8, max 100 iterations);
    the intercept is the log-Bayes-factor estimate in favor of the first
    model. Non-convergence and perfect separation are flagged, not raised.
    """
    lj = np.asarray(loglik_j, dtype=float)
    lk = np.asarray(loglik_k, dtype=float)
    if lj.size == 0 or lk.size == 0:
        raise ValueError("both log-likelihood samples must be non-empty")
    if not (np.all(np.isfinite(lj)) and np.all(np.isfinite(lk))):
        raise ValueError("log-likelihood samples must be finite")
    flip = not _first_is_canonical(lj, lk)
    first, second = (lk, lj) if flip else (lj, lk)
    separated = float(first.max()) < float(second.min()) or float(second.max()) < float(first.min())
    x = np.concatenate([first, second])
    y = np.concatenate([np.ones(len(first)), np.zeros(len(second))])
    alpha, beta, converged, iterations = _logistic_irls(x, y)
    if separated:
        converged = False
    log_bf = -alpha if flip else alpha
    slope = -beta if flip else beta
    return BayesFactorResult(log_bf=log_bf, converged=converged,
                             separated=separated, iterations=iterations, slope=slope)


def compare_models(logliks: Sequence[np.ndarray]) -> np.ndarray:
    """Pairwise log-Bayes-factor matrix: entry [j, k] favors model j over k.

    Antisymmetric with a zero diagonal by construction; each unordered pair is
    fitted once and mirrored with a sign flip.
    """
    n = len(logliks)
    if n < 2:
        raise ValueError("need at least two models to compare")
    mat = np.zeros((n, n))
    for j in range(n):
        for k in range(j + 1, n):
            result = log_bayes_factor(logliks[j], logliks[k])
            mat[j, k] = result.log_bf
            mat[k, j] = -result.log_bf
    return mat


def compare_model_runs(run_dirs: Sequence[str | Path]) -> tuple[np.ndarray, list[str]]:
    """compare_models over archive directories; fingerprints must agree."""
    if len(run_dirs) < 2:
        raise ValueError("need at least two run directories")
    names, logliks, fingerprints = [], [], []
    for d in run_dirs:
        draws = load_archive(d)
        names.append(Path(d).name)
        logliks.append(draws.logliks())
        fingerprints.append(draws.dataset_fingerprint)
    if len(set(fingerprints)) != 1:
        raise ValueError("runs were estimated on different datasets (fingerprint mismatch)")
    return compare_models(logliks), names


# ---------------------------------------------------------------------------
# CSV writers


def write_summary_csv(summary: PosteriorSummary, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "mean", "q025", "q975"])
        for idx, name in enumerate(summary.names):
            writer.writerow([name, repr(float(summary.mean[idx])),
                             repr(float(summary.q025[idx])), repr(float(summary.q975[idx]))])


def write_cycles_csv(summary: PosteriorSummary, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "chain", "p_expansion", "map_state"])
        for c_idx, chain in enumerate(summary.chain_labels):
            for t in range(len(summary.dates)):
                writer.writerow([str(summary.dates[t]), chain,
                                 repr(float(summary.p_expansion[t, c_idx])),
                                 int(summary.map_states[t, c_idx])])


def write_matrix_csv(mat: np.ndarray, labels: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(labels))
        for idx, label in enumerate(labels):
            writer.writerow([label] + [repr(float(v)) for v in mat[idx]])
