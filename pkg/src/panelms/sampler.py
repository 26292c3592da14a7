"""Posterior simulator: the seven-step Gibbs sweep, chain storage and archives.

The sweep order follows the sampling scheme: latent trajectories (units, then
the financial chain), interaction triples, fixed transition rows, regression
coefficients, scales, and finally the identification step that relabels any
chain whose regime-1 intercept exceeds its regime-2 intercept.
"""

from __future__ import annotations

import csv
import json
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import streams
from .dataset import LatentStates, PanelDataset, month_range
from .ffbs import ffbs_financial, ffbs_unit
from .model import FIN, complete_data_loglik
from .moves import (
    draw_phi,
    draw_psi,
    draw_sigma,
    draw_tau,
    mh_interaction,
    mh_interaction_local,
    mh_transition_row,
    transition_stats,
)
from .params import ModelParams, PriorConfig, default_prior

FIN_LABEL = "financial"


@dataclass
class McmcConfig:
    """Run controls. Defaults retain (22000 - 2000) / 10 = 2000 draws."""

    total_iterations: int = 22000
    burn_in: int = 2000
    thin: int = 10
    rng_seed: int = 0
    mh_dirichlet_mixture_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    init_strategy: str = "quantile"

    def validate(self) -> None:
        if self.total_iterations <= 0 or self.thin < 1 or self.burn_in < 0:
            raise ValueError("iterations must be positive, thin >= 1, burn_in >= 0")
        if self.burn_in >= self.total_iterations:
            raise ValueError("burn_in must be smaller than total_iterations")
        if (self.total_iterations - self.burn_in) // self.thin < 1:
            raise ValueError("no draws would be retained")
        w = np.asarray(self.mh_dirichlet_mixture_weights, dtype=float)
        if w.shape != (3,) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-8:
            raise ValueError("mixture weights must be three positive numbers summing to 1")
        if self.init_strategy not in ("quantile", "prior"):
            raise ValueError(f"unknown init_strategy {self.init_strategy!r}")

    @property
    def retained_count(self) -> int:
        return (self.total_iterations - self.burn_in) // self.thin

    def to_dict(self) -> dict:
        return {
            "total_iterations": self.total_iterations,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "rng_seed": self.rng_seed,
            "mh_dirichlet_mixture_weights": list(self.mh_dirichlet_mixture_weights),
            "init_strategy": self.init_strategy,
        }


@dataclass
class DrawRecord:
    iteration: int
    params: ModelParams
    states: LatentStates
    loglik: float


@dataclass
class PosteriorDraws:
    """Thinned chain storage plus run metadata."""

    records: list[DrawRecord]
    config: McmcConfig
    dataset_fingerprint: str
    unit_labels: list[str]
    bc_names: list[str]
    fc_names: list[str]
    start: str
    t_len: int
    complete: bool = True
    wall_time_s: float = 0.0

    @property
    def n_retained(self) -> int:
        return len(self.records)

    def logliks(self) -> np.ndarray:
        return np.array([r.loglik for r in self.records])

    def param_names(self) -> list[str]:
        return [name for name, _ in _scalar_params(self.records[0].params, self.unit_labels)]

    def param_samples(self) -> dict[str, np.ndarray]:
        names = self.param_names()
        out = {name: np.empty(self.n_retained) for name in names}
        for r_idx, rec in enumerate(self.records):
            for name, value in _scalar_params(rec.params, self.unit_labels):
                out[name][r_idx] = value
        return out

    def state_array(self) -> np.ndarray:
        """(draws, T, N + 1) regimes; the financial chain is the last column."""
        out = np.empty((self.n_retained, self.t_len, len(self.unit_labels) + 1), dtype=np.int8)
        for r_idx, rec in enumerate(self.records):
            out[r_idx, :, :-1] = rec.states.s_y
            out[r_idx, :, -1] = rec.states.s_x
        return out

    def dates(self) -> np.ndarray:
        return month_range(self.start, self.t_len)


def _scalar_params(params: ModelParams, unit_labels: list[str]):
    """Deterministic (name, value) enumeration of every scalar parameter."""
    for i, u in enumerate(unit_labels):
        for k in (1, 2):
            for j in range(params.m_bc):
                yield f"psi[{u},{k},{j}]", float(params.psi[i, k - 1, j])
    for i, u in enumerate(unit_labels):
        for k in (1, 2):
            yield f"sigma[{u},{k}]", float(params.sigma[i, k - 1])
    for k in (1, 2):
        for j in range(params.m_fc):
            yield f"phi[{k},{j}]", float(params.phi[k - 1, j])
    for k in (1, 2):
        yield f"tau[{k}]", float(params.tau[k - 1])
    for i, u in enumerate(unit_labels):
        for l in (1, 2):
            for k in (1, 2):
                yield f"p[{u},{l},{k}]", float(params.p_unit[i, l - 1, k - 1])
    for l in (1, 2):
        for k in (1, 2):
            yield f"p_fin[{l},{k}]", float(params.p_fin[l - 1, k - 1])
    for i, u in enumerate(unit_labels):
        yield f"alpha[{u}]", float(params.interaction_unit[i, 0])
        yield f"beta[{u}]", float(params.interaction_unit[i, 1])
        yield f"gamma[{u}]", float(params.interaction_unit[i, 2])
    yield "alpha_fin", float(params.interaction_fin[0])
    yield "beta_fin", float(params.interaction_fin[1])
    yield "gamma_fin", float(params.interaction_fin[2])


def initial_state(dataset: PanelDataset, prior: PriorConfig,
                  config: McmcConfig) -> tuple[ModelParams, LatentStates]:
    """Deterministic data-based initialization (or a prior draw)."""
    n, m, m_f = dataset.n_units, dataset.m_bc, dataset.m_fc
    if config.init_strategy == "prior":
        rng = streams.stream(config.rng_seed, 0, streams.STEP_INIT, 0)
        params = draw_params_from_prior(prior, rng)
        s_y = rng.integers(1, 3, size=(dataset.t_len, n)).astype(np.int8)
        s_x = rng.integers(1, 3, size=dataset.t_len).astype(np.int8)
        states = LatentStates(s_y, s_x)
        _apply_identification(params, states)
        return params, states

    psi = np.zeros((n, 2, m))
    sigma = np.empty((n, 2))
    for i in range(n):
        q25, q75 = np.percentile(dataset.y[:, i], [25.0, 75.0])
        psi[i, 0, 0] = q25
        psi[i, 1, 0] = q75
        sd = float(np.std(dataset.y[:, i]))
        sigma[i, :] = sd if sd > 0 else 1.0
    phi = np.zeros((2, m_f))
    phi[0, 0], phi[1, 0] = np.percentile(dataset.x, [25.0, 75.0])
    sd = float(np.std(dataset.x))
    tau = np.full(2, sd if sd > 0 else 1.0)
    p0 = np.array([[0.9, 0.1], [0.1, 0.9]])
    params = ModelParams(
        psi=psi, sigma=sigma, phi=phi, tau=tau,
        p_unit=np.tile(p0, (n, 1, 1)), p_fin=p0.copy(),
        interaction_unit=np.tile([0.95, 0.02, 0.03], (n, 1)),
        interaction_fin=np.array([0.95, 0.02, 0.03]),
    )
    s_y = np.where(dataset.y >= np.median(dataset.y, axis=0), 2, 1).astype(np.int8)
    s_x = np.where(dataset.x >= np.median(dataset.x), 2, 1).astype(np.int8)
    params.validate()
    return params, LatentStates(s_y, s_x)


def draw_params_from_prior(prior: PriorConfig, rng: np.random.Generator) -> ModelParams:
    """One joint draw from the prior (before identification ordering)."""
    n, _, m = prior.psi_mean.shape
    m_f = prior.phi_mean.shape[1]
    psi = np.empty((n, 2, m))
    sigma = np.empty((n, 2))
    p_unit = np.empty((n, 2, 2))
    inter_unit = np.empty((n, 3))
    for i in range(n):
        for l in range(2):
            psi[i, l] = rng.multivariate_normal(prior.psi_mean[i, l], prior.psi_cov[i, l],
                                                method="cholesky")
            sigma[i, l] = np.sqrt(1.0 / rng.gamma(prior.sigma_shape[i, l],
                                                  1.0 / prior.sigma_rate[i, l]))
            row1 = rng.beta(prior.delta_unit[i, 0], prior.delta_unit[i, 1])
            p_unit[i, l] = (row1, 1.0 - row1)
        inter_unit[i] = rng.dirichlet(prior.phi_weights_unit[i])
    phi = np.empty((2, m_f))
    tau = np.empty(2)
    p_fin = np.empty((2, 2))
    for l in range(2):
        phi[l] = rng.multivariate_normal(prior.phi_mean[l], prior.phi_cov[l], method="cholesky")
        tau[l] = np.sqrt(1.0 / rng.gamma(prior.tau_shape[l], 1.0 / prior.tau_rate[l]))
        row1 = rng.beta(prior.delta_fin[0], prior.delta_fin[1])
        p_fin[l] = (row1, 1.0 - row1)
    inter_fin = rng.dirichlet(prior.phi_weights_fin)
    return ModelParams(psi, sigma, phi, tau, p_unit, p_fin, inter_unit, inter_fin)


def _apply_identification(params: ModelParams, states: LatentStates) -> None:
    """Relabel any chain with a violated intercept ordering, in place."""
    for i in range(params.n_units):
        if params.psi[i, 0, 0] > params.psi[i, 1, 0]:
            params.swap_unit_regimes(i)
            states.s_y[:, i] = 3 - states.s_y[:, i]
    if params.phi[0, 0] > params.phi[1, 0]:
        params.swap_fin_regimes()
        states.s_x = (3 - states.s_x).astype(np.int8)


def gibbs_sweep(dataset: PanelDataset, params: ModelParams, states: LatentStates,
                prior: PriorConfig, config: McmcConfig,
                iteration: int) -> tuple[ModelParams, LatentStates]:
    """One full sweep; inputs are left untouched and fresh objects returned."""
    n = dataset.n_units
    seed = config.rng_seed
    params = params.copy()
    states = states.copy()
    mixture_w = np.asarray(config.mh_dirichlet_mixture_weights, dtype=float)

    # 1. latent trajectories: units in order, then the financial chain
    for i in range(n):
        rng = streams.stream(seed, iteration, streams.STEP_FFBS, i)
        states.s_y[:, i] = ffbs_unit(dataset, params, states, i, rng)
    rng = streams.stream(seed, iteration, streams.STEP_FFBS, n)
    states.s_x = ffbs_financial(dataset, params, states, rng)

    stats_unit = [transition_stats(states, i) for i in range(n)]
    stats_fin = transition_stats(states, FIN)

    # 2-3. interaction triples: the stated vertex-mixture move, then a local
    # refinement move against the same conditional (the former alone stalls
    # once the dataset is long because its proposals sit at the vertices)
    for i in range(n):
        rng = streams.stream(seed, iteration, streams.STEP_INTERACTION, i)
        triple, _ = mh_interaction(
            params.interaction_unit[i], stats_unit[i], params.p_unit[i],
            prior.phi_weights_unit[i], dataset.t_len, mixture_w, rng)
        params.interaction_unit[i], _ = mh_interaction_local(
            triple, stats_unit[i], params.p_unit[i], prior.phi_weights_unit[i], rng)
    rng = streams.stream(seed, iteration, streams.STEP_INTERACTION_FIN, n)
    triple, _ = mh_interaction(
        params.interaction_fin, stats_fin, params.p_fin,
        prior.phi_weights_fin, dataset.t_len, mixture_w, rng)
    params.interaction_fin, _ = mh_interaction_local(
        triple, stats_fin, params.p_fin, prior.phi_weights_fin, rng)

    # 4-5. fixed transition rows
    for i in range(n):
        rng = streams.stream(seed, iteration, streams.STEP_TRANSPROB, i)
        for l in (1, 2):
            params.p_unit[i, l - 1], _ = mh_transition_row(
                params.p_unit[i, l - 1], stats_unit[i], params.interaction_unit[i],
                prior.delta_unit[i], l, rng)
    rng = streams.stream(seed, iteration, streams.STEP_TRANSPROB_FIN, n)
    for l in (1, 2):
        params.p_fin[l - 1], _ = mh_transition_row(
            params.p_fin[l - 1], stats_fin, params.interaction_fin,
            prior.delta_fin, l, rng)

    # 6. regression coefficients
    for i in range(n):
        rng = streams.stream(seed, iteration, streams.STEP_COEF, i)
        for k in (1, 2):
            params.psi[i, k - 1] = draw_psi(dataset, states, params.sigma, prior, i, k, rng)
    rng = streams.stream(seed, iteration, streams.STEP_COEF, n)
    for k in (1, 2):
        params.phi[k - 1] = draw_phi(dataset, states, params.tau, prior, k, rng)

    # 7. scales
    for i in range(n):
        rng = streams.stream(seed, iteration, streams.STEP_SCALE, i)
        for k in (1, 2):
            params.sigma[i, k - 1] = draw_sigma(dataset, states, params.psi, prior, i, k, rng)
    rng = streams.stream(seed, iteration, streams.STEP_SCALE, n)
    for k in (1, 2):
        params.tau[k - 1] = draw_tau(dataset, states, params.phi, prior, k, rng)

    _apply_identification(params, states)
    return params, states


def run(dataset: PanelDataset, prior: PriorConfig | None = None,
        config: McmcConfig | None = None,
        progress: Callable[[int], None] | None = None) -> PosteriorDraws:
    """Execute the configured number of sweeps and keep the thinned tail.

    A KeyboardInterrupt (also if raised by `progress`) stops the run early and
    returns the valid partial archive flagged incomplete.
    """
    config = config or McmcConfig()
    config.validate()
    if prior is None:
        prior = default_prior(dataset.n_units, dataset.m_bc, dataset.m_fc)
    prior.validate()
    _check_prior_dims(prior, dataset)

    t0 = time.perf_counter()
    params, states = initial_state(dataset, prior, config)
    records: list[DrawRecord] = []
    complete = True
    try:
        for iteration in range(1, config.total_iterations + 1):
            params, states = gibbs_sweep(dataset, params, states, prior, config, iteration)
            if iteration > config.burn_in and (iteration - config.burn_in) % config.thin == 0:
                ll = complete_data_loglik(dataset, params, states)
                if not np.isfinite(ll):
                    raise FloatingPointError(f"non-finite log-likelihood at iteration {iteration}")
                records.append(DrawRecord(iteration, params.copy(), states.copy(), ll))
            if progress is not None:
                progress(iteration)
    except KeyboardInterrupt:
        complete = False
    return PosteriorDraws(
        records=records,
        config=config,
        dataset_fingerprint=dataset.fingerprint(),
        unit_labels=list(dataset.unit_labels),
        bc_names=list(dataset.bc_names),
        fc_names=list(dataset.fc_names),
        start=str(dataset.dates[0]),
        t_len=dataset.t_len,
        complete=complete,
        wall_time_s=time.perf_counter() - t0,
    )


def _check_prior_dims(prior: PriorConfig, dataset: PanelDataset) -> None:
    if prior.psi_mean.shape != (dataset.n_units, 2, dataset.m_bc):
        raise ValueError("prior psi block does not match the dataset dimensions")
    if prior.phi_mean.shape != (2, dataset.m_fc):
        raise ValueError("prior phi block does not match the dataset dimensions")


# ---------------------------------------------------------------------------
# archive serialization


def save_archive(draws: PosteriorDraws, out_dir: str | Path) -> Path:
    """Write draws.csv, states.csv and meta.json under `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "draws.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "name", "value"])
        for rec in draws.records:
            for name, value in _scalar_params(rec.params, draws.unit_labels):
                writer.writerow([rec.iteration, name, repr(value)])
            writer.writerow([rec.iteration, "loglik", repr(rec.loglik)])
    with open(out / "states.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "chain", "t", "regime"])
        for rec in draws.records:
            for i, u in enumerate(draws.unit_labels):
                col = rec.states.s_y[:, i]
                for t in range(draws.t_len):
                    writer.writerow([rec.iteration, u, t + 1, int(col[t])])
            for t in range(draws.t_len):
                writer.writerow([rec.iteration, FIN_LABEL, t + 1, int(rec.states.s_x[t])])
    meta = {
        "complete": draws.complete,
        "config": draws.config.to_dict(),
        "dataset_fingerprint": draws.dataset_fingerprint,
        "n_retained": draws.n_retained,
        "start": draws.start,
        "t_len": draws.t_len,
        "unit_labels": draws.unit_labels,
        "bc_names": draws.bc_names,
        "fc_names": draws.fc_names,
        "wall_time_s": draws.wall_time_s,
        "version": "0.1.0",
    }
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


_NAME_RE = re.compile(r"^(\w+)\[([^\]]*)\]$")


def load_archive(path: str | Path) -> PosteriorDraws:
    """Rebuild a PosteriorDraws from an archive directory."""
    p = Path(path)
    with open(p / "meta.json") as fh:
        meta = json.load(fh)
    units = list(meta["unit_labels"])
    unit_idx = {u: i for i, u in enumerate(units)}
    m_bc, m_fc = len(meta["bc_names"]), len(meta["fc_names"])
    t_len, n = meta["t_len"], len(units)

    per_iter: dict[int, dict[str, float]] = {}
    order: list[int] = []
    with open(p / "draws.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for it_s, name, value in reader:
            it = int(it_s)
            if it not in per_iter:
                per_iter[it] = {}
                order.append(it)
            per_iter[it][name] = float(value)

    states_per_iter: dict[int, LatentStates] = {
        it: LatentStates(np.ones((t_len, n), dtype=np.int8), np.ones(t_len, dtype=np.int8))
        for it in order
    }
    with open(p / "states.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for it_s, chain, t_s, regime in reader:
            st = states_per_iter[int(it_s)]
            t = int(t_s) - 1
            if chain == FIN_LABEL:
                st.s_x[t] = int(regime)
            else:
                st.s_y[t, unit_idx[chain]] = int(regime)

    records = []
    for it in order:
        vals = per_iter[it]
        params = _params_from_values(vals, units, m_bc, m_fc)
        records.append(DrawRecord(it, params, states_per_iter[it], vals["loglik"]))
    cfg = meta["config"]
    config = McmcConfig(
        total_iterations=cfg["total_iterations"], burn_in=cfg["burn_in"], thin=cfg["thin"],
        rng_seed=cfg["rng_seed"],
        mh_dirichlet_mixture_weights=tuple(cfg["mh_dirichlet_mixture_weights"]),
        init_strategy=cfg["init_strategy"])
    return PosteriorDraws(
        records=records, config=config,
        dataset_fingerprint=meta["dataset_fingerprint"],
        unit_labels=units, bc_names=list(meta["bc_names"]), fc_names=list(meta["fc_names"]),
        start=meta["start"], t_len=t_len,
        complete=meta["complete"], wall_time_s=meta["wall_time_s"])


def _params_from_values(vals: dict[str, float], units: list[str],
                        m_bc: int, m_fc: int) -> ModelParams:
    n = len(units)
    params = ModelParams(
        psi=np.zeros((n, 2, m_bc)), sigma=np.ones((n, 2)),
        phi=np.zeros((2, m_fc)), tau=np.ones(2),
        p_unit=np.full((n, 2, 2), 0.5), p_fin=np.full((2, 2), 0.5),
        interaction_unit=np.tile([1.0, 0.0, 0.0], (n, 1)),
        interaction_fin=np.array([1.0, 0.0, 0.0]))
    for i, u in enumerate(units):
        for k in (1, 2):
            for j in range(m_bc):
                params.psi[i, k - 1, j] = vals[f"psi[{u},{k},{j}]"]
            params.sigma[i, k - 1] = vals[f"sigma[{u},{k}]"]
        for l in (1, 2):
            for k in (1, 2):
                params.p_unit[i, l - 1, k - 1] = vals[f"p[{u},{l},{k}]"]
        params.interaction_unit[i] = [vals[f"alpha[{u}]"], vals[f"beta[{u}]"], vals[f"gamma[{u}]"]]
    for k in (1, 2):
        for j in range(m_fc):
            params.phi[k - 1, j] = vals[f"phi[{k},{j}]"]
        params.tau[k - 1] = vals[f"tau[{k}]"]
    for l in (1, 2):
        for k in (1, 2):
            params.p_fin[l - 1, k - 1] = vals[f"p_fin[{l},{k}]"]
    params.interaction_fin = np.array([vals["alpha_fin"], vals["beta_fin"], vals["gamma_fin"]])
    return params


def scan_archive_identification(path: str | Path) -> int:
    """Count identification violations (intercept ordering) in an archive."""
    p = Path(path)
    with open(p / "meta.json") as fh:
        meta = json.load(fh)
    units = list(meta["unit_labels"])
    violations = 0
    lows: dict[tuple[int, str], float] = {}
    with open(p / "draws.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for it_s, name, value in reader:
            m = _NAME_RE.match(name)
            if not m or m.group(1) not in ("psi", "phi"):
                continue
            fields = m.group(2).split(",")
            if m.group(1) == "psi":
                u, k, j = fields[0], int(fields[1]), int(fields[2])
                if j != 0:
                    continue
                key = (int(it_s), u)
            else:
                k, j = int(fields[0]), int(fields[1])
                if j != 0:
                    continue
                key = (int(it_s), FIN_LABEL)
            if k == 1:
                lows[key] = float(value)
            elif float(value) < lows.get(key, -np.inf):
                violations += 1
    return violations
