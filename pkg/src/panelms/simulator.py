"""Generative simulator for oracle tests and parameter-recovery studies."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import LatentStates, PanelDataset, month_range
from .model import FIN, transition_row
from .params import ModelParams
from .sampler import FIN_LABEL


@dataclass
class CovariateSpec:
    """One non-intercept covariate: constant, Gaussian, or replayed from file."""

    name: str
    kind: str = "gaussian"        # constant | gaussian | file
    value: float = 0.0            # constant value
    mean: float = 0.0             # gaussian mean
    std: float = 1.0              # gaussian std
    path: str | None = None       # file with one value per line (replayed)

    def generate(self, t_len: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "constant":
            return np.full(t_len, self.value)
        if self.kind == "gaussian":
            return self.mean + self.std * rng.standard_normal(t_len)
        if self.kind == "file":
            vals = np.loadtxt(self.path, dtype=float, ndmin=1)
            if len(vals) < t_len:
                raise ValueError(f"covariate file {self.path} shorter than T={t_len}")
            return vals[:t_len]
        raise ValueError(f"unknown covariate kind {self.kind!r}")


@dataclass
class SimSpec:
    """Synthetic panel description: sizes, covariates and true parameters."""

    t_len: int
    n_units: int
    params: ModelParams
    bc_covariates: list[CovariateSpec] = field(default_factory=list)
    fc_covariates: list[CovariateSpec] = field(default_factory=list)
    rng_seed: int = 0
    start: str = "2000-01"
    unit_labels: list[str] | None = None

    def validate(self) -> None:
        if self.t_len < 1 or self.n_units < 1:
            raise ValueError("t_len and n_units must be positive")
        self.params.validate(identified=True)
        if self.params.n_units != self.n_units:
            raise ValueError("params sized for a different number of units")
        if self.params.m_bc != len(self.bc_covariates) + 1:
            raise ValueError("psi width must equal 1 + number of unit covariates")
        if self.params.m_fc != len(self.fc_covariates) + 1:
            raise ValueError("phi width must equal 1 + number of aggregate covariates")
        if self.unit_labels is not None and len(self.unit_labels) != self.n_units:
            raise ValueError("unit_labels length must equal n_units")


def simulate(spec: SimSpec) -> tuple[PanelDataset, LatentStates]:
    """Generate one panel: uniform initial states, then the chain transitions
    (financial first, units next, all reading the states at t - 1) and the
    Gaussian measurement equations."""
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    t_len, n = spec.t_len, spec.n_units
    params = spec.params

    z_bc = np.ones((t_len, n, params.m_bc))
    for j, cov in enumerate(spec.bc_covariates, start=1):
        for i in range(n):
            z_bc[:, i, j] = cov.generate(t_len, rng)
    z_fc = np.ones((t_len, params.m_fc))
    for j, cov in enumerate(spec.fc_covariates, start=1):
        z_fc[:, j] = cov.generate(t_len, rng)

    s_y = np.empty((t_len, n), dtype=np.int8)
    s_x = np.empty(t_len, dtype=np.int8)
    s_y[0] = rng.integers(1, 3, size=n)
    s_x[0] = rng.integers(1, 3)
    for t in range(1, t_len):
        m2 = float(np.count_nonzero(s_y[t - 1] == 2)) / n
        row = transition_row(params, FIN, int(s_x[t - 1]), int(s_x[t - 1]), m2)
        s_x[t] = 1 if rng.random() < row[0] else 2
        for i in range(n):
            row = transition_row(params, i, int(s_y[t - 1, i]), int(s_x[t - 1]), m2)
            s_y[t, i] = 1 if rng.random() < row[0] else 2

    y = np.empty((t_len, n))
    for i in range(n):
        means = np.einsum("tm,km->tk", z_bc[:, i, :], params.psi[i])
        pick = s_y[:, i].astype(int) - 1
        y[:, i] = means[np.arange(t_len), pick] \
            + params.sigma[i, pick] * rng.standard_normal(t_len)
    means = z_fc @ params.phi.T
    pick = s_x.astype(int) - 1
    x = means[np.arange(t_len), pick] + params.tau[pick] * rng.standard_normal(t_len)

    labels = spec.unit_labels or [f"U{i + 1:02d}" for i in range(n)]
    bc_names = ["const"] + [c.name for c in spec.bc_covariates]
    fc_names = ["const"] + [c.name for c in spec.fc_covariates]
    dataset = PanelDataset(y, x, z_bc, z_fc, labels, bc_names, fc_names,
                           month_range(spec.start, t_len))
    return dataset, LatentStates(s_y, s_x)


def default_true_params(n_units: int, m_bc: int = 1, m_fc: int = 1) -> ModelParams:
    """Well-separated, persistent true parameters for demos and recovery runs."""
    psi = np.zeros((n_units, 2, m_bc))
    psi[:, 0, 0] = -0.6
    psi[:, 1, 0] = 0.6
    if m_bc > 1:
        psi[:, 0, 1:] = -0.2
        psi[:, 1, 1:] = 0.3
    phi = np.zeros((2, m_fc))
    phi[0, 0], phi[1, 0] = -0.6, 0.6
    if m_fc > 1:
        phi[0, 1:], phi[1, 1:] = -0.2, 0.3
    p0 = np.array([[0.9, 0.1], [0.15, 0.85]])
    params = ModelParams(
        psi=psi,
        sigma=np.full((n_units, 2), 0.7),
        phi=phi,
        tau=np.full(2, 0.7),
        p_unit=np.tile(p0, (n_units, 1, 1)),
        p_fin=p0.copy(),
        interaction_unit=np.tile([0.9, 0.04, 0.06], (n_units, 1)),
        interaction_fin=np.array([0.9, 0.04, 0.06]),
    )
    params.validate()
    return params


def save_truth(params: ModelParams, states: LatentStates, unit_labels: Sequence[str],
               out_dir: str | Path) -> None:
    """Write true_params.json and true_states.csv next to the dataset files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "true_params.json", "w") as fh:
        json.dump(params.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "true_states.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "t", "regime"])
        t_len = states.s_x.shape[0]
        for i, u in enumerate(unit_labels):
            for t in range(t_len):
                writer.writerow([u, t + 1, int(states.s_y[t, i])])
        for t in range(t_len):
            writer.writerow([FIN_LABEL, t + 1, int(states.s_x[t])])
