"""Model parameters and prior hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

_SIMPLEX_TOL = 1e-8


def _check_simplex(vec: np.ndarray, what: str) -> None:
    if np.any(vec < -_SIMPLEX_TOL) or np.any(vec > 1 + _SIMPLEX_TOL):
        raise ValueError(f"{what}: entries must lie in [0, 1]")
    if abs(float(vec.sum()) - 1.0) > _SIMPLEX_TOL:
        raise ValueError(f"{what}: entries must sum to 1")


@dataclass
class ModelParams:
    """All measurement and transition parameters of the panel model.

    Shapes: psi (N, 2, m), sigma (N, 2), phi (2, m_f), tau (2,),
    p_unit (N, 2, 2) with origin rows on the simplex, p_fin (2, 2),
    interaction_unit (N, 3) triples (alpha, beta, gamma), interaction_fin (3,).
    Regime k is stored at index k - 1.
    """

    psi: np.ndarray
    sigma: np.ndarray
    phi: np.ndarray
    tau: np.ndarray
    p_unit: np.ndarray
    p_fin: np.ndarray
    interaction_unit: np.ndarray
    interaction_fin: np.ndarray

    def __post_init__(self) -> None:
        self.psi = np.asarray(self.psi, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        self.p_unit = np.asarray(self.p_unit, dtype=float)
        self.p_fin = np.asarray(self.p_fin, dtype=float)
        self.interaction_unit = np.asarray(self.interaction_unit, dtype=float)
        self.interaction_fin = np.asarray(self.interaction_fin, dtype=float)

    @property
    def n_units(self) -> int:
        return self.psi.shape[0]

    @property
    def m_bc(self) -> int:
        return self.psi.shape[2]

    @property
    def m_fc(self) -> int:
        return self.phi.shape[1]

    def validate(self, identified: bool = True) -> None:
        n = self.n_units
        if self.psi.ndim != 3 or self.psi.shape[1] != 2:
            raise ValueError("psi must be N x 2 x m")
        if self.sigma.shape != (n, 2) or self.tau.shape != (2,):
            raise ValueError("sigma must be N x 2 and tau length 2")
        if self.phi.ndim != 2 or self.phi.shape[0] != 2:
            raise ValueError("phi must be 2 x m_f")
        if self.p_unit.shape != (n, 2, 2) or self.p_fin.shape != (2, 2):
            raise ValueError("p_unit must be N x 2 x 2 and p_fin 2 x 2")
        if self.interaction_unit.shape != (n, 3) or self.interaction_fin.shape != (3,):
            raise ValueError("interaction_unit must be N x 3 and interaction_fin length 3")
        if np.any(self.sigma <= 0) or np.any(self.tau <= 0):
            raise ValueError("all sigma and tau must be positive")
        for i in range(n):
            for l in range(2):
                _check_simplex(self.p_unit[i, l], f"p_unit[{i}] row {l + 1}")
            _check_simplex(self.interaction_unit[i], f"interaction_unit[{i}]")
            if self.interaction_unit[i, 0] <= 0:
                raise ValueError(f"interaction_unit[{i}]: alpha must be > 0")
        for l in range(2):
            _check_simplex(self.p_fin[l], f"p_fin row {l + 1}")
        _check_simplex(self.interaction_fin, "interaction_fin")
        if self.interaction_fin[0] <= 0:
            raise ValueError("interaction_fin: alpha must be > 0")
        if identified:
            bad = np.where(self.psi[:, 0, 0] > self.psi[:, 1, 0])[0]
            if bad.size:
                raise ValueError(f"identification violated for units {bad.tolist()}")
            if self.phi[0, 0] > self.phi[1, 0]:
                raise ValueError("identification violated for the financial block")

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.psi.copy(), self.sigma.copy(), self.phi.copy(), self.tau.copy(),
            self.p_unit.copy(), self.p_fin.copy(),
            self.interaction_unit.copy(), self.interaction_fin.copy(),
        )

    def swap_unit_regimes(self, i: int) -> None:
        """Relabel regimes 1 and 2 of unit i in place (parameters only)."""
        self.psi[i] = self.psi[i, ::-1]
        self.sigma[i] = self.sigma[i, ::-1]
        self.p_unit[i] = self.p_unit[i, ::-1, ::-1]

    def swap_fin_regimes(self) -> None:
        """Relabel regimes 1 and 2 of the financial block in place."""
        self.phi = self.phi[::-1].copy()
        self.tau = self.tau[::-1].copy()
        self.p_fin = self.p_fin[::-1, ::-1].copy()

    def to_dict(self) -> dict[str, Any]:
        return {
            "psi": self.psi.tolist(),
            "sigma": self.sigma.tolist(),
            "phi": self.phi.tolist(),
            "tau": self.tau.tolist(),
            "p_unit": self.p_unit.tolist(),
            "p_fin": self.p_fin.tolist(),
            "interaction_unit": self.interaction_unit.tolist(),
            "interaction_fin": self.interaction_fin.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelParams":
        return cls(**{k: np.asarray(data[k], dtype=float) for k in (
            "psi", "sigma", "phi", "tau", "p_unit", "p_fin",
            "interaction_unit", "interaction_fin")})


@dataclass
class PriorConfig:
    """Hyperparameters of the conjugate priors and Dirichlet weights.

    Shapes mirror ModelParams: psi_mean (N, 2, m), psi_cov (N, 2, m, m),
    phi_mean (2, m_f), phi_cov (2, m_f, m_f), IG shape/rate pairs for the
    scales, Dirichlet weights delta_* for transition rows and phi_weights_*
    for the interaction triples.
    """

    psi_mean: np.ndarray
    psi_cov: np.ndarray
    phi_mean: np.ndarray
    phi_cov: np.ndarray
    sigma_shape: np.ndarray
    sigma_rate: np.ndarray
    tau_shape: np.ndarray
    tau_rate: np.ndarray
    delta_unit: np.ndarray
    delta_fin: np.ndarray
    phi_weights_unit: np.ndarray
    phi_weights_fin: np.ndarray

    def __post_init__(self) -> None:
        for name in ("psi_mean", "psi_cov", "phi_mean", "phi_cov", "sigma_shape",
                     "sigma_rate", "tau_shape", "tau_rate", "delta_unit",
                     "delta_fin", "phi_weights_unit", "phi_weights_fin"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    def validate(self) -> None:
        n, _, m = self.psi_mean.shape
        if self.psi_cov.shape != (n, 2, m, m):
            raise ValueError("psi_cov must be N x 2 x m x m")
        m_f = self.phi_mean.shape[1]
        if self.phi_mean.shape != (2, m_f) or self.phi_cov.shape != (2, m_f, m_f):
            raise ValueError("phi_mean/phi_cov shapes inconsistent")
        for name in ("sigma_shape", "sigma_rate"):
            if getattr(self, name).shape != (n, 2):
                raise ValueError(f"{name} must be N x 2")
        for name in ("tau_shape", "tau_rate"):
            if getattr(self, name).shape != (2,):
                raise ValueError(f"{name} must have length 2")
        if self.delta_unit.shape != (n, 2) or self.delta_fin.shape != (2,):
            raise ValueError("delta_unit must be N x 2 and delta_fin length 2")
        if self.phi_weights_unit.shape != (n, 3) or self.phi_weights_fin.shape != (3,):
            raise ValueError("phi_weights_unit must be N x 3 and phi_weights_fin length 3")
        for name in ("sigma_shape", "sigma_rate", "tau_shape", "tau_rate",
                     "delta_unit", "delta_fin", "phi_weights_unit", "phi_weights_fin"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"{name}: all hyperparameters must be > 0")
        for block in (self.psi_cov.reshape(-1, m, m), self.phi_cov):
            for cov in block:
                if not np.allclose(cov, cov.T):
                    raise ValueError("prior covariance blocks must be symmetric")
                try:
                    np.linalg.cholesky(cov)
                except np.linalg.LinAlgError:
                    raise ValueError("prior covariance blocks must be positive definite") from None

    def to_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name).tolist() for name in (
            "psi_mean", "psi_cov", "phi_mean", "phi_cov", "sigma_shape",
            "sigma_rate", "tau_shape", "tau_rate", "delta_unit", "delta_fin",
            "phi_weights_unit", "phi_weights_fin")}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PriorConfig":
        return cls(**{k: np.asarray(v, dtype=float) for k, v in data.items()})


def default_prior(
    n_units: int,
    m_bc: int,
    m_fc: int,
    *,
    coef_mean: float = 0.0,
    coef_var: float = 100.0,
    ig_shape: float = 2.5,
    ig_rate: float = 0.5,
    delta: tuple[float, float] = (1.0, 1.0),
    phi_weights: tuple[float, float, float] = (8.0, 1.0, 1.0),
) -> PriorConfig:
    """Weakly informative defaults used when no hyperparameters are supplied."""
    prior = PriorConfig(
        psi_mean=np.full((n_units, 2, m_bc), coef_mean),
        psi_cov=np.tile(np.eye(m_bc) * coef_var, (n_units, 2, 1, 1)),
        phi_mean=np.full((2, m_fc), coef_mean),
        phi_cov=np.tile(np.eye(m_fc) * coef_var, (2, 1, 1)),
        sigma_shape=np.full((n_units, 2), ig_shape),
        sigma_rate=np.full((n_units, 2), ig_rate),
        tau_shape=np.full(2, ig_shape),
        tau_rate=np.full(2, ig_rate),
        delta_unit=np.tile(np.asarray(delta, dtype=float), (n_units, 1)),
        delta_fin=np.asarray(delta, dtype=float),
        phi_weights_unit=np.tile(np.asarray(phi_weights, dtype=float), (n_units, 1)),
        phi_weights_fin=np.asarray(phi_weights, dtype=float),
    )
    prior.validate()
    return prior
