"""Raw series preparation: growth rates, temporal disaggregation, drought-index
transforms, backcasting and panel assembly."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import ndtr

from .dataset import MonthlySeries, PanelDataset, QuarterlySeries, parse_months

RHO_GRID = np.round(np.arange(0.0, 1.0, 0.01), 2)


def growth_rate(series: MonthlySeries) -> MonthlySeries:
    """Percentage change on the previous month; drops the first observation."""
    v = series.values
    if len(v) < 2:
        raise ValueError("growth_rate needs at least two observations")
    if np.any(v[:-1] == 0):
        raise ValueError("growth_rate undefined where the previous level is zero")
    return MonthlySeries(series.dates[1:], 100.0 * (v[1:] - v[:-1]) / v[:-1])


# ---------------------------------------------------------------------------
# Chow-Lin temporal disaggregation


def _aggregation_matrix(n_quarters: int, aggregation: str) -> np.ndarray:
    c = np.zeros((n_quarters, 3 * n_quarters))
    weight = 1.0 if aggregation == "sum" else 1.0 / 3.0
    for q in range(n_quarters):
        c[q, 3 * q:3 * q + 3] = weight
    return c


def _ar1_cov(n: int, rho: float) -> np.ndarray:
    idx = np.arange(n)
    return rho ** np.abs(np.subtract.outer(idx, idx)) / (1.0 - rho**2)


def chow_lin(target: QuarterlySeries, indicators: Sequence[MonthlySeries],
             aggregation: str = "average", rho: float | None = None) -> MonthlySeries:
    """Distribute a quarterly series to monthly frequency using indicator series.

    GLS regression of the quarterly target on quarterly-aggregated indicators
    with AR(1) monthly residuals; rho is chosen by maximum likelihood over the
    grid 0.00..0.99 unless forced. The quarterly aggregation of the output
    reproduces the target by construction.
    """
    if aggregation not in ("sum", "average"):
        raise ValueError("aggregation must be 'sum' or 'average'")
    if not indicators:
        raise ValueError("at least one indicator series is required")
    n_q = len(target)
    if n_q < 2:
        raise ValueError("need at least two quarters")
    months = target.dates[0] + np.arange(3 * n_q)

    z_cols = []
    for ind in indicators:
        start = int(months[0] - ind.dates[0])
        if start < 0 or int(ind.dates[-1] - months[-1]) < 0:
            raise ValueError("indicator span does not cover the target span")
        z_cols.append(ind.values[start:start + 3 * n_q])
    z = np.column_stack(z_cols)
    if np.linalg.matrix_rank(z) < z.shape[1]:
        raise ValueError("indicator matrix is rank deficient")

    c = _aggregation_matrix(n_q, aggregation)
    x_q = c @ z
    y_q = target.values

    def gls(rho_val: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        v_m = _ar1_cov(3 * n_q, rho_val)
        v_q = c @ v_m @ c.T
        factor = cho_factor(v_q)
        vx = cho_solve(factor, x_q)
        vy = cho_solve(factor, y_q)
        beta = np.linalg.solve(x_q.T @ vx, x_q.T @ vy)
        resid = y_q - x_q @ beta
        sig2 = max(float(resid @ cho_solve(factor, resid)) / n_q, 1e-300)
        logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
        ll = -0.5 * (n_q * np.log(sig2) + logdet)
        return beta, resid, v_m, ll

    if rho is None:
        best = None
        for rho_val in RHO_GRID:
            _, _, _, ll = gls(float(rho_val))
            if best is None or ll > best[1]:
                best = (float(rho_val), ll)
        rho = best[0]
    elif not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")

    beta, resid, v_m, _ = gls(rho)
    v_q = c @ v_m @ c.T
    distributed = v_m @ c.T @ np.linalg.solve(v_q, resid)
    monthly = z @ beta + distributed
    return MonthlySeries(months, monthly)


# ---------------------------------------------------------------------------
# SPI transforms


@dataclass
class SpiTransformSpec:
    """Choice of drought-index transform and its thresholds."""

    variant: str = "dichotomy"   # dichotomy | cdf | conditional_cdf_tails | threshold_tails
    dichotomy_threshold: float = -0.5
    a: float = -1.0
    b: float = 1.0

    VARIANTS = ("dichotomy", "cdf", "conditional_cdf_tails", "threshold_tails")

    def validate(self) -> None:
        if self.variant not in self.VARIANTS:
            raise ValueError(f"unknown SPI transform variant {self.variant!r}")
        if self.a >= self.b:
            raise ValueError("threshold a must be smaller than b")


def spi_transform(spi: MonthlySeries, spec: SpiTransformSpec) -> tuple[MonthlySeries, ...]:
    """Transform an SPI series; tail variants return a (dry, wet) pair.

    dichotomy: 1 where SPI < threshold (strict), else 0.
    cdf: standard normal CDF of the SPI value.
    conditional_cdf_tails: dry 1 - CDF(s)/CDF(a) below a; wet
        1 - (1 - CDF(s))/(1 - CDF(b)) above b; zero outside each tail.
    threshold_tails: dry (a - s)+ below a; wet (s - b)+ above b.
    """
    spec.validate()
    s = spi.values
    if spec.variant == "dichotomy":
        return (MonthlySeries(spi.dates, (s < spec.dichotomy_threshold).astype(float)),)
    if spec.variant == "cdf":
        return (MonthlySeries(spi.dates, ndtr(s)),)
    if spec.variant == "conditional_cdf_tails":
        dry = np.where(s < spec.a, 1.0 - ndtr(s) / ndtr(spec.a), 0.0)
        wet = np.where(s > spec.b, 1.0 - (1.0 - ndtr(s)) / (1.0 - ndtr(spec.b)), 0.0)
        return (MonthlySeries(spi.dates, dry), MonthlySeries(spi.dates, wet))
    dry = np.where(s < spec.a, spec.a - s, 0.0)
    wet = np.where(s > spec.b, s - spec.b, 0.0)
    return (MonthlySeries(spi.dates, dry), MonthlySeries(spi.dates, wet))


# ---------------------------------------------------------------------------
# backcasting and panel assembly


def backcast_missing(full_proxy: MonthlySeries, partial_target: MonthlySeries) -> MonthlySeries:
    """Extend a series backwards with OLS fitted values on a full-length proxy.

    The regression target ~ intercept + proxy is fit on the overlapping months;
    months where only the proxy exists (before the target starts) are filled
    with fitted values, the target's own observations are returned unchanged.
    """
    lead = int(partial_target.dates[0] - full_proxy.dates[0])
    if lead < 0:
        raise ValueError("proxy must start no later than the target")
    overlap = min(len(full_proxy) - lead, len(partial_target))
    if overlap < 3:
        raise ValueError("overlap shorter than 3 points")
    px = full_proxy.values[lead:lead + overlap]
    ty = partial_target.values[:overlap]
    if np.ptp(px) == 0:
        raise ValueError("proxy is constant on the overlap: rank deficient")
    design = np.column_stack([np.ones(overlap), px])
    coef, *_ = np.linalg.lstsq(design, ty, rcond=None)
    prefix = coef[0] + coef[1] * full_proxy.values[:lead]
    values = np.concatenate([prefix, partial_target.values])
    return MonthlySeries(
        np.concatenate([full_proxy.dates[:lead], partial_target.dates]), values)


def assemble_panel(
    y: Mapping[str, MonthlySeries],
    covariates: Mapping[str, Mapping[str, MonthlySeries]],
    x: MonthlySeries,
    x_covariates: Mapping[str, MonthlySeries],
    bc_names: Sequence[str] | None = None,
    fc_names: Sequence[str] | None = None,
) -> PanelDataset:
    """Align everything on the common month range and build the PanelDataset.

    `covariates` maps unit -> covariate name -> series; every unit must carry
    the same covariates. Intercept columns are prepended automatically.
    """
    units = list(y.keys())
    if not units:
        raise ValueError("no units supplied")
    if bc_names is None:
        bc_names = list(covariates.get(units[0], {}).keys())
    if fc_names is None:
        fc_names = list(x_covariates.keys())

    all_series: list[MonthlySeries] = [x] + [y[u] for u in units]
    for u in units:
        for c in bc_names:
            try:
                all_series.append(covariates[u][c])
            except KeyError:
                raise ValueError(f"unit {u!r} is missing covariate {c!r}") from None
    for c in fc_names:
        all_series.append(x_covariates[c])

    start = max(s.dates[0] for s in all_series)
    end = min(s.dates[-1] for s in all_series)
    if end < start:
        raise ValueError("series have no common date range")
    t_len = int(end - start) + 1
    dates = start + np.arange(t_len)

    def window(series: MonthlySeries, what: str) -> np.ndarray:
        offset = int(start - series.dates[0])
        vals = series.values[offset:offset + t_len]
        bad = np.where(~np.isfinite(vals))[0]
        if bad.size:
            raise ValueError(f"non-finite value in {what} at {dates[bad[0]]}")
        return vals

    y_mat = np.column_stack([window(y[u], f"y[{u}]") for u in units])
    x_vec = window(x, "x")
    z_bc = np.ones((t_len, len(units), 1 + len(bc_names)))
    for i, u in enumerate(units):
        for j, c in enumerate(bc_names, start=1):
            z_bc[:, i, j] = window(covariates[u][c], f"covariate {c} of {u}")
    z_fc = np.ones((t_len, 1 + len(fc_names)))
    for j, c in enumerate(fc_names, start=1):
        z_fc[:, j] = window(x_covariates[c], f"aggregate covariate {c}")

    return PanelDataset(y_mat, x_vec, z_bc, z_fc, units,
                        ["const"] + list(bc_names), ["const"] + list(fc_names), dates)


# ---------------------------------------------------------------------------
# raw CSV ingestion


def _read_csv(path: str | Path, required: Sequence[str]) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [r for r in reader if r]
    for col in required:
        if col not in header:
            raise ValueError(f"{Path(path).name}: missing column {col!r}")
    return header, rows


def read_panel_csv(path: str | Path) -> dict[str, MonthlySeries]:
    """panel.csv with columns date, unit, value -> one series per unit."""
    header, rows = _read_csv(path, ["date", "unit", "value"])
    col = {h: i for i, h in enumerate(header)}
    grouped: dict[str, list[tuple[str, float]]] = {}
    for r in rows:
        grouped.setdefault(r[col["unit"]].strip(), []).append(
            (r[col["date"]], float(r[col["value"]])))
    out = {}
    for unit, pairs in grouped.items():
        dates = parse_months([d for d, _ in pairs])
        if len(np.unique(dates)) != len(dates):
            raise ValueError(f"panel.csv: duplicated dates for unit {unit!r}")
        order = np.argsort(dates)
        out[unit] = MonthlySeries(dates[order], np.array([v for _, v in pairs])[order])
    return out


def read_series_csv(path: str | Path) -> MonthlySeries:
    """A single series CSV with columns date, value."""
    header, rows = _read_csv(path, ["date", "value"])
    col = {h: i for i, h in enumerate(header)}
    dates = parse_months([r[col["date"]] for r in rows])
    order = np.argsort(dates)
    return MonthlySeries(dates[order], np.array([float(r[col["value"]]) for r in rows])[order])


def read_quarterly_csv(path: str | Path) -> QuarterlySeries:
    header, rows = _read_csv(path, ["date", "value"])
    col = {h: i for i, h in enumerate(header)}
    dates = parse_months([r[col["date"]] for r in rows])
    order = np.argsort(dates)
    return QuarterlySeries(dates[order], np.array([float(r[col["value"]]) for r in rows])[order])


def read_covariates_csv(path: str | Path) -> tuple[list[str], dict[str, dict[str, MonthlySeries]]]:
    """covariates.csv with columns date, unit, <cov>... -> names and nested series."""
    header, rows = _read_csv(path, ["date", "unit"])
    names = [h for h in header if h not in ("date", "unit")]
    if not names:
        raise ValueError(f"{Path(path).name}: no covariate columns")
    col = {h: i for i, h in enumerate(header)}
    grouped: dict[str, list[list[str]]] = {}
    for r in rows:
        grouped.setdefault(r[col["unit"]].strip(), []).append(r)
    out: dict[str, dict[str, MonthlySeries]] = {}
    for unit, unit_rows in grouped.items():
        dates = parse_months([r[col["date"]] for r in unit_rows])
        order = np.argsort(dates)
        out[unit] = {}
        for c in names:
            vals = np.array([float(r[col[c]]) for r in unit_rows])[order]
            out[unit][c] = MonthlySeries(dates[order], vals)
    return names, out


def read_fin_covariates_csv(path: str | Path) -> tuple[list[str], dict[str, MonthlySeries]]:
    """financial_covariates.csv with columns date, <cov>..."""
    header, rows = _read_csv(path, ["date"])
    names = [h for h in header if h != "date"]
    if not names:
        raise ValueError(f"{Path(path).name}: no covariate columns")
    col = {h: i for i, h in enumerate(header)}
    dates = parse_months([r[col["date"]] for r in rows])
    order = np.argsort(dates)
    return names, {
        c: MonthlySeries(dates[order], np.array([float(r[col[c]]) for r in rows])[order])
        for c in names
    }


def read_indicators_csv(path: str | Path) -> list[MonthlySeries]:
    """indicators.csv with columns date, <indicator>... for disaggregation."""
    header, rows = _read_csv(path, ["date"])
    names = [h for h in header if h != "date"]
    if not names:
        raise ValueError(f"{Path(path).name}: no indicator columns")
    col = {h: i for i, h in enumerate(header)}
    dates = parse_months([r[col["date"]] for r in rows])
    order = np.argsort(dates)
    return [
        MonthlySeries(dates[order], np.array([float(r[col[c]]) for r in rows])[order])
        for c in names
    ]


def cross_unit_mean(covariates: Mapping[str, Mapping[str, MonthlySeries]],
                    names: Sequence[str]) -> dict[str, MonthlySeries]:
    """Unweighted cross-unit mean of each covariate, on the common date range."""
    out: dict[str, MonthlySeries] = {}
    units = list(covariates.keys())
    for c in names:
        series = [covariates[u][c] for u in units]
        start = max(s.dates[0] for s in series)
        end = min(s.dates[-1] for s in series)
        if end < start:
            raise ValueError(f"covariate {c!r}: no common date range across units")
        t_len = int(end - start) + 1
        stacked = np.stack([
            s.values[int(start - s.dates[0]):int(start - s.dates[0]) + t_len] for s in series])
        out[c] = MonthlySeries(start + np.arange(t_len), stacked.mean(axis=0))
    return out
