"""Panel dataset containers and their CSV/JSON serialization.

Dates are handled as numpy datetime64[M] arrays throughout; the CSV format
uses ISO-8601 year-month strings ("1981-02"). Quarterly dates are written as
the first month of the quarter.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

RECESSION = 1
EXPANSION = 2

_RESERVED_LABELS = {"financial", "x"}


def month_range(start: str | np.datetime64, periods: int) -> np.ndarray:
    """Consecutive months starting at `start`, as a datetime64[M] array."""
    first = np.datetime64(start, "M")
    return first + np.arange(periods)


def parse_months(values: Sequence[str]) -> np.ndarray:
    try:
        return np.array([np.datetime64(v.strip(), "M") for v in values])
    except ValueError as exc:
        raise ValueError(f"unparseable ISO year-month date: {exc}") from None


def _check_consecutive_months(dates: np.ndarray, what: str) -> None:
    if dates.ndim != 1 or dates.dtype != np.dtype("datetime64[M]"):
        raise ValueError(f"{what}: dates must be a 1-d datetime64[M] array")
    if len(dates) > 1:
        steps = np.diff(dates).astype(int)
        if np.any(steps <= 0):
            raise ValueError(f"{what}: dates must be strictly increasing")
        if np.any(steps != 1):
            raise ValueError(f"{what}: dates must be consecutive months")


@dataclass
class MonthlySeries:
    """A gap-free monthly series."""

    dates: np.ndarray
    values: np.ndarray
    frequency: str = "monthly"

    def __post_init__(self) -> None:
        self.dates = np.asarray(self.dates, dtype="datetime64[M]")
        self.values = np.asarray(self.values, dtype=float)
        if self.dates.shape != self.values.shape:
            raise ValueError("dates and values must have equal length")
        _check_consecutive_months(self.dates, "MonthlySeries")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("MonthlySeries: non-finite values")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class QuarterlySeries:
    """A gap-free quarterly series; dates are the first month of each quarter."""

    dates: np.ndarray
    values: np.ndarray
    frequency: str = "quarterly"

    def __post_init__(self) -> None:
        self.dates = np.asarray(self.dates, dtype="datetime64[M]")
        self.values = np.asarray(self.values, dtype=float)
        if self.dates.shape != self.values.shape:
            raise ValueError("dates and values must have equal length")
        months = (self.dates.astype(int) % 12) + 1
        if len(months) and not np.all(np.isin(months, [1, 4, 7, 10])):
            raise ValueError("QuarterlySeries: dates must fall on quarter starts (Jan/Apr/Jul/Oct)")
        if len(self.dates) > 1:
            steps = np.diff(self.dates).astype(int)
            if np.any(steps != 3):
                raise ValueError("QuarterlySeries: dates must be consecutive quarters")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("QuarterlySeries: non-finite values")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class PanelDataset:
    """Observed panel: unit growth rates, the common financial series and covariates.

    y is T x N, x is length T. z_bc (T x N x m) and z_fc (T x m_f) carry the
    covariate blocks whose first column is identically one (intercept).
    """

    y: np.ndarray
    x: np.ndarray
    z_bc: np.ndarray
    z_fc: np.ndarray
    unit_labels: list[str]
    bc_names: list[str]
    fc_names: list[str]
    dates: np.ndarray

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.z_bc = np.asarray(self.z_bc, dtype=float)
        self.z_fc = np.asarray(self.z_fc, dtype=float)
        self.dates = np.asarray(self.dates, dtype="datetime64[M]")
        self.unit_labels = [str(u) for u in self.unit_labels]
        self.bc_names = [str(c) for c in self.bc_names]
        self.fc_names = [str(c) for c in self.fc_names]
        self.validate()

    @property
    def t_len(self) -> int:
        return self.y.shape[0]

    @property
    def n_units(self) -> int:
        return self.y.shape[1]

    @property
    def m_bc(self) -> int:
        return self.z_bc.shape[2]

    @property
    def m_fc(self) -> int:
        return self.z_fc.shape[1]

    def validate(self) -> None:
        t, n = self.y.shape
        if self.x.shape != (t,):
            raise ValueError("x length must equal T")
        if self.z_bc.shape[:2] != (t, n):
            raise ValueError("z_bc must be T x N x m")
        if self.z_fc.shape[0] != t:
            raise ValueError("z_fc must be T x m_f")
        if len(self.unit_labels) != n:
            raise ValueError("unit_labels must have one entry per unit")
        if len(set(self.unit_labels)) != n:
            raise ValueError("unit_labels must be distinct")
        for lab in self.unit_labels:
            if lab.lower() in _RESERVED_LABELS or any(c in lab for c in "[],\n"):
                raise ValueError(f"invalid unit label {lab!r}")
        if len(self.bc_names) != self.m_bc or len(self.fc_names) != self.m_fc:
            raise ValueError("covariate name lists must match covariate counts")
        for block, name in ((self.y, "y"), (self.x, "x"), (self.z_bc, "z_bc"), (self.z_fc, "z_fc")):
            if not np.all(np.isfinite(block)):
                raise ValueError(f"non-finite values in {name}")
        if not np.all(self.z_bc[:, :, 0] == 1.0):
            raise ValueError("z_bc first covariate must be identically 1")
        if not np.all(self.z_fc[:, 0] == 1.0):
            raise ValueError("z_fc first covariate must be identically 1")
        if self.dates.shape != (t,):
            raise ValueError("dates length must equal T")
        _check_consecutive_months(self.dates, "PanelDataset")

    def fingerprint(self) -> str:
        """SHA-256 over a canonical byte encoding of shapes, labels and data."""
        h = hashlib.sha256()
        h.update(np.array([self.t_len, self.n_units, self.m_bc, self.m_fc]).tobytes())
        for text in self.unit_labels + self.bc_names + self.fc_names:
            h.update(text.encode())
            h.update(b"\x00")
        h.update(self.dates.astype("datetime64[M]").astype(int).tobytes())
        for block in (self.y, self.x, self.z_bc, self.z_fc):
            h.update(np.ascontiguousarray(block, dtype=float).tobytes())
        return h.hexdigest()


@dataclass
class LatentStates:
    """Regime trajectories: s_y is T x N, s_x length T, entries in {1, 2}."""

    s_y: np.ndarray
    s_x: np.ndarray

    def __post_init__(self) -> None:
        self.s_y = np.asarray(self.s_y, dtype=np.int8)
        self.s_x = np.asarray(self.s_x, dtype=np.int8)
        if self.s_y.ndim != 2 or self.s_x.ndim != 1 or self.s_y.shape[0] != self.s_x.shape[0]:
            raise ValueError("s_y must be T x N and s_x length T")
        for block, name in ((self.s_y, "s_y"), (self.s_x, "s_x")):
            if block.size and not np.all((block == RECESSION) | (block == EXPANSION)):
                raise ValueError(f"{name}: every state must be 1 or 2")

    def copy(self) -> "LatentStates":
        return LatentStates(self.s_y.copy(), self.s_x.copy())

    def allocation(self, regime: int) -> np.ndarray:
        """Indicator view xi for the unit chains: 1 where s_y equals `regime`."""
        if regime not in (RECESSION, EXPANSION):
            raise ValueError("regime must be 1 or 2")
        return (self.s_y == regime).astype(float)


def save_dataset(dataset: PanelDataset, out_dir: str | Path) -> Path:
    """Write dataset.csv plus dataset_meta.json under `out_dir`; returns the dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["date"]
    header += [f"y__{u}" for u in dataset.unit_labels]
    header += ["x"]
    for u in dataset.unit_labels:
        header += [f"zbc__{u}__{c}" for c in dataset.bc_names[1:]]
    header += [f"zfc__{c}" for c in dataset.fc_names[1:]]
    with open(out / "dataset.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(dataset.t_len):
            row = [str(dataset.dates[t])]
            row += [repr(float(v)) for v in dataset.y[t]]
            row.append(repr(float(dataset.x[t])))
            for i in range(dataset.n_units):
                row += [repr(float(v)) for v in dataset.z_bc[t, i, 1:]]
            row += [repr(float(v)) for v in dataset.z_fc[t, 1:]]
            writer.writerow(row)
    meta = {
        "t_len": dataset.t_len,
        "n_units": dataset.n_units,
        "unit_labels": dataset.unit_labels,
        "bc_names": dataset.bc_names,
        "fc_names": dataset.fc_names,
        "start": str(dataset.dates[0]),
        "fingerprint": dataset.fingerprint(),
    }
    with open(out / "dataset_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def load_dataset(path: str | Path) -> PanelDataset:
    """Read a dataset directory (or a direct path to dataset.csv)."""
    p = Path(path)
    if p.is_dir():
        p = p / "dataset.csv"
    if not p.exists():
        raise ValueError(f"dataset file not found: {p}")
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if not header or header[0] != "date":
        raise ValueError("dataset.csv must start with a 'date' column")
    units = [h[len("y__"):] for h in header if h.startswith("y__")]
    if not units or "x" not in header:
        raise ValueError("dataset.csv must contain y__<unit> columns and an x column")
    col = {name: j for j, name in enumerate(header)}
    bc_names = ["const"]
    first = units[0]
    prefix = f"zbc__{first}__"
    bc_names += [h[len(prefix):] for h in header if h.startswith(prefix)]
    fc_names = ["const"] + [h[len("zfc__"):] for h in header if h.startswith("zfc__")]
    t_len, n = len(rows), len(units)
    dates = parse_months([r[0] for r in rows])
    y = np.empty((t_len, n))
    x = np.empty(t_len)
    z_bc = np.ones((t_len, n, len(bc_names)))
    z_fc = np.ones((t_len, len(fc_names)))
    try:
        for t, r in enumerate(rows):
            for i, u in enumerate(units):
                y[t, i] = float(r[col[f"y__{u}"]])
                for j, c in enumerate(bc_names[1:], start=1):
                    z_bc[t, i, j] = float(r[col[f"zbc__{u}__{c}"]])
            x[t] = float(r[col["x"]])
            for j, c in enumerate(fc_names[1:], start=1):
                z_fc[t, j] = float(r[col[f"zfc__{c}"]])
    except KeyError as exc:
        raise ValueError(f"dataset.csv missing column {exc.args[0]!r}") from None
    return PanelDataset(y, x, z_bc, z_fc, units, bc_names, fc_names, dates)
