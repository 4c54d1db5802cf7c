"""Cross-correlation lag selection and the lagged design matrix.

The design has one row per week t and the columns

    RR[t-1], RH[t], RH[t-l1], P[t], P[t-l2], T[t], T[t-l3], SST[t], SST[t-l4]

with response RR[t], where P is log-precipitation. With ``response="cases"``
the first column and the response are raw weekly counts instead.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import AreaPanel, EpiWeek, WeeklySeries

log = logging.getLogger(__name__)

MAX_LAG = 30
MIN_DESIGN_ROWS = 60

#: covariate name -> LagConfig field; order matches the design columns
COVARIATES = ("rel_humidity", "precip_log", "mean_temp", "ssta")
COLUMNS = (
    "rr_lag1",
    "rh",
    "rh_lag",
    "precip_log",
    "precip_log_lag",
    "mean_temp",
    "mean_temp_lag",
    "ssta",
    "ssta_lag",
)
RESPONSES = ("rr", "cases")


class LagSelectionError(ValueError):
    pass


class InsufficientRowsError(ValueError):
    pass


@dataclass(frozen=True)
class LagConfig:
    humidity: int
    precip: int
    temp: int
    ssta: int

    def __post_init__(self):
        for name, v in self.as_dict().items():
            if not (isinstance(v, (int, np.integer)) and 0 <= v <= MAX_LAG):
                raise ValueError(f"{name} lag {v!r} outside [0, {MAX_LAG}]")

    def as_dict(self) -> dict[str, int]:
        return {"rel_humidity": self.humidity, "precip_log": self.precip, "mean_temp": self.temp, "ssta": self.ssta}

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.humidity, self.precip, self.temp, self.ssta)

    @property
    def max_lag(self) -> int:
        return max(self.as_tuple())


def cross_correlation(x, y, max_lag: int = MAX_LAG, min_pairs: Optional[int] = None) -> np.ndarray:
    """Pearson correlation of (x[t-k], y[t]) for k = 0..max_lag.

    NaN entries in either input are skipped pairwise. A lag whose shifted pairs
    have zero variance is returned as NaN (undefined).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be aligned one-dimensional series")
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    need = max_lag + 8 if min_pairs is None else min_pairs
    out = np.full(max_lag + 1, np.nan)
    n = len(x)
    for k in range(max_lag + 1):
        xs, ys = x[: n - k], y[k:]
        ok = ~(np.isnan(xs) | np.isnan(ys))
        if ok.sum() < need:
            raise LagSelectionError(f"only {int(ok.sum())} complete pairs at lag {k}, need {need}")
        a, b = xs[ok], ys[ok]
        a = a - a.mean()
        b = b - b.mean()
        saa, sbb = a @ a, b @ b
        if saa <= 0 or sbb <= 0:
            continue
        out[k] = np.clip((a @ b) / np.sqrt(saa * sbb), -1.0, 1.0)
    return out


def select_lag(ccf, absolute: bool = True) -> int:
    """Lag with the largest (absolute) correlation; ties go to the smaller lag."""
    ccf = np.asarray(ccf, dtype=float)
    score = np.abs(ccf) if absolute else ccf.copy()
    if np.isnan(score).all():
        raise LagSelectionError("all cross-correlation entries are undefined")
    score[np.isnan(score)] = -np.inf
    return int(np.argmax(score))


@dataclass(frozen=True)
class LagSelection:
    area: str
    lags: LagConfig
    correlations: dict[str, float]
    ccf: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


def select_panel_lags(
    panel: AreaPanel,
    train_end: Optional[EpiWeek] = None,
    max_lag: int = MAX_LAG,
    absolute: bool = True,
    target: str = "cases",
) -> LagSelection:
    """Choose one lag per covariate from data up to ``train_end`` inclusive."""
    if target == "cases":
        y = panel.cases
    elif target == "rr":
        if panel.rr is None:
            raise ValueError("panel has no relative risk; compute it first")
        y = panel.rr
    else:
        raise ValueError(f"unknown lag target {target!r}")
    stop = len(panel) if train_end is None else panel.cases.index_of(train_end) + 1
    lags, corrs, ccfs = {}, {}, {}
    for name, series in panel.covariates.as_dict().items():
        ccf = cross_correlation(series.values[:stop], y.values[:stop], max_lag)
        k = select_lag(ccf, absolute)
        lags[name], corrs[name], ccfs[name] = k, float(ccf[k]), ccf
    config = LagConfig(lags["rel_humidity"], lags["precip_log"], lags["mean_temp"], lags["ssta"])
    return LagSelection(panel.area, config, corrs, ccfs)


def write_lags_csv(path, selections: list[LagSelection]) -> None:
    from .ingest import atomic_write_text

    lines = ["area,covariate,lag,correlation"]
    for sel in selections:
        for name, lag in sel.lags.as_dict().items():
            lines.append(f"{sel.area},{name},{lag},{sel.correlations[name]!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_lags_csv(path) -> dict[str, LagConfig]:
    per_area: dict[str, dict[str, int]] = {}
    with open(Path(path), newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            per_area.setdefault(row["area"], {})[row["covariate"]] = int(row["lag"])
    out = {}
    for area, d in per_area.items():
        try:
            out[area] = LagConfig(d["rel_humidity"], d["precip_log"], d["mean_temp"], d["ssta"])
        except KeyError as exc:
            raise ValueError(f"lags file missing {exc.args[0]} for area {area}") from None
    return out


@dataclass(frozen=True)
class DesignMatrix:
    weeks: tuple[EpiWeek, ...]
    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...] = COLUMNS
    dropped: tuple[EpiWeek, ...] = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.columns) or X.shape[0] != len(y) or len(y) != len(self.weeks):
            raise ValueError("design shape mismatch")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)

    def subset(self, mask) -> "DesignMatrix":
        mask = np.asarray(mask, dtype=bool)
        weeks = tuple(w for w, m in zip(self.weeks, mask) if m)
        return DesignMatrix(weeks, self.X[mask], self.y[mask], self.columns)

    def between(self, start: EpiWeek, end: EpiWeek) -> "DesignMatrix":
        return self.subset([start <= w <= end for w in self.weeks])


def _response(panel: AreaPanel, response: str) -> np.ndarray:
    if response == "cases":
        return panel.cases.values.copy()
    if response != "rr":
        raise ValueError(f"unknown response {response!r}; expected one of {RESPONSES}")
    if panel.rr is None:
        raise ValueError("panel has no relative risk; compute it first")
    return panel.rr.values.copy()


def lagged_columns(panel: AreaPanel, lags: LagConfig, response: str = "rr") -> tuple[np.ndarray, np.ndarray]:
    """Full-length (n, 9) covariate matrix and response; leading rows hold NaN where lags reach before the panel."""
    rr = _response(panel, response)
    n = len(panel)

    def shift(v: np.ndarray, k: int) -> np.ndarray:
        out = np.full(n, np.nan)
        out[k:] = v[: n - k]
        return out

    cols = [shift(rr, 1)]
    for name, k in lags.as_dict().items():
        v = panel.covariates.as_dict()[name].values
        cols += [v.copy(), shift(v, k)]
    return np.column_stack(cols), rr


def build_design(
    panel: AreaPanel, lags: LagConfig, min_rows: int = MIN_DESIGN_ROWS, response: str = "rr"
) -> DesignMatrix:
    X, y = lagged_columns(panel, lags, response)
    trim = max(lags.max_lag, 1)
    weeks = panel.cases.weeks()
    keep = np.zeros(len(y), dtype=bool)
    keep[trim:] = True
    complete = ~(np.isnan(X).any(axis=1) | np.isnan(y))
    dropped = tuple(w for w, k, c in zip(weeks, keep, complete) if k and not c)
    if dropped:
        log.info("%s: dropped %d design rows with missing values: %s", panel.area, len(dropped),
                 ", ".join(map(str, dropped)))
    keep &= complete
    if keep.sum() < min_rows:
        raise InsufficientRowsError(f"{panel.area}: only {int(keep.sum())} usable design rows, need {min_rows}")
    columns = COLUMNS if response == "rr" else ("cases_lag1",) + COLUMNS[1:]
    return DesignMatrix(tuple(w for w, k in zip(weeks, keep) if k), X[keep], y[keep], columns, dropped)
