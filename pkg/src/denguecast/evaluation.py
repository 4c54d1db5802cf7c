"""Hold-out evaluation: fit on the training weeks, predict the test year, score by NRMSE."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Any, Callable, Optional, Union

import numpy as np

from .core import AreaPanel, EpiWeek
from .forest import fit_forest
from .gam import fit_gam
from .lags import DesignMatrix, LagConfig, build_design


class CoverageError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    train_start: EpiWeek
    train_end: EpiWeek
    test_start: EpiWeek
    test_end: EpiWeek

    def __post_init__(self):
        if self.train_end < self.train_start:
            raise ValueError("empty training range")
        if self.test_end < self.test_start:
            raise ValueError("empty test range")
        if not self.train_end < self.test_start:
            raise ValueError(f"training range must end before the test range starts ({self.train_end} >= {self.test_start})")

    @classmethod
    def parse(cls, train: str, test: str) -> "SplitSpec":
        def rng(text):
            a, sep, b = text.partition(":")
            if not sep:
                raise ValueError(f"range must be YYYY-Www:YYYY-Www, got {text!r}")
            return EpiWeek.parse(a), EpiWeek.parse(b)

        return cls(*rng(train), *rng(test))

    @property
    def test_weeks(self) -> int:
        return self.test_end - self.test_start + 1


DEFAULT_SPLIT = SplitSpec(EpiWeek(2007, 1), EpiWeek(2016, 52), EpiWeek(2017, 1), EpiWeek(2017, 52))


def split(
    panel: AreaPanel, lags: LagConfig, spec: SplitSpec, min_train_rows: int = 60, response: str = "rr"
) -> tuple[DesignMatrix, DesignMatrix]:
    """Training and test design rows.

    Lagged columns of test rows may reach back into the training period; the
    model only ever sees the training rows.
    """
    first, last = panel.start, panel.cases.end
    if spec.train_start < first or spec.test_end > last:
        raise CoverageError(
            f"{panel.area}: split {spec.train_start}..{spec.test_end} outside data coverage {first}..{last}"
        )
    full = build_design(panel, lags, min_rows=0, response=response)
    train = full.between(spec.train_start, spec.train_end)
    test = full.between(spec.test_start, spec.test_end)
    if len(test) != spec.test_weeks:
        have = set(test.weeks)
        missing = [str(w) for w in (spec.test_start + i for i in range(spec.test_weeks)) if w not in have]
        raise CoverageError(f"{panel.area}: test weeks without complete data: {', '.join(missing)}")
    if len(train) < min_train_rows:
        raise CoverageError(f"{panel.area}: only {len(train)} usable training rows, need {min_train_rows}")
    return train, test


def nrmse(predicted, observed) -> float:
    """Root-mean-square error divided by the mean observed value."""
    p = np.asarray(predicted, dtype=float)
    o = np.asarray(observed, dtype=float)
    if p.shape != o.shape or p.ndim != 1 or len(o) == 0:
        raise ValueError("predicted and observed must be equal-length non-empty series")
    mean = float(np.mean(o))
    if mean == 0:
        raise ZeroDivisionError("NRMSE undefined: observed mean is zero")
    return math.sqrt(float(np.mean((p - o) ** 2))) / mean


Fitter = Callable[[DesignMatrix], Any]


def _gam_fitter(k: int = 10, **_) -> Fitter:
    return lambda d: fit_gam(d, k=k)


def _rf_fitter(trees: int = 500, mtry: int = 3, min_node: int = 5, seed: int = 0, n_jobs: int = 1, **_) -> Fitter:
    return lambda d: fit_forest(d, trees=trees, mtry=mtry, min_node=min_node, seed=seed, n_jobs=n_jobs)


FITTERS = {"GAM": _gam_fitter, "RF": _rf_fitter}


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    area: str
    model: str
    weeks: tuple[EpiWeek, ...]
    observed: np.ndarray
    predicted: np.ndarray
    extrapolated: np.ndarray
    nrmse: float
    fitted_model: Any = field(default=None, repr=False)

    def rows(self):
        for w, o, p, e in zip(self.weeks, self.observed, self.predicted, self.extrapolated):
            yield [self.area, self.model, str(w), repr(float(o)), repr(float(p)), str(int(bool(e)))]


def _extrapolation_flags(model, train: DesignMatrix, X: np.ndarray) -> np.ndarray:
    if hasattr(model, "out_of_range"):
        return model.out_of_range(X)
    lo, hi = train.X.min(axis=0), train.X.max(axis=0)
    return ((X < lo) | (X > hi)).any(axis=1)


def evaluate(
    panel: AreaPanel,
    lags: LagConfig,
    spec: SplitSpec = DEFAULT_SPLIT,
    model: Union[str, Fitter] = "GAM",
    mode: str = "one-step",
    response: str = "rr",
    **params,
) -> PredictionRecord:
    """Fit on the training rows and predict every test week.

    ``one-step`` feeds the observed previous-week RR; ``recursive`` feeds the
    model's own previous prediction. Covariates are always the observed values.
    ``response="cases"`` models weekly counts instead of RR, same Gaussian fit.
    """
    if mode not in ("one-step", "recursive"):
        raise ValueError(f"unknown prediction mode {mode!r}")
    if isinstance(model, str):
        if model.upper() not in FITTERS:
            raise ValueError(f"unknown model kind {model!r}")
        name, fitter = model.upper(), FITTERS[model.upper()](**params)
    else:
        name, fitter = params.get("name", getattr(model, "__name__", "custom")), model
    train, test = split(panel, lags, spec, response=response)
    fitted = fitter(train)
    X = np.array(test.X)
    if mode == "one-step":
        pred = np.asarray(fitted.predict(X), dtype=float)
        flags = _extrapolation_flags(fitted, train, X)
    else:
        pred = np.empty(len(X))
        for i in range(len(X)):
            if i > 0:
                X[i, 0] = pred[i - 1]
            pred[i] = float(np.asarray(fitted.predict(X[i : i + 1]))[0])
        flags = _extrapolation_flags(fitted, train, X)
    return PredictionRecord(
        panel.area, name, test.weeks, np.array(test.y), pred, np.asarray(flags, dtype=bool),
        nrmse(pred, test.y), fitted,
    )


@dataclass(frozen=True)
class ComparisonTable:
    areas: tuple[str, ...]
    models: tuple[str, ...]
    values: dict[tuple[str, str], float]

    @staticmethod
    def cell(v: Optional[float]) -> str:
        if v is None or math.isnan(v):
            return "NA"
        return str(Decimal(repr(float(v))).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.areas), len(self.models)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(["area"] + [m.lower() for m in self.models]) + "\n")
        for a in self.areas:
            buf.write(",".join([a] + [self.cell(self.values.get((a, m))) for m in self.models]) + "\n")
        return buf.getvalue()

    def to_text(self) -> str:
        rows = [[""] + list(self.models)]
        rows += [[a] + [self.cell(self.values.get((a, m))) for m in self.models] for a in self.areas]
        widths = [max(len(r[j]) for r in rows) for j in range(len(rows[0]))]
        lines = []
        for r in rows:
            lines.append("  ".join([r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]))
        return "\n".join(lines) + "\n"


def compare(records) -> ComparisonTable:
    records = list(records)
    if not records:
        raise ValueError("nothing to compare")
    areas = tuple(dict.fromkeys(r.area for r in records))
    order = {"GAM": 0, "RF": 1}
    models = tuple(sorted(dict.fromkeys(r.model for r in records), key=lambda m: (order.get(m, 2), m)))
    return ComparisonTable(areas, models, {(r.area, r.model): r.nrmse for r in records})


PREDICTIONS_HEADER = "area,model,week,observed_rr,predicted_rr,extrapolated"


def predictions_csv(records) -> str:
    lines = [PREDICTIONS_HEADER]
    for r in records:
        lines += [",".join(row) for row in r.rows()]
    return "\n".join(lines) + "\n"
