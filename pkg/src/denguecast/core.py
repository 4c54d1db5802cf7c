"""Weekly time-series data model and the transforms applied before modelling.

Missing values are stored as NaN in float arrays. Series are immutable: the
underlying arrays are flagged read-only at construction.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np


class DataValidationError(ValueError):
    """Raised when input values violate a domain constraint."""


class AlignmentError(ValueError):
    """Raised when two series do not cover the same week range."""


class IsoWeekCalendar:
    """ISO-8601 week numbering (weeks start Monday, week 1 holds the first Thursday)."""

    name = "iso8601"

    def weeks_in_year(self, year: int) -> int:
        return dt.date(year, 12, 28).isocalendar()[1]

    def monday(self, year: int, week: int) -> dt.date:
        return dt.date.fromisocalendar(year, week, 1)

    def week_of(self, day: dt.date) -> tuple[int, int]:
        iso = day.isocalendar()
        return iso[0], iso[1]


#: Calendar policy used by all week arithmetic. Swap to change convention.
CALENDAR = IsoWeekCalendar()


@dataclass(frozen=True, order=True)
class EpiWeek:
    year: int
    week: int

    def __post_init__(self):
        if not 1 <= self.year <= 9998:
            raise DataValidationError(f"year {self.year} out of range")
        if not 1 <= self.week <= CALENDAR.weeks_in_year(self.year):
            raise DataValidationError(f"week {self.week} does not exist in {self.year}")

    @classmethod
    def parse(cls, text: str) -> "EpiWeek":
        """Parse ``YYYY-Www`` (e.g. ``2007-W01``)."""
        text = text.strip()
        digits = text[:4] + text[6:]
        if len(text) != 8 or text[4:6] != "-W" or not (digits.isascii() and digits.isdigit()):
            raise DataValidationError(f"malformed week string {text!r}, expected YYYY-Www")
        return cls(int(text[:4]), int(text[6:]))

    @classmethod
    def from_date(cls, day: dt.date) -> "EpiWeek":
        return cls(*CALENDAR.week_of(day))

    def monday(self) -> dt.date:
        return CALENDAR.monday(self.year, self.week)

    def thursday(self) -> dt.date:
        return self.monday() + dt.timedelta(days=3)

    def __add__(self, n: int) -> "EpiWeek":
        if not isinstance(n, (int, np.integer)):
            return NotImplemented
        return EpiWeek.from_date(self.monday() + dt.timedelta(weeks=int(n)))

    def __sub__(self, other):
        if isinstance(other, EpiWeek):
            return (self.monday() - other.monday()).days // 7
        if isinstance(other, (int, np.integer)):
            return self + (-int(other))
        return NotImplemented

    def succ(self) -> "EpiWeek":
        return self + 1

    def pred(self) -> "EpiWeek":
        return self + (-1)

    def __str__(self) -> str:
        return f"{self.year:04d}-W{self.week:02d}"


def week_range(start: EpiWeek, end: EpiWeek) -> list[EpiWeek]:
    """All weeks from ``start`` to ``end`` inclusive."""
    return [start + i for i in range(end - start + 1)]


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError("series values must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WeeklySeries:
    """Gap-free weekly index starting at ``start``; NaN marks a missing value."""

    start: EpiWeek
    values: np.ndarray
    unit: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> EpiWeek:
        return self.start + (len(self) - 1)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def week_at(self, i: int) -> EpiWeek:
        return self.start + i

    def weeks(self) -> list[EpiWeek]:
        return [self.start + i for i in range(len(self))]

    def index_of(self, week: EpiWeek) -> int:
        i = week - self.start
        if not 0 <= i < len(self):
            raise IndexError(f"{week} outside series range {self.range_str()}")
        return i

    def range_str(self) -> str:
        if len(self) == 0:
            return f"{self.start}..(empty)"
        return f"{self.start}..{self.end}"

    def window(self, start: EpiWeek, end: EpiWeek) -> "WeeklySeries":
        """Restrict (or pad with missing) to ``start..end``."""
        n = end - start + 1
        out = np.full(n, np.nan)
        offset = start - self.start
        lo, hi = max(0, -offset), min(n, len(self) - offset)
        if hi > lo:
            out[lo:hi] = self.values[lo + offset : hi + offset]
        return WeeklySeries(start, out, self.unit)

    def with_values(self, values) -> "WeeklySeries":
        values = np.asarray(values, dtype=float)
        if len(values) != len(self):
            raise ValueError("replacement values must keep the series length")
        return WeeklySeries(self.start, values, self.unit)

    def same_range(self, other: "WeeklySeries") -> bool:
        return self.start == other.start and len(self) == len(other)

    def __eq__(self, other):
        if not isinstance(other, WeeklySeries):
            return NotImplemented
        return (
            self.same_range(other)
            and self.unit == other.unit
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


def require_aligned(a: WeeklySeries, b: WeeklySeries, what: str = "series") -> None:
    if not a.same_range(b):
        raise AlignmentError(f"{what} misaligned: {a.range_str()} vs {b.range_str()}")


@dataclass(frozen=True)
class CovariateSet:
    mean_temp: WeeklySeries
    precip_log: WeeklySeries
    rel_humidity: WeeklySeries
    ssta: WeeklySeries

    def __post_init__(self):
        for name in ("precip_log", "rel_humidity", "ssta"):
            require_aligned(self.mean_temp, getattr(self, name), f"covariate {name}")
        rh = self.rel_humidity.values
        bad = ~np.isnan(rh) & ((rh < 0) | (rh > 100))
        if bad.any():
            raise DataValidationError(
                f"relative humidity outside [0, 100] at week index {int(np.flatnonzero(bad)[0])}"
            )

    def as_dict(self) -> dict[str, WeeklySeries]:
        return {
            "rel_humidity": self.rel_humidity,
            "precip_log": self.precip_log,
            "mean_temp": self.mean_temp,
            "ssta": self.ssta,
        }


def _check_counts(series: WeeklySeries, what: str) -> None:
    v = series.values
    if np.isnan(v).any():
        raise DataValidationError(f"{what} contains missing weeks")
    if (v < 0).any() or (v != np.round(v)).any():
        raise DataValidationError(f"{what} must be non-negative integers")


def _check_population(series: WeeklySeries, what: str) -> None:
    v = series.values
    if np.isnan(v).any() or (v <= 0).any():
        raise DataValidationError(f"{what} must be strictly positive every week")


@dataclass(frozen=True)
class NationalReference:
    cases: WeeklySeries
    population: WeeklySeries

    def __post_init__(self):
        require_aligned(self.cases, self.population, "national cases/population")
        _check_counts(self.cases, "national cases")
        _check_population(self.population, "national population")


@dataclass(frozen=True)
class AreaPanel:
    area: str
    cases: WeeklySeries
    population: WeeklySeries
    covariates: CovariateSet
    rr: Optional[WeeklySeries] = field(default=None)

    def __post_init__(self):
        require_aligned(self.cases, self.population, f"{self.area} cases/population")
        require_aligned(self.cases, self.covariates.mean_temp, f"{self.area} cases/covariates")
        _check_counts(self.cases, f"{self.area} cases")
        _check_population(self.population, f"{self.area} population")
        if self.rr is not None:
            require_aligned(self.cases, self.rr, f"{self.area} cases/rr")

    @property
    def start(self) -> EpiWeek:
        return self.cases.start

    def __len__(self) -> int:
        return len(self.cases)

    def with_rr(self, national: NationalReference) -> "AreaPanel":
        return replace(self, rr=compute_relative_risk(self, national))


def compute_relative_risk(area: AreaPanel, national: NationalReference) -> WeeklySeries:
    """Weekly area incidence divided by national incidence.

    Weeks with zero national cases give a missing value.
    """
    require_aligned(area.cases, national.cases, "area/national")
    nat_cases = national.cases.values
    with np.errstate(divide="ignore", invalid="ignore"):
        rr = (area.cases.values / area.population.values) / (nat_cases / national.population.values)
    rr = np.where(nat_cases > 0, rr, np.nan)
    return WeeklySeries(area.cases.start, rr, "relative risk")


def log_transform_precip(p: WeeklySeries, c: float = 1.0) -> WeeklySeries:
    """Map precipitation v to ln(v + c); missing stays missing."""
    if not c > 0:
        raise ValueError("offset constant must be positive")
    v = p.values
    neg = np.flatnonzero(~np.isnan(v) & (v < 0))
    if len(neg):
        raise DataValidationError(
            f"negative precipitation {v[neg[0]]} at week index {int(neg[0])} ({p.week_at(int(neg[0]))})"
        )
    return WeeklySeries(p.start, np.log(v + c), "log-mm")


@dataclass(frozen=True)
class WeeklyAggregate:
    series: WeeklySeries
    coverage: np.ndarray  # fraction of the 7 days present, per week


def aggregate_daily_to_weekly(
    dates: Sequence[dt.date], values: Iterable[Optional[float]], rule: str, unit: str = ""
) -> WeeklyAggregate:
    """Group daily values by calendar week using ``rule`` ('mean' or 'sum').

    Weeks with no present day are missing; partially covered weeks aggregate
    the present days and report their coverage.
    """
    if rule not in ("mean", "sum"):
        raise ValueError(f"unknown aggregation rule {rule!r}")
    vals = np.array([np.nan if v is None else v for v in values], dtype=float)
    if len(dates) != len(vals):
        raise ValueError("dates and values differ in length")
    if len(dates) == 0:
        raise DataValidationError("no daily observations")
    for i in range(1, len(dates)):
        if dates[i] == dates[i - 1]:
            raise DataValidationError(f"duplicate date {dates[i]}")
        if dates[i] < dates[i - 1]:
            raise DataValidationError(f"dates not increasing at {dates[i]}")

    first = EpiWeek.from_date(dates[0])
    n_weeks = EpiWeek.from_date(dates[-1]) - first + 1
    origin = first.monday()
    idx = np.array([(d - origin).days // 7 for d in dates])
    present = ~np.isnan(vals)
    counts = np.bincount(idx[present], minlength=n_weeks)
    totals = np.bincount(idx[present], weights=vals[present], minlength=n_weeks)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = totals if rule == "sum" else totals / counts
    out = np.where(counts > 0, out, np.nan)
    coverage = counts / 7.0
    coverage.setflags(write=False)
    return WeeklyAggregate(WeeklySeries(first, out, unit), coverage)


def _anchor_ordinal(year: int) -> int:
    # Thursday of the middle ISO week of the year
    mid = (CALENDAR.weeks_in_year(year) + 1) // 2
    return EpiWeek(year, mid).thursday().toordinal()


def interpolate_population(
    annual: Sequence[tuple[int, float]], start: EpiWeek, n_weeks: int, unit: str = "persons"
) -> WeeklySeries:
    """Weekly population from annual estimates anchored at mid-year.

    Linear between anchors (time measured at each week's Thursday), constant
    outside the anchor range.
    """
    pairs = sorted((int(y), float(c)) for y, c in annual)
    if len(pairs) < 2:
        raise DataValidationError("need at least two annual population estimates")
    years = [y for y, _ in pairs]
    if len(set(years)) != len(years):
        raise DataValidationError("duplicate population year")
    for (y0, _), (y1, _) in zip(pairs, pairs[1:]):
        if y1 - y0 > 3:
            raise DataValidationError(f"population gap {y0}..{y1} exceeds 2 missing years")
    for y, c in pairs:
        if not c > 0 or math.isnan(c):
            raise DataValidationError(f"non-positive population {c} for {y}")
    xp = np.array([_anchor_ordinal(y) for y in years], dtype=float)
    fp = np.array([c for _, c in pairs])
    t = np.array([(start + i).thursday().toordinal() for i in range(n_weeks)], dtype=float)
    return WeeklySeries(start, np.interp(t, xp, fp), unit)
