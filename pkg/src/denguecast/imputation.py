"""Gap completion for weekly climate series.

Short interior gaps are bridged linearly, everything else (long gaps and
short gaps touching a series end) takes the week-of-year climatological mean
of the present values. Edge gaps longer than ``max_interp_gap`` have no
anchor on one side and are left missing.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import WeeklySeries

INTERP = "interp"
CLIMATOLOGY = "climatology"


class InsufficientDataError(ValueError):
    pass


def detect_gaps(s: WeeklySeries) -> list[tuple[int, int]]:
    """Maximal runs of missing values as (start index, length)."""
    miss = np.concatenate([[False], s.missing, [False]]).astype(np.int8)
    d = np.diff(miss)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return [(int(a), int(b - a)) for a, b in zip(starts, ends)]


@dataclass(frozen=True)
class ImputationMask:
    """Method used at each imputed index, plus gaps that could not be filled."""

    series: WeeklySeries
    methods: dict[int, str]
    unfilled: tuple[tuple[int, int], ...] = ()

    def __len__(self):
        return len(self.methods)

    def rows(self):
        for i in sorted(self.methods):
            yield str(self.series.week_at(i)), self.methods[i]

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["week", "method"])
            w.writerows(self.rows())


def week_of_year_climatology(s: WeeklySeries) -> dict[int, float]:
    """Mean of present values per ISO week number."""
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for i, v in enumerate(s.values):
        if np.isnan(v):
            continue
        w = s.week_at(i).week
        sums[w] = sums.get(w, 0.0) + float(v)
        counts[w] = counts.get(w, 0) + 1
    return {w: sums[w] / counts[w] for w in sums}


def _climatology_value(clim: dict[int, float], week: int) -> float:
    if week in clim:
        return clim[week]
    # nearest week-of-year with data, circular over 1..53, earlier week on ties
    for d in range(1, 27):
        for cand in ((week - 1 - d) % 53 + 1, (week - 1 + d) % 53 + 1):
            if cand in clim:
                return clim[cand]
    raise InsufficientDataError("empty climatology")


def impute(s: WeeklySeries, max_interp_gap: int = 4) -> tuple[WeeklySeries, ImputationMask]:
    present = ~s.missing
    if present.sum() < 52:
        raise InsufficientDataError(
            f"need at least 52 present values for climatology, got {int(present.sum())}"
        )
    values = s.values.copy()
    methods: dict[int, str] = {}
    unfilled = []
    clim = None
    n = len(s)
    for start, length in detect_gaps(s):
        stop = start + length
        interior = start > 0 and stop < n
        if interior and length <= max_interp_gap:
            left, right = values[start - 1], values[stop]
            for j in range(start, stop):
                frac = (j - start + 1) / (length + 1)
                values[j] = min(max(left + frac * (right - left), min(left, right)), max(left, right))
                methods[j] = INTERP
        elif interior or length <= max_interp_gap:
            if clim is None:
                clim = week_of_year_climatology(s)
            for j in range(start, stop):
                values[j] = _climatology_value(clim, s.week_at(j).week)
                methods[j] = CLIMATOLOGY
        else:
            unfilled.append((start, length))
    out = s.with_values(values)
    return out, ImputationMask(out, methods, tuple(unfilled))
