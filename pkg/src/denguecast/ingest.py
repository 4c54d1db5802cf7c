"""Readers and writers for the four input CSV files.

Every parser collects per-row diagnostics into an :class:`IngestReport`.
With ``strict=True`` (the default) a file with any invalid row is rejected by
raising :class:`IngestError`; otherwise invalid rows are dropped and the
report records why.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .core import DataValidationError, EpiWeek, WeeklySeries

NATIONAL_ID = "CR"

CASES_HEADER = ["area", "week", "cases"]
CLIMATE_HEADER = ["date", "station", "tmin", "tmean", "tmax", "precip_mm", "rh_pct"]
SSTA_HEADER = ["week", "ssta"]
POPULATION_HEADER = ["area", "year", "population"]

SSTA_WARN_ABS = 5.0

Source = Union[str, Path, bytes]


@dataclass
class IngestReport:
    source: str
    rows_read: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)
    missing_fraction: dict[str, float] = field(default_factory=dict)
    coverage: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    fatal: list[str] = field(default_factory=list)

    @property
    def rows_rejected(self) -> int:
        return len(self.rejected)

    @property
    def rows_accepted(self) -> int:
        return self.rows_read - self.rows_rejected

    @property
    def ok(self) -> bool:
        return not self.rejected and not self.fatal

    def reject(self, lineno: int, reason: str) -> None:
        self.rejected.append((lineno, reason))

    def format(self) -> str:
        status = "OK" if self.ok else "REJECTED"
        lines = [
            f"[{status}] {self.source}: read {self.rows_read}, "
            f"accepted {self.rows_accepted}, rejected {self.rows_rejected}"
        ]
        lines += [f"  error: {m}" for m in self.fatal]
        lines += [f"  line {n}: {why}" for n, why in self.rejected]
        for key in sorted(self.coverage):
            frac = self.missing_fraction.get(key, 0.0)
            lines.append(f"  {key}: {self.coverage[key]} missing {frac:.4f}")
        lines += [f"  warning: {m}" for m in self.warnings]
        lines += [f"  note: {m}" for m in self.notes]
        return "\n".join(lines)


class IngestError(ValueError):
    def __init__(self, report: IngestReport):
        self.report = report
        super().__init__(report.format())


def _source_name(source: Source) -> str:
    return "<bytes>" if isinstance(source, bytes) else str(source)


def _read_table(source: Source, header: list[str], report: IngestReport):
    """Split a file into ``#key=value`` directives and data rows with line numbers."""
    try:
        data = source if isinstance(source, bytes) else Path(source).read_bytes()
    except OSError as exc:
        report.fatal.append(f"cannot read file: {exc.strerror or exc}")
        raise IngestError(report) from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        report.fatal.append(f"not valid UTF-8 at byte {exc.start}")
        raise IngestError(report) from None
    if "\x00" in text:
        report.fatal.append("file contains NUL bytes")
        raise IngestError(report)

    directives: dict[str, str] = {}
    body: list[str] = []
    linenos: list[int] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            directives[key.strip()] = value.strip()
        else:
            body.append(line)
            linenos.append(lineno)

    rows: list[tuple[int, list[str]]] = []
    seen_header = False
    try:
        reader = csv.reader(body, strict=True)
        for fields in reader:
            lineno = linenos[min(reader.line_num, len(linenos)) - 1]
            if not fields or all(not f.strip() for f in fields):
                continue
            if not seen_header:
                if [f.strip() for f in fields] != header:
                    report.fatal.append(f"header must be {','.join(header)}, got {','.join(fields)}")
                    raise IngestError(report)
                seen_header = True
                continue
            rows.append((lineno, [f.strip() for f in fields]))
    except csv.Error as exc:
        report.fatal.append(f"malformed CSV: {exc}")
        raise IngestError(report) from None
    if not seen_header:
        report.fatal.append("empty file or missing header")
        raise IngestError(report)
    report.rows_read = len(rows)
    return directives, rows


def _finish(report: IngestReport, strict: bool):
    if report.fatal or (strict and report.rejected):
        raise IngestError(report)


def _parse_float(text: str, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataValidationError(f"non-numeric {what} {text!r}") from None
    if not math.isfinite(v):
        raise DataValidationError(f"non-finite {what} {text!r}")
    return v


def _parse_count(text: str, what: str) -> int:
    digits = text[1:] if text.startswith("-") else text
    if not (digits.isascii() and digits.isdigit()):
        raise DataValidationError(f"{what} must be an integer, got {text!r}")
    v = int(text)
    if v < 0:
        raise DataValidationError(f"negative {what} {v}")
    return v


def _parse_range(text: str) -> tuple[EpiWeek, EpiWeek]:
    a, sep, b = text.partition(":")
    if not sep:
        raise DataValidationError(f"range must be WEEK:WEEK, got {text!r}")
    lo, hi = EpiWeek.parse(a), EpiWeek.parse(b)
    if hi < lo:
        raise DataValidationError(f"empty range {text!r}")
    return lo, hi


def _series_stats(report: IngestReport, key: str, s: WeeklySeries) -> None:
    report.coverage[key] = s.range_str()
    report.missing_fraction[key] = float(s.missing.mean()) if len(s) else 0.0


# --------------------------------------------------------------------------- cases


@dataclass(frozen=True)
class CasesData:
    areas: dict[str, WeeklySeries]
    national: WeeklySeries
    report: IngestReport


def parse_cases_csv(source: Source, strict: bool = True) -> CasesData:
    """Read ``area,week,cases``; area ``CR`` holds national counts.

    Weeks absent from the file are missing unless a ``#complete-range=`` directive
    declares full coverage, in which case absent weeks inside it become zero.
    An empty ``cases`` cell is an explicit missing value.
    """
    report = IngestReport(_source_name(source))
    directives, rows = _read_table(source, CASES_HEADER, report)
    complete = None
    if "complete-range" in directives:
        try:
            complete = _parse_range(directives["complete-range"])
        except DataValidationError as exc:
            report.fatal.append(f"bad complete-range directive: {exc}")

    records: dict[str, dict[EpiWeek, float]] = {}
    first_line: dict[tuple[str, EpiWeek], int] = {}
    for lineno, fields in rows:
        try:
            if len(fields) != 3:
                raise DataValidationError(f"expected 3 fields, got {len(fields)}")
            area, week_s, cases_s = fields
            if not area:
                raise DataValidationError("empty area id")
            week = EpiWeek.parse(week_s)
            value = math.nan if cases_s == "" else float(_parse_count(cases_s, "case count"))
            if (area, week) in first_line:
                raise DataValidationError(
                    f"duplicate ({area}, {week}), first seen on line {first_line[area, week]}"
                )
        except DataValidationError as exc:
            report.reject(lineno, str(exc))
            continue
        first_line[area, week] = lineno
        records.setdefault(area, {})[week] = value

    if not records:
        report.fatal.append("no valid case rows")
    elif NATIONAL_ID not in records:
        report.fatal.append(f"no national ({NATIONAL_ID}) case rows")
    _finish(report, strict)

    all_weeks = [w for rec in records.values() for w in rec]
    lo, hi = min(all_weeks), max(all_weeks)
    if complete is not None:
        lo, hi = min(lo, complete[0]), max(hi, complete[1])
    n = hi - lo + 1
    series = {}
    for area in sorted(records):
        vals = np.full(n, np.nan)
        if complete is not None:
            a, b = complete[0] - lo, complete[1] - lo
            vals[a : b + 1] = 0.0
        for week, v in records[area].items():
            vals[week - lo] = v
        series[area] = WeeklySeries(lo, vals, "cases")
        _series_stats(report, f"cases[{area}]", series[area])
    national = series.pop(NATIONAL_ID)
    return CasesData(series, national, report)


def write_cases_csv(path, areas: dict[str, WeeklySeries], national: WeeklySeries) -> None:
    rows = []
    for area, s in [(NATIONAL_ID, national)] + sorted(areas.items()):
        for i, v in enumerate(s.values):
            rows.append([area, str(s.week_at(i)), "" if np.isnan(v) else str(int(v))])
    _write_rows(path, CASES_HEADER, rows)


# --------------------------------------------------------------------------- climate


@dataclass(frozen=True)
class StationDaily:
    dates: tuple[dt.date, ...]
    tmin: np.ndarray
    tmean: np.ndarray
    tmax: np.ndarray
    precip_mm: np.ndarray
    rh_pct: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, StationDaily):
            return NotImplemented
        return self.dates == other.dates and all(
            np.array_equal(getattr(self, k), getattr(other, k), equal_nan=True)
            for k in ("tmin", "tmean", "tmax", "precip_mm", "rh_pct")
        )

    __hash__ = None


@dataclass(frozen=True)
class ClimateData:
    stations: dict[str, StationDaily]
    report: IngestReport


def _optional_float(text: str, what: str) -> float:
    return math.nan if text == "" else _parse_float(text, what)


def _nan_corr(a: np.ndarray, b: np.ndarray) -> float:
    ok = ~(np.isnan(a) | np.isnan(b))
    if ok.sum() < 3 or np.std(a[ok]) == 0 or np.std(b[ok]) == 0:
        return math.nan
    return float(np.corrcoef(a[ok], b[ok])[0, 1])


def parse_climate_csv(source: Source, strict: bool = True) -> ClimateData:
    """Daily station records. The station id doubles as the area id."""
    report = IngestReport(_source_name(source))
    _, rows = _read_table(source, CLIMATE_HEADER, report)
    per_station: dict[str, dict[dt.date, tuple]] = {}
    for lineno, fields in rows:
        try:
            if len(fields) != 7:
                raise DataValidationError(f"expected 7 fields, got {len(fields)}")
            date_s, station = fields[0], fields[1]
            try:
                day = dt.date.fromisoformat(date_s)
            except ValueError:
                raise DataValidationError(f"malformed date {date_s!r}") from None
            if len(date_s) != 10:
                raise DataValidationError(f"malformed date {date_s!r}")
            if not station:
                raise DataValidationError("empty station id")
            tmin, tmean, tmax = (_optional_float(fields[i], n) for i, n in ((2, "tmin"), (3, "tmean"), (4, "tmax")))
            precip = _optional_float(fields[5], "precip_mm")
            rh = _optional_float(fields[6], "rh_pct")
            if precip < 0:
                raise DataValidationError(f"negative precipitation {precip}")
            if not (math.isnan(rh) or 0 <= rh <= 100):
                raise DataValidationError(f"rh_pct {rh} outside [0, 100]")
            if day in per_station.get(station, {}):
                raise DataValidationError(f"duplicate ({station}, {day})")
        except DataValidationError as exc:
            report.reject(lineno, str(exc))
            continue
        per_station.setdefault(station, {})[day] = (tmin, tmean, tmax, precip, rh)

    if not per_station:
        report.fatal.append("no valid climate rows")
    _finish(report, strict)

    stations = {}
    for station in sorted(per_station):
        days = sorted(per_station[station])
        cols = np.array([per_station[station][d] for d in days], dtype=float).T
        rec = StationDaily(tuple(days), *cols)
        stations[station] = rec
        report.coverage[f"climate[{station}]"] = f"{days[0]}..{days[-1]}"
        report.missing_fraction[f"climate[{station}]"] = float(np.isnan(cols[1:]).mean())
        lo_r, hi_r = _nan_corr(rec.tmin, rec.tmean), _nan_corr(rec.tmax, rec.tmean)
        report.notes.append(
            f"{station}: corr(tmin, tmean)={lo_r:.3f} corr(tmax, tmean)={hi_r:.3f}; tmin/tmax dropped"
        )
    return ClimateData(stations, report)


def climate_missing_fraction(data: ClimateData) -> float:
    """Fraction of missing cells over tmean, precip and humidity for all stations."""
    cells = np.concatenate(
        [np.concatenate([s.tmean, s.precip_mm, s.rh_pct]) for s in data.stations.values()]
    )
    return float(np.isnan(cells).mean())


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_climate_csv(path, stations: dict[str, StationDaily]) -> None:
    rows = []
    for station in sorted(stations):
        s = stations[station]
        for i, day in enumerate(s.dates):
            rows.append(
                [day.isoformat(), station]
                + [_fmt(getattr(s, k)[i]) for k in ("tmin", "tmean", "tmax", "precip_mm", "rh_pct")]
            )
    _write_rows(path, CLIMATE_HEADER, rows)


# --------------------------------------------------------------------------- SSTA


@dataclass(frozen=True)
class SstaData:
    series: WeeklySeries
    report: IngestReport


def parse_ssta_csv(source: Source, strict: bool = True) -> SstaData:
    report = IngestReport(_source_name(source))
    _, rows = _read_table(source, SSTA_HEADER, report)
    values: dict[EpiWeek, float] = {}
    for lineno, fields in rows:
        try:
            if len(fields) != 2:
                raise DataValidationError(f"expected 2 fields, got {len(fields)}")
            week = EpiWeek.parse(fields[0])
            v = _optional_float(fields[1], "anomaly")
            if week in values:
                raise DataValidationError(f"duplicate week {week}")
        except DataValidationError as exc:
            report.reject(lineno, str(exc))
            continue
        values[week] = v
        if abs(v) > SSTA_WARN_ABS:
            report.warnings.append(f"line {lineno}: |anomaly| {v} exceeds {SSTA_WARN_ABS}")
    if not values:
        report.fatal.append("no valid SSTA rows")
    _finish(report, strict)
    lo, hi = min(values), max(values)
    vals = np.full(hi - lo + 1, np.nan)
    for week, v in values.items():
        vals[week - lo] = v
    s = WeeklySeries(lo, vals, "degC anomaly")
    _series_stats(report, "ssta", s)
    report.notes.append("SSTA weeks read as ISO-8601 weeks; check the source convention for off-by-one shifts")
    return SstaData(s, report)


def write_ssta_csv(path, series: WeeklySeries) -> None:
    _write_rows(path, SSTA_HEADER, [[str(series.week_at(i)), _fmt(v)] for i, v in enumerate(series.values)])


# --------------------------------------------------------------------------- population


@dataclass(frozen=True)
class PopulationData:
    areas: dict[str, tuple[tuple[int, int], ...]]
    national: tuple[tuple[int, int], ...]
    report: IngestReport


def parse_population_csv(source: Source, strict: bool = True) -> PopulationData:
    report = IngestReport(_source_name(source))
    _, rows = _read_table(source, POPULATION_HEADER, report)
    anchors: dict[str, dict[int, int]] = {}
    for lineno, fields in rows:
        try:
            if len(fields) != 3:
                raise DataValidationError(f"expected 3 fields, got {len(fields)}")
            area, year_s, pop_s = fields
            if not area:
                raise DataValidationError("empty area id")
            if not (len(year_s) == 4 and year_s.isascii() and year_s.isdigit()):
                raise DataValidationError(f"malformed year {year_s!r}")
            pop = _parse_count(pop_s, "population")
            if pop == 0:
                raise DataValidationError("population must be positive")
            year = int(year_s)
            if year in anchors.get(area, {}):
                raise DataValidationError(f"duplicate ({area}, {year})")
        except DataValidationError as exc:
            report.reject(lineno, str(exc))
            continue
        anchors.setdefault(area, {})[year] = pop
    if NATIONAL_ID not in anchors:
        report.fatal.append(f"no national ({NATIONAL_ID}) population rows; relative risk undefined")
    _finish(report, strict)
    frozen = {a: tuple(sorted(v.items())) for a, v in anchors.items()}
    for a, pairs in frozen.items():
        report.coverage[f"population[{a}]"] = f"{pairs[0][0]}..{pairs[-1][0]}"
    national = frozen.pop(NATIONAL_ID)
    return PopulationData(dict(sorted(frozen.items())), national, report)


def write_population_csv(path, areas: dict, national) -> None:
    rows = [[NATIONAL_ID, str(y), str(int(p))] for y, p in national]
    for area in sorted(areas):
        rows += [[area, str(y), str(int(p))] for y, p in areas[area]]
    _write_rows(path, POPULATION_HEADER, rows)


# --------------------------------------------------------------------------- output


def _write_rows(path, header, rows, directives: dict | None = None) -> None:
    buf = io.StringIO()
    for k, v in (directives or {}).items():
        buf.write(f"#{k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary sibling and rename."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    tmp.replace(path)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
