"""Seeded synthetic panels with planted lags and known covariate effects.

Randomness comes from numpy's PCG64 generator seeded through SeedSequence
(numpy >= 1.17 stream definitions), so panels are reproducible across
platforms.

Generating process per area, weekly, after a burn-in:

    climate   = base + annual sinusoid + ENSO-like sinusoid (~3.5 y) + white noise
    rr[t]     = max(0, ar * rr[t-1] + level * (1 - ar)
                        + sum_j amp_j * shape_j(z_j[t - lag_j]) + N(0, noise_sd))
    cases[t]  = round(rr[t] * pop[t] * national_cases / national_pop)

and rr is then re-derived from the integer cases so the relative risk
computed from the emitted data reproduces it exactly.
"""
from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    CALENDAR,
    AreaPanel,
    CovariateSet,
    EpiWeek,
    NationalReference,
    WeeklySeries,
    interpolate_population,
)
from .ingest import (
    StationDaily,
    atomic_write_text,
    write_cases_csv,
    write_climate_csv,
    write_population_csv,
    write_ssta_csv,
)
from .lags import COVARIATES, LagConfig

WEEKS_PER_YEAR = 365.2425 / 7.0
BURN_IN = 60

SHAPES = {
    "linear": lambda z: z,
    "tanh": np.tanh,
    "arctan": np.arctan,
    "softplus": lambda z: np.logaddexp(0.0, z) - math.log(2.0),
}

DEFAULT_EFFECTS = {"rel_humidity": "tanh", "precip_log": "linear", "mean_temp": "softplus", "ssta": "arctan"}
DEFAULT_AMPLITUDE = {"rel_humidity": 0.35, "precip_log": 0.3, "mean_temp": 0.6, "ssta": 0.3}

# base, annual amplitude, ENSO loading, noise sd
CLIMATE = {
    "rel_humidity": (78.0, 1.5, 0.5, 4.0),
    "precip_log": (3.0, 0.25, 0.1, 0.8),
    "mean_temp": (27.0, 0.25, 0.1, 0.8),
}
SSTA_AMPLITUDE, SSTA_NOISE = 0.3, 0.6
ENSO_PERIOD_YEARS = 3.5

#: planted lags (humidity, precip, temp, ssta) cycled over synthetic areas
AREA_LAGS = (
    LagConfig(5, 7, 29, 27),
    LagConfig(6, 7, 27, 28),
    LagConfig(7, 17, 4, 14),
    LagConfig(7, 3, 19, 27),
    LagConfig(10, 10, 25, 22),
)

NATIONAL_POP = 5_000_000
NATIONAL_CASES = 2_500
POP_GROWTH = 0.015


def n_weeks_for(start_year: int, years: int) -> int:
    return sum(CALENDAR.weeks_in_year(y) for y in range(start_year, start_year + years))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _standardize(name: str, x: np.ndarray) -> np.ndarray:
    if name == "ssta":
        sd = math.sqrt(SSTA_AMPLITUDE**2 / 2 + SSTA_NOISE**2)
        return x / sd
    base, amp, enso, noise = CLIMATE[name]
    sd = math.sqrt(amp**2 / 2 + (enso * SSTA_AMPLITUDE) ** 2 / 2 + noise**2)
    return (x - base) / sd


def simulate_ssta(seed: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Shared anomaly series and its noise-free ENSO cycle over ``n`` weeks (burn-in included)."""
    rng = _rng(seed, 0)
    t = np.arange(n) - BURN_IN
    phase = rng.uniform(0, 2 * np.pi)
    enso = np.sin(2 * np.pi * t / (ENSO_PERIOD_YEARS * WEEKS_PER_YEAR) + phase)
    return SSTA_AMPLITUDE * enso + SSTA_NOISE * rng.standard_normal(n), enso


def annual_populations(base: int, start_year: int, years: int) -> tuple[tuple[int, int], ...]:
    return tuple((y, int(round(base * (1 + POP_GROWTH) ** (y - start_year)))) for y in range(start_year, start_year + years))


@dataclass(frozen=True, eq=False)
class AreaTruth:
    area: str
    lags: LagConfig
    effects: dict[str, str]
    amplitudes: dict[str, float]
    ar: float
    level: float
    noise_sd: float
    population: tuple[tuple[int, int], ...]
    rr: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "area": self.area,
            "lags": self.lags.as_dict(),
            "effects": self.effects,
            "amplitudes": self.amplitudes,
            "ar": self.ar,
            "level": self.level,
            "noise_sd": self.noise_sd,
            "population": [list(p) for p in self.population],
            "rr": self.rr.tolist(),
        }


@dataclass(frozen=True, eq=False)
class SyntheticArea:
    panel: AreaPanel
    national: NationalReference
    truth: AreaTruth


def _simulate_area(
    rng: np.random.Generator,
    area: str,
    start: EpiWeek,
    n: int,
    lags: LagConfig,
    ssta_full: np.ndarray,
    enso_full: np.ndarray,
    effects: dict[str, str],
    amplitudes: dict[str, float],
    noise_sd: float,
    ar: float,
    level: float,
    population: tuple[tuple[int, int], ...],
    national: NationalReference,
) -> tuple[dict[str, np.ndarray], np.ndarray, np.ndarray, np.ndarray]:
    total = n + BURN_IN
    t = np.arange(total) - BURN_IN
    annual_phase = rng.uniform(0, 2 * np.pi)
    climate = {}
    for name, (base, amp, enso_w, sd) in CLIMATE.items():
        shift = rng.uniform(-0.5, 0.5)
        x = base + amp * np.sin(2 * np.pi * t / WEEKS_PER_YEAR + annual_phase + shift)
        x = x + enso_w * SSTA_AMPLITUDE * enso_full + sd * rng.standard_normal(total)
        climate[name] = x
    climate["rel_humidity"] = np.clip(climate["rel_humidity"], 0.0, 100.0)
    climate["precip_log"] = np.maximum(climate["precip_log"], 0.0)
    climate["ssta"] = ssta_full

    drive = np.zeros(total)
    for name, lag in lags.as_dict().items():
        g = SHAPES[effects[name]](_standardize(name, climate[name]))
        shifted = np.zeros(total)
        shifted[lag:] = g[: total - lag]
        drive += amplitudes[name] * shifted
    eps = noise_sd * rng.standard_normal(total)

    pop = interpolate_population(population, start, n).values
    nat_rate = national.cases.values / national.population.values
    scale = np.concatenate([np.full(BURN_IN, pop[0] * nat_rate[0]), pop * nat_rate])
    rr = np.empty(total)
    cases = np.empty(total)
    prev = level
    for i in range(total):
        cont = max(0.0, ar * prev + level * (1 - ar) + drive[i] + eps[i])
        cases[i] = float(round(cont * scale[i]))
        prev = cases[i] / scale[i]
        rr[i] = prev
    cov = {k: v[BURN_IN:] for k, v in climate.items()}
    return cov, rr[BURN_IN:], cases[BURN_IN:], pop


def _build_national(start: EpiWeek, n: int, start_year: int, years: int) -> tuple[NationalReference, tuple]:
    anchors = annual_populations(NATIONAL_POP, start_year, years)
    pop = interpolate_population(anchors, start, n)
    cases = WeeklySeries(start, np.full(n, float(NATIONAL_CASES)), "cases")
    return NationalReference(cases, pop), anchors


def _apply_missing(rng, values: np.ndarray, rate: float) -> np.ndarray:
    if rate <= 0:
        return values
    out = values.copy()
    out[rng.random(len(out)) < rate] = np.nan
    return out


def _panel(area, start, cov, cases, pop, national, rr) -> AreaPanel:
    units = {"rel_humidity": "%", "precip_log": "log-mm", "mean_temp": "degC", "ssta": "degC anomaly"}
    series = {k: WeeklySeries(start, cov[k], units[k]) for k in COVARIATES}
    covs = CovariateSet(series["mean_temp"], series["precip_log"], series["rel_humidity"], series["ssta"])
    return AreaPanel(
        area,
        WeeklySeries(start, cases, "cases"),
        WeeklySeries(start, pop, "persons"),
        covs,
        WeeklySeries(start, rr, "relative risk"),
    )


def generate_panel(
    seed: int,
    years: int = 10,
    lags: LagConfig = AREA_LAGS[0],
    effects: Optional[dict[str, str]] = None,
    noise_sd: float = 0.05,
    *,
    start_year: int = 2007,
    area: str = "A",
    ar: float = 0.6,
    level: float = 1.5,
    base_population: int = 100_000,
    missing_rate: float = 0.0,
) -> SyntheticArea:
    """One area with its national reference and the generating record.

    ``missing_rate`` blanks that fraction of weekly covariate values at random.
    """
    if years < 3:
        raise ValueError("need at least 3 years")
    if noise_sd < 0:
        raise ValueError("noise sd must be non-negative")
    effects = dict(DEFAULT_EFFECTS if effects is None else effects)
    for name in COVARIATES:
        if effects.get(name) not in SHAPES:
            raise ValueError(f"no effect shape for {name}; choose from {sorted(SHAPES)}")
    start = EpiWeek(start_year, 1)
    n = n_weeks_for(start_year, years)
    ssta_full, enso_full = simulate_ssta(seed, n + BURN_IN)
    national, _ = _build_national(start, n, start_year, years)
    population = annual_populations(base_population, start_year, years)
    rng = _rng(seed, 1)
    cov, rr, cases, pop = _simulate_area(
        rng, area, start, n, lags, ssta_full, enso_full, effects, DEFAULT_AMPLITUDE,
        noise_sd, ar, level, population, national,
    )
    if missing_rate > 0:
        mrng = _rng(seed, 2)
        cov = {k: _apply_missing(mrng, v, missing_rate) for k, v in cov.items()}
    truth = AreaTruth(area, lags, effects, dict(DEFAULT_AMPLITUDE), ar, level, noise_sd, population, rr)
    return SyntheticArea(_panel(area, start, cov, cases, pop, national, rr), national, truth)


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    seed: int
    start_year: int
    years: int
    areas: tuple[SyntheticArea, ...]
    national: NationalReference
    national_population: tuple[tuple[int, int], ...]
    ssta: WeeklySeries
    missing_rate: float

    def daily_climate(self) -> dict[str, StationDaily]:
        """Daily station records whose weekly aggregates are the planted covariates."""
        stations = {}
        start = self.national.cases.start
        n = len(self.national.cases)
        days = tuple(start.monday() + dt.timedelta(days=i) for i in range(7 * n))
        for idx, a in enumerate(self.areas):
            cov = a.panel.covariates
            rng = _rng(self.seed, 100 + idx)
            tmean = np.repeat(cov.mean_temp.values, 7)
            rh = np.repeat(cov.rel_humidity.values, 7)
            precip = np.repeat((np.exp(cov.precip_log.values) - 1.0) / 7.0, 7)
            tmin = tmean - 5.0 + 0.3 * rng.standard_normal(len(days))
            tmax = tmean + 5.0 + 0.3 * rng.standard_normal(len(days))
            cols = [tmin, tmean, tmax, precip, rh]
            if self.missing_rate > 0:
                mrng = _rng(self.seed, 200 + idx)
                cols = [_apply_missing(mrng, c, self.missing_rate) for c in cols]
            stations[a.panel.area] = StationDaily(days, *cols)
        return stations

    def truth_dict(self) -> dict:
        return {
            "seed": self.seed,
            "start_year": self.start_year,
            "years": self.years,
            "missing_rate": self.missing_rate,
            "rng": f"numpy PCG64 via SeedSequence (numpy {np.__version__})",
            "national": {"cases_per_week": NATIONAL_CASES, "population": [list(p) for p in self.national_population]},
            "areas": [a.truth.to_dict() for a in self.areas],
        }

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "cases": out / "cases.csv",
            "climate": out / "climate.csv",
            "ssta": out / "ssta.csv",
            "population": out / "population.csv",
            "truth": out / "truth.json",
        }
        write_cases_csv(paths["cases"], {a.panel.area: a.panel.cases for a in self.areas}, self.national.cases)
        write_climate_csv(paths["climate"], self.daily_climate())
        write_ssta_csv(paths["ssta"], self.ssta)
        write_population_csv(
            paths["population"], {a.panel.area: a.truth.population for a in self.areas}, self.national_population
        )
        atomic_write_text(paths["truth"], json.dumps(self.truth_dict(), indent=1, sort_keys=True) + "\n")
        return paths


def generate_dataset(
    seed: int,
    years: int = 11,
    n_areas: int = 5,
    noise_sd: float = 0.05,
    missing_rate: float = 0.0,
    start_year: int = 2007,
) -> SyntheticDataset:
    """Several areas sharing one SSTA series and one national reference."""
    if years < 3:
        raise ValueError("need at least 3 years")
    if n_areas < 1:
        raise ValueError("need at least one area")
    if not 0 <= missing_rate < 1:
        raise ValueError("missing rate must lie in [0, 1)")
    start = EpiWeek(start_year, 1)
    n = n_weeks_for(start_year, years)
    ssta_full, enso_full = simulate_ssta(seed, n + BURN_IN)
    national, nat_pop = _build_national(start, n, start_year, years)
    areas = []
    for i in range(n_areas):
        name = f"area{i + 1:02d}"
        lags = AREA_LAGS[i % len(AREA_LAGS)]
        base_pop = [100_000, 60_000, 90_000, 45_000, 280_000][i % 5]
        population = annual_populations(base_pop, start_year, years)
        rng = _rng(seed, 10 + i)
        level = 1.0 + 0.25 * (i % 5)
        cov, rr, cases, pop = _simulate_area(
            rng, name, start, n, lags, ssta_full, enso_full, DEFAULT_EFFECTS, DEFAULT_AMPLITUDE,
            noise_sd, 0.6, level, population, national,
        )
        truth = AreaTruth(name, lags, dict(DEFAULT_EFFECTS), dict(DEFAULT_AMPLITUDE), 0.6, level, noise_sd, population, rr)
        areas.append(SyntheticArea(_panel(name, start, cov, cases, pop, national, rr), national, truth))
    ssta = WeeklySeries(start, ssta_full[BURN_IN:], "degC anomaly")
    return SyntheticDataset(seed, start_year, years, tuple(areas), national, nat_pop, ssta, missing_rate)
