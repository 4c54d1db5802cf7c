"""Turn parsed input files into per-area panels ready for lag selection."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .core import (
    AreaPanel,
    CovariateSet,
    DataValidationError,
    NationalReference,
    WeeklySeries,
    aggregate_daily_to_weekly,
    interpolate_population,
    log_transform_precip,
)
from .imputation import ImputationMask, impute
from .ingest import (
    CasesData,
    ClimateData,
    PopulationData,
    SstaData,
    parse_cases_csv,
    parse_climate_csv,
    parse_population_csv,
    parse_ssta_csv,
)

INPUT_FILES = {"cases": "cases.csv", "climate": "climate.csv", "ssta": "ssta.csv", "population": "population.csv"}


@dataclass(frozen=True)
class Assembly:
    panels: dict[str, AreaPanel]
    national: NationalReference
    masks: dict[str, ImputationMask] = field(default_factory=dict)


def _complete(s: WeeklySeries, key: str, max_interp_gap: int, masks: dict) -> WeeklySeries:
    filled, mask = impute(s, max_interp_gap)
    masks[key] = mask
    return filled


def assemble(
    cases: CasesData,
    climate: ClimateData,
    ssta: SstaData,
    population: PopulationData,
    precip_offset: float = 1.0,
    max_interp_gap: int = 4,
) -> Assembly:
    """Align everything on the case-count week range and compute relative risk.

    Daily climate is aggregated to weeks (mean temperature and humidity by mean,
    precipitation by sum), precipitation is log-transformed, then every
    covariate is gap-filled.
    """
    start, end = cases.national.start, cases.national.end
    n = len(cases.national)
    if cases.national.missing.any():
        raise DataValidationError(f"national cases missing at {cases.national.week_at(int(cases.national.missing.argmax()))}")
    national = NationalReference(cases.national, interpolate_population(population.national, start, n))
    masks: dict[str, ImputationMask] = {}
    ssta_s = _complete(ssta.series.window(start, end), "ssta", max_interp_gap, masks)

    panels = {}
    for area, area_cases in cases.areas.items():
        if area_cases.missing.any():
            first = area_cases.week_at(int(area_cases.missing.argmax()))
            raise DataValidationError(f"{area}: case count missing at {first}")
        if area not in climate.stations:
            raise DataValidationError(f"{area}: no climate station with this id")
        if area not in population.areas:
            raise DataValidationError(f"{area}: no population rows")
        st = climate.stations[area]
        tmean = aggregate_daily_to_weekly(st.dates, st.tmean, "mean", "degC").series.window(start, end)
        rh = aggregate_daily_to_weekly(st.dates, st.rh_pct, "mean", "%").series.window(start, end)
        precip = aggregate_daily_to_weekly(st.dates, st.precip_mm, "sum", "mm").series.window(start, end)
        covs = CovariateSet(
            mean_temp=_complete(tmean, f"{area}:mean_temp", max_interp_gap, masks),
            precip_log=_complete(log_transform_precip(precip, precip_offset), f"{area}:precip_log", max_interp_gap, masks),
            rel_humidity=_complete(rh, f"{area}:rel_humidity", max_interp_gap, masks),
            ssta=ssta_s,
        )
        pop = interpolate_population(population.areas[area], start, n)
        panels[area] = AreaPanel(area, area_cases, pop, covs).with_rr(national)
    return Assembly(panels, national, masks)


def input_paths(data_dir=None, **overrides) -> dict[str, Path]:
    paths = {}
    for key, name in INPUT_FILES.items():
        if overrides.get(key):
            paths[key] = Path(overrides[key])
        elif data_dir is not None:
            paths[key] = Path(data_dir) / name
        else:
            raise ValueError(f"no path for the {key} file; pass --{key} or --data-dir")
    return paths


def load(paths: dict[str, Path], **kwargs) -> Assembly:
    return assemble(
        parse_cases_csv(paths["cases"]),
        parse_climate_csv(paths["climate"]),
        parse_ssta_csv(paths["ssta"]),
        parse_population_csv(paths["population"]),
        **kwargs,
    )
