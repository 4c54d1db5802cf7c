import json

import numpy as np
import pytest

from denguecast.core import compute_relative_risk
from denguecast.ingest import climate_missing_fraction, parse_cases_csv, parse_climate_csv
from denguecast.lags import LagConfig, select_panel_lags
from denguecast.pipeline import input_paths, load
from denguecast.synthetic import AREA_LAGS, SHAPES, generate_dataset, generate_panel, n_weeks_for


def test_rr_roundtrip_noise_free():
    a = generate_panel(0, years=5, noise_sd=0.0)
    rr = compute_relative_risk(a.panel, a.national).values
    np.testing.assert_allclose(rr, a.truth.rr, rtol=1e-9, atol=1e-12)
    assert np.all(a.truth.rr >= 0)


def test_same_seed_same_bytes(tmp_path):
    a = generate_dataset(4, years=4, n_areas=2).write(tmp_path / "a")
    b = generate_dataset(4, years=4, n_areas=2).write(tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    c = generate_dataset(5, years=4, n_areas=2).write(tmp_path / "c")
    assert c["cases"].read_bytes() != a["cases"].read_bytes()


def test_no_missing_by_default():
    p = generate_panel(1, years=4).panel
    assert not any(s.missing.any() for s in p.covariates.as_dict().values())


def test_missing_rate_hits_target():
    p = generate_panel(2, years=11, missing_rate=0.1).panel
    frac = np.mean([s.missing.mean() for s in p.covariates.as_dict().values()])
    assert abs(frac - 0.1) < 0.02


def test_argument_checks():
    with pytest.raises(ValueError):
        generate_panel(0, years=2)
    with pytest.raises(ValueError):
        generate_panel(0, noise_sd=-1)
    with pytest.raises(ValueError):
        generate_panel(0, effects={"rel_humidity": "cubic"})
    with pytest.raises(ValueError):
        generate_dataset(0, missing_rate=1.0)


def test_shapes_are_monotone_and_smooth():
    x = np.linspace(-4, 4, 101)
    for f in SHAPES.values():
        assert np.all(np.diff(f(x)) > 0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_planted_lags_recovered(seed):
    lags = LagConfig(5, 7, 29, 27)
    assert select_panel_lags(generate_panel(seed, years=10, lags=lags).panel).lags == lags


def test_truth_record(tmp_path):
    ds = generate_dataset(3, years=4, n_areas=2)
    paths = ds.write(tmp_path)
    truth = json.loads(paths["truth"].read_text())
    assert truth["seed"] == 3 and "PCG64" in truth["rng"]
    assert [a["lags"]["mean_temp"] for a in truth["areas"]] == [AREA_LAGS[0].temp, AREA_LAGS[1].temp]
    assert len(truth["areas"][0]["rr"]) == n_weeks_for(2007, 4)


def test_dataset_through_pipeline(tmp_path):
    ds = generate_dataset(6, years=11, n_areas=3)
    paths = ds.write(tmp_path)
    assert len(parse_cases_csv(paths["cases"]).national) == 574
    asm = load(input_paths(tmp_path))
    assert set(asm.panels) == {"area01", "area02", "area03"}
    for a in ds.areas:
        got = asm.panels[a.panel.area]
        np.testing.assert_allclose(got.rr.values, a.truth.rr, rtol=1e-9)
        for name, s in got.covariates.as_dict().items():
            np.testing.assert_allclose(s.values, a.panel.covariates.as_dict()[name].values, rtol=1e-12, atol=1e-12)


def test_daily_missing_fraction(tmp_path):
    paths = generate_dataset(7, years=11, n_areas=5, missing_rate=0.05).write(tmp_path)
    frac = climate_missing_fraction(parse_climate_csv(paths["climate"]))
    assert abs(frac - 0.05) < 0.02
    asm = load(input_paths(tmp_path))
    for panel in asm.panels.values():
        assert not any(s.missing.any() for s in panel.covariates.as_dict().values())
