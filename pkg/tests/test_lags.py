import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from denguecast.core import EpiWeek
from denguecast.lags import (
    COLUMNS,
    InsufficientRowsError,
    LagConfig,
    LagSelectionError,
    build_design,
    cross_correlation,
    read_lags_csv,
    select_lag,
    select_panel_lags,
    write_lags_csv,
)
from denguecast.synthetic import generate_panel

from conftest import make_national, make_panel
from oracles import ccf_oracle


def test_self_correlation():
    x = np.random.default_rng(0).normal(size=200)
    assert cross_correlation(x, x)[0] == pytest.approx(1.0, abs=1e-15)


def test_shifted_random_walk_peaks_at_shift():
    walk = np.cumsum(np.random.default_rng(1).normal(size=700))
    x = walk[5:]
    y = walk[:-5]  # y[t] = x[t-5]
    ccf = cross_correlation(x, y)
    oracle = ccf_oracle(list(x), list(y), 30)
    assert int(np.nanargmax(oracle)) == 5 == select_lag(ccf)


def test_independent_noise_small():
    rng = np.random.default_rng(2)
    ccf = cross_correlation(rng.normal(size=1000), rng.normal(size=1000))
    assert np.all(np.abs(ccf) < 0.2)


def test_zero_variance_is_undefined():
    x = np.r_[np.ones(40), np.arange(10.0)]
    y = np.arange(50.0)
    ccf = cross_correlation(x, y, max_lag=2)
    assert not np.isnan(ccf).any()
    ccf = cross_correlation(np.ones(50), y, max_lag=2)
    assert np.isnan(ccf).all()
    with pytest.raises(LagSelectionError):
        select_lag(ccf)


def test_too_few_pairs():
    with pytest.raises(LagSelectionError, match="lag"):
        cross_correlation(np.arange(37.0), np.arange(37.0))


def test_select_lag_examples():
    assert select_lag([0.1, 0.9, 0.3]) == 1
    assert select_lag([0.5, -0.8]) == 1
    assert select_lag([0.5, -0.8], absolute=False) == 0
    assert select_lag([0.7, 0.7]) == 0
    assert select_lag([math.nan, 0.2, -0.2]) == 1


series_pairs = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s))


@given(series_pairs, st.integers(40, 200), st.integers(0, 10), st.floats(0, 0.2))
def test_ccf_matches_oracle(rng, n, max_lag, miss):
    x = rng.normal(size=n)
    y = 0.5 * np.roll(x, rng.integers(0, 5)) + rng.normal(size=n)
    x[rng.random(n) < miss] = np.nan
    try:
        got = cross_correlation(x, y, max_lag, min_pairs=3)
    except LagSelectionError:
        return
    want = np.array(ccf_oracle(list(x), list(y), max_lag))
    np.testing.assert_allclose(got, want, atol=1e-10, equal_nan=True)


@given(series_pairs, st.floats(0.01, 100), st.floats(-100, 100), st.floats(0.01, 100), st.floats(-100, 100))
def test_selection_affine_invariant(rng, a, b, c, d):
    x = np.cumsum(rng.normal(size=150))
    y = np.roll(x, 3) + rng.normal(size=150)
    base = cross_correlation(x, y, 10)
    scaled = cross_correlation(a * x + b, c * y + d, 10)
    np.testing.assert_allclose(scaled, base, atol=1e-9)
    if np.sort(np.abs(base))[-1] - np.sort(np.abs(base))[-2] > 1e-6:
        assert select_lag(scaled) == select_lag(base)


def test_lag_config_bounds():
    with pytest.raises(ValueError):
        LagConfig(0, 0, 0, 31)
    with pytest.raises(ValueError):
        LagConfig(-1, 0, 0, 0)
    assert LagConfig(1, 2, 3, 4).max_lag == 4


def _panel_with_rr(n=574, seed=0):
    return generate_panel(seed, years=11).panel


def test_design_trims_one_row_for_zero_lags():
    panel = _panel_with_rr()
    d = build_design(panel, LagConfig(0, 0, 0, 0))
    assert len(d) == len(panel) - 1 and d.weeks[0] == panel.start + 1
    assert d.columns == COLUMNS and d.X.shape[1] == 9


def test_design_trims_max_lag_rows():
    panel = _panel_with_rr()
    d = build_design(panel, LagConfig(5, 7, 29, 27))
    assert len(panel) == 574
    assert len(panel) - len(d) == 29


def test_design_constant_covariate_survives():
    n = 120
    cases = np.arange(n) % 7 + 1
    panel = make_panel(cases, np.full(n, 1000.0)).with_rr(make_national(np.full(n, 50), np.full(n, 1e5)))
    d = build_design(panel, LagConfig(2, 0, 0, 3))
    assert np.all(d.X[:, COLUMNS.index("rh")] == 80.0)
    assert np.all(d.X[:, COLUMNS.index("ssta_lag")] == 0.0)


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.randoms())
def test_design_offsets(l1, l2, l3, l4, rnd):
    panel = PANEL
    lags = LagConfig(l1, l2, l3, l4)
    d = build_design(panel, lags)
    cov = panel.covariates
    for _ in range(5):
        r = rnd.randrange(len(d))
        t = panel.cases.index_of(d.weeks[r])
        row = d.X[r]
        expect = [
            panel.rr.values[t - 1],
            cov.rel_humidity.values[t], cov.rel_humidity.values[t - l1],
            cov.precip_log.values[t], cov.precip_log.values[t - l2],
            cov.mean_temp.values[t], cov.mean_temp.values[t - l3],
            cov.ssta.values[t], cov.ssta.values[t - l4],
        ]
        assert row.tolist() == expect
        assert d.y[r] == panel.rr.values[t]
    assert all(a < b for a, b in zip(d.weeks, d.weeks[1:]))


PANEL = generate_panel(3, years=5).panel


def test_design_drops_missing_rows():
    panel = generate_panel(4, years=5, missing_rate=0.02).panel
    d = build_design(panel, LagConfig(1, 1, 1, 1))
    assert not np.isnan(d.X).any()
    assert len(d.dropped) > 0
    assert set(d.dropped).isdisjoint(d.weeks)


def test_design_too_few_rows():
    panel = generate_panel(0, years=3).panel
    with pytest.raises(InsufficientRowsError):
        build_design(panel, LagConfig(0, 0, 0, 0), min_rows=1000)


def test_case_count_response():
    panel = PANEL
    d = build_design(panel, LagConfig(1, 2, 3, 4), response="cases")
    t = panel.cases.index_of(d.weeks[0])
    assert d.y[0] == panel.cases.values[t]
    assert d.X[0, 0] == panel.cases.values[t - 1]
    assert d.columns[0] == "cases_lag1"
    with pytest.raises(ValueError):
        build_design(panel, LagConfig(1, 2, 3, 4), response="incidence")


def test_selection_recovers_planted_lags():
    lags = LagConfig(6, 7, 27, 28)
    sel = select_panel_lags(generate_panel(7, years=10, lags=lags).panel)
    assert sel.lags == lags


def test_selection_ignores_data_after_train_end():
    area = generate_panel(8, years=11)
    panel = area.panel
    cut = EpiWeek(2016, 52)
    base = select_panel_lags(panel, cut)
    i = panel.cases.index_of(cut) + 1
    noisy = panel.covariates.ssta.values.copy()
    noisy[i:] = np.random.default_rng(0).normal(size=len(noisy) - i) * 50
    cov = type(panel.covariates)(
        panel.covariates.mean_temp, panel.covariates.precip_log, panel.covariates.rel_humidity,
        panel.covariates.ssta.with_values(noisy),
    )
    moved = type(panel)(panel.area, panel.cases, panel.population, cov, panel.rr)
    other = select_panel_lags(moved, cut)
    assert other.lags == base.lags and other.correlations == base.correlations


def test_selection_max_lag_zero(tmp_path):
    sel = select_panel_lags(PANEL, max_lag=0)
    assert sel.lags.as_tuple() == (0, 0, 0, 0)
    rr = select_panel_lags(PANEL, target="rr")
    assert all(-1 <= c <= 1 for c in rr.correlations.values())
    write_lags_csv(tmp_path / "lags.csv", [rr])
    text = (tmp_path / "lags.csv").read_text()
    assert text.splitlines()[0] == "area,covariate,lag,correlation"
    assert len(text.splitlines()) == 5
    assert read_lags_csv(tmp_path / "lags.csv") == {"A": rr.lags}


def test_raw_criterion_ignores_sign():
    rng = np.random.default_rng(5)
    x = rng.normal(size=300)
    y = -np.roll(x, 4) + 0.1 * rng.normal(size=300)
    ccf = cross_correlation(x, y, 10)
    assert select_lag(ccf) == 4
    assert select_lag(ccf, absolute=False) != 4
