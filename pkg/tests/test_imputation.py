import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from denguecast.core import EpiWeek
from denguecast.imputation import (
    CLIMATOLOGY,
    INTERP,
    InsufficientDataError,
    detect_gaps,
    impute,
    week_of_year_climatology,
)

from conftest import series

NAN = np.nan


def _base(n=104):
    return np.arange(n, dtype=float) % 52 + 0.5


def test_detect_gaps_examples():
    assert detect_gaps(series([1, NAN, NAN, 4])) == [(1, 2)]
    assert detect_gaps(series([1, 2, 3])) == []
    assert detect_gaps(series([NAN] * 5)) == [(0, 5)]
    assert detect_gaps(series([NAN, 1, NAN, NAN, 2, NAN])) == [(0, 1), (2, 2), (5, 1)]


def test_midpoint_interpolation():
    vals = _base()
    vals[60:] = 2.0
    vals[61] = NAN
    vals[62] = 4.0
    out, mask = impute(series(vals))
    assert out.values[61] == 3.0
    assert mask.methods == {61: INTERP}


def test_long_gap_uses_climatology():
    # every year equals 7.0 at the gap's weeks of year
    n = 52 * 4
    vals = np.where(np.arange(n) % 52 < 20, 7.0, np.arange(n) % 9)
    truth = vals.copy()
    vals[104 : 104 + 10] = NAN
    out, mask = impute(series(vals))
    assert np.all(out.values[104:114] == 7.0)
    assert set(mask.methods.values()) == {CLIMATOLOGY}
    np.testing.assert_array_equal(out.values, truth)


def test_no_gaps_identity():
    s = series(_base())
    out, mask = impute(s)
    assert out == s and len(mask) == 0


def test_insufficient_data():
    vals = np.full(60, NAN)
    vals[:51] = 1.0
    with pytest.raises(InsufficientDataError):
        impute(series(vals))


def test_edge_gaps():
    vals = _base(120)
    vals[:3] = NAN  # short leading gap: climatology
    vals[-10:] = NAN  # long trailing gap: left missing
    out, mask = impute(series(vals))
    assert not np.isnan(out.values[:3]).any()
    assert all(mask.methods[i] == CLIMATOLOGY for i in range(3))
    assert np.isnan(out.values[-10:]).all()
    assert mask.unfilled == ((110, 10),)


def test_mask_csv(tmp_path):
    vals = _base()
    vals[5] = NAN
    _, mask = impute(series(vals))
    mask.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == f"week,method\n{EpiWeek(2007, 6)},interp\n"


def test_climatology_borrows_nearest_week_number():
    # week 11 is never observed; a long gap over it takes week 10's mean (earlier wins the tie with 12)
    vals = np.arange(156, dtype=float) % 52 * 2.0
    vals[[10, 62]] = NAN
    vals[112:118] = NAN
    vals[61] = 40.0
    clim = week_of_year_climatology(series(vals))
    assert 11 not in clim
    out, mask = impute(series(vals))
    assert out.values[114] == clim[10] == (18.0 + 40.0) / 2
    assert mask.methods[114] == CLIMATOLOGY and mask.methods[10] == INTERP


@st.composite
def gappy(draw):
    n = draw(st.integers(52, 220))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    vals = rng.normal(20, 5, n) + 3 * np.sin(np.arange(n) * 2 * np.pi / 52)
    n_gaps = draw(st.integers(0, 8))
    for _ in range(n_gaps):
        a = draw(st.integers(0, n - 1))
        vals[a : a + draw(st.integers(1, 12))] = NAN
    if (~np.isnan(vals)).sum() < 52:
        vals[np.flatnonzero(np.isnan(vals))[: 52 - int((~np.isnan(vals)).sum())]] = 1.0
    start = EpiWeek(draw(st.integers(2000, 2020)), draw(st.integers(1, 52)))
    gap = draw(st.integers(0, 6))
    return series(vals, start), gap


def check_properties(s, gap):
    out, mask = impute(s, gap)
    present = ~s.missing
    # present values untouched
    assert np.array_equal(out.values[present], s.values[present])
    # idempotence
    again, mask2 = impute(out, gap)
    assert again == out
    assert len(mask2) == 0
    # every filled index is in the mask, and only those
    filled = s.missing & ~out.missing
    assert set(np.flatnonzero(filled)) == set(mask.methods)
    # interpolated values bounded by their anchors
    for start, length in detect_gaps(s):
        if mask.methods.get(start) == INTERP:
            lo, hi = sorted((s.values[start - 1], s.values[start + length]))
            seg = out.values[start : start + length]
            assert np.all((lo <= seg) & (seg <= hi))
    # climatology depends only on present values
    clim_src = week_of_year_climatology(s)
    stripped = out.with_values(np.where(filled, NAN, out.values))
    assert week_of_year_climatology(stripped) == clim_src
    # unfilled only for long edge gaps
    for start, length in mask.unfilled:
        assert length > gap and (start == 0 or start + length == len(s))
    return out, mask


@given(gappy())
def test_imputation_properties(case):
    check_properties(*case)
