import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.interpolate import CubicSpline

from denguecast.gam import (
    LOG_RHO_BOUNDS,
    CubicRegressionBasis,
    GamRankError,
    OverParameterizedError,
    _PenalizedProblem,
    build_basis,
    dumps_gam,
    fit_gam,
    gcv_score,
    loads_gam,
    place_knots,
    predict_gam,
)
from denguecast.lags import COLUMNS

from oracles import ols_fit

HI = LOG_RHO_BOUNDS[1]


def test_knots_are_order_statistics():
    x = np.random.default_rng(0).uniform(size=1001)
    kn = place_knots(x, 10)
    xs = np.sort(x)
    assert kn[0] == xs[0] and kn[-1] == xs[-1]
    np.testing.assert_array_equal(kn, xs[[round(i * 1000 / 9) for i in range(10)]])
    np.testing.assert_allclose(kn, np.linspace(0, 1, 10), atol=0.05)


def test_knots_fall_back_to_distinct_values():
    x = np.r_[np.zeros(500), np.arange(1.0, 21.0)]
    kn = place_knots(x, 10)
    assert np.all(np.diff(kn) > 0) and kn[0] == 0 and kn[-1] == 20


def test_cardinal_property():
    kn = np.sort(np.random.default_rng(1).uniform(0, 5, 10))
    B = CubicRegressionBasis(kn).evaluate(kn)
    np.testing.assert_allclose(B, np.eye(10), atol=1e-13)


@given(st.integers(0, 2**32 - 1))
def test_basis_matches_natural_spline(seed):
    rng = np.random.default_rng(seed)
    kn = np.sort(rng.uniform(-3, 3, 8))
    if np.min(np.diff(kn)) < 1e-3:
        return
    coef = rng.normal(size=8)
    cs = CubicSpline(kn, coef, bc_type="natural")
    xs = np.linspace(kn[0], kn[-1], 200)
    basis = CubicRegressionBasis(kn)
    np.testing.assert_allclose(basis.evaluate(xs) @ coef, cs(xs), atol=1e-9)
    # penalty equals the integrated squared second derivative
    quad = sum(integrate.quad(lambda t: cs(t, 2) ** 2, a, b)[0] for a, b in zip(kn, kn[1:]))
    assert coef @ basis.penalty @ coef == pytest.approx(quad, rel=1e-8, abs=1e-10)


def test_linear_extrapolation_continues_tangent():
    kn = np.array([0.0, 0.5, 1.5, 2.0, 3.0])
    coef = np.array([1.0, -1.0, 2.0, 0.0, 1.5])
    cs = CubicSpline(kn, coef, bc_type="natural")
    b = CubicRegressionBasis(kn)
    for x0, side in ((kn[-1], [3.5, 7.0]), (kn[0], [-0.2, -4.0])):
        want = cs(x0) + cs(x0, 1) * (np.array(side) - x0)
        np.testing.assert_allclose(b.evaluate(side) @ coef, want, atol=1e-12)


def test_penalty_null_space_and_psd():
    x = np.random.default_rng(2).gamma(2.0, size=300)
    b = build_basis(x, 10)
    S = b.penalty
    lin = 2 * b.knots + 3
    assert abs(lin @ S @ lin) < 1e-10
    assert abs(np.ones(10) @ S @ np.ones(10)) < 1e-10
    np.testing.assert_array_equal(S, S.T)
    assert np.linalg.eigvalsh(S).min() >= -1e-10


def test_build_basis_reduces_k_and_errors():
    with pytest.warns(UserWarning, match="reducing"):
        b = build_basis(np.repeat(np.arange(6.0), 5), 10)
    assert b.k == 6
    with pytest.raises(ValueError):
        build_basis(np.repeat([1.0, 2.0, 3.0], 10), 10)
    with pytest.raises(ValueError):
        build_basis(np.arange(50.0), 3)


def _one(x, y, **kw):
    return fit_gam((np.asarray(x)[:, None], np.asarray(y)), **kw)


def test_linear_exact_fit_and_upper_bound():
    x = np.random.default_rng(3).uniform(0, 10, 200)
    y = 1.5 * x - 4
    m = _one(x, y)
    np.testing.assert_allclose(m.fitted, y, atol=1e-8)
    assert m.log_rho[0] == HI


def test_sine_recovery():
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 1, 500)
    truth = np.sin(2 * np.pi * x)
    m = _one(x, truth + rng.normal(0, 0.05, 500))
    assert np.sqrt(np.mean((m.fitted - truth) ** 2)) < 0.05
    assert 4 < m.edf < 11


def test_constant_response():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 3))
    m = fit_gam((X, np.full(200, 2.5)), k=6)
    assert m.intercept == pytest.approx(2.5, abs=1e-8)
    assert np.abs(m.components(X)).max() < 1e-8


def _nine(seed=6, n=400, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 9))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] ** 2 - X[:, 2] + rng.normal(0, noise, n)
    return X, y


@pytest.fixture(scope="module")
def nine_model():
    X, y = _nine()
    return X, y, fit_gam((X, y))


def test_penalty_null_space_every_term(nine_model):
    _, _, m = nine_model
    for t in m.terms:
        for beta in (np.ones(len(t.knots)), t.knots.copy(), 3 * t.knots - 7):
            assert abs(beta @ t.penalty @ beta) < 1e-10
        assert np.linalg.eigvalsh(t.penalty).min() >= -1e-10


def test_centering_and_residuals(nine_model):
    X, y, m = nine_model
    comps = m.components(X)
    assert np.abs(comps.sum(axis=0)).max() < 1e-8 * len(y)
    resid = y - m.fitted
    assert abs(resid.sum()) < 1e-8 * len(y) * y.std()


def test_predict_consistency(nine_model):
    X, y, m = nine_model
    np.testing.assert_allclose(m.predict(X), m.fitted, atol=1e-10)
    perm = np.random.default_rng(0).permutation(len(X))
    np.testing.assert_allclose(m.predict(X[perm]), m.predict(X)[perm], atol=1e-12)
    pred, flags = predict_gam(m, X * 10)
    assert flags.any() and not m.out_of_range(X).any()


def test_fit_summary(nine_model):
    X, y, m = nine_model
    rss = np.sum((y - m.fitted) ** 2)
    assert m.sigma2 == pytest.approx(rss / (len(y) - m.edf), rel=1e-10)
    assert m.gcv == pytest.approx(gcv_score(y, m.fitted, m.edf), rel=1e-10)
    assert sum(t.edf for t in m.terms) + 1 == pytest.approx(m.edf, rel=1e-8)
    assert m.converged


def test_zero_coefficients_predict_intercept(nine_model):
    _, _, m = nine_model
    from dataclasses import replace

    zero = replace(m, terms=tuple(replace(t, coef=np.zeros_like(t.coef)) for t in m.terms))
    np.testing.assert_array_equal(zero.predict(np.random.default_rng(1).normal(size=(5, 9))), m.intercept)


def test_influence_trace_two_ways():
    X, y = _nine(n=250)
    p = _PenalizedProblem(X, y, [f"x{j}" for j in range(9)], 10)
    for rho in (np.zeros(9), np.full(9, -3.0), np.linspace(-6, 6, 9)):
        explicit, leverages = p.influence_trace(rho)
        assert explicit == pytest.approx(leverages, abs=1e-8)
        assert explicit == pytest.approx(p.solve(rho)[2], abs=1e-8)


def test_upper_bound_matches_ols():
    X, y = _nine()
    m = fit_gam((X, y), log_rho=HI)
    np.testing.assert_allclose(m.fitted, ols_fit(X, y), atol=1e-4)
    ols = ols_fit(X, y)
    gcv_lin = len(y) * np.sum((y - ols) ** 2) / (len(y) - 10) ** 2
    assert m.gcv == pytest.approx(gcv_lin, rel=1e-4)


def test_gcv_score():
    assert gcv_score([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 2) == 0.0
    assert gcv_score([0.0, 2.0], [1.0, 1.0], 1) == 2 * 2 / 1
    with pytest.raises(OverParameterizedError):
        gcv_score([1.0, 2.0], [1.0, 2.0], 2)


def test_noise_covariate_does_not_raise_gcv():
    rng = np.random.default_rng(7)
    n = 1000
    x = rng.uniform(-2, 2, n)
    noise = rng.normal(size=n)
    y = np.tanh(2 * x) + rng.normal(0, 0.3, n)
    with_noise = fit_gam((np.column_stack([x, noise]), y))
    without = fit_gam((x[:, None], y))
    # sampling noise at n=1000: relative GCV standard error is about sqrt(2/n)
    assert without.gcv <= with_noise.gcv * (1 + 2 * np.sqrt(2 / n))


def test_rank_error_names_column():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(200, 3))
    X[:, 1] = np.repeat([1.0, 2.0], 100)
    with pytest.raises(GamRankError, match="x1"):
        fit_gam((X, rng.normal(size=200)), k=5)
    X[:, 1] = 2 * X[:, 0] + 1
    with pytest.raises(GamRankError, match="x1"):
        fit_gam((X, rng.normal(size=200)), k=5)


def test_constant_column_is_null_term():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(200, 3))
    X[:, 2] = 5.0
    y = np.sin(X[:, 0]) + rng.normal(0, 0.1, 200)
    with pytest.warns(UserWarning, match="x2"):
        m = fit_gam((X, y), k=6)
    t = m.terms[2]
    assert t.is_null and np.all(t(np.array([5.0, 9.0])) == 0) and np.isnan(m.log_rho[2])
    assert m.out_of_range(np.array([[0.0, 0.0, 6.0]]))[0]
    back = loads_gam(dumps_gam(m))
    np.testing.assert_array_equal(back.predict(X), m.predict(X))


def test_too_few_rows():
    with pytest.raises(ValueError, match="rows"):
        fit_gam((np.random.default_rng(0).normal(size=(50, 9)), np.zeros(50)))


def test_serialization_roundtrip(nine_model):
    X, _, m = nine_model
    text = dumps_gam(m)
    back = loads_gam(text)
    assert dumps_gam(back) == text
    np.testing.assert_array_equal(back.predict(X), m.predict(X))
    assert text.startswith("denguecast-gam 1\n")


def test_design_matrix_input():
    from denguecast.lags import LagConfig, build_design
    from denguecast.synthetic import generate_panel

    d = build_design(generate_panel(1, years=4).panel, LagConfig(2, 3, 4, 5))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        m = fit_gam(d)
    assert m.columns == COLUMNS
    assert np.isfinite(m.gcv) and m.sigma2 > 0
