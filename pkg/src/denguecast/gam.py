"""Gaussian additive model built from penalized cubic regression splines.

Each smooth is a natural cubic spline parameterized by its values at k knots
(the cardinal basis), with the integrated squared second derivative as the
penalty. Terms are centred over the training rows and an explicit intercept
is added. Smoothing parameters are chosen by minimizing GCV with a
coordinate-wise golden-section search on log10 of the (normalized) penalty
weight.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)

LOG_RHO_BOUNDS = (-8.0, 8.0)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
FORMAT_TAG = "denguecast-gam"
FORMAT_VERSION = 1


class GamRankError(ValueError):
    pass


class GamConvergenceWarning(UserWarning):
    pass


class OverParameterizedError(ValueError):
    pass


# --------------------------------------------------------------------------- basis


def place_knots(x, k: int) -> np.ndarray:
    """k knots at evenly spaced order statistics of x, ends included.

    Falls back to order statistics of the distinct values when repeated values
    would make knots coincide.
    """
    xs = np.sort(np.asarray(x, dtype=float))
    pos = np.floor(np.arange(k) * (len(xs) - 1) / (k - 1) + 0.5).astype(int)
    knots = xs[pos]
    if np.all(np.diff(knots) > 0):
        return knots
    u = np.unique(xs)
    pos = np.floor(np.arange(k) * (len(u) - 1) / (k - 1) + 0.5).astype(int)
    return u[pos]


class CubicRegressionBasis:
    """Natural cubic spline basis whose coefficients are the values at the knots."""

    def __init__(self, knots):
        knots = np.asarray(knots, dtype=float)
        if knots.ndim != 1 or len(knots) < 3 or np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing with at least 3 entries")
        self.knots = knots
        k = len(knots)
        h = np.diff(knots)
        D = np.zeros((k - 2, k))
        Bm = np.zeros((k - 2, k - 2))
        for i in range(k - 2):
            D[i, i] = 1.0 / h[i]
            D[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
            D[i, i + 2] = 1.0 / h[i + 1]
            Bm[i, i] = (h[i] + h[i + 1]) / 3.0
            if i < k - 3:
                Bm[i, i + 1] = Bm[i + 1, i] = h[i + 1] / 6.0
        self._h = h
        # second derivatives at the knots as a linear map of knot values
        F = np.zeros((k, k))
        F[1:-1] = linalg.solve(Bm, D, assume_a="sym")
        self._F = F
        S = D.T @ F[1:-1]
        self._S = (S + S.T) / 2.0

    @property
    def k(self) -> int:
        return len(self.knots)

    @property
    def penalty(self) -> np.ndarray:
        return self._S.copy()

    @property
    def second_derivative_map(self) -> np.ndarray:
        return self._F.copy()

    def evaluate(self, x) -> np.ndarray:
        """Basis matrix (len(x), k); linear continuation outside the knot range."""
        x = np.asarray(x, dtype=float)
        kn, h, F, k = self.knots, self._h, self._F, self.k
        n = len(x)
        out = np.zeros((n, k))
        rows = np.arange(n)
        j = np.clip(np.searchsorted(kn, x, side="right") - 1, 0, k - 2)
        inside = (x >= kn[0]) & (x <= kn[-1])

        r, jj, xx = rows[inside], j[inside], x[inside]
        hj = h[jj]
        am = (kn[jj + 1] - xx) / hj
        ap = (xx - kn[jj]) / hj
        cm = ((kn[jj + 1] - xx) ** 3 / hj - hj * (kn[jj + 1] - xx)) / 6.0
        cp = ((xx - kn[jj]) ** 3 / hj - hj * (xx - kn[jj])) / 6.0
        out[r] = cm[:, None] * F[jj] + cp[:, None] * F[jj + 1]
        out[r, jj] += am
        out[r, jj + 1] += ap

        left = x < kn[0]
        if left.any():
            e = np.zeros(k)
            e[0], e[1] = -1.0 / h[0], 1.0 / h[0]
            slope = e - h[0] * (2.0 * F[0] + F[1]) / 6.0
            out[left] = np.outer(x[left] - kn[0], slope)
            out[left, 0] += 1.0
        right = x > kn[-1]
        if right.any():
            e = np.zeros(k)
            e[-2], e[-1] = -1.0 / h[-1], 1.0 / h[-1]
            slope = e + h[-1] * (F[-2] + 2.0 * F[-1]) / 6.0
            out[right] = np.outer(x[right] - kn[-1], slope)
            out[right, -1] += 1.0
        return out


def build_basis(x, k: int = 10) -> CubicRegressionBasis:
    x = np.asarray(x, dtype=float)
    distinct = len(np.unique(x))
    if distinct < 4:
        raise ValueError(f"need at least 4 distinct covariate values, got {distinct}")
    if k < 4:
        raise ValueError("basis dimension must be at least 4")
    if distinct < k:
        warnings.warn(f"only {distinct} distinct values; reducing basis dimension from {k}", stacklevel=2)
        k = distinct
    return CubicRegressionBasis(place_knots(x, k))


# --------------------------------------------------------------------------- model


@dataclass(frozen=True, eq=False)
class SmoothTerm:
    name: str
    knots: np.ndarray
    coef: np.ndarray
    penalty: np.ndarray
    lam: float
    edf: float

    def basis(self) -> CubicRegressionBasis:
        return CubicRegressionBasis(self.knots)

    @property
    def is_null(self) -> bool:
        """A term for a column that was constant in training; it contributes zero."""
        return len(self.knots) == 1

    def __call__(self, x) -> np.ndarray:
        if self.is_null:
            return np.zeros(len(np.asarray(x)))
        return self.basis().evaluate(x) @ self.coef

    def roughness(self) -> float:
        return float(self.coef @ self.penalty @ self.coef)


@dataclass(frozen=True, eq=False)
class GamModel:
    intercept: float
    terms: tuple[SmoothTerm, ...]
    sigma2: float
    edf: float
    gcv: float
    n_train: int
    converged: bool = True
    cycles: int = 0
    fitted: Optional[np.ndarray] = field(default=None, repr=False)
    log_rho: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.terms)

    def components(self, X) -> np.ndarray:
        X = _as_rows(X, len(self.terms))
        return np.column_stack([t(X[:, j]) for j, t in enumerate(self.terms)])

    def out_of_range(self, X) -> np.ndarray:
        X = _as_rows(X, len(self.terms))
        lo = np.array([t.knots[0] for t in self.terms])
        hi = np.array([t.knots[-1] for t in self.terms])
        return ((X < lo) | (X > hi)).any(axis=1)

    def predict(self, X) -> np.ndarray:
        return self.intercept + self.components(X).sum(axis=1)

    def dumps(self) -> str:
        return dumps_gam(self)


def _as_rows(X, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != p:
        raise ValueError(f"expected rows with {p} columns, got shape {X.shape}")
    return X


def predict_gam(model: GamModel, rows) -> tuple[np.ndarray, np.ndarray]:
    """Predictions and a per-row flag marking covariates outside the knot range."""
    return model.predict(rows), model.out_of_range(rows)


def gcv_score(y, fitted, edf: float) -> float:
    """n * RSS / (n - edf)^2."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if edf >= n:
        raise OverParameterizedError(f"effective degrees of freedom {edf:.3f} >= n = {n}")
    rss = float(np.sum((y - np.asarray(fitted, dtype=float)) ** 2))
    return n * rss / (n - edf) ** 2


class _PenalizedProblem:
    """Centred model matrix, its QR factor and square-root penalties for one data set."""

    def __init__(self, X: np.ndarray, y: np.ndarray, names: Sequence[str], k: int):
        n, m = X.shape
        self.n, self.y, self.names = n, y, tuple(names)
        self.bases, self.Z, self.S, blocks, roots, self.scale = [], [], [], [np.ones((n, 1))], [], []
        for j in range(m):
            distinct = len(np.unique(X[:, j]))
            if distinct < 4:
                raise GamRankError(f"column {self.names[j]!r} has only {distinct} distinct values; a smooth needs 4")
            if distinct < k:
                warnings.warn(f"column {self.names[j]!r}: basis dimension reduced to {distinct}", stacklevel=3)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                basis = build_basis(X[:, j], k)
            B = basis.evaluate(X[:, j])
            c = B.sum(axis=0)
            q, _ = linalg.qr(c[:, None])
            Z = q[:, 1:]
            Xj = B @ Z
            Sj = Z.T @ basis.penalty @ Z
            Sj = (Sj + Sj.T) / 2.0
            evals, evecs = linalg.eigh(Sj)
            keep = evals > evals.max() * 1e-12
            roots.append((np.sqrt(evals[keep])[:, None] * evecs[:, keep].T))
            self.scale.append(np.linalg.norm(Xj.T @ Xj) / np.linalg.norm(Sj))
            self.bases.append(basis)
            self.Z.append(Z)
            self.S.append(Sj)
            blocks.append(Xj)
        self.model_matrix = np.hstack(blocks)
        self.slices = []
        start = 1
        for b in blocks[1:]:
            self.slices.append(slice(start, start + b.shape[1]))
            start += b.shape[1]
        self.p = start
        if self.p >= n:
            raise OverParameterizedError(f"{self.p} coefficients for {n} rows")
        self._check_rank(X)
        self.Q, self.R = linalg.qr(self.model_matrix, mode="economic")
        self.qty = self.Q.T @ y
        self.rss0 = float(np.sum((y - self.Q @ self.qty) ** 2))
        self.roots = roots
        self.tss = float(np.sum((y - y.mean()) ** 2))

    def _check_rank(self, X: np.ndarray) -> None:
        lin = np.ones((self.n, 1))
        tol = 1e-9
        for j in range(X.shape[1]):
            cand = np.hstack([lin, X[:, j : j + 1]])
            s = linalg.svdvals(cand / np.maximum(np.linalg.norm(cand, axis=0), 1e-300))
            if s[-1] < tol * s[0]:
                raise GamRankError(
                    f"column {self.names[j]!r} is linearly dependent on the intercept and earlier columns"
                )
            lin = cand

    def lambdas(self, log_rho: np.ndarray) -> np.ndarray:
        return 10.0 ** np.asarray(log_rho) * np.asarray(self.scale)

    def solve(self, log_rho: np.ndarray):
        lam = self.lambdas(log_rho)
        pen_rows = []
        for j, (sl, E) in enumerate(zip(self.slices, self.roots)):
            rows = np.zeros((E.shape[0], self.p))
            rows[:, sl] = math.sqrt(lam[j]) * E
            pen_rows.append(rows)
        A = np.vstack([self.R] + pen_rows)
        Qa, Ra = linalg.qr(A, mode="economic")
        rhs = Qa.T[:, : self.p] @ self.qty
        beta = linalg.solve_triangular(Ra, rhs)
        Q1 = Qa[: self.p]
        edf = float(np.sum(Q1**2))
        rss = self.rss0 + float(np.sum((self.qty - self.R @ beta) ** 2))
        return beta, rss, edf, lam, (Q1, Ra)

    def gcv(self, log_rho) -> float:
        _, rss, edf, _, _ = self.solve(log_rho)
        if edf >= self.n:
            return math.inf
        return self.n * rss / (self.n - edf) ** 2

    def coefficient_edf(self, factors) -> np.ndarray:
        Q1, Ra = factors
        # diag((A'A)^-1 R'R) = diag(Ra^-1 Q1' Q1 Ra)
        M = linalg.solve_triangular(Ra, Q1.T @ Q1 @ Ra)
        return np.diag(M)

    def influence_trace(self, log_rho) -> tuple[float, float]:
        """Trace of the hat matrix computed explicitly and as the sum of leverages."""
        beta, rss, edf, lam, (Q1, Ra) = self.solve(log_rho)
        Sfull = np.zeros((self.p, self.p))
        for j, sl in enumerate(self.slices):
            Sfull[sl, sl] = lam[j] * self.S[j]
        Xm = self.model_matrix
        H = Xm @ linalg.solve(Xm.T @ Xm + Sfull, Xm.T, assume_a="sym")
        leverages = np.sum((self.Q @ Q1) ** 2, axis=1)
        return float(np.trace(H)), float(leverages.sum())


def _golden_section(f, lo: float, hi: float, tol: float = 1e-3) -> tuple[float, float]:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _optimize_log_rho(problem: _PenalizedProblem, max_cycles: int = 30, rtol: float = 1e-7):
    m = len(problem.slices)
    lo, hi = LOG_RHO_BOUNDS
    log_rho = np.zeros(m)
    best = problem.gcv(log_rho)
    atol = 1e-13 * problem.tss / problem.n + 1e-300
    converged = False
    cycle = 0
    for cycle in range(1, max_cycles + 1):
        start = best
        for j in range(m):
            def f(v, j=j):
                trial = log_rho.copy()
                trial[j] = v
                return problem.gcv(trial)

            x_star, f_star = _golden_section(f, lo, hi)
            candidates = [(log_rho[j], best), (x_star, f_star), (lo, f(lo)), (hi, f(hi))]
            fmin = min(c[1] for c in candidates)
            # among near-ties prefer the smoothest (largest penalty)
            tied = [c for c in candidates if c[1] <= fmin + atol + 1e-10 * abs(fmin)]
            choice = max(tied, key=lambda c: c[0])
            log_rho[j], best = choice
        if start - best <= rtol * abs(start) or start - best <= atol:
            converged = True
            break
    return log_rho, best, converged, cycle


def _expand(rho: np.ndarray, active: list[int], m: int) -> np.ndarray:
    full = np.full(m, np.nan)
    full[active] = rho
    return full


def fit_gam(
    design,
    k: int = 10,
    log_rho: Optional[Sequence[float] | float] = None,
    max_cycles: int = 30,
) -> GamModel:
    """Fit intercept + one centred smooth per design column.

    ``design`` is a DesignMatrix or an ``(X, y)`` pair. Passing ``log_rho``
    fixes log10 of the normalized smoothing parameters instead of searching.
    """
    if isinstance(design, tuple):
        X, y = design
        X = np.asarray(X, dtype=float)
        names = [f"x{j}" for j in range(X.shape[1])]
    else:
        X, y, names = design.X, design.y, list(design.columns)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = X.shape
    if n < m * k:
        raise ValueError(f"need at least {m * k} rows for {m} smooths of dimension {k}, got {n}")
    if np.isnan(X).any() or np.isnan(y).any():
        raise ValueError("design contains missing values")
    # a constant column's centred smooth is identically zero: keep it as a null term
    active = [j for j in range(m) if np.ptp(X[:, j]) > 0]
    for j in set(range(m)) - set(active):
        warnings.warn(f"column {names[j]!r} is constant; its smooth is fixed at zero", stacklevel=2)
    problem = _PenalizedProblem(X[:, active], y, [names[j] for j in active], k)
    if log_rho is None:
        rho, gcv, converged, cycles = _optimize_log_rho(problem, max_cycles)
        if not converged:
            warnings.warn("smoothing parameter search hit the cycle limit", GamConvergenceWarning, stacklevel=2)
    else:
        rho = np.broadcast_to(np.asarray(log_rho, dtype=float), (m,))[active].copy()
        gcv, converged, cycles = problem.gcv(rho), True, 0
    beta, rss, edf, lam, factors = problem.solve(rho)
    coef_edf = problem.coefficient_edf(factors)
    terms = []
    position = {j: a for a, j in enumerate(active)}
    for j in range(m):
        if j not in position:
            c = X[:1, j].astype(float)
            terms.append(SmoothTerm(names[j], c, np.zeros(1), np.zeros((1, 1)), 0.0, 0.0))
            continue
        a = position[j]
        basis = problem.bases[a]
        terms.append(
            SmoothTerm(
                name=names[j],
                knots=basis.knots,
                coef=problem.Z[a] @ beta[problem.slices[a]],
                penalty=basis.penalty,
                lam=float(lam[a]),
                edf=float(coef_edf[problem.slices[a]].sum()),
            )
        )
    sigma2 = rss / (n - edf)
    model = GamModel(
        intercept=float(beta[0]),
        terms=tuple(terms),
        sigma2=float(sigma2),
        edf=float(edf),
        gcv=float(gcv),
        n_train=n,
        converged=converged,
        cycles=cycles,
        log_rho=_expand(rho, active, m),
    )
    object.__setattr__(model, "fitted", model.predict(X))
    return model


# --------------------------------------------------------------------------- serialization


def _f(v: float) -> str:
    return format(float(v), ".17g")


def dumps_gam(model: GamModel) -> str:
    lines = [
        f"{FORMAT_TAG} {FORMAT_VERSION}",
        f"intercept {_f(model.intercept)}",
        f"sigma2 {_f(model.sigma2)}",
        f"edf {_f(model.edf)}",
        f"gcv {_f(model.gcv)}",
        f"n_train {model.n_train}",
        f"converged {int(model.converged)} {model.cycles}",
        f"terms {len(model.terms)}",
    ]
    for t in model.terms:
        lines += [
            f"term {t.name}",
            f"lambda {_f(t.lam)}",
            f"term_edf {_f(t.edf)}",
            "knots " + " ".join(map(_f, t.knots)),
            "coef " + " ".join(map(_f, t.coef)),
        ]
        lines += ["penalty " + " ".join(map(_f, row)) for row in t.penalty]
    return "\n".join(lines) + "\n"


def loads_gam(text: str) -> GamModel:
    lines = iter(text.splitlines())

    def field_(key):
        tag, _, rest = next(lines).partition(" ")
        if tag != key:
            raise ValueError(f"expected {key!r}, found {tag!r}")
        return rest

    head = next(lines).split()
    if head[:1] != [FORMAT_TAG] or int(head[1]) != FORMAT_VERSION:
        raise ValueError("not a version-1 GAM model file")
    intercept = float(field_("intercept"))
    sigma2 = float(field_("sigma2"))
    edf = float(field_("edf"))
    gcv = float(field_("gcv"))
    n_train = int(field_("n_train"))
    conv, cycles = field_("converged").split()
    terms = []
    for _ in range(int(field_("terms"))):
        name = field_("term")
        lam = float(field_("lambda"))
        t_edf = float(field_("term_edf"))
        knots = np.array(field_("knots").split(), dtype=float)
        coef = np.array(field_("coef").split(), dtype=float)
        S = np.array([field_("penalty").split() for _ in range(len(knots))], dtype=float)
        terms.append(SmoothTerm(name, knots, coef, S, lam, t_edf))
    return GamModel(intercept, tuple(terms), sigma2, edf, gcv, n_train, bool(int(conv)), int(cycles))
