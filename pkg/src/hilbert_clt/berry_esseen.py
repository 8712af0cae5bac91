"""Estimating the ball distance between normalized sums and their Gaussian limit.

``Delta_n(mu) = sup_x |P(||S_n / c_n + mu|| <= x) - P(||Z + mu|| <= x)|``.
The MC estimate is a Kolmogorov-Smirnov statistic, either two-sample
against Gaussian draws or one-sample against the inverted ball CDF, with a
DKW band as distribution-free confidence half-width.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr
from scipy.stats import linregress

from .coeffs import CoeffSeq, dependence_bound, partial_operators, support_range
from .gaussian import BallCDF, LimitSpec, sample_gaussian_norm
from .processes import ProcessSpec
from .sampling import sample_normalized

METHODS = ("two_sample_ks", "vs_exact_cdf")


@dataclass(frozen=True)
class DeltaEstimate:
    value: float
    ci_half_width: float
    n: int
    reps_path: int
    reps_gauss: int
    method: str

    def __post_init__(self):
        if not 0 <= self.value <= 1:
            raise ValueError("delta must lie in [0, 1]")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def above_noise(self) -> bool:
        return self.value > self.ci_half_width

    def as_dict(self) -> dict:
        return asdict(self)


def dkw_halfwidth(reps: int, delta: float = 0.05) -> float:
    """``sqrt(ln(2/delta) / (2 N))``."""
    if reps < 1:
        raise ValueError("reps must be positive")
    return float(np.sqrt(np.log(2.0 / delta) / (2.0 * reps)))


def empirical_delta(sample_a, sample_b) -> float:
    """Two-sample KS distance over the merged support."""
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_vs_cdf(sample, cdf_values_sorted: np.ndarray | None = None, cdf=None) -> float:
    """One-sample KS distance of ``sample`` against a continuous CDF.

    Ties are handled exactly: within a run of equal values the upper and
    lower one-sided gaps are attained at the last and first member.
    """
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    g = cdf(x) if cdf_values_sorted is None else cdf_values_sorted
    n = x.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - g), np.max(g - (i - 1) / n), 0.0))


def delta_from_draws(w: np.ndarray, lim: LimitSpec, rng: np.random.Generator | None = None,
                     method: str = "auto", delta: float = 0.05, n: int = 0,
                     ball: BallCDF | None = None) -> DeltaEstimate:
    """Delta estimate from draws ``w`` of ``S_n / c_n + mu`` (shape ``(reps, d)``)."""
    reps = w.shape[0]
    norms = np.linalg.norm(w, axis=1)
    if method == "auto":
        rank = ball.rank if ball is not None else lim.cov.rank
        method = "vs_exact_cdf" if rank != 2 else "two_sample_ks"
    if method == "vs_exact_cdf":
        ball = ball or BallCDF(lim)
        x = np.sort(norms)
        value = ks_vs_cdf(x, ball.evaluate_many(x))
        return DeltaEstimate(min(value, 1.0), dkw_halfwidth(reps, delta), n, reps, 0, method)
    if method != "two_sample_ks":
        raise ValueError(f"unknown method {method!r}")
    if rng is None:
        raise ValueError("two-sample method needs a generator for the Gaussian side")
    z = sample_gaussian_norm(lim, reps, rng)
    value = empirical_delta(norms, z)
    ci = dkw_halfwidth(reps, delta) + dkw_halfwidth(reps, delta)
    return DeltaEstimate(value, ci, n, reps, reps, method)


def delta_vs_gaussian(spec: ProcessSpec, lim: LimitSpec, n: int, reps: int,
                      rng: np.random.Generator, method: str = "auto", delta: float = 0.05,
                      ball: BallCDF | None = None) -> DeltaEstimate:
    """Estimate ``Delta_n(mu)`` for ``spec`` against ``lim`` from ``reps`` paths.

    ``method='auto'`` compares against the inverted CDF whenever the limit
    rank is not two, and falls back to a two-sample test otherwise.
    """
    if reps < 1000:
        raise ValueError("delta estimation needs reps >= 1000")
    if spec.dim != lim.dim:
        raise ValueError("spec and limit dimensions differ")
    w = sample_normalized(spec, n, reps, rng, lim.shift)
    return delta_from_draws(w, lim, rng, method, delta, n, ball)


def _folded_cdf(x, s, mu):
    return ndtr((x - mu) / s) - ndtr((-x - mu) / s)


def exact_delta_1d(sigma2: float, sigma2_n: float, mu: float = 0.0) -> float:
    """``sup_x |P(|N(mu, sigma_n^2)| <= x) - P(|N(mu, sigma^2)| <= x)|``.

    A dense grid locates the maximum, then golden-section search refines it
    to ``1e-10`` in ``x``.
    """
    if sigma2 <= 0 or sigma2_n <= 0:
        raise ValueError("variances must be positive")
    if sigma2 == sigma2_n:
        return 0.0
    s, sn = np.sqrt(sigma2), np.sqrt(sigma2_n)
    mu = abs(float(mu))

    def gap(x):
        return -abs(_folded_cdf(x, sn, mu) - _folded_cdf(x, s, mu))

    top = mu + 12 * max(s, sn)
    xs = np.linspace(0.0, top, 20_001)
    vals = gap(xs)
    i = int(np.argmin(vals))
    best = -vals[i]
    if 0 < i < xs.size - 1:
        res = minimize_scalar(gap, bracket=(xs[i - 1], xs[i], xs[i + 1]), method="golden",
                              options={"xtol": 1e-10 / max(xs[i], 1e-10)})
        best = max(best, -float(res.fun))
    return float(min(best, 1.0))


def _scalar(c: CoeffSeq) -> np.ndarray:
    if c.dim != 1:
        raise ValueError("scalar coefficient sequence required")
    return c.scalar()


def sigma_n_exact(c: CoeffSeq, n: int) -> float:
    """``sigma_n^2 = n^-1 sum_k A_{n,k}^2`` over every ``k`` where it can be non-zero."""
    _scalar(c)
    t0, t1 = support_range(c, n)
    a = partial_operators(c, n, np.arange(t0, t1 + 1))[:, 0, 0]
    return float(np.dot(a, a) / n)


@dataclass(frozen=True)
class LowerBoundRow:
    n: int
    sigma2: float
    sigma2_n: float
    gap: float
    rhs: float
    dependence: float
    delta: float
    passed: bool


def lowerbound_rows(c: CoeffSeq, n_grid, c_alpha: float = 0.1) -> list[LowerBoundRow]:
    """Check ``sigma^2 - sigma_n^2 >= (C / n) sum_j min(j, n) |alpha_j|`` on a grid.

    ``delta`` is the exact ball distance for Gaussian innovations.
    """
    alpha = _scalar(c)
    sigma2 = float(alpha.sum() ** 2)
    rows = []
    for n in n_grid:
        s2n = sigma_n_exact(c, n)
        dep = dependence_bound(c, n)
        rhs = c_alpha * dep
        gap = sigma2 - s2n
        rows.append(LowerBoundRow(int(n), sigma2, s2n, gap, rhs, dep,
                                  exact_delta_1d(sigma2, s2n), gap >= rhs))
    return rows


@dataclass(frozen=True)
class BoundTerms:
    rate_term: float
    dependence_term: float

    @property
    def total(self) -> float:
        return self.rate_term + self.dependence_term


def theoretical_bound(c: CoeffSeq | None, n: int, mu_norm: float, p: float,
                      moment_p: float) -> BoundTerms:
    """Shape of the two-term upper bound with all constants set to one.

    ``n^(1 - p/2) (1 + ||mu||^p) m_p + An m_p`` where ``An`` is the
    dependence penalty of ``c`` (zero when ``c`` is ``None``).
    """
    if not 2 < p <= 3:
        raise ValueError("p must lie in (2, 3]")
    rate = n ** (1 - p / 2) * (1 + mu_norm ** p) * moment_p
    dep = 0.0 if c is None else dependence_bound(c, n) * moment_p
    return BoundTerms(float(rate), float(dep))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr_slope: float
    n_grid: list
    excluded: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def rate_fit(n_grid, deltas) -> RateFit:
    """OLS fit of ``log Delta`` on ``log n``.

    Points whose value does not exceed their confidence half-width are
    dropped and listed in ``excluded``. Plain floats count as exact.
    """
    ns = [int(n) for n in n_grid]
    if len(ns) != len(deltas):
        raise ValueError("n_grid and deltas differ in length")
    keep_n, keep_v, excluded = [], [], []
    for n, d in zip(ns, deltas):
        v, ci = (d.value, d.ci_half_width) if isinstance(d, DeltaEstimate) else (float(d), 0.0)
        if v > ci and v > 0:
            keep_n.append(n)
            keep_v.append(v)
        else:
            excluded.append({"n": n, "value": v, "ci": ci})
    if len(keep_n) < 4:
        raise ValueError("insufficient signal")
    res = linregress(np.log(keep_n), np.log(keep_v))
    return RateFit(float(res.slope), float(res.intercept), float(res.stderr), keep_n, excluded)
