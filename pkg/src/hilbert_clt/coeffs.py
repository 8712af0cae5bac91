"""Operator coefficient sequences of linear processes.

A :class:`CoeffSeq` stores finitely many operators ``alpha_j`` for
``lo <= j <= hi``. The process they define is
``X_k = sum_j alpha_j eps_{k+j}``, so negative offsets look into the past
and a sequence with ``hi <= 0`` is causal. Families with infinite support
are truncated at a window and the discarded norm mass is kept in
``tail_report``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import quad

from .linalg import as_operator, operator_norm


@dataclass(frozen=True)
class CoeffSeq:
    """Coefficients ``alpha_lo, ..., alpha_hi`` stacked in ``terms``."""

    lo: int
    terms: np.ndarray
    tail_report: float = 0.0
    family: str = "finite"

    def __post_init__(self):
        t = np.asarray(self.terms, dtype=float)
        if t.ndim != 3 or t.shape[1] != t.shape[2] or t.shape[0] == 0:
            raise ValueError(f"terms must have shape (len, d, d), got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "terms", t)

    @property
    def hi(self) -> int:
        return self.lo + self.terms.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.terms.shape[1]

    @property
    def window(self) -> int:
        return max(abs(self.lo), abs(self.hi))

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @property
    def is_causal(self) -> bool:
        pos = self.offsets > 0
        return not np.any(self.terms[pos])

    def __getitem__(self, j: int) -> np.ndarray:
        if self.lo <= j <= self.hi:
            return self.terms[j - self.lo]
        return np.zeros((self.dim, self.dim))

    def norms(self) -> np.ndarray:
        """Operator norm of each stored coefficient."""
        if self.dim == 1:
            return np.abs(self.terms[:, 0, 0])
        return np.linalg.norm(self.terms, ord=2, axis=(1, 2))

    def full_operator(self) -> np.ndarray:
        """``A = sum_j alpha_j``."""
        return self.terms.sum(axis=0)

    def scalar(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("scalar coefficients required")
        return self.terms[:, 0, 0]

    def scaled(self, c: float) -> "CoeffSeq":
        return CoeffSeq(self.lo, c * self.terms, abs(c) * self.tail_report, self.family)


def _base(base, dim: int | None) -> np.ndarray:
    if base is None:
        return np.eye(dim or 1)
    b = np.asarray(base, dtype=float)
    if b.ndim == 1:
        b = np.diag(b)
    return as_operator(b)


def _two_sided(profile: np.ndarray, base: np.ndarray, side: str):
    """Place scalar profile ``w_0..w_J`` on offsets according to ``side``."""
    jmax = profile.size - 1
    if side == "two":
        w = np.concatenate([profile[:0:-1], profile])
        lo = -jmax
    elif side == "causal":
        w = profile[::-1]
        lo = -jmax
    elif side == "anticausal":
        w = profile
        lo = 0
    else:
        raise ValueError(f"unknown side {side!r}")
    return lo, w[:, None, None] * base[None]


def geometric(rho: float, window: int, base=None, dim: int | None = None,
              side: str = "two") -> CoeffSeq:
    """``alpha_j = rho^|j| B0`` truncated at ``|j| <= window``."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    if window < 0:
        raise ValueError("window must be non-negative")
    b = _base(base, dim)
    prof = rho ** np.arange(window + 1, dtype=float)
    lo, terms = _two_sided(prof, b, side)
    sides = 2 if side == "two" else 1
    tail = sides * operator_norm(b) * rho ** (window + 1) / (1 - rho)
    return CoeffSeq(lo, terms, tail, "geometric")


def polynomial(a: float, window: int, base=None, dim: int | None = None,
               side: str = "two") -> CoeffSeq:
    """``alpha_j = (1 + |j|)^(-a) B0`` truncated at ``|j| <= window``."""
    if a <= 1:
        raise ValueError("polynomial decay needs a > 1 for summability")
    b = _base(base, dim)
    prof = (1.0 + np.arange(window + 1, dtype=float)) ** (-a)
    lo, terms = _two_sided(prof, b, side)
    sides = 2 if side == "two" else 1
    # sum_{j > J} (1+j)^-a <= int_J^inf (1+x)^-a dx
    tail = sides * operator_norm(b) * (1.0 + window) ** (1 - a) / (a - 1)
    return CoeffSeq(lo, terms, tail, "polynomial")


def finite(coefs: Mapping[int, np.ndarray] | list) -> CoeffSeq:
    """Finitely supported sequence from ``{offset: matrix}`` or a list.

    A list is read as ``alpha_0, alpha_1, ...``.
    """
    if not isinstance(coefs, Mapping):
        coefs = dict(enumerate(coefs))
    if not coefs:
        raise ValueError("empty coefficient family")
    mats = {int(j): np.atleast_2d(np.asarray(m, dtype=float)) for j, m in coefs.items()}
    dims = {m.shape for m in mats.values()}
    if len(dims) != 1:
        raise ValueError("coefficient blocks have inconsistent shapes")
    d = as_operator(next(iter(mats.values()))).shape[0]
    lo, hi = min(mats), max(mats)
    terms = np.zeros((hi - lo + 1, d, d))
    for j, m in mats.items():
        terms[j - lo] = as_operator(m, d)
    return CoeffSeq(lo, terms, 0.0, "finite")


def from_family(kind: str, **params) -> CoeffSeq:
    """Dispatch on family name: ``geometric``, ``polynomial``, ``finite``."""
    if kind == "geometric":
        return geometric(**params)
    if kind == "polynomial":
        return polynomial(**params)
    if kind == "finite":
        return finite(params["coefs"])
    if kind == "slow_rate":
        return slow_rate_coeffs(SlowRateSpec(**params))
    raise ValueError(f"unknown coefficient family {kind!r}")


def load_family(path: str | Path) -> CoeffSeq:
    """Load a finite family from JSON.

    Either a list of matrices ``[alpha_0, alpha_1, ...]`` or an object
    ``{"lo": int, "terms": [...]}``.
    """
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        lo = int(data.get("lo", 0))
        return finite({lo + i: m for i, m in enumerate(data["terms"])})
    return finite(data)


def dump_family(c: CoeffSeq, path: str | Path) -> None:
    Path(path).write_text(json.dumps({"lo": c.lo, "terms": c.terms.tolist()}))


@dataclass(frozen=True)
class SlowRateSpec:
    """Scalar sequence ``alpha_j = (b_j - b_{j-1}) / j`` with ``b_j = j^2 f(j)``.

    ``f`` defaults to ``(1 + x)^(-a)``. With ``normalize`` the sequence is
    rescaled so that ``sum_j alpha_j = 1``.
    """

    a: float
    window: int
    f: Callable[[np.ndarray], np.ndarray] | None = None
    normalize: bool = True

    def profile(self, x: np.ndarray) -> np.ndarray:
        if self.f is not None:
            return self.f(x)
        return (1.0 + x) ** (-self.a)


def slow_rate_coeffs(spec: SlowRateSpec) -> CoeffSeq:
    """Build the one-sided slow-decay sequence ``alpha_1..alpha_J``.

    For ``a <= 2`` every coefficient is positive; for ``a > 2`` the sequence
    ``b_j`` eventually decreases and the late coefficients are negative.
    With ``b'(x) = x f(x) (2 - a x / (1 + x))`` one gets
    ``|alpha_j| <= c int_{j-1}^j f`` with ``c = max(2, a - 2)``, so the
    discarded tail is at most ``c (1 + J)^(1 - a) / (a - 1)``. A custom
    ``f`` is assumed monotone with ``b`` nondecreasing, giving ``c = 2``
    and a numerically integrated tail.
    """
    if spec.a <= 1:
        raise ValueError("slow-rate family needs a > 1")
    J = int(spec.window)
    if J < 1:
        raise ValueError("window must be at least 1")
    j = np.arange(0, J + 1, dtype=float)
    b = j ** 2 * spec.profile(j)
    alpha = np.diff(b) / j[1:]
    total = alpha.sum()
    if spec.f is None:
        tail = max(2.0, spec.a - 2.0) * (1.0 + J) ** (1 - spec.a) / (spec.a - 1)
    else:
        tail = 2.0 * quad(lambda x: float(spec.f(np.asarray(x))), J, np.inf)[0]
    scale = 1.0 / total if spec.normalize else 1.0
    terms = np.concatenate([[0.0], alpha])[:, None, None] * scale
    return CoeffSeq(0, terms, abs(tail * scale), "slow_rate")


def _prefix(c: CoeffSeq) -> np.ndarray:
    """Prefix sums ``P[i] = sum of the first i stored terms``."""
    p = np.zeros((c.terms.shape[0] + 1, c.dim, c.dim))
    np.cumsum(c.terms, axis=0, out=p[1:])
    return p


def _clip_range(c: CoeffSeq, n: int, ks: np.ndarray):
    """Index bounds into the stored terms for offsets ``k-n .. k-1``."""
    lo_j = np.clip(ks - n, c.lo, c.hi + 1) - c.lo
    hi_j = np.clip(ks - 1, c.lo - 1, c.hi) - c.lo + 1
    return lo_j, np.maximum(hi_j, lo_j)


def partial_operators(c: CoeffSeq, n: int, ks) -> np.ndarray:
    """``A_{n,k} = sum_{j=k-n}^{k-1} alpha_j`` for every ``k`` in ``ks``."""
    if n < 1:
        raise ValueError("n must be positive")
    ks = np.atleast_1d(np.asarray(ks, dtype=np.int64))
    p = _prefix(c)
    a, b = _clip_range(c, n, ks)
    return p[b] - p[a]


def partial_operator(c: CoeffSeq, n: int, k: int) -> np.ndarray:
    return partial_operators(c, n, [k])[0]


def complement_operator(c: CoeffSeq, n: int, k: int) -> np.ndarray:
    """``A - A_{n,k}``: the coefficients outside the window, summed directly."""
    a, b = _clip_range(c, n, np.array([k]))
    return c.terms[: a[0]].sum(axis=0) + c.terms[b[0]:].sum(axis=0)


def support_range(c: CoeffSeq, n: int) -> tuple[int, int]:
    """Innovation indices ``k`` for which ``A_{n,k}`` can be non-zero.

    ``A_{n,k}`` sums offsets ``k-n .. k-1``, which meet ``lo .. hi`` exactly
    when ``lo + 1 <= k <= n + hi``.
    """
    return 1 + c.lo, n + c.hi


def dependence_bound(c: CoeffSeq, n: int) -> float:
    """``n^-1 sum_j min(|j|, n) ||alpha_j||``."""
    if n < 1:
        raise ValueError("n must be positive")
    w = np.minimum(np.abs(c.offsets), n)
    return float(w @ c.norms()) / n


def check_summability(c: CoeffSeq, beta: float) -> float:
    """``sum_j |j|^beta ||alpha_j||`` over the stored window.

    The discarded tail is reported separately by ``c.tail_report``; use
    :func:`summability_scan` to see whether the sum is still growing with
    the window.
    """
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    return float(np.abs(c.offsets).astype(float) ** beta @ c.norms())


def summability_scan(c: CoeffSeq, beta: float, windows) -> np.ndarray:
    """Truncated weighted sums for increasing windows, a divergence diagnostic."""
    j = np.abs(c.offsets)
    w = j.astype(float) ** beta * c.norms()
    return np.array([w[j <= J].sum() for J in windows])
