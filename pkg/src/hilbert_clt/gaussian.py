"""Gaussian limits: covariance operators, eigenvalue checks and ball probabilities.

The ball CDF ``P(||Z + mu|| <= x)`` is the CDF of the weighted noncentral
chi-square ``Q = sum_j lam_j (g_j + delta_j)^2`` at ``x^2``. It is computed
by Gil-Pelaez inversion of the characteristic function with the midpoint
rule of Davies (1973). The node spacing is chosen so that the aliased mass
beyond ``2 pi / h`` is negligible by a Chernoff bound, and the series is cut
where the product bound on ``|phi(t)|`` makes the remaining integral smaller
than the tolerance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar
from scipy.special import ndtr

from .coeffs import CoeffSeq
from .linalg import CovOperator, as_vector, eig_psd, operator_norm, psd_project
from .processes import (ArchSpec, LinearSpec, MDependentSpec, ProcessSpec,
                        TwoDependentSpec, _arch_burnin_state, _arch_steps)

EIGEN_INDEX = 13
EIGEN_THRESHOLD = 1e-10


@dataclass(frozen=True)
class EigenCheck:
    lambda_13: float
    passed: bool
    threshold: float = EIGEN_THRESHOLD

    def as_dict(self) -> dict:
        return {"lambda_13": self.lambda_13, "pass": self.passed, "threshold": self.threshold}


def assumption_eigencheck(cov: CovOperator, threshold: float = EIGEN_THRESHOLD) -> EigenCheck:
    """Report the 13th largest eigenvalue and whether it exceeds ``threshold``."""
    if cov.dim < EIGEN_INDEX:
        raise ValueError(f"ambient dimension below {EIGEN_INDEX}")
    lam = float(cov.eigenvalues[EIGEN_INDEX - 1])
    return EigenCheck(lam, lam > threshold, threshold)


@dataclass(frozen=True)
class LimitSpec:
    cov: CovOperator
    shift: np.ndarray
    provenance: dict = field(default_factory=dict)
    eigencheck: EigenCheck | None = None

    @classmethod
    def build(cls, cov: CovOperator, shift=None, provenance: dict | None = None) -> "LimitSpec":
        mu = np.zeros(cov.dim) if shift is None else as_vector(shift, cov.dim)
        check = assumption_eigencheck(cov) if cov.dim >= EIGEN_INDEX else None
        return cls(cov, mu, dict(provenance or {}), check)

    @property
    def dim(self) -> int:
        return self.cov.dim


def limit_covariance_linear(c: CoeffSeq, c_eps: CovOperator) -> CovOperator:
    """``Lambda = A C A^T`` with ``A`` the windowed coefficient sum.

    The meta field ``tail_tolerance`` bounds the operator-norm error caused
    by the truncated tail of the coefficient family.
    """
    a = c.full_operator()
    lam = a @ c_eps.op @ a.T
    t = c.tail_report
    cn = float(c_eps.eigenvalues[0])
    tol = cn * (2 * operator_norm(a) * t + t * t)
    return eig_psd(0.5 * (lam + lam.T), meta={"provenance": "linear_exact", "tail_tolerance": tol})


def exact_window_block_covariance(spec: MDependentSpec) -> np.ndarray:
    """``m^-2 P (sum B_i) C (sum B_i)^T P^T`` for a generator without squash."""
    gen = spec.generator
    if not gen.is_linear:
        raise ValueError("closed form needs a generator without squash")
    b = gen.lags.sum(axis=0)
    if gen.output is not None:
        b = gen.output @ b
    return b @ spec.innovation.covariance() @ b.T / spec.m ** 2


def _window_paths(spec, length: int, reps: int, rng) -> np.ndarray:
    gen = spec.generator
    m = gen.m
    e = spec.innovation.sample((reps, length + m - 1), rng)
    idx = np.arange(length)[:, None] + (m - 1) - np.arange(m)[None, :]
    return gen(e[:, idx])


def _mean_and_stderr(y: np.ndarray):
    mean = y.mean(axis=0)
    se = y.std(axis=0, ddof=1) / np.sqrt(y.shape[0])
    return mean, se


def block_covariance_m(spec: MDependentSpec, reps: int, rng: np.random.Generator,
                       chunk: int = 20_000) -> CovOperator:
    """MC estimate of ``m^-2 sum_{|l|<=1} E[B_0 B_l^T]`` from three adjacent blocks.

    ``meta`` holds the entrywise standard errors and, for generators
    without squash, the exact closed form under ``exact``.
    """
    if not isinstance(spec, MDependentSpec):
        raise ValueError("block covariance needs an m-dependent spec")
    if reps < 1000:
        raise ValueError("block covariance needs reps >= 1000")
    m = spec.m
    parts = []
    for i in range(0, reps, chunk):
        x = _window_paths(spec, 3 * m, min(chunk, reps - i), rng)
        b = x.reshape(x.shape[0], 3, m, -1).sum(axis=2)
        b0 = b[:, 1]
        y = (np.einsum("ri,rj->rij", b0, b0) + np.einsum("ri,rj->rij", b0, b[:, 2])
             + np.einsum("ri,rj->rij", b0, b[:, 0])) / m ** 2
        parts.append(0.5 * (y + np.swapaxes(y, 1, 2)))
    mean, se = _mean_and_stderr(np.concatenate(parts))
    meta = {"provenance": "block_mc", "m": m, "reps": reps, "stderr": se}
    if spec.generator.is_linear:
        meta["exact"] = exact_window_block_covariance(spec)
    return psd_project(mean, meta=meta)


def stationary_stretch(spec: ProcessSpec, length: int, reps: int,
                       rng: np.random.Generator) -> np.ndarray:
    """``reps`` independent stationary stretches ``X_1..X_length``."""
    if isinstance(spec, LinearSpec):
        c = spec.coeffs
        e = spec.innovation.sample((reps, length + c.hi - c.lo), rng)
        x = np.zeros((reps, length, c.dim))
        k = np.arange(length)
        for j, a in zip(c.offsets, c.terms):
            if np.any(a):
                x += e[:, k + j - c.lo] @ a.T
        return x
    if isinstance(spec, ArchSpec):
        x0 = _arch_burnin_state(spec, reps, rng)
        vals, _ = _arch_steps(spec, spec.innovation.sample((reps, length), rng), x0)
        return np.sqrt(spec.ds) * vals
    return _window_paths(spec, length, reps, rng)


def _lag_estimates(x: np.ndarray, k_lag: int) -> np.ndarray:
    """Per-replicate ``Gamma_0 + sum_{h<=K}(Gamma_h + Gamma_h^T)``."""
    length = x.shape[1]
    y = np.einsum("rti,rtj->rij", x, x) / length
    for h in range(1, k_lag + 1):
        g = np.einsum("rti,rtj->rij", x[:, h:], x[:, :-h]) / (length - h)
        y += g + np.swapaxes(g, 1, 2)
    return y


def longrun_covariance(spec: ProcessSpec, k_lag: int, reps: int, rng: np.random.Generator,
                       chunk: int | None = None) -> CovOperator:
    """Truncated long-run covariance ``Gamma_0 + sum_{k=1}^K (Gamma_k + Gamma_k^T)``.

    Each replicate contributes one stationary stretch of length ``2K + 2``
    and the lag products inside it; replicates are independent, which gives
    honest entrywise standard errors. ``meta['sensitivity']`` is the
    relative Hilbert-Schmidt change between the estimates at ``K // 2`` and
    ``K``.
    """
    if k_lag < 1:
        raise ValueError("K_lag must be at least 1")
    if reps < 2:
        raise ValueError("need at least two replicates")
    length = 2 * k_lag + 2
    chunk = chunk or max(1000, 2_000_000 // (length * spec.dim))
    full, half = [], []
    for i in range(0, reps, chunk):
        x = stationary_stretch(spec, length, min(chunk, reps - i), rng)
        full.append(_lag_estimates(x, k_lag))
        half.append(_lag_estimates(x, k_lag // 2))
    yf, yh = np.concatenate(full), np.concatenate(half)
    mean, se = _mean_and_stderr(yf)
    mh = yh.mean(axis=0)
    sens = float(np.linalg.norm(mean - mh) / max(np.linalg.norm(mean), 1e-300))
    meta = {"provenance": "longrun_truncated", "K_lag": k_lag, "reps": reps,
            "stderr": se, "sensitivity": sens}
    return psd_project(mean, meta=meta)


def sample_gaussian(lim: LimitSpec, reps: int, rng: np.random.Generator) -> np.ndarray:
    """Draws of ``Z + mu`` with ``Z ~ N(0, Lambda)``."""
    c = lim.cov
    g = rng.standard_normal((reps, c.dim))
    return (g * np.sqrt(c.eigenvalues)) @ c.eigenvectors.T + lim.shift


def sample_gaussian_norm(lim: LimitSpec, reps: int, rng: np.random.Generator) -> np.ndarray:
    return np.linalg.norm(sample_gaussian(lim, reps, rng), axis=1)


class BallCDF:
    """``x -> P(||Z + mu|| <= x)`` for a fixed limit.

    Rank one uses the folded-normal closed form, rank zero is a step at
    ``||mu||`` and rank two is refused because the inversion integrand is
    not absolutely integrable there.
    """

    def __init__(self, lim: LimitSpec, tol: float = 1e-8, max_nodes: int = 2_000_000):
        c = lim.cov
        lam = c.eigenvalues
        coef = c.eigenvectors.T @ lim.shift
        top = float(lam[0]) if lam.size else 0.0
        active = lam > 1e-14 * max(top, 1e-300)
        self.rank = int(active.sum())
        self.offset = float(np.sum(coef[~active] ** 2))
        self.lam = lam[active]
        self.delta2 = coef[active] ** 2 / self.lam if self.rank else np.zeros(0)
        self.tol = tol
        self.nodes = 0
        if self.rank == 2:
            raise ValueError("inversion requires λ_3 > 0; use MC fallback")
        if self.rank >= 3:
            self._setup(max_nodes)

    def _chernoff_level(self, tol: float) -> float:
        """``z`` with ``P(Q > z) <= tol`` from the optimized Chernoff bound."""
        lam, d2 = self.lam, self.delta2

        def level(s):
            q = 1 - 2 * s * lam
            log_mgf = np.sum(-0.5 * np.log(q) + s * lam * d2 / q)
            return (log_mgf - np.log(tol)) / s

        res = minimize_scalar(level, bounds=(1e-6 / lam[0], 0.499 / lam[0]), method="bounded")
        return float(min(res.fun, level(0.25 / lam[0])))

    def _cutoff(self, tol: float) -> float:
        """``T`` beyond which the product-bound tail integral is below ``tol``."""
        nu = np.arange(1, self.rank + 1)
        log_c = -0.5 * np.cumsum(np.log(2 * self.lam))
        log_t = 2.0 / nu * (log_c + np.log(2.0 / (np.pi * nu)) - np.log(tol))
        return float(np.exp(np.min(log_t)))

    def _setup(self, max_nodes: int):
        self.y_cap = self._chernoff_level(self.tol / 4)
        # evaluation is restricted to y < y_cap, so aliases at y +- m*y_cap
        # carry at most P(Q > y_cap) and nothing below zero
        h = 2 * np.pi / self.y_cap
        t_max = self._cutoff(self.tol / 4)
        k = int(np.ceil(t_max / h))
        if k > max_nodes:
            raise ValueError("spectrum too ill-conditioned for inversion; use MC fallback")
        self.nodes = k
        half = np.arange(k) + 0.5
        t = half * h
        z = 1 - 2j * np.outer(t, self.lam)
        log_phi = np.sum(-0.5 * np.log(z) + 1j * self.lam * self.delta2 * t[:, None] / z, axis=1)
        phi = np.exp(log_phi) / (np.pi * half)
        self._t = t
        self._re = phi.real
        self._im = phi.imag

    def _q_cdf(self, y: np.ndarray, chunk: int = 64) -> np.ndarray:
        out = np.empty_like(y)
        for i in range(0, y.size, chunk):
            ty = np.outer(y[i:i + chunk], self._t)
            s = np.cos(ty) @ self._im - np.sin(ty) @ self._re
            out[i:i + chunk] = 0.5 - s
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError("x must be non-negative")
        flat = x.ravel()
        y = flat ** 2 - self.offset
        out = np.zeros_like(flat)
        if self.rank == 0:
            out = (y >= 0).astype(float)
        elif self.rank == 1:
            pos = y > 0
            r = np.sqrt(np.where(pos, y, 0.0) / self.lam[0])
            dl = np.sqrt(self.delta2[0])
            out = np.where(pos, ndtr(r - dl) - ndtr(-r - dl), 0.0)
        else:
            inner = (y > 0) & (y < self.y_cap)
            out[y >= self.y_cap] = 1.0
            if np.any(inner):
                out[inner] = self._q_cdf(y[inner])
        return np.clip(out, 0.0, 1.0).reshape(x.shape)

    @property
    def x_cap(self) -> float:
        """Radius beyond which the CDF is 1 within tolerance (inversion ranks only)."""
        return float(np.sqrt(self.y_cap + self.offset))

    def table(self, x_max: float | None = None, size: int = 1025) -> PchipInterpolator:
        """Monotone PCHIP interpolant of the CDF on ``[0, x_max]``.

        Nodes are quadratic in the index, so they are densest near zero
        where small eigenvalues shape the CDF.
        """
        if x_max is None:
            x_max = self.x_cap if self.rank >= 3 else 1.0
        xs = x_max * np.linspace(0.0, 1.0, size) ** 2
        vals = np.maximum.accumulate(self(xs))
        return PchipInterpolator(xs, vals, extrapolate=False)

    def evaluate_many(self, x, size: int = 1025) -> np.ndarray:
        """CDF at many points through a cached table (inversion ranks only)."""
        x = np.asarray(x, dtype=float)
        if self.rank < 3:
            return self(x)
        if not hasattr(self, "_table"):
            self._table = self.table(size=size)
        cap = self.x_cap
        out = np.ones_like(x)
        inside = x < cap
        out[inside] = self._table(x[inside])
        return np.clip(out, 0.0, 1.0)


def gaussian_ball_cdf(lim: LimitSpec, x: float) -> float:
    """``P(||Z_Lambda + mu|| <= x)``."""
    return float(BallCDF(lim)(np.asarray([x]))[0])


def cov_to_json(cov: CovOperator, path: str | Path | None = None) -> str:
    doc = {"d": cov.dim, "matrix": cov.op.ravel().tolist(),
           "spectrum": cov.eigenvalues.tolist()}
    text = json.dumps(doc)
    if path is not None:
        Path(path).write_text(text)
    return text


def cov_from_json(source: str | Path) -> CovOperator:
    """Read ``{"d": int, "matrix": row-major list, "spectrum": optional}``."""
    p = Path(source)
    text = p.read_text() if p.exists() else str(source)
    doc = json.loads(text)
    d = int(doc["d"])
    mat = np.asarray(doc["matrix"], dtype=float)
    if mat.size != d * d:
        raise ValueError("matrix length does not match d")
    cov = eig_psd(mat.reshape(d, d))
    if "spectrum" in doc and doc["spectrum"] is not None:
        spec = np.sort(np.asarray(doc["spectrum"], dtype=float))[::-1]
        if spec.size != d or not np.allclose(spec, cov.eigenvalues, atol=1e-8, rtol=1e-8):
            raise ValueError("declared spectrum does not match the matrix")
    return cov


def exact_limit(spec: ProcessSpec) -> CovOperator | None:
    """Closed-form limit covariance when one exists, else ``None``."""
    if isinstance(spec, LinearSpec):
        return limit_covariance_linear(spec.coeffs, spec.innovation.covariance_operator())
    if isinstance(spec, MDependentSpec) and spec.generator.is_linear:
        return eig_psd(exact_window_block_covariance(spec), meta={"provenance": "block_exact"})
    if isinstance(spec, TwoDependentSpec) and spec.generator.is_linear:
        c = spec.generator.as_coeffs()
        return limit_covariance_linear(c, spec.innovation.covariance_operator())
    return None

