"""Process definitions and path simulation.

Four process classes are supported: linear processes with operator
coefficients, a grid-discretized functional ARCH(1), m-dependent windowed
sums and two-dependent windowed sums. Simulators take a numpy ``Generator``
so that callers control the stream; see :mod:`hilbert_clt.rng`.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from . import coeffs as cs
from .coeffs import CoeffSeq
from .innovations import InnovationDist
from .linalg import as_operator, as_vector


@dataclass(frozen=True)
class LinearSpec:
    coeffs: CoeffSeq
    innovation: InnovationDist

    def __post_init__(self):
        if self.coeffs.dim != self.innovation.dim:
            raise ValueError("coefficient and innovation dimensions differ")

    @property
    def dim(self) -> int:
        return self.coeffs.dim


@dataclass(frozen=True)
class WindowGenerator:
    """``g(e_0..e_{m-1}) = P h(m^{-1/2} sum_i B_i e_i)``.

    ``lags`` stacks ``B_0..B_{m-1}``; ``tau`` switches on the bounded
    coordinatewise squash ``h(v) = v (1 + v^2/tau^2)^{-1/2}``; ``output`` is
    an optional operator ``P`` applied last (identity when ``None``).
    """

    lags: np.ndarray
    tau: float | None = None
    output: np.ndarray | None = None

    def __post_init__(self):
        b = np.asarray(self.lags, dtype=float)
        if b.ndim != 3 or b.shape[1] != b.shape[2] or b.shape[0] < 1:
            raise ValueError("lags must have shape (m, d, d) with m >= 1")
        if not np.all(np.isfinite(b)):
            raise ValueError("generator operators must be finite")
        object.__setattr__(self, "lags", b)
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.output is not None:
            object.__setattr__(self, "output", as_operator(self.output, b.shape[1]))

    @property
    def m(self) -> int:
        return self.lags.shape[0]

    @property
    def dim(self) -> int:
        return self.lags.shape[1]

    @property
    def is_linear(self) -> bool:
        return self.tau is None

    def squash(self, v: np.ndarray) -> np.ndarray:
        if self.tau is None:
            return v
        return v / np.sqrt(1.0 + (v / self.tau) ** 2)

    def __call__(self, window: np.ndarray) -> np.ndarray:
        """Apply to innovations ``window[..., i, :] = e_{k-i}``."""
        v = np.einsum("...id,ied->...e", window, self.lags) / np.sqrt(self.m)
        x = self.squash(v)
        return x if self.output is None else x @ self.output.T

    def as_coeffs(self) -> CoeffSeq:
        """Linear generators as a causal coefficient sequence."""
        if not self.is_linear:
            raise ValueError("squashed generator is not linear")
        p = np.eye(self.dim) if self.output is None else self.output
        terms = np.stack([p @ b for b in self.lags[::-1]]) / np.sqrt(self.m)
        return CoeffSeq(-(self.m - 1), terms, 0.0, "window")


@dataclass(frozen=True)
class MDependentSpec:
    m: int
    generator: WindowGenerator
    innovation: InnovationDist

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.generator.m != self.m:
            raise ValueError(f"generator has {self.generator.m} lags, expected m={self.m}")
        if self.generator.dim != self.innovation.dim:
            raise ValueError("generator and innovation dimensions differ")

    @property
    def dim(self) -> int:
        return self.generator.dim


@dataclass(frozen=True)
class TwoDependentSpec:
    generator: WindowGenerator
    innovation: InnovationDist

    def __post_init__(self):
        if self.generator.m != 2:
            raise ValueError("two-dependent generator needs exactly two lags")
        if self.generator.dim != self.innovation.dim:
            raise ValueError("generator and innovation dimensions differ")

    @property
    def m(self) -> int:
        return 2

    @property
    def dim(self) -> int:
        return self.generator.dim


@dataclass(frozen=True)
class ArchSpec:
    """Functional ARCH(1) on an equispaced grid of ``d`` points in [0, 1].

    ``kernel[i, j] = beta(t_i, s_j)`` and ``mu[i] = mu(t_i)``. Innovations
    are grid values. Path coordinates are returned in the orthonormal
    step-function basis, that is ``sqrt(ds) * X(t_i)``.
    """

    kernel: np.ndarray
    mu: np.ndarray
    innovation: InnovationDist
    burnin: int = 512

    def __post_init__(self):
        k = as_operator(self.kernel)
        mu = as_vector(self.mu, k.shape[0])
        if np.any(k < 0):
            raise ValueError("ARCH kernel must be non-negative")
        if np.any(mu <= 0):
            raise ValueError("ARCH intercept mu must be positive")
        if self.innovation.dim != k.shape[0]:
            raise ValueError("innovation and grid dimensions differ")
        if self.burnin < 0:
            raise ValueError("burnin must be non-negative")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        return self.kernel.shape[0]

    @property
    def ds(self) -> float:
        return 1.0 / self.dim

    def contraction(self, reps: int, rng: np.random.Generator, p: float = 2.0):
        """MC estimates of ``E[K]`` and ``E[K^p]``.

        ``K^2 = int int beta(t, s)^2 eps(s)^4 ds dt`` on the grid.
        """
        e = self.innovation.sample(reps, rng)
        col = (self.kernel ** 2).sum(axis=0)
        k = np.sqrt(self.ds ** 2 * (e ** 4) @ col)
        return float(k.mean()), float(np.mean(k ** p))


ProcessSpec = Union[LinearSpec, ArchSpec, MDependentSpec, TwoDependentSpec]


def process_kind(spec: ProcessSpec) -> str:
    return {LinearSpec: "linear", ArchSpec: "arch", MDependentSpec: "m_dependent",
            TwoDependentSpec: "two_dependent"}[type(spec)]


def arch_exp_kernel(d: int, scale: float = 0.3, decay: float = 1.0) -> np.ndarray:
    """``beta(t, s) = scale * exp(-decay |t - s|)`` on the midpoint grid."""
    t = (np.arange(d) + 0.5) / d
    return scale * np.exp(-decay * np.abs(t[:, None] - t[None, :]))


@dataclass
class PathSample:
    xs: np.ndarray
    partial_sum: np.ndarray
    seed_tag: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def dim(self) -> int:
        return self.xs.shape[1]


def _path(xs: np.ndarray, seed_tag: str, **extras) -> PathSample:
    return PathSample(xs, xs.sum(axis=0), seed_tag, extras)


# linear processes

def _linear_buffer(spec: LinearSpec, n: int, rng: np.random.Generator):
    """Innovations ``eps_t`` for ``t = 1 + lo .. n + hi`` and the first index."""
    t0, t1 = cs.support_range(spec.coeffs, n)
    return spec.innovation.sample(t1 - t0 + 1, rng), t0


def _convolve(c: CoeffSeq, buf: np.ndarray, t0: int, ks: np.ndarray) -> np.ndarray:
    """``X_k = sum_j alpha_j eps_{k+j}`` for ``k`` in ``ks``."""
    x = np.zeros((ks.size, c.dim))
    for j, a in zip(c.offsets, c.terms):
        if np.any(a):
            x += buf[ks + j - t0] @ a.T
    return x


def simulate_linear_path(spec: LinearSpec, n: int, rng: np.random.Generator,
                         seed_tag: str = "") -> PathSample:
    if n < 1:
        raise ValueError("n must be positive")
    buf, t0 = _linear_buffer(spec, n, rng)
    return _path(_convolve(spec.coeffs, buf, t0, np.arange(1, n + 1)), seed_tag)


@dataclass
class BNDResult:
    """Beveridge-Nelson pieces of ``S_n``.

    ``martingale = sum_{k=1}^n A eps_k``; ``boundary`` holds
    ``-sum_{k=1}^n A^c_{n,k} eps_k``, ``sum_{k>n} A_{n,k} eps_k`` and
    ``sum_{k<1} A_{n,k} eps_k`` in that order.
    """

    martingale: np.ndarray
    boundary: tuple[np.ndarray, np.ndarray, np.ndarray]
    partial_sum: np.ndarray
    residual: np.ndarray

    @property
    def relative_residual(self) -> float:
        scale = max(np.linalg.norm(self.partial_sum), np.linalg.norm(self.martingale), 1e-300)
        return float(np.linalg.norm(self.residual) / scale)


def bnd_decompose(spec: LinearSpec, n: int, rng: np.random.Generator) -> BNDResult:
    """Decompose the partial sum of the path drawn from ``rng``.

    Uses the same innovations that :func:`simulate_linear_path` draws from
    an identically seeded generator.
    """
    c = spec.coeffs
    buf, t0 = _linear_buffer(spec, n, rng)
    s_n = _convolve(c, buf, t0, np.arange(1, n + 1)).sum(axis=0)
    # indices 1..n outside the path buffer still enter the martingale part
    t1 = t0 + buf.shape[0] - 1
    pre = spec.innovation.sample(max(0, t0 - 1), rng)
    post = spec.innovation.sample(max(0, n - t1), rng)
    e = np.concatenate([pre, buf, post])
    t0 = min(t0, 1)
    ks = np.arange(t0, t0 + e.shape[0])
    inside = (ks >= 1) & (ks <= n)
    A = c.full_operator()
    mart = A @ e[inside].sum(axis=0)
    a_in = cs.partial_operators(c, n, ks)
    lo_j, hi_j = cs._clip_range(c, n, ks[inside])
    p = cs._prefix(c)
    comp = p[lo_j] + (p[-1] - p[hi_j])
    corr = -np.einsum("kij,kj->i", comp, e[inside])
    after = np.einsum("kij,kj->i", a_in[ks > n], e[ks > n])
    before = np.einsum("kij,kj->i", a_in[ks < 1], e[ks < 1])
    resid = s_n - (mart + corr + after + before)
    return BNDResult(mart, (corr, after, before), s_n, resid)


# windowed-sum generators

def _window_path(gen: WindowGenerator, innov: InnovationDist, n: int,
                 rng: np.random.Generator) -> np.ndarray:
    m = gen.m
    e = innov.sample(n + m - 1, rng)
    # window[k, i] = eps_{k-i}; row r of e is eps_{r - m + 2}
    idx = np.arange(n)[:, None] + (m - 1) - np.arange(m)[None, :]
    return gen(e[idx])


def simulate_m_dependent(spec: MDependentSpec, n: int, rng: np.random.Generator,
                         seed_tag: str = "") -> PathSample:
    if n < 1:
        raise ValueError("n must be positive")
    if spec.m > n:
        raise ValueError("m-dependent simulation needs m <= n")
    return _path(_window_path(spec.generator, spec.innovation, n, rng), seed_tag)


def simulate_two_dependent(spec: TwoDependentSpec, n: int, rng: np.random.Generator,
                           seed_tag: str = "") -> PathSample:
    if n < 1:
        raise ValueError("n must be positive")
    return _path(_window_path(spec.generator, spec.innovation, n, rng), seed_tag)


# functional ARCH

def _arch_steps(spec: ArchSpec, eps: np.ndarray, x_prev: np.ndarray | None = None):
    """Run the recursion over ``eps[..., k, :]``; return grid values and sigma^2.

    ``sigma_k^2 = mu + ds * beta @ X_{k-1}^2`` and ``X_k = eps_k sigma_k``.
    """
    steps = eps.shape[-2]
    lead = eps.shape[:-2]
    x = np.zeros(lead + (spec.dim,)) if x_prev is None else x_prev
    xs = np.empty_like(eps)
    s2 = np.empty_like(eps)
    kt = spec.ds * spec.kernel.T
    for k in range(steps):
        sig2 = spec.mu + (x * x) @ kt
        x = eps[..., k, :] * np.sqrt(sig2)
        xs[..., k, :] = x
        s2[..., k, :] = sig2
    return xs, s2


def _arch_burnin_state(spec: ArchSpec, size: int, rng: np.random.Generator) -> np.ndarray | None:
    """Grid values ``X_{-1}`` after ``burnin`` steps from rest, without storing the run."""
    if spec.burnin == 0:
        return None
    kt = spec.ds * spec.kernel.T
    x = np.zeros((size, spec.dim))
    for _ in range(spec.burnin):
        x = spec.innovation.sample(size, rng) * np.sqrt(spec.mu + (x * x) @ kt)
    return x


def simulate_arch(spec: ArchSpec, n: int, rng: np.random.Generator,
                  seed_tag: str = "", contraction_reps: int = 10_000) -> PathSample:
    if n < 1:
        raise ValueError("n must be positive")
    eps = spec.innovation.sample(spec.burnin + n, rng)
    vals, s2 = _arch_steps(spec, eps)
    ek, ekp = spec.contraction(contraction_reps, rng)
    notes = []
    if ek >= 1:
        msg = f"ARCH contraction diagnostic E[K] = {ek:.3f} >= 1"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    xs = np.sqrt(spec.ds) * vals[spec.burnin:]
    return _path(xs, seed_tag, sigma2=s2[spec.burnin:], grid_values=vals[spec.burnin:],
                 contraction=ek, contraction_p=ekp, warnings=notes)


def simulate_path(spec: ProcessSpec, n: int, rng: np.random.Generator,
                  seed_tag: str = "") -> PathSample:
    if isinstance(spec, LinearSpec):
        return simulate_linear_path(spec, n, rng, seed_tag)
    if isinstance(spec, ArchSpec):
        return simulate_arch(spec, n, rng, seed_tag)
    if isinstance(spec, MDependentSpec):
        return simulate_m_dependent(spec, n, rng, seed_tag)
    return simulate_two_dependent(spec, n, rng, seed_tag)


# coupling

def _swap_zero(e: np.ndarray, zero_row: int, rng, innov: InnovationDist) -> np.ndarray:
    e2 = e.copy()
    e2[..., zero_row, :] = innov.sample(e.shape[:-2], rng)
    return e2


def coupled_paths(spec: ProcessSpec, k_max: int, reps: int, rng: np.random.Generator):
    """``(X_k, X_k')`` for ``k = 0..k_max`` across ``reps`` replicates.

    The primed path uses the same innovations except that ``eps_0`` is
    replaced by an independent copy. Arrays have shape ``(reps, k_max+1, d)``.
    """
    if k_max < 0:
        raise ValueError("k must be non-negative")
    if isinstance(spec, LinearSpec):
        c = spec.coeffs
        if not c.is_causal:
            raise ValueError("coupling requires causal representation")
        t0 = c.lo
        e = spec.innovation.sample((reps, k_max - t0 + 1), rng)
        e2 = _swap_zero(e, -t0, rng, spec.innovation)

        def conv(buf):
            x = np.zeros((reps, k_max + 1, c.dim))
            for j, a in zip(c.offsets, c.terms):
                if np.any(a):
                    x += buf[:, np.arange(k_max + 1) + j - t0] @ a.T
            return x

        return conv(e), conv(e2)
    if isinstance(spec, ArchSpec):
        x_prev = _arch_burnin_state(spec, reps, rng)
        post = spec.innovation.sample((reps, k_max + 1), rng)
        post2 = _swap_zero(post, 0, rng, spec.innovation)
        a, _ = _arch_steps(spec, post, x_prev)
        b, _ = _arch_steps(spec, post2, x_prev)
        r = np.sqrt(spec.ds)
        return r * a, r * b
    gen = spec.generator
    m = gen.m
    e = spec.innovation.sample((reps, k_max + m), rng)
    # row r holds eps_{r - m + 1}
    e2 = _swap_zero(e, m - 1, rng, spec.innovation)
    idx = np.arange(k_max + 1)[:, None] + (m - 1) - np.arange(m)[None, :]
    return gen(e[:, idx]), gen(e2[:, idx])


def coupled_pair(spec: ProcessSpec, k: int, rng: np.random.Generator):
    """One coupled draw ``(X_k, X_k')``."""
    a, b = coupled_paths(spec, k, 1, rng)
    return a[0, k], b[0, k]


@dataclass(frozen=True)
class ThetaEstimate:
    k: int
    p: float
    value: float
    stderr: float
    reps: int


def _theta_from_distances(dist: np.ndarray, p: float):
    """``(mean D^p)^{1/p}`` with a delete-one jackknife standard error."""
    dp = dist ** p
    n = dp.size
    tot = dp.sum()
    est = (tot / n) ** (1 / p)
    loo = ((tot - dp) / (n - 1)) ** (1 / p)
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return float(est), float(se)


def theta_profile(spec: ProcessSpec, ks, p: float, reps: int,
                  rng: np.random.Generator) -> list[ThetaEstimate]:
    """Coupling coefficients ``theta_p(k)`` for all ``k`` in ``ks``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if reps < 1000:
        raise ValueError("theta estimation needs reps >= 1000")
    ks = [int(k) for k in ks]
    a, b = coupled_paths(spec, max(ks), reps, rng)
    dist = np.linalg.norm(a - b, axis=-1)
    out = []
    for k in ks:
        v, se = _theta_from_distances(dist[:, k], p)
        out.append(ThetaEstimate(k, p, v, se, reps))
    return out


def estimate_theta_p(spec: ProcessSpec, k: int, p: float, reps: int,
                     rng: np.random.Generator) -> ThetaEstimate:
    return theta_profile(spec, [k], p, reps, rng)[0]


# diagnostics and export

def batch_moment_scan(norms: np.ndarray, p: float, batches: int = 10) -> dict:
    """Per-batch means of ``||x||^p``; a large spread hints at an infinite moment."""
    v = np.asarray(norms, dtype=float) ** p
    parts = np.array_split(v, batches)
    means = np.array([b.mean() for b in parts])
    return {"p": p, "batch_means": means, "mean": float(v.mean()),
            "rel_spread": float(means.std(ddof=1) / max(means.mean(), 1e-300))}


_MAGIC = b"HCLTPATH"


def write_path_dump(sample: PathSample, path: str | Path) -> None:
    """Binary dump: magic, int64 d, int64 n, int64 tag length, tag, doubles."""
    tag = sample.seed_tag.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qqq", sample.dim, sample.n, len(tag)))
        fh.write(tag)
        fh.write(np.ascontiguousarray(sample.xs, dtype="<f8").tobytes())


def read_path_dump(path: str | Path) -> PathSample:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError("not a path dump")
    d, n, tl = struct.unpack("<qqq", raw[8:32])
    tag = raw[32:32 + tl].decode("utf-8")
    body = np.frombuffer(raw[32 + tl:], dtype="<f8")
    if body.size != n * d:
        raise ValueError("truncated path dump")
    return _path(body.reshape(n, d).copy(), tag)
