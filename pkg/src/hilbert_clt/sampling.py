"""Many independent draws of the partial sum ``S_n``.

Linear processes use the exact identity ``S_n = sum_k A_{n,k} eps_k``.
Every ``k`` with ``A_{n,k} = A`` is aggregated into one draw of a sum of
IID innovations, so the cost grows with the coefficient window rather than
with ``n``. Squashed windowed-sum generators run in a compiled kernel; all
other cases are simulated path by path in chunks.
"""
from __future__ import annotations

import numpy as np

from . import coeffs as cs
from ._kernels import window_sums
from .processes import (ArchSpec, LinearSpec, MDependentSpec, ProcessSpec,
                        TwoDependentSpec, WindowGenerator, _window_path)

_KERNEL_KINDS = ("rademacher", "sparse", "uniform", "gaussian")


def normalizer(spec: ProcessSpec, n: int) -> float:
    """Scale ``c_n`` such that ``S_n / c_n`` converges to the Gaussian limit."""
    if isinstance(spec, MDependentSpec):
        return float(np.sqrt(n * spec.m))
    return float(np.sqrt(n))


def _linear_sums(spec: LinearSpec, n: int, reps: int, rng: np.random.Generator) -> np.ndarray:
    c = spec.coeffs
    innov = spec.innovation
    t0, t1 = cs.support_range(c, n)
    ks = np.arange(t0, t1 + 1)
    full_lo, full_hi = c.hi + 1, n + c.lo
    interior = (ks >= full_lo) & (ks <= full_hi)
    out = np.zeros((reps, c.dim))
    count = int(interior.sum())
    if count:
        out += innov.sample_sum(count, reps, rng) @ c.full_operator().T
    ops = cs.partial_operators(c, n, ks[~interior])
    for a in ops:
        if np.any(a):
            out += innov.sample(reps, rng) @ a.T
    return out


def _kernel_ready(gen: WindowGenerator, innov) -> bool:
    if innov.kind not in _KERNEL_KINDS:
        return False
    if innov.kind == "gaussian":
        c = innov.cov.op
        return bool(np.all(c == np.diag(np.diag(c))))
    return True


def _kernel_scales(innov) -> np.ndarray:
    if innov.kind == "gaussian":
        return np.sqrt(np.diag(innov.cov.op))
    return innov.scales


def _window_sums(spec, n: int, reps: int, rng: np.random.Generator, chunk: int) -> np.ndarray:
    gen: WindowGenerator = spec.generator
    innov = spec.innovation
    if gen.is_linear:
        return _linear_sums(LinearSpec(gen.as_coeffs(), innov), n, reps, rng)
    if _kernel_ready(gen, innov):
        key = int(rng.integers(0, 2 ** 63))
        s, _ = window_sums(key, 0, reps, n, gen.lags, gen.tau, innov.kind,
                           _kernel_scales(innov), innov.activity or 1.0)
    else:
        s = np.concatenate([
            _window_path_batch(gen, innov, n, min(chunk, reps - i), rng)
            for i in range(0, reps, chunk)
        ])
    return s if gen.output is None else s @ gen.output.T


def _window_path_batch(gen, innov, n, size, rng):
    # squashed output before P; P is linear so it is applied to the sum
    bare = WindowGenerator(gen.lags, gen.tau, None)
    return np.stack([_window_path(bare, innov, n, rng).sum(axis=0) for _ in range(size)])


def _arch_sums(spec: ArchSpec, n: int, reps: int, rng: np.random.Generator, chunk: int) -> np.ndarray:
    out = np.empty((reps, spec.dim))
    kt = spec.ds * spec.kernel.T
    for i in range(0, reps, chunk):
        size = min(chunk, reps - i)
        x = np.zeros((size, spec.dim))
        acc = np.zeros((size, spec.dim))
        for k in range(spec.burnin + n):
            x = spec.innovation.sample(size, rng) * np.sqrt(spec.mu + (x * x) @ kt)
            if k >= spec.burnin:
                acc += x
        out[i:i + size] = acc
    return np.sqrt(spec.ds) * out


def sample_partial_sums(spec: ProcessSpec, n: int, reps: int, rng: np.random.Generator,
                        chunk: int = 4096) -> np.ndarray:
    """Return ``reps`` independent draws of ``S_n`` with shape ``(reps, d)``."""
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be positive")
    if isinstance(spec, LinearSpec):
        return _linear_sums(spec, n, reps, rng)
    if isinstance(spec, (MDependentSpec, TwoDependentSpec)):
        if isinstance(spec, MDependentSpec) and spec.m > n:
            raise ValueError("m-dependent simulation needs m <= n")
        return _window_sums(spec, n, reps, rng, chunk=64)
    if isinstance(spec, ArchSpec):
        return _arch_sums(spec, n, reps, rng, chunk)
    raise TypeError(f"unsupported spec {type(spec).__name__}")


def sample_normalized(spec: ProcessSpec, n: int, reps: int, rng: np.random.Generator,
                      mu=None) -> np.ndarray:
    """Draws of ``S_n / c_n + mu``."""
    w = sample_partial_sums(spec, n, reps, rng) / normalizer(spec, n)
    return w if mu is None else w + np.asarray(mu, dtype=float)
