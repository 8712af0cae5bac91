"""Compiled kernels for windowed-sum generators.

Innovations are drawn from a SplitMix64 counter hash keyed by a 64-bit
stream key, so a replicate's draws depend only on ``(key, rep, t, coord)``.
:func:`counter_innovations` is the numpy mirror used by the tests.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .rng import counter_bits

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S32 = np.uint64(32)
_LOW32 = np.uint64(0xFFFFFFFF)
_ONE = np.uint64(1)

KIND_CODES = {"rademacher": 0, "sparse": 1, "gaussian": 2, "uniform": 3}

_INV53 = 1.0 / 9007199254740992.0
_INV32 = 1.0 / 4294967296.0


@njit(cache=True, inline="always")
def _mix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _bits(key, counter):
    return _mix(_mix(counter ^ key) + key)


@njit(cache=True)
def _draw(key, cell, d, kind, scales, activity, out):
    """Fill ``out`` with the innovation at linear cell index ``cell``.

    ``cell`` enumerates (rep, t) pairs; coordinates get sub-counters.
    """
    if kind == 0:
        nw = (d + 63) // 64
        for w in range(nw):
            b = _bits(key, np.uint64(cell * nw + w))
            for c in range(w * 64, min(d, w * 64 + 64)):
                bit = np.float64((b >> np.uint64(c - w * 64)) & _ONE)
                out[c] = scales[c] * (2.0 * bit - 1.0)
        return
    for c in range(d):
        b = _bits(key, np.uint64(cell * d + c))
        if kind == 1:
            u = (b >> _S11) * _INV53
            if u < activity:
                sgn = 1.0 if (b & _ONE) == _ONE else -1.0
                out[c] = sgn * scales[c] / np.sqrt(activity)
            else:
                out[c] = 0.0
        elif kind == 2:
            u1 = ((b >> _S32) + 0.5) * _INV32
            u2 = ((b & _LOW32) + 0.5) * _INV32
            out[c] = scales[c] * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        else:
            u = ((b >> _S11) + 0.5) * _INV53
            out[c] = scales[c] * np.sqrt(3.0) * (2.0 * u - 1.0)


@njit(cache=True, nogil=True, fastmath=True)
def _window_run(key, rep0, reps, n, m, d, kind, scales, activity,
                nz_lag, nz_row, nz_col, nz_val, tau, keep_path, sums, path):
    T = n + m - 1
    eps = np.zeros((d, T))
    x = np.zeros((d, n))
    buf = np.zeros(d)
    norm = 1.0 / np.sqrt(m)
    inv_tau2 = 0.0 if tau <= 0 else 1.0 / (tau * tau)
    for r in range(reps):
        rep = rep0 + r
        for ti in range(T):
            _draw(key, rep * T + ti, d, kind, scales, activity, buf)
            for c in range(d):
                eps[c, ti] = buf[c]
        x[:, :] = 0.0
        for z in range(nz_val.size):
            off = m - 1 - nz_lag[z]
            xr = x[nz_row[z]]
            er = eps[nz_col[z]]
            w = nz_val[z] * norm
            for k in range(n):
                xr[k] += w * er[k + off]
        for c in range(d):
            xr = x[c]
            if inv_tau2 > 0.0:
                for k in range(n):
                    y = xr[k]
                    xr[k] = y / np.sqrt(1.0 + y * y * inv_tau2)
            s = 0.0
            for k in range(n):
                s += xr[k]
            sums[r, c] = s
        if keep_path:
            path[r] = x.T


def window_sums(key: int, rep0: int, reps: int, n: int, lags: np.ndarray,
                tau: float | None, kind: str, scales: np.ndarray,
                activity: float = 1.0, keep_path: bool = False):
    """Partial sums (and optionally paths) of a squashed windowed-sum generator.

    Returns ``(sums, path)`` where ``sums`` has shape ``(reps, d)`` and
    ``path`` is ``(reps, n, d)`` or ``None``. The output operator is not
    applied here.
    """
    m, d, _ = lags.shape
    lag, row, col = np.nonzero(lags)
    val = lags[lag, row, col].astype(np.float64)
    sums = np.zeros((reps, d))
    path = np.zeros((reps, n, d)) if keep_path else np.zeros((1, 1, 1))
    _window_run(np.uint64(key), rep0, reps, n, m, d, KIND_CODES[kind],
                np.ascontiguousarray(scales, dtype=np.float64), float(activity),
                lag.astype(np.int64), row.astype(np.int64), col.astype(np.int64), val,
                -1.0 if tau is None else float(tau), keep_path, sums, path)
    return sums, (path if keep_path else None)


def counter_innovations(key: int, cells: np.ndarray, d: int, kind: str,
                        scales: np.ndarray, activity: float = 1.0) -> np.ndarray:
    """Numpy mirror of the kernel's innovation draws at the given cells."""
    cells = np.asarray(cells, dtype=np.uint64)
    scales = np.asarray(scales, dtype=float)
    if kind == "rademacher":
        nw = (d + 63) // 64
        out = np.empty(cells.shape + (d,))
        for w in range(nw):
            b = counter_bits(key, cells * np.uint64(nw) + np.uint64(w))
            for c in range(w * 64, min(d, w * 64 + 64)):
                bit = (b >> np.uint64(c - w * 64)) & np.uint64(1)
                out[..., c] = np.where(bit == 1, scales[c], -scales[c])
        return out
    sub = cells[..., None] * np.uint64(d) + np.arange(d, dtype=np.uint64)
    b = counter_bits(key, sub)
    if kind == "sparse":
        u = (b >> np.uint64(11)).astype(float) * _INV53
        sgn = np.where(b & np.uint64(1), 1.0, -1.0)
        return np.where(u < activity, sgn * scales / np.sqrt(activity), 0.0)
    if kind == "gaussian":
        u1 = ((b >> np.uint64(32)).astype(float) + 0.5) * _INV32
        u2 = ((b & np.uint64(0xFFFFFFFF)).astype(float) + 0.5) * _INV32
        return scales * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    u = ((b >> np.uint64(11)).astype(float) + 0.5) * _INV53
    return scales * np.sqrt(3.0) * (2.0 * u - 1.0)
