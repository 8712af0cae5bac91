"""Deterministic random streams.

Every random draw in the package comes from a stream addressed by
``(seed, purpose, index)``. Streams are built on numpy's ``SeedSequence``
spawn keys and the counter-based Philox bit generator, so two streams with
different addresses are statistically independent and the same address
always reproduces the same numbers, regardless of thread scheduling.

Compiled kernels cannot consume a numpy ``Generator``. For them a 64-bit key
is derived from the same address and fed to a SplitMix64 counter hash; see
:func:`stream_key` and :func:`counter_bits`.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def purpose_hash(purpose: str) -> int:
    """Stable 32-bit hash of a purpose label (independent of PYTHONHASHSEED)."""
    return zlib.crc32(purpose.encode("utf-8")) & 0xFFFFFFFF


@dataclass(frozen=True)
class StreamId:
    """Address of a random stream."""

    seed: int
    purpose: str
    index: int = 0

    @property
    def tag(self) -> str:
        return f"{self.seed}/{self.purpose}/{self.index}"

    def seed_sequence(self) -> np.random.SeedSequence:
        if self.seed < 0 or self.index < 0:
            raise ValueError("seed and index must be non-negative")
        return np.random.SeedSequence(
            entropy=self.seed, spawn_key=(purpose_hash(self.purpose), self.index)
        )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def key(self) -> int:
        return int(self.seed_sequence().generate_state(1, np.uint64)[0])


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Return the Philox generator addressed by ``(seed, purpose, index)``."""
    return StreamId(seed, purpose, index).generator()


def stream_key(seed: int, purpose: str, index: int = 0) -> int:
    """Return a 64-bit key for counter-hash kernels at the same address."""
    return StreamId(seed, purpose, index).key()


def splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer applied elementwise to uint64 input."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return z


def counter_bits(key: int, counter: np.ndarray) -> np.ndarray:
    """64 pseudo-random bits per counter value under ``key``.

    Matches the compiled kernels bit for bit, which is what the tests use to
    check the kernels against plain numpy code.
    """
    c = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return splitmix64(splitmix64(c ^ np.uint64(key)) + np.uint64(key))
