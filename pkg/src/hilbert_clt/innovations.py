"""IID innovation laws with closed-form covariance.

All kinds are symmetric, hence mean zero. Besides plain sampling each law
can draw the sum of ``M`` IID copies directly, which the partial-sum
samplers use to aggregate the long stretch of a linear process where every
innovation enters with the same operator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import CovOperator, as_vector

KINDS = ("gaussian", "rademacher", "heavytail", "uniform", "sparse")

# kinds whose innovations are coordinatewise independent, scale * unit law
_BASIS_KINDS = ("rademacher", "heavytail", "uniform", "sparse")


@dataclass(frozen=True)
class InnovationDist:
    """Innovation law.

    Parameters
    ----------
    kind
        ``gaussian`` (covariance ``cov``), ``rademacher`` (independent signs
        times ``scales``), ``heavytail`` (unit-variance Student-t with
        ``tail_index`` degrees of freedom), ``uniform`` (unit-variance
        uniform) or ``sparse`` (a sign with probability ``activity``, else
        zero, scaled to unit variance).
    scales
        Per-coordinate standard deviations for the basis kinds.
    moment_order
        The order ``p`` for which ``E||eps||^p < inf`` is claimed. For
        ``heavytail`` construction fails unless ``tail_index > p``.
    """

    kind: str
    scales: np.ndarray | None = None
    cov: CovOperator | None = None
    tail_index: float | None = None
    activity: float | None = None
    moment_order: float = 3.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown innovation kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.cov is None:
                raise ValueError("gaussian innovations need a covariance")
            return
        if self.scales is None:
            raise ValueError(f"{self.kind} innovations need scales")
        s = as_vector(self.scales)
        if np.any(s < 0):
            raise ValueError("scales must be non-negative")
        object.__setattr__(self, "scales", s)
        if self.kind == "heavytail":
            q = self.tail_index
            if q is None or q <= 2:
                raise ValueError("heavytail needs tail_index > 2 for a finite variance")
            if q <= self.moment_order:
                raise ValueError(
                    f"heavytail with tail_index {q} has no finite moment of order {self.moment_order}"
                )
        if self.kind == "sparse" and not (self.activity and 0 < self.activity <= 1):
            raise ValueError("sparse innovations need activity in (0, 1]")

    @property
    def dim(self) -> int:
        return self.cov.dim if self.kind == "gaussian" else self.scales.size

    def covariance(self) -> np.ndarray:
        if self.kind == "gaussian":
            return self.cov.op.copy()
        return np.diag(self.scales ** 2)

    def covariance_operator(self) -> CovOperator:
        if self.kind == "gaussian":
            return self.cov
        return CovOperator.from_matrix(self.covariance())

    def _unit(self, shape, rng: np.random.Generator) -> np.ndarray:
        """Unit-variance coordinate draws for the basis kinds."""
        if self.kind == "rademacher":
            return 2.0 * rng.integers(0, 2, size=shape, dtype=np.int8) - 1.0
        if self.kind == "uniform":
            return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=shape)
        if self.kind == "heavytail":
            q = self.tail_index
            return rng.standard_t(q, size=shape) * np.sqrt((q - 2.0) / q)
        # sparse
        act = rng.random(shape) < self.activity
        sign = 2.0 * rng.integers(0, 2, size=shape, dtype=np.int8) - 1.0
        return act * sign / np.sqrt(self.activity)

    def sample(self, size: int | tuple, rng: np.random.Generator) -> np.ndarray:
        """Draw innovations with shape ``size + (d,)``."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        if self.kind == "gaussian":
            g = rng.standard_normal(shape + (self.dim,))
            return g @ self.cov.sqrt()
        return self._unit(shape + (self.dim,), rng) * self.scales

    def sample_sum(self, count: int, size: int, rng: np.random.Generator,
                   chunk: int = 256) -> np.ndarray:
        """Sum of ``count`` IID innovations, ``size`` independent times.

        Closed forms are used where available: Gaussian sums are Gaussian,
        Rademacher sums are shifted binomials and sparse sums are binomial
        signs over a binomial number of active terms. Other kinds are summed
        draw by draw.
        """
        d = self.dim
        if count <= 0:
            return np.zeros((size, d))
        if self.kind == "gaussian":
            return np.sqrt(count) * self.sample(size, rng)
        if self.kind == "rademacher":
            k = rng.binomial(count, 0.5, size=(size, d))
            return (2.0 * k - count) * self.scales
        if self.kind == "sparse":
            act = rng.binomial(count, self.activity, size=(size, d))
            k = rng.binomial(act, 0.5)
            return (2.0 * k - act) / np.sqrt(self.activity) * self.scales
        out = np.zeros((size, d))
        for start in range(0, count, chunk):
            m = min(chunk, count - start)
            out += self.sample((size, m), rng).sum(axis=1)
        return out

    def norm_moment(self, p: float, reps: int, rng: np.random.Generator) -> float:
        """MC estimate of ``E||eps||^p``."""
        x = self.sample(reps, rng)
        return float(np.mean(np.linalg.norm(x, axis=1) ** p))


def gaussian(cov) -> InnovationDist:
    c = cov if isinstance(cov, CovOperator) else CovOperator.from_matrix(cov)
    return InnovationDist("gaussian", cov=c, moment_order=np.inf)


def rademacher_basis(scales) -> InnovationDist:
    return InnovationDist("rademacher", scales=np.asarray(scales, float), moment_order=np.inf)


def uniform_basis(scales) -> InnovationDist:
    return InnovationDist("uniform", scales=np.asarray(scales, float), moment_order=np.inf)


def heavytail(tail_index: float, scales, moment_order: float = 3.0) -> InnovationDist:
    return InnovationDist("heavytail", scales=np.asarray(scales, float),
                          tail_index=tail_index, moment_order=moment_order)


def sparse_rademacher(activity: float, scales) -> InnovationDist:
    return InnovationDist("sparse", scales=np.asarray(scales, float),
                          activity=activity, moment_order=np.inf)


def sample_innovation(dist: InnovationDist, rng: np.random.Generator) -> np.ndarray:
    """One innovation draw."""
    return dist.sample(1, rng)[0]
