"""One-dimensional empirical distributions and Wasserstein distances.

Everything here works on sorted samples with uniform weights. The CDF is the
right-continuous step function with jumps of ``1/n``; ``quantile`` is its
left-continuous generalized inverse ``inf{u : F(u) >= v}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

DEFAULT_GRID_SIZE = 1000

QUANTILE_METHODS = ("inverse_cdf", "linear")


def _as_finite_vector(values, name="values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValidationError(f"{name} contains a non-finite value at position {bad}")
    return arr


def jitter(values, sigma: float, seed=None) -> np.ndarray:
    """Add independent ``N(0, sigma**2)`` noise to every value.

    ``sigma == 0`` returns a copy of the input. The noise is drawn from
    ``numpy.random.default_rng(seed)`` so a fixed seed gives a fixed result.
    """
    arr = _as_finite_vector(values)
    if not np.isfinite(sigma) or sigma < 0:
        raise ValidationError(f"sigma must be a non-negative finite number, got {sigma}")
    if sigma == 0:
        return arr.copy()
    rng = np.random.default_rng(seed)
    return arr + rng.normal(0.0, sigma, size=arr.shape)


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Uniformly weighted sample stored in ascending order.

    Build it with :meth:`from_sample`; the constructor expects ``values`` to be
    sorted already and only checks it.
    """

    values: np.ndarray
    jitter_sigma: float = 0.0
    seed: Optional[int] = None
    _levels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arr = _as_finite_vector(self.values)
        if arr.size == 0:
            raise ValidationError("an empirical distribution needs at least one value")
        if np.any(np.diff(arr) < 0):
            raise ValidationError("values must be sorted in ascending order")
        if self.jitter_sigma < 0:
            raise ValidationError("jitter_sigma must be non-negative")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        # k/n computed exactly as cdf() does, so quantile() and cdf() agree at jumps
        levels = np.arange(1, arr.size + 1) / arr.size
        levels.setflags(write=False)
        object.__setattr__(self, "_levels", levels)

    @classmethod
    def from_sample(cls, sample, sigma: float = 0.0, seed=None) -> "EmpiricalDistribution":
        """Jitter ``sample`` with scale ``sigma`` (0 keeps it raw), then sort."""
        noisy = jitter(sample, sigma, seed)
        return cls(np.sort(noisy), jitter_sigma=float(sigma), seed=seed)

    def __len__(self):
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    def cdf(self, u):
        """Fraction of the sample that is ``<= u``."""
        counts = np.searchsorted(self.values, u, side="right")
        return counts / self.values.size

    def quantile(self, v):
        """Generalized inverse of :meth:`cdf`; ``quantile(0)`` is the minimum."""
        v = np.asarray(v, dtype=float)
        if np.any((v < 0) | (v > 1)) or np.any(np.isnan(v)):
            raise ValidationError("quantile levels must lie in [0, 1]")
        idx = np.searchsorted(self._levels, v, side="left")
        return self.values[np.minimum(idx, self.values.size - 1)]

    def interpolated_quantile(self, v):
        """Piecewise-linear quantile through ``(k / (n - 1), x_(k))``.

        This is ``numpy.quantile(..., method="linear")`` on the stored sample.
        It is continuous, unlike :meth:`quantile`, and is what the calibrators
        use by default.
        """
        v = np.asarray(v, dtype=float)
        if np.any((v < 0) | (v > 1)) or np.any(np.isnan(v)):
            raise ValidationError("quantile levels must lie in [0, 1]")
        n = self.values.size
        if n == 1:
            return np.full(v.shape, self.values[0]) if v.ndim else self.values[0]
        return np.interp(v, np.linspace(0.0, 1.0, n), self.values)

    def quantile_function(self, method: str = "inverse_cdf"):
        if method == "inverse_cdf":
            return self.quantile
        if method == "linear":
            return self.interpolated_quantile
        raise ValidationError(f"unknown quantile method {method!r}; expected one of {QUANTILE_METHODS}")

    def shifted(self, c: float) -> "EmpiricalDistribution":
        return EmpiricalDistribution(self.values + c, self.jitter_sigma, self.seed)


def _as_distribution(d) -> EmpiricalDistribution:
    if isinstance(d, EmpiricalDistribution):
        return d
    return EmpiricalDistribution.from_sample(d)


def cdf_eval(dist: EmpiricalDistribution, u):
    """Right-continuous empirical CDF of ``dist`` at ``u``."""
    return _as_distribution(dist).cdf(u)


def quantile_eval(dist: EmpiricalDistribution, v):
    """Generalized-inverse quantile of ``dist`` at level ``v`` in [0, 1]."""
    return _as_distribution(dist).quantile(v)


def midpoint_grid(grid_size: int) -> np.ndarray:
    """Levels ``(k - 1/2) / grid_size`` for ``k = 1..grid_size``."""
    if int(grid_size) != grid_size or grid_size < 1:
        raise ValidationError(f"grid_size must be a positive integer, got {grid_size}")
    grid_size = int(grid_size)
    return (np.arange(grid_size) + 0.5) / grid_size


def _grid_gap(d1, d2, grid_size):
    d1, d2 = _as_distribution(d1), _as_distribution(d2)
    u = midpoint_grid(grid_size)
    return np.abs(d1.quantile(u) - d2.quantile(u))


def wasserstein1_grid(d1, d2, grid_size: int = DEFAULT_GRID_SIZE) -> float:
    """W1 approximated by the midpoint rule on the quantile integral."""
    return float(np.mean(_grid_gap(d1, d2, grid_size)))


def wasserstein2_grid(d1, d2, grid_size: int = DEFAULT_GRID_SIZE) -> float:
    """Squared W2 approximated by the midpoint rule on the quantile integral."""
    return float(np.mean(_grid_gap(d1, d2, grid_size) ** 2))


def wasserstein1_exact(d1, d2) -> float:
    """Exact W1 between two empirical distributions.

    Integrates ``|F1 - F2|`` over the merged sorted support, which is the
    optimum of the transportation linear program in one dimension.
    """
    d1, d2 = _as_distribution(d1), _as_distribution(d2)
    support = np.concatenate([d1.values, d2.values])
    support.sort(kind="mergesort")
    widths = np.diff(support)
    left = support[:-1]
    gap = np.abs(d1.cdf(left) - d2.cdf(left))
    return float(np.dot(gap, widths))


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    std: float
    weight: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValidationError(f"std must be positive, got {self.std}")
        if not 0 < self.weight <= 1:
            raise ValidationError(f"weight must lie in (0, 1], got {self.weight}")


def gaussian_barycenter(specs: Sequence[GaussianSpec]) -> GaussianSpec:
    """Closed-form W2 barycenter of weighted univariate Gaussians.

    The barycenter is Gaussian with mean ``sum w_k mu_k`` and standard
    deviation ``sum w_k sigma_k``.
    """
    specs = list(specs)
    if not specs:
        raise ValidationError("need at least one Gaussian")
    total = sum(s.weight for s in specs)
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"weights must sum to 1, got {total}")
    mean = sum(s.weight * s.mean for s in specs)
    std = sum(s.weight * s.std for s in specs)
    return GaussianSpec(mean=mean, std=std, weight=1.0)


def gaussian_mixture_variance(specs: Sequence[GaussianSpec]) -> float:
    """Variance of the mixture ``sum w_k N(mu_k, sigma_k**2)``."""
    mean = sum(s.weight * s.mean for s in specs)
    return sum(s.weight * (s.std**2 + s.mean**2) for s in specs) - mean**2
