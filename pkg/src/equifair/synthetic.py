"""Synthetic scores with two correlated binary sensitive attributes.

Backs the CLI ``synth`` command and the test suite, standing in for real
tabular data with demographic columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class SyntheticData:
    scores: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray  # (N, 2) int array, columns follow ``attributes``
    attributes: tuple = ("a1", "a2")

    def split(self, n_calib: int):
        """Return ``(calib, test)`` halves as new :class:`SyntheticData`."""
        first = slice(0, n_calib)
        second = slice(n_calib, None)
        return tuple(
            SyntheticData(self.scores[s], self.labels[s], self.sensitive[s], self.attributes)
            for s in (first, second)
        )


def make_synthetic(n: int, seed=0, agreement: float = 0.6, shifts=(3.0, 0.5),
                   noise: float = 1.0, label_noise: float = 0.5) -> SyntheticData:
    """Draw ``n`` rows of group-shifted Gaussian scores.

    ``a1`` is a fair coin; ``a2`` equals ``a1`` with probability ``agreement``
    (0.5 makes them independent). Scores are
    ``shifts[0] * a1 + shifts[1] * a2 + N(0, noise**2)`` and labels add
    ``N(0, label_noise**2)`` to the score, so the score is the regression
    function of the label.
    """
    if n < 1:
        raise ValidationError("n must be positive")
    if not 0 <= agreement <= 1:
        raise ValidationError("agreement must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    a1 = rng.integers(0, 2, size=n)
    same = rng.random(n) < agreement
    a2 = np.where(same, a1, 1 - a1)
    scores = shifts[0] * a1 + shifts[1] * a2 + rng.normal(0.0, noise, size=n)
    labels = scores + rng.normal(0.0, label_noise, size=n)
    return SyntheticData(scores, labels, np.column_stack([a1, a2]))
