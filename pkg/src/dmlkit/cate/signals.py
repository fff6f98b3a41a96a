"""Doubly robust effect signals and the three-way data split."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dml.estimators import DEFAULT_TRIM, irm_signals
from ..rng import stream


@dataclass
class DrSignal:
    """Per-observation unbiased signals of the individual effect.

    The mean of ``values`` is the doubly robust ATE estimate; regressing
    them on functions of X targets the corresponding CATE projection.
    """

    values: np.ndarray
    trim_count: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def ate(self) -> float:
        return float(np.mean(self.values))


def dr_signal(y, d, Z, learner_g, learner_mu, plan,
              trim: float = DEFAULT_TRIM) -> DrSignal:
    """Cross-fitted signals H (Y - g(D, Z)) + g(1, Z) - g(0, Z)."""
    values, trimmed, diag = irm_signals(y, d, Z, learner_g, learner_mu,
                                        plan, trim)
    return DrSignal(values=values, trim_count=trimmed, diagnostics=diag)


def three_way_split(n: int, seed: int,
                    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)):
    """Random train/score/test partition (default 60/20/20)."""
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive and sum to 1")
    perm = stream(seed, "three-way-split").permutation(n)
    n_train = int(round(fractions[0] * n))
    n_score = int(round(fractions[1] * n))
    return (np.sort(perm[:n_train]),
            np.sort(perm[n_train:n_train + n_score]),
            np.sort(perm[n_train + n_score:]))
