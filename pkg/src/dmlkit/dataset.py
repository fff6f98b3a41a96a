"""Named-column numeric table, the universal input type.

A Dataset is a thin validated wrapper over a dict of equal-length float
vectors plus optional nonnegative sample weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DmlkitError


@dataclass
class Dataset:
    columns: dict[str, np.ndarray]
    weights: np.ndarray | None = None
    n: int = field(init=False)

    def __post_init__(self) -> None:
        if not self.columns:
            raise DmlkitError("Dataset requires at least one column")
        cols = {}
        n = None
        for name, vec in self.columns.items():
            arr = np.asarray(vec, dtype=float).ravel()
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise DimensionMismatch(
                    f"column {name!r} has length {arr.size}, expected {n}"
                )
            if not np.all(np.isfinite(arr)):
                raise DmlkitError(f"column {name!r} contains NaN/Inf")
            cols[name] = arr
        self.columns = cols
        self.n = int(n)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.size != self.n:
                raise DimensionMismatch("weights length does not match columns")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise DmlkitError("weights must be finite and nonnegative")
            if not np.any(w > 0):
                raise DmlkitError("weights must not be all zero")
            self.weights = w

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def matrix(self, names: list[str]) -> np.ndarray:
        """Stack the named columns into an (n, len(names)) design matrix."""
        if not names:
            return np.empty((self.n, 0))
        return np.column_stack([self.columns[name] for name in names])
