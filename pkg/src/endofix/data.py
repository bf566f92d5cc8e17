"""Column-labelled numeric datasets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """An immutable table of float columns with a provenance note."""

    columns: dict[str, np.ndarray]
    provenance: str = ""

    def __post_init__(self):
        cols = {}
        n = None
        for name, values in self.columns.items():
            v = np.asarray(values, dtype=np.float64).ravel()
            if n is None:
                n = v.size
            elif v.size != n:
                raise DataError(f"column {name!r} has length {v.size}, expected {n}")
            cols[str(name)] = v
        if not cols:
            raise DataError("dataset has no columns")
        object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return next(iter(self.columns.values())).size

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"no column named {name!r}; have "
                            f"{sorted(self.columns)}") from None

    def matrix(self, names) -> np.ndarray:
        return np.column_stack([self.column(nm) for nm in names])

    def take(self, indices) -> "Dataset":
        """Row-resampled copy (used by the pairs bootstrap)."""
        idx = np.asarray(indices)
        cols = {nm: v[idx] for nm, v in self.columns.items()}
        return Dataset(cols, provenance=f"{self.provenance}|resample")
