"""Aligned (X, Y, Z) sample matrices used throughout the test pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    """n aligned observations: X (n x d_X), Y (n x d_Y), Z (n x d_Z).

    All matrices are float64, 2-D, finite, with equal row counts and n >= 4.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        self.x = _as_matrix(self.x, "X")
        self.y = _as_matrix(self.y, "Y")
        self.z = _as_matrix(self.z, "Z")
        if not (self.x.shape[0] == self.y.shape[0] == self.z.shape[0]):
            raise ValueError(
                f"row counts differ: X has {self.x.shape[0]}, Y has {self.y.shape[0]}, Z has {self.z.shape[0]}"
            )
        if self.x.shape[0] < 4:
            raise ValueError(f"need at least 4 observations, got {self.x.shape[0]}")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def permuted(self, order: np.ndarray) -> "Dataset":
        return Dataset(x=self.x[order], y=self.y[order], z=self.z[order])


def _as_matrix(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got {out.ndim} dimensions")
    if out.shape[1] == 0:
        raise ValueError(f"{name} has zero columns")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out
