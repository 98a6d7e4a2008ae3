"""PCA via thin SVD of the centered data matrix.

Eigenvalues are those of the 1/n-normalized covariance (singular values
squared over n), reported for the full spectrum; components keep only the
requested columns. Sign convention: the largest-magnitude entry of each
component is positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PcaModel:
    mean: np.ndarray          # (d,)
    components: np.ndarray    # (d, d_out), orthonormal columns
    eigenvalues: np.ndarray   # full spectrum, descending

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, np.float64) - self.mean) @ self.components

    def inverse_transform(self, y: np.ndarray) -> np.ndarray:
        return y @ self.components.T + self.mean

    def explained_variance_ratio(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if total == 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total


def pca_fit_transform(x: np.ndarray, d_out: int) -> tuple[PcaModel, np.ndarray]:
    """Center, factor, and project onto the top d_out components."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected an n x d matrix, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows, got {n}")
    if not 1 <= d_out <= min(n - 1, d):
        raise ValueError(f"d_out must be in [1, min(n-1, d)] = [1, {min(n - 1, d)}], got {d_out}")

    mean = x.mean(axis=0)
    centered = x - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (singular * singular) / n

    components = vt[:d_out].T.copy()
    for j in range(d_out):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0:
            components[:, j] = -components[:, j]

    model = PcaModel(mean=mean, components=components, eigenvalues=eigenvalues)
    return model, centered @ components
