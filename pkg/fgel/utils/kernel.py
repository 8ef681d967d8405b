"""
Gaussian (RBF) kernels on the conditioning variable.

k(z, z') = exp(-gamma ||z - z'||^2) with gamma from the median heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist, squareform

from fgel.models.errors import DegenerateDataError

EIGEN_CUTOFF = 1e-12


def _as_matrix(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z[:, None] if z.ndim == 1 else z


def median_heuristic(z: np.ndarray) -> float:
    """gamma = 1 / (2 * median of the nonzero pairwise squared distances)."""
    z = _as_matrix(z)
    if z.shape[0] < 2:
        raise DegenerateDataError("median heuristic needs at least two rows")
    sq_dists = pdist(z, metric="sqeuclidean")
    sq_dists = sq_dists[sq_dists > 0]
    if sq_dists.size == 0:
        raise DegenerateDataError("degenerate instrument sample")
    return 1.0 / (2.0 * float(np.median(sq_dists)))


def gram_matrix(z: np.ndarray, gamma: float) -> np.ndarray:
    """Gaussian kernel matrix exp(-gamma * |z_i - z_j|^2).

    Entries are floored at the smallest positive double, so far-apart points
    give a tiny positive value instead of an underflowed zero.
    """
    z = _as_matrix(z)
    if not np.isfinite(z).all():
        raise ValueError("Gram matrix input must be finite")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    # squareform mirrors the condensed upper triangle, so the result is exactly symmetric
    gram = np.exp(-gamma * squareform(pdist(z, metric="sqeuclidean")))
    return np.maximum(gram, np.finfo(float).tiny)


@dataclass
class GramSet:
    """One Gram matrix per moment component, with cached square-root factors."""

    mats: list[np.ndarray]
    gamma: list[float]
    _factors: list | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if len(self.mats) != len(self.gamma) or not self.mats:
            raise ValueError(f"Need one bandwidth per Gram matrix, got {len(self.mats)} and {len(self.gamma)}")
        n = self.mats[0].shape[0]
        for mat in self.mats:
            if mat.shape != (n, n):
                raise ValueError(f"Gram matrices must all be {n}x{n}, got {mat.shape}")

    @classmethod
    def from_instruments(cls, z: np.ndarray, m: int, gamma: float | None = None) -> "GramSet":
        """Same bandwidth and matrix for all m components, computed from z."""
        gamma = median_heuristic(z) if gamma is None else gamma
        mat = gram_matrix(z, gamma)
        return cls([mat] * m, [gamma] * m)

    @property
    def m(self) -> int:
        return len(self.mats)

    @property
    def n(self) -> int:
        return self.mats[0].shape[0]

    def take(self, index) -> "GramSet":
        index = np.asarray(index)
        return GramSet([mat[np.ix_(index, index)] for mat in self.mats], list(self.gamma))

    def factors(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per component (U, sqrt(lambda)) with K = U diag(lambda) U^T.

        Eigenvalues below `EIGEN_CUTOFF` times the largest are treated as zero.
        """
        if self._factors is None:
            cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
            factors = []
            for mat in self.mats:
                key = id(mat)
                if key not in cache:
                    eigvals, eigvecs = linalg.eigh(mat)
                    keep = eigvals > EIGEN_CUTOFF * max(eigvals.max(), 0.0)
                    cache[key] = (eigvecs, np.where(keep, np.sqrt(np.clip(eigvals, 0.0, None)), 0.0))
                factors.append(cache[key])
            self._factors = factors
        return self._factors

    def whiten(self, alpha: np.ndarray) -> np.ndarray:
        """beta_r = sqrt(lambda_r) U_r^T alpha_r, so that ||beta||^2 = sum_r alpha_r^T K_r alpha_r."""
        alpha = np.atleast_2d(alpha)
        return np.stack([s * (u.T @ a) for (u, s), a in zip(self.factors(), alpha)])

    def unwhiten(self, beta: np.ndarray) -> np.ndarray:
        """Pseudo-inverse of `whiten`; dropped eigen-directions map to zero."""
        rows = []
        for (u, s), b in zip(self.factors(), np.atleast_2d(beta)):
            inv = np.zeros_like(s)
            inv[s > 0] = 1.0 / s[s > 0]
            rows.append(u @ (inv * b))
        return np.stack(rows)

    def values_from_whitened(self, beta: np.ndarray) -> np.ndarray:
        """h(z_i) per component from whitened coordinates, shape (n, m)."""
        return np.stack([u @ (s * b) for (u, s), b in zip(self.factors(), np.atleast_2d(beta))], axis=1)

    def values(self, alpha: np.ndarray) -> np.ndarray:
        """h_r(z_i) = (K_r alpha_r)_i, shape (n, m)."""
        alpha = np.atleast_2d(alpha)
        if alpha.shape != (self.m, self.n):
            raise ValueError(f"alpha must have shape ({self.m}, {self.n}), got {alpha.shape}")
        return np.stack([mat @ a for mat, a in zip(self.mats, alpha)], axis=1)


def rkhs_norm_sq(alpha: np.ndarray, grams: GramSet) -> float:
    """sum_r alpha_r^T K_r alpha_r."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    if alpha.shape != (grams.m, grams.n):
        raise ValueError(f"alpha must have shape ({grams.m}, {grams.n}), got {alpha.shape}")
    return float(sum(a @ mat @ a for mat, a in zip(grams.mats, alpha)))
