"""Banded symmetric linear algebra and Gaussian precision sampling.

Storage convention: a symmetric matrix K with half-bandwidth w is held as a
(w+1, dim) array with bands[d, j] = K[j+d, j] — main diagonal in row 0, d-th
sub-diagonal in row d, entries bands[d, dim-d:] ignored.  The upper triangle
is never stored.  This is LAPACK lower-band storage, so factorizations and
triangular solves go straight to scipy/LAPACK.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import DimensionMismatch, NotPositiveDefinite

# A Cholesky pivot below this fraction of the largest diagonal entry is
# treated as indefiniteness rather than round-off.
PIVOT_RTOL = 1e-12


@dataclass
class BandSymmetricMatrix:
    dim: int
    bandwidth: int
    bands: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch(f"dim must be >= 1, got {self.dim}")
        if not 0 <= self.bandwidth < self.dim:
            raise DimensionMismatch(
                f"bandwidth {self.bandwidth} invalid for dim {self.dim}")
        self.bands = np.ascontiguousarray(self.bands, dtype=np.float64)
        expected = (self.bandwidth + 1, self.dim)
        if self.bands.shape != expected:
            raise DimensionMismatch(
                f"bands shape {self.bands.shape}, expected {expected}")

    @classmethod
    def from_dense(cls, a, bandwidth):
        a = np.asarray(a, dtype=np.float64)
        n = a.shape[0]
        bands = np.zeros((bandwidth + 1, n))
        for d in range(bandwidth + 1):
            bands[d, :n - d] = np.diagonal(a, -d)
        return cls(n, bandwidth, bands)

    def to_dense(self):
        a = np.zeros((self.dim, self.dim))
        for d in range(self.bandwidth + 1):
            idx = np.arange(self.dim - d)
            a[idx + d, idx] = self.bands[d, :self.dim - d]
            a[idx, idx + d] = self.bands[d, :self.dim - d]
        return a


@dataclass
class DifferenceOperator:
    """H_k: (Tk)x(Tk) lower bidiagonal with I_k diagonal blocks and -I_k on
    the first sub-block-diagonal; unit determinant."""
    block_dim: int
    horizon: int

    def __post_init__(self):
        if self.block_dim < 1:
            raise DimensionMismatch("block_dim must be >= 1")
        if self.horizon < 1:
            raise DimensionMismatch("horizon must be >= 1")

    @property
    def dim(self):
        return self.block_dim * self.horizon

    def dense(self):
        h = np.eye(self.dim)
        k = self.block_dim
        idx = np.arange(self.dim - k)
        h[idx + k, idx] = -1.0
        return h


def gram_of_difference(op: DifferenceOperator) -> BandSymmetricMatrix:
    """H'H in band form: 2I_k diagonal blocks (I_k in the final block) and
    -I_k one block off the diagonal; bandwidth k."""
    k, horizon = op.block_dim, op.horizon
    dim = op.dim
    if horizon == 1:
        return BandSymmetricMatrix(dim, 0, np.ones((1, dim)))
    bands = np.zeros((k + 1, dim))
    bands[0, :] = 2.0
    bands[0, (horizon - 1) * k:] = 1.0
    bands[k, :(horizon - 1) * k] = -1.0
    return BandSymmetricMatrix(dim, k, bands)


@dataclass
class BandCholesky:
    """Lower band factor L with L L' = K, in the same storage layout."""
    dim: int
    bandwidth: int
    bands: np.ndarray

    def log_det(self):
        """log|K| = 2 sum log L_jj."""
        return 2.0 * float(np.log(self.bands[0]).sum())

    def solve(self, b):
        """K^{-1} b via forward/back substitution."""
        b = np.ascontiguousarray(b, dtype=np.float64)
        if b.shape[0] != self.dim:
            raise DimensionMismatch(f"rhs length {b.shape[0]} != dim {self.dim}")
        return sla.cho_solve_banded((self.bands, True), b, check_finite=False)

    def solve_lower(self, b):
        """L x = b."""
        return self._tbtrs(b, trans="N")

    def solve_lower_t(self, b):
        """L' x = b."""
        return self._tbtrs(b, trans="T")

    def _tbtrs(self, b, trans):
        b = np.ascontiguousarray(b, dtype=np.float64)
        if b.shape[0] != self.dim:
            raise DimensionMismatch(f"rhs length {b.shape[0]} != dim {self.dim}")
        x, info = lapack.dtbtrs(self.bands, b, uplo="L", trans=trans)
        if info != 0:
            raise NotPositiveDefinite(f"triangular band solve failed (info={info})")
        return x


def band_cholesky(K: BandSymmetricMatrix) -> BandCholesky:
    try:
        cb = sla.cholesky_banded(K.bands, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    # scipy accepts any positive pivot; enforce the relative floor ourselves.
    if np.min(cb[0] ** 2) < PIVOT_RTOL * np.max(K.bands[0]):
        raise NotPositiveDefinite("Cholesky pivot below relative tolerance")
    return BandCholesky(K.dim, K.bandwidth, cb)


def solve_band(K: BandSymmetricMatrix, b) -> np.ndarray:
    return band_cholesky(K).solve(b)


def precision_sample(K: BandSymmetricMatrix, mean, rng) -> np.ndarray:
    """One draw from N(mean, K^{-1}): mean + solve(L', z), z standard normal."""
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape != (K.dim,):
        raise DimensionMismatch(f"mean shape {mean.shape} != ({K.dim},)")
    chol = band_cholesky(K)
    return mean + chol.solve_lower_t(rng.standard_normal(K.dim))
