"""Row centering and projection onto the leading left singular vectors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CompressedFeatures:
    """Projected features (k x n) plus everything needed to project new columns."""

    features: np.ndarray
    basis: np.ndarray
    singular_values: np.ndarray
    row_means: np.ndarray
    right_vectors: np.ndarray  # n x k, sign-matched to ``basis``

    @property
    def k(self) -> int:
        return self.basis.shape[1]


def center_rows(H):
    H = np.asarray(H, dtype=float)
    if H.size == 0:
        raise ValueError("cannot center an empty matrix")
    means = H.mean(axis=1)
    return H - means[:, None], means


def _fix_signs(U, Vt):
    """Flip each singular pair so the largest-|.| entry of u is positive (first index wins ties)."""
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def fit_compressor(H, k: int, n_genes: int | None = None) -> CompressedFeatures:
    """Center H by row and keep its first ``k`` left singular directions.

    ``n_genes`` only feeds a warning when ``k >= n_genes``.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2:
        raise ValueError("H must be a matrix")
    if int(k) != k or not 1 <= k <= min(H.shape):
        raise ValueError(f"k must be an integer in [1, {min(H.shape)}], got {k}")
    k = int(k)
    if n_genes is not None and k >= n_genes:
        warnings.warn(f"k={k} is not below the gene count {n_genes}", stacklevel=2)
    centered, means = center_rows(H)
    U, s, Vt = np.linalg.svd(centered, full_matrices=False)
    U, Vt = _fix_signs(U[:, :k], Vt[:k])
    basis = np.ascontiguousarray(U)
    features = basis.T @ centered
    return CompressedFeatures(features, basis, s[:k].copy(), means, Vt.T.copy())


def project(cf: CompressedFeatures, h_new) -> np.ndarray:
    """Project one column (or a Tm x q block) with the training means and basis."""
    h_new = np.asarray(h_new, dtype=float)
    if h_new.shape[0] != cf.basis.shape[0]:
        raise ValueError(f"expected {cf.basis.shape[0]} rows, got {h_new.shape[0]}")
    if h_new.ndim == 1:
        return cf.basis.T @ (h_new - cf.row_means)
    return cf.basis.T @ (h_new - cf.row_means[:, None])


def reconstruct(cf: CompressedFeatures) -> np.ndarray:
    """Rank-k approximation of the centered training matrix."""
    return cf.basis @ cf.features


def save_compressor(cf: CompressedFeatures, path) -> None:
    np.savez(
        path,
        basis=cf.basis,
        singular_values=cf.singular_values,
        row_means=cf.row_means,
        features=cf.features,
        right_vectors=cf.right_vectors,
    )


def load_compressor(path) -> CompressedFeatures:
    with np.load(path) as z:
        return CompressedFeatures(
            z["features"], z["basis"], z["singular_values"], z["row_means"], z["right_vectors"]
        )
