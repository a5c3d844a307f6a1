"""Mexican-hat continuous wavelet expansion of per-patient gene profiles.

Each patient column x (length m) becomes a T x m coefficient matrix W,
flattened column-major into a length T*m vector. Stacking these vectors
side by side gives the expanded matrix H (T*m x n).

Two layouts are supported:

``multi`` (default)
    Row j of W is the transform at integer scale j (1..T), evaluated at
    every gene position 1..m.
``fixed``
    One scale for every coefficient; column w of W holds positions
    w, w+1, ..., w+T-1, i.e. a length-T window starting at gene w.

Positions and sample indices are 1-based; the signal is zero outside 1..m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SCALE_MODES = ("multi", "fixed")


@dataclass(frozen=True)
class MexicanHatParams:
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def mexican_hat(k, params: MexicanHatParams = MexicanHatParams()):
    """Unit-energy Mexican hat of width sigma; works on scalars and arrays."""
    s = params.sigma
    k = np.asarray(k, dtype=float)
    norm = 2.0 / (math.sqrt(3.0 * s) * math.pi ** 0.25)
    u = (k / s) ** 2
    out = norm * (1.0 - u) * np.exp(-0.5 * u)
    return float(out) if out.ndim == 0 else out


def cwt_single(x, scale: float, position: float, params: MexicanHatParams = MexicanHatParams()) -> float:
    """One coefficient: sum_t x[t] * psi((t - position) / scale) / sqrt(scale)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("x must be a vector of length >= 2")
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    t = np.arange(1, x.size + 1, dtype=float)
    return float(np.dot(x, mexican_hat((t - position) / scale, params)) / math.sqrt(scale))


def _kernel(m: int, scale: float, positions: np.ndarray, params: MexicanHatParams) -> np.ndarray:
    """K[p, t] with K @ x giving the coefficients at ``positions``."""
    t = np.arange(1, m + 1, dtype=float)
    return mexican_hat((t[None, :] - positions[:, None]) / scale, params) / math.sqrt(scale)


def _check(T, m, scale_mode):
    if int(T) != T or T < 1:
        raise ValueError(f"window size T must be a positive integer, got {T}")
    if m < 2:
        raise ValueError(f"need at least 2 genes, got {m}")
    if scale_mode not in SCALE_MODES:
        raise ValueError(f"scale_mode must be one of {SCALE_MODES}, got {scale_mode!r}")


def _coefficients(X: np.ndarray, T: int, params, scale_mode, fixed_scale) -> np.ndarray:
    """Return W with shape (T, m, n)."""
    m = X.shape[0]
    pos = np.arange(1, m + 1, dtype=float)
    if scale_mode == "multi":
        return np.stack([_kernel(m, float(j), pos, params) @ X for j in range(1, T + 1)])
    if not fixed_scale > 0:
        raise ValueError(f"fixed_scale must be positive, got {fixed_scale}")
    return np.stack([_kernel(m, fixed_scale, pos + j, params) @ X for j in range(T)])


def expand_patient(
    x,
    T: int,
    params: MexicanHatParams = MexicanHatParams(),
    scale_mode: str = "multi",
    fixed_scale: float = 1.0,
) -> np.ndarray:
    """T x m coefficient matrix for one gene profile."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("x must be a vector")
    _check(T, x.size, scale_mode)
    return _coefficients(x[:, None], int(T), params, scale_mode, fixed_scale)[:, :, 0]


@dataclass(frozen=True)
class WaveletStack:
    coefficients: np.ndarray
    window_size: int
    genes_per_patient: int
    scale_mode: str = "multi"
    layout: str = "column-major T x m per patient: row index = gene * T + window index"

    def __post_init__(self):
        c = self.coefficients
        if c.shape[0] != self.window_size * self.genes_per_patient:
            raise ValueError("coefficient rows must equal window_size * genes_per_patient")
        if not np.all(np.isfinite(c)):
            raise ValueError("wavelet coefficients must be finite")

    def patient_matrix(self, i: int) -> np.ndarray:
        """Undo the vectorization of column ``i``."""
        return self.coefficients[:, i].reshape(self.genes_per_patient, self.window_size).T


def expand_cohort(
    X,
    T: int,
    params: MexicanHatParams = MexicanHatParams(),
    scale_mode: str = "multi",
    fixed_scale: float = 1.0,
) -> WaveletStack:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be an m x n matrix")
    m, n = X.shape
    _check(T, m, scale_mode)
    W = _coefficients(X, int(T), params, scale_mode, fixed_scale)  # (T, m, n)
    H = np.ascontiguousarray(W.transpose(1, 0, 2).reshape(m * int(T), n))
    return WaveletStack(H, int(T), m, scale_mode)
