"""Small dense symmetric eigensolves and the filtered generalized eigensolver.

These operate on the moment matrices (order ~ number of probe vectors), so
everything here is plain dense algebra; inputs are symmetrized on entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

DEFAULT_TRUNCATION = 1e-7


def symmetrize(H):
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ConfigError("expected a square matrix")
    return 0.5 * (H + H.T)


def sym_eig(H):
    """Eigendecomposition H = U diag(S) U^T with S ascending."""
    H = symmetrize(H)
    s, U = np.linalg.eigh(H)
    return U, s


def filter_cap(sigma, dim):
    """Largest value the Gaussian filter can attain: its peak at distance 0."""
    return 1.0 / (dim * np.sqrt(2.0 * np.pi * sigma**2))


@dataclass
class GenEigResult:
    """Retained generalized eigenpairs of K_Z c = K_W c xi.

    dropped_small counts eigenvalues of K_W removed by the relative
    truncation; dropped_range counts generalized eigenvalues outside the
    attainable filter range [0, cap].
    """

    xi: np.ndarray
    c: np.ndarray
    kept: int
    dropped_small: int
    dropped_range: int

    @property
    def trace(self):
        return float(self.xi.sum())


def gen_eig_filtered(K_W, K_Z, sigma, dim, tau=DEFAULT_TRUNCATION, range_slack=1.0):
    """Filtered generalized eigensolve for the spectrum sweeping estimators.

    Eigenvalues of K_W below tau times its largest one are truncated (this
    discards negatives automatically), the reduced standard problem is solved,
    and only generalized eigenvalues inside [0, cap] survive, cap being the
    Gaussian peak value (times range_slack).  An empty result is a valid
    zero-local-density outcome, not an error.
    """
    if not 0.0 < tau < 1.0:
        raise ConfigError("tau must lie in (0, 1)")
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    K_W = symmetrize(K_W)
    K_Z = symmetrize(K_Z)
    if K_W.shape != K_Z.shape:
        raise ConfigError("K_W and K_Z must have the same order")
    p = K_W.shape[0]
    s, U = np.linalg.eigh(K_W)
    s_max = s[-1]
    if s_max <= 0.0:
        return GenEigResult(np.empty(0), np.empty((p, 0)), 0, p, 0)
    keep = s >= tau * s_max
    dropped_small = int(p - keep.sum())
    T = U[:, keep] / np.sqrt(s[keep])
    B = T.T @ K_Z @ T
    xi_all, X = np.linalg.eigh(0.5 * (B + B.T))
    cap = range_slack * filter_cap(sigma, dim)
    in_range = (xi_all >= 0.0) & (xi_all <= cap)
    dropped_range = int((~in_range).sum())
    C = T @ X[:, in_range]
    return GenEigResult(xi_all[in_range], C, int(in_range.sum()), dropped_small, dropped_range)


def pinv_trace(K_W, K_Z, tau=DEFAULT_TRUNCATION):
    """Trace of pinv(K_W) @ K_Z with the relative-threshold pseudo-inverse.

    Negative eigenvalues of K_W and positive ones below tau times the largest
    are discarded before inversion.
    """
    if not 0.0 < tau < 1.0:
        raise ConfigError("tau must lie in (0, 1)")
    K_W = symmetrize(K_W)
    K_Z = symmetrize(K_Z)
    s, U = np.linalg.eigh(K_W)
    s_max = s[-1] if len(s) else 0.0
    if s_max <= 0.0:
        return 0.0
    keep = s >= tau * s_max
    T = U[:, keep]
    quad = np.einsum("ij,ij->j", T, K_Z @ T)
    return float(np.sum(quad / s[keep]))
