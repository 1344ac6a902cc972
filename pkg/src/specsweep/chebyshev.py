"""Chebyshev coefficient pipelines and the three-term-recurrence sweep engine.

The Gaussian filter g_sigma(t - x) is expanded on the uniform theta grid
theta_j = j*pi/n_theta via a length-2*n_theta DFT; the squared pipeline
samples a partial sum on the same grid, squares pointwise, and reuses the DFT
path, which makes the degree-M expansion of the squared degree-M/2 polynomial
exact up to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DimensionError
from .operators import _csr_parts, run_row_partitioned


def default_n_theta(degree):
    """Power-of-two integration resolution, at least 2*(degree+1)."""
    n = 2 * (degree + 1)
    return 1 << (n - 1).bit_length()


def gaussian_kernel(s, sigma, dim=1):
    """Unit-mass Gaussian divided by dim (the per-eigenvalue DOS weight)."""
    s = np.asarray(s, dtype=np.float64)
    return np.exp(-(s**2) / (2.0 * sigma**2)) / (dim * np.sqrt(2.0 * np.pi * sigma**2))


def _coeff_rows_from_samples(samples, degree, n_theta):
    """DFT step shared by both pipelines: samples on theta_j -> coefficients.

    samples has shape (..., 2*n_theta); returns (..., degree+1).
    """
    spec = np.fft.rfft(samples, axis=-1)[..., : degree + 1]
    coeffs = spec.real / n_theta
    coeffs[..., 0] *= 0.5
    return coeffs


def dgc_coeffs(t, sigma, degree, n_theta=None, dim=1):
    """Chebyshev coefficients of the Gaussian filter centered at t.

    Returns mu[0..degree] with Sum_l mu_l T_l(x) approximating
    gaussian_kernel(t - x, sigma, dim) on (-1, 1).
    """
    return coeff_rows(np.array([t], dtype=np.float64), sigma, degree, n_theta, dim)[0]


def coeff_rows(grid, sigma, degree, n_theta=None, dim=1):
    """dgc_coeffs for every grid point at once; rows index the grid."""
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    if n_theta is None:
        n_theta = default_n_theta(degree)
    if n_theta <= degree:
        raise ConfigError(f"n_theta must exceed the degree ({n_theta} <= {degree})")
    grid = np.asarray(grid, dtype=np.float64)
    theta = np.arange(2 * n_theta) * (np.pi / n_theta)
    x = np.cos(theta)
    samples = gaussian_kernel(grid[:, None] - x[None, :], sigma, dim)
    return _coeff_rows_from_samples(samples, degree, n_theta)


def squared_coeffs(mu, n_theta=None):
    """Coefficients nu[0..2d] with Sum nu_l T_l = (Sum_k mu_k T_k)^2.

    mu holds the degree-d coefficients of the factor polynomial; the identity
    is exact (per roundoff) because the product has degree 2d < n_theta.
    Accepts a single vector or a stack of rows.
    """
    mu = np.asarray(mu, dtype=np.float64)
    single = mu.ndim == 1
    rows = mu[None, :] if single else mu
    d = rows.shape[-1] - 1
    degree = 2 * d
    if n_theta is None:
        n_theta = default_n_theta(degree)
    if n_theta <= degree:
        raise ConfigError(f"n_theta must exceed the product degree ({n_theta} <= {degree})")
    # Evaluate each partial sum on the theta grid through an inverse DFT:
    # samples_j = Sum_k mu_k cos(k*theta_j).
    spec = np.zeros((rows.shape[0], n_theta + 1), dtype=np.complex128)
    spec[:, 0] = rows[:, 0] * (2 * n_theta)
    spec[:, 1 : d + 1] = rows[:, 1:] * n_theta
    samples = np.fft.irfft(spec, 2 * n_theta, axis=-1)
    nu = _coeff_rows_from_samples(samples**2, degree, n_theta)
    return nu[0] if single else nu


def eval_cheb_series(coeffs, x):
    """Clenshaw evaluation of Sum_l coeffs[l] T_l(x) for |x| <= 1."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0):
        raise ConfigError("evaluation points must lie in [-1, 1]")
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for c in coeffs[:0:-1]:
        b1, b2 = c + 2.0 * x * b1 - b2, b1
    result = coeffs[0] + x * b1 - b2
    return result if result.ndim else float(result)


@dataclass
class CoeffTable:
    """Per-grid-point expansion coefficients: the sweep plan.

    mu rows expand the Gaussian filter at each grid point; when nu is present
    (squared pipeline) mu was computed at degree//2 and zero-padded, and nu
    expands the squared filter at the full degree.
    """

    grid: np.ndarray
    degree: int
    mu: np.ndarray
    sigma: float
    n_theta: int
    nu: np.ndarray | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.n_theta <= self.degree:
            raise ConfigError("n_theta must exceed the degree")
        if self.mu.shape != (len(self.grid), self.degree + 1):
            raise ConfigError("mu shape must be (n_grid, degree+1)")
        if self.nu is not None:
            if self.degree % 2:
                raise ConfigError("squared tables require an even degree")
            if self.nu.shape != self.mu.shape:
                raise ConfigError("nu shape must match mu")
            if np.any(self.mu[:, self.degree // 2 + 1 :]):
                raise ConfigError("mu must be zero above degree//2 when nu is present")


def build_coeff_table(grid, sigma, degree, n_theta=None, dim=1, squared=False):
    """Compute (and cache in a table) the coefficients for a DOS run.

    With squared=True the filter is expanded at degree//2 (zero-padded) and
    nu holds the exact expansion of its square at the full degree.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if not squared:
        if n_theta is None:
            n_theta = default_n_theta(degree)
        mu = coeff_rows(grid, sigma, degree, n_theta, dim)
        return CoeffTable(grid, degree, mu, sigma, n_theta)
    if degree % 2:
        raise ConfigError("squared pipeline requires an even degree")
    if n_theta is None:
        n_theta = default_n_theta(degree)
    half = coeff_rows(grid, sigma, degree // 2, n_theta, dim)
    nu = squared_coeffs(half, n_theta)
    mu = np.zeros((len(grid), degree + 1))
    mu[:, : degree // 2 + 1] = half
    return CoeffTable(grid, degree, mu, sigma, n_theta, nu=nu)


def cheb_ring_iter(op, block, degree, slots, threads=1):
    """Generator driving the three-term recurrence through caller-owned slots.

    slots is a sequence of >= 3 equal-shape (N, k) arrays; degree l lands in
    slots[l % len(slots)], so consumers may batch whole chunks without copies.
    """
    indptr, indices, data, scale, shift = _csr_parts(op)
    n = len(indptr) - 1
    C = len(slots)
    if C < 3:
        raise ConfigError("ring needs at least 3 slots")
    if block.shape[0] != n:
        raise DimensionError(f"block rows {block.shape[0]} do not match operator dim {n}")

    def step(c1, Vc, Vm, Vp):
        if Vm is None:
            run_row_partitioned(
                _kernels.csr_affine_matvec, n, threads,
                indptr, indices, data, c1 * scale, -c1 * scale * shift, Vc, Vp,
            )
        else:
            run_row_partitioned(
                _kernels.csr_cheb_step, n, threads,
                indptr, indices, data, c1 * scale, -c1 * scale * shift, Vc, Vm, Vp,
            )

    np.copyto(slots[0], block)
    yield 0, slots[0]
    if degree == 0:
        return
    step(1.0, slots[0], None, slots[1])
    yield 1, slots[1]
    for l in range(2, degree + 1):
        step(2.0, slots[(l - 1) % C], slots[(l - 2) % C], slots[l % C])
        yield l, slots[l % C]


def cheb_sweep(op, block, degree, visitor, threads=1):
    """Visit (l, T_l(op) @ block) for l = 0..degree in increasing order.

    The visited array is a rotating internal buffer: visitors must copy
    anything they keep and must not mutate it.
    """
    block = np.ascontiguousarray(block, dtype=np.float64)
    if block.ndim != 2:
        raise DimensionError("block must be 2-dimensional")
    slots = [np.empty_like(block) for _ in range(3)]
    for l, view in cheb_ring_iter(op, block, degree, slots, threads=threads):
        visitor(l, view)
