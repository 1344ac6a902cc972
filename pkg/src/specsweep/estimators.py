"""DOS estimators (DGC, SS-DGC, RESS-DGC), stochastic and low-rank trace
estimation, the exact-DOS oracle, and the error metric.

DGC is plain Hutchinson trace estimation of the Chebyshev-expanded Gaussian
filter.  SS-DGC builds a filtered low-rank decomposition per grid point from
one shared probe block (accurate, but stores a dense accumulator per point).
RESS-DGC reaches the same generalized-eigenvalue trace through small moment
matrices only, using the exact squared expansion, plus an optional Hutchinson
correction on the low-rank residual.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import blas as _blas

from . import rng
from .chebyshev import build_coeff_table, cheb_ring_iter, cheb_sweep, gaussian_kernel
from .densekernels import gen_eig_filtered, symmetrize
from .errors import ConfigError, DimensionError, MemoryGuardError
from .operators import (
    ScaledOperator,
    SparseSymMatrix,
    matvec_block,
    operator_dim,
)

METHODS = ("dgc", "ss", "ress")

DEFAULT_TAU = 1e-7
DEFAULT_SS_MEM_CAP = 8 << 30  # refuse loudly rather than thrash

# Bounded sweep workspace: the degree-chunk ring stays below these sizes, so
# chunking cannot change an estimator's asymptotic memory footprint.
_SS_RING_CAP_BYTES = 256 << 20
_RESS_RING_CAP_BYTES = 32 << 20


@dataclass(frozen=True)
class ProbeBlock:
    """Seeded dense random block; the same (seed, kind, shape, stream)
    always regenerates bit-identical values."""

    n_rows: int
    n_cols: int
    kind: str = "gaussian"
    seed: int = 0
    stream: int = 0
    values: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in rng.PROBE_KINDS:
            raise ConfigError(f"unknown probe kind {self.kind!r}")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ConfigError("probe block must have positive shape")
        if self.values is None:
            vals = rng.random_block(self.n_rows, self.n_cols, self.kind, self.seed, self.stream)
            object.__setattr__(self, "values", vals)


def probe_block(n_rows, n_cols, kind="gaussian", seed=0, stream=0):
    return ProbeBlock(n_rows, n_cols, kind, seed, stream).values


@dataclass
class DosRequest:
    """Parameters of one DOS estimation run (grid in scaled units)."""

    grid: np.ndarray
    sigma: float
    degree: int
    n_probe: int
    n_probe_hybrid: int = 0
    seed: int = 0
    method: str = "dgc"
    tau: float = DEFAULT_TAU
    probe_kind: str = "gaussian"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 1 or len(self.grid) == 0:
            raise ConfigError("grid must be a non-empty 1-D array")
        if np.any(np.abs(self.grid) >= 1.0):
            raise ConfigError("grid points must lie strictly inside (-1, 1)")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")
        if self.n_probe < 1:
            raise ConfigError("n_probe must be >= 1")
        if self.n_probe_hybrid < 0:
            raise ConfigError("n_probe_hybrid must be >= 0")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.method == "ress" and self.degree % 2:
            raise ConfigError("ress requires an even degree")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if self.probe_kind not in rng.PROBE_KINDS:
            raise ConfigError(f"probe_kind must be one of {rng.PROBE_KINDS}")


@dataclass
class DosResult:
    """Estimated DOS on a grid plus per-point diagnostics and provenance.

    kept / dropped_small / dropped_range mirror the filtered generalized
    eigensolve; correction is the signed hybrid term; consistency is the
    absolute residual of trace(C* K_Z C) == trace(Xi) on the retained
    subspace (zero where no solve happened).
    """

    grid: np.ndarray
    phi: np.ndarray
    kept: np.ndarray
    dropped_small: np.ndarray
    dropped_range: np.ndarray
    correction: np.ndarray
    consistency: np.ndarray
    provenance: dict

    def __post_init__(self):
        n = len(self.grid)
        for name in ("phi", "kept", "dropped_small", "dropped_range", "correction", "consistency"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"{name} must have one entry per grid point")
        if not np.all(np.isfinite(self.phi)):
            raise ConfigError("phi must be finite at every grid point")


@dataclass
class MomentSet:
    """Per-grid-point small accumulated matrices from the moment sweeps."""

    k_w: np.ndarray            # (n_grid, p, p)
    k_z: np.ndarray            # (n_grid, p, p)
    k_c: np.ndarray | None     # (n_grid, q, p)
    k_wt: np.ndarray | None    # (n_grid, q, q)


def apply_operator(op, V, threads=1):
    """A @ V for any supported operator representation."""
    if isinstance(op, (SparseSymMatrix, ScaledOperator)):
        return matvec_block(op, V, threads=threads)
    if isinstance(op, np.ndarray):
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise DimensionError("dense operator must be square")
        return op @ V
    if callable(op):
        return op(V)
    raise TypeError(f"unsupported operator type {type(op).__name__}")


def hutchinson_trace(op, n_probe, kind="gaussian", seed=0, dim=None, threads=1):
    """Stochastic trace estimate: mean of w*(A w) over a probe block.

    Returns (estimate, sample standard deviation of the per-probe values).
    """
    if n_probe < 1:
        raise ConfigError("n_probe must be >= 1")
    n = dim if dim is not None else operator_dim(op)
    W = probe_block(n, n_probe, kind, seed)
    Y = apply_operator(op, W, threads=threads)
    samples = np.einsum("ik,ik->k", W, Y)
    estimate = float(samples.mean())
    stddev = float(samples.std(ddof=1)) if n_probe > 1 else 0.0
    return estimate, stddev


def _zero_diag(n):
    z = np.zeros(n, dtype=np.int64)
    return z, z.copy(), z.copy(), np.zeros(n), np.zeros(n)


def _provenance(req, dim, wall, extra=None):
    prov = {
        "method": req.method,
        "seed": int(req.seed),
        "degree": int(req.degree),
        "sigma": float(req.sigma),
        "n_probe": int(req.n_probe),
        "n_probe_hybrid": int(req.n_probe_hybrid),
        "tau": float(req.tau),
        "probe_kind": req.probe_kind,
        "dim": int(dim),
        "n_grid": len(req.grid),
        "wall_time_s": wall,
    }
    if extra:
        prov.update(extra)
    return prov


def dgc_dos(A, req, threads=1):
    """Hutchinson-traced Chebyshev filter: one sweep, moments shared by all
    grid points."""
    if req.method != "dgc":
        raise ConfigError(f"request method is {req.method!r}, expected 'dgc'")
    t0 = time.perf_counter()
    n = operator_dim(A)
    table = build_coeff_table(req.grid, req.sigma, req.degree, dim=n)
    W = probe_block(n, req.n_probe, req.probe_kind, req.seed)
    w_flat = W.ravel()
    zeta = np.zeros(req.degree + 1)

    def visitor(l, V):
        zeta[l] = np.dot(w_flat, V.ravel())

    cheb_sweep(A, W, req.degree, visitor, threads=threads)
    zeta /= req.n_probe
    phi = table.mu @ zeta
    kept, ds, dr, corr, cons = _zero_diag(len(req.grid))
    wall = time.perf_counter() - t0
    return DosResult(req.grid, phi, kept, ds, dr, corr, cons, _provenance(req, n, wall))


def ss_memory_estimate(dim, req):
    """Bytes the spectrum-sweeping accumulators will need (one dense
    dim x n_probe block per grid point)."""
    return len(req.grid) * dim * req.n_probe * 8


def _accum_gemm(dest2d, coef_rows, buf2d, count, col0):
    """dest2d += coef_rows[:, col0:col0+count] @ buf2d[:count], accumulated
    in place by BLAS (beta=1) on the transposed F-contiguous views."""
    coefs = np.ascontiguousarray(coef_rows[:, col0 : col0 + count])
    out = _blas.dgemm(1.0, buf2d[:count].T, coefs.T, beta=1.0, c=dest2d.T, overwrite_c=1)
    assert np.may_share_memory(out, dest2d)


def _ring_size(cap_bytes, requested, slot_bytes, degree):
    c = int(min(requested, max(3, cap_bytes // max(slot_bytes, 1))))
    return max(3, min(c, degree + 1))


def ss_dgc_dos(A, req, threads=1, mem_cap_bytes=DEFAULT_SS_MEM_CAP, chunk=64):
    """Spectrum sweeping: accumulate the filtered block Z(t) for every grid
    point during one sweep, then solve a filtered generalized eigenproblem
    per point.

    Memory grows as n_grid * dim * n_probe; the run is refused up front when
    the accumulators would exceed mem_cap_bytes.
    """
    if req.method != "ss":
        raise ConfigError(f"request method is {req.method!r}, expected 'ss'")
    t0 = time.perf_counter()
    n = operator_dim(A)
    need = ss_memory_estimate(n, req)
    if need > mem_cap_bytes:
        raise MemoryGuardError(
            f"spectrum sweeping needs {need / 2**30:.2f} GiB of accumulators "
            f"(cap {mem_cap_bytes / 2**30:.2f} GiB); use the ress method, which "
            "accumulates only moment matrices"
        )
    n_t = len(req.grid)
    p = req.n_probe
    table = build_coeff_table(req.grid, req.sigma, req.degree, dim=n)
    W = probe_block(n, p, req.probe_kind, req.seed)

    C = _ring_size(_SS_RING_CAP_BYTES, chunk, n * p * 8, req.degree)
    ring = np.empty((C, n, p))
    ring_flat = ring.reshape(C, n * p)
    Z = np.zeros((n_t, n, p))
    Z_flat = Z.reshape(n_t, n * p)

    chunk_start = 0
    for l, _ in cheb_ring_iter(A, W, req.degree, list(ring), threads=threads):
        if l % C == C - 1 or l == req.degree:
            _accum_gemm(Z_flat, table.mu, ring_flat, l - chunk_start + 1, chunk_start)
            chunk_start = l + 1

    phi = np.empty(n_t)
    kept, ds, dr, corr, cons = _zero_diag(n_t)
    for i in range(n_t):
        Zi = Z[i]
        K_W = symmetrize(W.T @ Zi)
        K_Z = symmetrize(Zi.T @ Zi)
        res = gen_eig_filtered(K_W, K_Z, req.sigma, n, req.tau)
        phi[i] = res.trace
        kept[i], ds[i], dr[i] = res.kept, res.dropped_small, res.dropped_range
        if res.kept:
            cons[i] = abs(float(np.einsum("ij,ij->", res.c, K_Z @ res.c)) - res.trace)
    wall = time.perf_counter() - t0
    return DosResult(req.grid, phi, kept, ds, dr, corr, cons, _provenance(req, n, wall))


def _gram_moment_sweep(A, block, degree, fixed, consumers, ring_cap, chunk, threads):
    """Sweep T_l(A) @ block once, accumulating for every consumer
    (coefs, fixed_index, last_degree) the per-grid-point moments

        acc[i] += sum_l coefs[i, l] * (fixed[fixed_index].T @ T_l(A) block).

    coefs rows must be zero above last_degree; the sweep then skips both the
    wide Gram and the accumulation for expired consumers, chunk-granular.
    Returns the accumulators aligned with consumers.
    """
    n, p = block.shape
    C = _ring_size(ring_cap, chunk, n * p * 8, degree)
    ring_cols = np.empty((n, C * p))
    slots = [ring_cols[:, j * p : (j + 1) * p] for j in range(C)]

    fixed_f = [np.asfortranarray(f) for f in fixed]
    stacked = np.asfortranarray(np.hstack(fixed)) if len(fixed) > 1 else fixed_f[0]
    col0 = np.cumsum([0] + [f.shape[1] for f in fixed])
    n_grid = consumers[0][0].shape[0]
    accs = [np.zeros((n_grid, fixed[fi].shape[1], p)) for _, fi, _ in consumers]
    bufs = [np.empty((C, fixed[fi].shape[1], p)) for _, fi, _ in consumers]

    chunk_start = 0
    for l, _ in cheb_ring_iter(A, block, degree, slots, threads=threads):
        if not (l % C == C - 1 or l == degree):
            continue
        cnt = l - chunk_start + 1
        cols_t = ring_cols.T[: cnt * p]  # (cnt*p, n), F-contiguous when full
        wide = any(chunk_start <= last for _, fi, last in consumers if fi > 0)
        target = stacked if wide else fixed_f[0]
        gram = _blas.dgemm(1.0, cols_t, target)  # (cnt*p, q_total)
        for b, (coefs, fi, last) in enumerate(consumers):
            if chunk_start > last:
                continue
            q0 = col0[fi] if wide else 0
            q1 = q0 + fixed[fi].shape[1]
            if fi > 0 and not wide:
                continue
            buf = bufs[b]
            for j in range(cnt):
                buf[j] = gram[j * p : (j + 1) * p, q0:q1].T
            q = fixed[fi].shape[1]
            _accum_gemm(accs[b].reshape(n_grid, q * p), coefs, buf.reshape(C, q * p), cnt, chunk_start)
        chunk_start = l + 1
    return accs


def ress_dgc_dos(A, req, threads=1, chunk=8, return_moments=False):
    """Robust/efficient spectrum sweeping.

    One degree-M sweep accumulates only moment matrices: the filter is
    expanded at degree M/2 and its square, exactly, at degree M, which makes
    K_Z identical (up to roundoff) to the Z*Z of plain spectrum sweeping at
    half the degree.  When n_probe_hybrid > 0, a second probe block adds the
    Hutchinson correction for the trace of the low-rank residual.
    """
    if req.method != "ress":
        raise ConfigError(f"request method is {req.method!r}, expected 'ress'")
    t0 = time.perf_counter()
    n = operator_dim(A)
    n_t = len(req.grid)
    p, q = req.n_probe, req.n_probe_hybrid
    table = build_coeff_table(req.grid, req.sigma, req.degree, dim=n, squared=True)
    half = req.degree // 2

    W = probe_block(n, p, req.probe_kind, req.seed, stream=0)
    if q:
        Wt = probe_block(n, q, req.probe_kind, req.seed, stream=1)
        consumers = [(table.mu, 0, half), (table.nu, 0, req.degree), (table.mu, 1, half)]
        k_w, k_z, k_c = _gram_moment_sweep(
            A, W, req.degree, [W, Wt], consumers, _RESS_RING_CAP_BYTES, chunk, threads,
        )
        (k_wt,) = _gram_moment_sweep(
            A, Wt, half, [Wt], [(table.mu, 0, half)], _RESS_RING_CAP_BYTES, chunk, threads,
        )
    else:
        consumers = [(table.mu, 0, half), (table.nu, 0, req.degree)]
        k_w, k_z = _gram_moment_sweep(
            A, W, req.degree, [W], consumers, _RESS_RING_CAP_BYTES, chunk, threads,
        )
        k_c = k_wt = None

    phi = np.empty(n_t)
    kept, ds, dr, corr, cons = _zero_diag(n_t)
    for i in range(n_t):
        K_W = symmetrize(k_w[i])
        K_Z = symmetrize(k_z[i])
        res = gen_eig_filtered(K_W, K_Z, req.sigma, n, req.tau)
        tr = res.trace
        kept[i], ds[i], dr[i] = res.kept, res.dropped_small, res.dropped_range
        if res.kept:
            cons[i] = abs(float(np.einsum("ij,ij->", res.c, K_Z @ res.c)) - tr)
        if q:
            kc_c = k_c[i] @ res.c
            corr[i] = (float(np.trace(k_wt[i])) - float(np.sum(kc_c * kc_c))) / q
        phi[i] = tr + corr[i]
    wall = time.perf_counter() - t0
    result = DosResult(req.grid, phi, kept, ds, dr, corr, cons, _provenance(req, n, wall))
    if return_moments:
        return result, MomentSet(k_w, k_z, k_c, k_wt)
    return result


def lowrank_trace(op, n_probe, n_probe_hybrid, sigma, dim, tau=DEFAULT_TAU, seed=0, threads=1):
    """Trace of a numerically low-rank symmetric PSD operator.

    A filtered generalized eigensolve on the probe moments recovers the
    dominant part exactly (rank below n_probe); the hybrid term estimates the
    trace of the residual with an independent probe block.  sigma and dim set
    the admissible eigenvalue range [0, peak] of the filter.
    """
    if n_probe < 1 or n_probe_hybrid < 0:
        raise ConfigError("need n_probe >= 1 and n_probe_hybrid >= 0")
    W = probe_block(dim, n_probe, "gaussian", seed, stream=0)
    Z = apply_operator(op, W, threads=threads)
    K_W = symmetrize(W.T @ Z)
    K_Z = symmetrize(Z.T @ Z)
    res = gen_eig_filtered(K_W, K_Z, sigma, dim, tau)
    estimate = res.trace
    if n_probe_hybrid:
        Wt = probe_block(dim, n_probe_hybrid, "gaussian", seed, stream=1)
        PWt = apply_operator(op, Wt, threads=threads)
        k_wt = float(np.einsum("ik,ik->", Wt, PWt))
        kc_c = (Wt.T @ Z) @ res.c
        estimate += (k_wt - float(np.sum(kc_c * kc_c))) / n_probe_hybrid
    return estimate


def exact_dos(eigenvalues, grid, sigma):
    """Pointwise exact regularized DOS from a full list of eigenvalues."""
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    if not np.all(np.isfinite(eigenvalues)):
        raise ConfigError("eigenvalues must be finite")
    grid = np.asarray(grid, dtype=np.float64)
    n = len(eigenvalues)
    phi = np.zeros(len(grid))
    step = max(1, (1 << 22) // max(len(grid), 1))
    for s in range(0, n, step):
        block = eigenvalues[s : s + step]
        phi += gaussian_kernel(grid[:, None] - block[None, :], sigma, dim=n).sum(axis=1)
    kept, ds, dr, corr, cons = _zero_diag(len(grid))
    prov = {"method": "exact", "sigma": float(sigma), "dim": n, "n_grid": len(grid)}
    return DosResult(grid, phi, kept, ds, dr, corr, cons, prov)


def rel_l1_error(approx, exact):
    """Relative L1 distance between two DOS results on the same grid."""
    if not np.array_equal(approx.grid, exact.grid):
        raise ConfigError("grids differ")
    denom = np.abs(exact.phi).sum()
    if denom == 0.0:
        raise ConfigError("reference DOS is identically zero")
    return float(np.abs(approx.phi - exact.phi).sum() / denom)
