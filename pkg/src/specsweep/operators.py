"""Sparse symmetric matrices, spectral scaling, model-matrix generation, IO.

The matrix type stores the full symmetric pattern in CSR form so that a block
matvec is a single streaming pass over the row data.  Everything downstream
touches the matrix only through :func:`matvec_block`.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, rng
from .errors import (
    ConfigError,
    DenseCapError,
    DimensionError,
    MatrixMarketParseError,
    UnsupportedFormatError,
)

DEFAULT_MARGIN = 0.01
DENSE_ORACLE_CAP = 4096


@dataclass(frozen=True)
class SparseSymMatrix:
    """Real symmetric matrix, compressed sparse rows, both triangles stored.

    Invariants (checked on construction): row_offsets monotone, column
    indices in range, no duplicate (i, j) pairs, and for every stored entry
    (i, j, v) the mirrored entry (j, i, v) is stored bit-identically.
    """

    dim: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.ascontiguousarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.ascontiguousarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        self._validate()

    def _validate(self):
        n = self.dim
        if n <= 0:
            raise ConfigError("matrix dimension must be positive")
        if self.row_offsets.shape != (n + 1,):
            raise ConfigError("row_offsets must have dim+1 entries")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != len(self.col_indices):
            raise ConfigError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ConfigError("row_offsets must be monotone non-decreasing")
        if len(self.col_indices) != len(self.values):
            raise ConfigError("col_indices and values length mismatch")
        if self.nnz and (self.col_indices.min() < 0 or self.col_indices.max() >= n):
            raise ConfigError("column index out of range")
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(self.row_offsets))
        order = np.lexsort((self.col_indices, rows))
        r1, c1, v1 = rows[order], self.col_indices[order], self.values[order]
        if np.any((r1[1:] == r1[:-1]) & (c1[1:] == c1[:-1])):
            raise ConfigError("duplicate (i, j) entry")
        # Symmetry: the entry multiset must equal its transpose, values bitwise.
        order_t = np.lexsort((rows, self.col_indices))
        if (
            not np.array_equal(r1, self.col_indices[order_t])
            or not np.array_equal(c1, rows[order_t])
            or not np.array_equal(v1, self.values[order_t])
        ):
            raise ConfigError("matrix is not symmetric (bit-identical mirror required)")

    @property
    def nnz(self):
        return len(self.values)

    @property
    def nbytes(self):
        return self.row_offsets.nbytes + self.col_indices.nbytes + self.values.nbytes

    def to_dense(self):
        out = np.zeros((self.dim, self.dim))
        rows = np.repeat(np.arange(self.dim), np.diff(self.row_offsets))
        out[rows, self.col_indices] = self.values
        return out

    def diagonal(self):
        rows = np.repeat(np.arange(self.dim), np.diff(self.row_offsets))
        d = np.zeros(self.dim)
        mask = rows == self.col_indices
        d[rows[mask]] = self.values[mask]
        return d


def from_coo(n, rows, cols, vals, name="", sum_duplicates=False):
    """Build a SparseSymMatrix from coordinate triples.

    Entries are sorted row-major; duplicates are summed when requested
    (periodic stencils fold wrap-around neighbors onto the same entry) and
    rejected otherwise.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows):
        dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
        if dup.any():
            if not sum_duplicates:
                raise ConfigError("duplicate (i, j) entry in coordinate data")
            starts = np.flatnonzero(np.concatenate(([True], ~dup)))
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(row_offsets, rows + 1, 1)
    np.cumsum(row_offsets, out=row_offsets)
    return SparseSymMatrix(n, row_offsets, cols, vals, name=name)


def from_dense(arr, name=""):
    """Sparse view of a dense symmetric array (zeros dropped)."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError("expected a square 2-D array")
    rows, cols = np.nonzero(arr)
    return from_coo(arr.shape[0], rows, cols, arr[rows, cols], name=name)


def from_diagonal(values, name=""):
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    idx = np.arange(n, dtype=np.int64)
    return from_coo(n, idx, idx, values, name=name)


@dataclass(frozen=True)
class SpectralBounds:
    """Interval (a, b) believed to contain the spectrum, plus a widening
    fraction applied before the Chebyshev scaling (guards against eigenvalues
    that graze the estimated endpoints)."""

    a: float
    b: float
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if not self.a < self.b:
            raise ConfigError(f"invalid spectral bounds: need a < b, got ({self.a}, {self.b})")
        if self.margin < 0:
            raise ConfigError("margin must be nonnegative")

    def effective(self):
        pad = self.margin * (self.b - self.a)
        return self.a - pad, self.b + pad


@dataclass(frozen=True)
class ScaledOperator:
    """Affine rescaling of a matrix so its spectrum lands in (-1, 1).

    Applies V -> scale * (A V - shift V); eigenvalue lambda maps to
    (lambda - shift) * scale.
    """

    matrix: SparseSymMatrix
    shift: float
    scale: float

    @property
    def dim(self):
        return self.matrix.dim

    def to_scaled(self, lam):
        return (np.asarray(lam) - self.shift) * self.scale

    def to_original(self, t):
        return np.asarray(t) / self.scale + self.shift


def spectral_transform(A, bounds):
    """Scaled operator whose spectrum lies in (-1, 1) whenever the bounds
    (after margin widening) enclose the spectrum of A."""
    lo, hi = bounds.effective()
    return ScaledOperator(A, shift=(lo + hi) / 2.0, scale=2.0 / (hi - lo))


def _csr_parts(op):
    """(row_offsets, col_indices, values, scale, shift) for either operator kind."""
    if isinstance(op, ScaledOperator):
        m = op.matrix
        return m.row_offsets, m.col_indices, m.values, op.scale, op.shift
    if isinstance(op, SparseSymMatrix):
        return op.row_offsets, op.col_indices, op.values, 1.0, 0.0
    raise TypeError(f"expected SparseSymMatrix or ScaledOperator, got {type(op).__name__}")


def operator_dim(op):
    if isinstance(op, ScaledOperator):
        return op.dim
    if isinstance(op, SparseSymMatrix):
        return op.dim
    if isinstance(op, np.ndarray) and op.ndim == 2:
        return op.shape[0]
    raise TypeError("cannot infer operator dimension")


def _row_ranges(n, threads):
    threads = max(1, min(int(threads), n))
    cuts = np.linspace(0, n, threads + 1, dtype=np.int64)
    return [(int(cuts[i]), int(cuts[i + 1])) for i in range(threads) if cuts[i] < cuts[i + 1]]


def run_row_partitioned(kernel, n_rows, threads, *args):
    """Run a row-range kernel over a partition of [0, n_rows).

    Each worker owns a disjoint output range and every row is computed by the
    same serial kernel, so results are bit-identical for any worker count.
    """
    ranges = _row_ranges(n_rows, threads)
    if len(ranges) == 1:
        kernel(*args, 0, n_rows)
        return
    with concurrent.futures.ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        futs = [pool.submit(kernel, *args, r0, r1) for r0, r1 in ranges]
        for f in futs:
            f.result()


def matvec_block(op, V, out=None, threads=1):
    """Apply a sparse symmetric (optionally scaled) operator to a dense block.

    V may be a vector or an (N, k) block; the input is never modified.
    """
    squeeze = False
    V = np.asarray(V, dtype=np.float64)
    if V.ndim == 1:
        V = V[:, None]
        squeeze = True
    if V.ndim != 2:
        raise DimensionError("V must be 1- or 2-dimensional")
    indptr, indices, data, scale, shift = _csr_parts(op)
    n = len(indptr) - 1
    if V.shape[0] != n:
        raise DimensionError(f"operator dim {n} does not match block rows {V.shape[0]}")
    if not V.flags.c_contiguous:
        V = np.ascontiguousarray(V)
    if out is None:
        out = np.empty_like(V)
    run_row_partitioned(
        _kernels.csr_affine_matvec, n, threads,
        indptr, indices, data, scale, -scale * shift, V, out,
    )
    return out[:, 0] if squeeze else out


def dense_eigenvalues(A, cap=DENSE_ORACLE_CAP):
    """Full spectrum by dense eigendecomposition; the desk-scale oracle."""
    if A.dim > cap:
        raise DenseCapError(f"matrix dimension {A.dim} exceeds dense oracle cap {cap}")
    return np.linalg.eigvalsh(A.to_dense())


def _power_extreme(A, v0, iters, threads):
    """Rayleigh estimate of the dominant eigenvalue of A from a fixed number
    of power steps, plus the final residual norm."""
    v = v0 / np.linalg.norm(v0)
    for _ in range(iters):
        w = matvec_block(A, v, threads=threads)
        nw = np.linalg.norm(w)
        if nw < 1e-290:
            return 0.0, 0.0
        v = w / nw
    Av = matvec_block(A, v, threads=threads)
    rho = float(v @ Av)
    resid = float(np.linalg.norm(Av - rho * v))
    return rho, resid


def estimate_bounds(A, iters=100, seed=0, margin=DEFAULT_MARGIN, threads=1):
    """Spectral interval from seeded power iterations on A and on c*I - A,
    widened so the returned bounds enclose the spectrum with high probability.

    Loose bounds only cost polynomial degree downstream, so the widening errs
    on the generous side: the margin fraction of the estimated width (floored
    at unit width) plus the Rayleigh residuals.
    """
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    v0 = rng.gaussian_block(A.dim, 1, seed, stream=2)[:, 0]
    rho1, res1 = _power_extreme(A, v0, iters, threads)

    # Dominant eigenvalue of rho1*I - A sits at the opposite end of the spectrum.
    shifted = ScaledOperator(A if isinstance(A, SparseSymMatrix) else A.matrix, shift=rho1, scale=-1.0)
    v1 = rng.gaussian_block(A.dim, 1, seed, stream=3)[:, 0]
    rho_s, res2 = _power_extreme(shifted, v1, iters, threads)
    rho2 = rho1 + rho_s  # eigenvalue of A at the other extreme

    lo, hi = min(rho1, rho2), max(rho1, rho2)
    pad = margin * max(hi - lo, 1.0)
    return SpectralBounds(lo - pad - res1 - res2, hi + pad + res1 + res2, margin=margin)


def gen_modes3d(n_cells_per_dim, L=6.0, h=0.6, potential_depth=-4.0, potential_width=1.2, name=None):
    """Periodic 7-point finite-difference model matrix on a cubic domain.

    The operator is -laplacian + V on [0, n*L)^3 with grid spacing h, where V
    is a sum of Gaussian wells, one centered in each of the n^3 unit cells.
    The well amplitude/width are configurable; defaults give a spectrum
    roughly spanning (-2, 33) for the n=1 matrix.
    """
    if n_cells_per_dim < 1:
        raise ConfigError("n_cells_per_dim must be >= 1")
    if L <= 0 or h <= 0:
        raise ConfigError("L and h must be positive")
    m = L / h
    if abs(m - round(m)) > 1e-9 * max(1.0, m):
        raise ConfigError(f"L/h must be an integer grid count, got {m}")
    npts = int(round(m)) * n_cells_per_dim
    N = npts**3

    x = np.arange(npts) * h
    centers = L / 2.0 + L * np.arange(n_cells_per_dim)
    g1d = np.exp(-((x[:, None] - centers[None, :]) ** 2) / (2.0 * potential_width**2)).sum(axis=1)
    pot = potential_depth * (g1d[:, None, None] * g1d[None, :, None] * g1d[None, None, :]).ravel()

    idx = np.arange(N, dtype=np.int64)
    iz = idx % npts
    iy = (idx // npts) % npts
    ix = idx // (npts * npts)

    inv_h2 = 1.0 / (h * h)
    rows = [idx]
    cols = [idx]
    vals = [6.0 * inv_h2 + pot]
    for axis_idx, stride in ((ix, npts * npts), (iy, npts), (iz, 1)):
        for step in (1, -1):
            nb = (axis_idx + step) % npts
            cols.append(idx + (nb - axis_idx) * stride)
            rows.append(idx)
            vals.append(np.full(N, -inv_h2))
    if name is None:
        name = f"ModES3D_{n_cells_per_dim**3}"
    return from_coo(
        N, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        name=name, sum_duplicates=True,
    )


_MM_BANNER = "%%MatrixMarket"


def save_matrix_market(A, path):
    """Write the lower triangle in coordinate real symmetric format.

    Values carry 17 significant digits so a round-trip reproduces them
    bit-identically.
    """
    rows = np.repeat(np.arange(A.dim), np.diff(A.row_offsets))
    keep = rows >= A.col_indices
    r, c, v = rows[keep], A.col_indices[keep], A.values[keep]
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        if A.name:
            fh.write(f"% {A.name}\n")
        fh.write(f"{A.dim} {A.dim} {len(v)}\n")
        for i, j, val in zip(r, c, v):
            fh.write(f"{i + 1} {j + 1} {val:.17g}\n")


def load_matrix_market(path, name=None):
    """Read a coordinate real symmetric Matrix Market file.

    Only that flavor is supported; pattern/complex/integer fields and
    general/skew symmetry raise UnsupportedFormatError.  Stored entries are
    mirrored across the diagonal.
    """
    with open(path) as fh:
        lines = fh.readlines()
    if not lines or not lines[0].startswith(_MM_BANNER):
        raise MatrixMarketParseError("missing MatrixMarket banner", line_no=1)
    tokens = lines[0].split()
    if len(tokens) != 5:
        raise MatrixMarketParseError("banner must have 5 tokens", line_no=1)
    _, obj, fmt, fld, sym = (t.lower() for t in tokens)
    if obj != "matrix" or fmt != "coordinate":
        raise UnsupportedFormatError(f"unsupported object/format: {obj} {fmt}")
    if fld != "real":
        raise UnsupportedFormatError(f"unsupported field type: {fld} (only 'real')")
    if sym != "symmetric":
        raise UnsupportedFormatError(f"unsupported symmetry: {sym} (only 'symmetric')")

    k = 1
    while k < len(lines) and (lines[k].startswith("%") or not lines[k].strip()):
        k += 1
    if k >= len(lines):
        raise MatrixMarketParseError("missing size line", line_no=k)
    parts = lines[k].split()
    if len(parts) != 3:
        raise MatrixMarketParseError("size line must be 'rows cols nnz'", line_no=k + 1)
    try:
        nrows, ncols, nnz = (int(p) for p in parts)
    except ValueError:
        raise MatrixMarketParseError("size line must hold three integers", line_no=k + 1) from None
    if nrows != ncols:
        raise UnsupportedFormatError(f"matrix must be square, got {nrows}x{ncols}")

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    count = 0
    for off, line in enumerate(lines[k + 1 :], start=k + 2):
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        if count >= nnz:
            raise MatrixMarketParseError("more entries than declared", line_no=off)
        parts = line.split()
        if len(parts) != 3:
            raise MatrixMarketParseError("entry must be 'i j value'", line_no=off)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixMarketParseError(f"cannot parse entry {line!r}", line_no=off) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketParseError(f"index out of range: {i} {j}", line_no=off)
        rows[count], cols[count], vals[count] = i - 1, j - 1, v
        count += 1
    if count != nnz:
        raise MatrixMarketParseError(f"declared {nnz} entries, found {count}", line_no=len(lines))

    off_diag = rows != cols
    all_rows = np.concatenate([rows, cols[off_diag]])
    all_cols = np.concatenate([cols, rows[off_diag]])
    all_vals = np.concatenate([vals, vals[off_diag]])
    try:
        return from_coo(nrows, all_rows, all_cols, all_vals, name=name or "")
    except ConfigError as exc:
        raise MatrixMarketParseError(str(exc)) from exc
