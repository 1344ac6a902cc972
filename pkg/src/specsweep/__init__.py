"""specsweep: matrix-free spectral density estimation and smooth-function
trace estimation for large sparse symmetric matrices.

The estimators touch the matrix only through block matvecs; everything
downstream of the Chebyshev sweep is small dense algebra.
"""

from .chebyshev import (
    CoeffTable,
    build_coeff_table,
    cheb_sweep,
    default_n_theta,
    dgc_coeffs,
    eval_cheb_series,
    gaussian_kernel,
    squared_coeffs,
)
from .densekernels import GenEigResult, filter_cap, gen_eig_filtered, pinv_trace, sym_eig
from .errors import (
    ConfigError,
    DenseCapError,
    DimensionError,
    FunctionSpecError,
    MatrixMarketParseError,
    MemoryGuardError,
    UnsupportedFormatError,
)
from .estimators import (
    DosRequest,
    DosResult,
    MomentSet,
    ProbeBlock,
    dgc_dos,
    exact_dos,
    hutchinson_trace,
    lowrank_trace,
    probe_block,
    rel_l1_error,
    ress_dgc_dos,
    ss_dgc_dos,
    ss_memory_estimate,
)
from .operators import (
    ScaledOperator,
    SparseSymMatrix,
    SpectralBounds,
    dense_eigenvalues,
    estimate_bounds,
    from_coo,
    from_dense,
    from_diagonal,
    gen_modes3d,
    load_matrix_market,
    matvec_block,
    save_matrix_market,
    spectral_transform,
)
from .tracefn import (
    PeriodicSamples,
    TraceResult,
    WindowParams,
    build_h,
    deconvolve,
    fermi_dirac,
    make_function,
    periodic_grid,
    trace_of_function,
)

__version__ = "0.1.0"
