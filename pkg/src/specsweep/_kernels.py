"""Numba kernels for the bandwidth-bound inner loops.

Everything here is single-threaded and loop-order deterministic; thread-level
parallelism is applied by the callers through disjoint row ranges, which keeps
results bit-identical for any worker count.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def csr_affine_matvec(indptr, indices, data, c1, c2, V, out, r0, r1):
    """out[r0:r1] = c1 * (A @ V)[r0:r1] + c2 * V[r0:r1] in one pass."""
    k = V.shape[1]
    for i in range(r0, r1):
        oi = out[i]
        for c in range(k):
            oi[c] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            a = data[p]
            vj = V[indices[p]]
            for c in range(k):
                oi[c] += a * vj[c]
        vi = V[i]
        for c in range(k):
            oi[c] = c1 * oi[c] + c2 * vi[c]


@njit(cache=True, nogil=True)
def csr_cheb_step(indptr, indices, data, c1, c2, Vc, Vm, Vp, r0, r1):
    """Three-term recurrence step: Vp = c1*(A @ Vc) + c2*Vc - Vm.

    c1 and c2 absorb the 2-x-and-shift/scale factors of the scaled operator,
    so one streaming pass over the row data advances the recurrence.
    """
    k = Vc.shape[1]
    for i in range(r0, r1):
        pi = Vp[i]
        for c in range(k):
            pi[c] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            a = data[p]
            vj = Vc[indices[p]]
            for c in range(k):
                pi[c] += a * vj[c]
        ci = Vc[i]
        mi = Vm[i]
        for c in range(k):
            pi[c] = c1 * pi[c] + c2 * ci[c] - mi[c]
