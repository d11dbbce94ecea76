# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Semantics mirror ``pykernels`` exactly; see there for the full contracts.
The matcher consumes the same pre-drawn uniforms in the same order, so its
output is identical to the fallback.  Density sums may differ from NumPy's
pairwise summation by ordinary float roundoff.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


def kde_gauss_reflect(x, grid, double h, long chunk=0):
    """Gaussian KDE on ``grid`` with boundary reflection at 0 and 1."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = \
        np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ga = \
        np.ascontiguousarray(grid, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = \
        np.zeros(ga.shape[0], dtype=np.float64)
    cdef long n = xa.shape[0], m = ga.shape[0]
    cdef long i, j
    cdef double g, d0, d1, d2, acc, xi
    cdef double inv_h = 1.0 / h
    cdef double scale = 1.0 / (sqrt(2.0 * 3.14159265358979323846) * n * h)
    for j in range(m):
        g = ga[j]
        acc = 0.0
        for i in range(n):
            xi = xa[i]
            d0 = (g - xi) * inv_h
            d1 = (g + xi) * inv_h
            d2 = (g - (2.0 - xi)) * inv_h
            acc += exp(-0.5 * d0 * d0) + exp(-0.5 * d1 * d1) + exp(-0.5 * d2 * d2)
        out[j] = acc * scale
    return out


cdef long _lower_bound(double[:] a, double v) nogil:
    cdef long lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef long _upper_bound(double[:] a, double v) nogil:
    cdef long lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def greedy_caliper_match(t_logits, c_logits, order, uniforms, double caliper,
                         long ratio, bint with_replacement):
    """Greedy stochastic caliper matching on sorted control logits."""
    cdef double[:] t = np.ascontiguousarray(t_logits, dtype=np.float64)
    cdef double[:] c = np.ascontiguousarray(c_logits, dtype=np.float64)
    cdef long[:] orda = np.ascontiguousarray(order, dtype=np.int64)
    cdef double[:, :] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef long nt = t.shape[0], nc = c.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pt = \
        np.empty(nt * ratio, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pc = \
        np.empty(nt * ratio, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] alive = np.ones(nc, dtype=np.uint8)
    # jump[i]: next possibly-alive index >= i (path-compressed); only
    # maintained for permanent removals (without replacement).
    cdef cnp.ndarray[cnp.int64_t, ndim=1] jump = \
        np.arange(nc + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] buf = np.empty(nc, dtype=np.int64)
    cdef long npairs = 0, rank, ti, slot, lo, hi, k, pos, cur, root, sel
    cdef long taken[64]
    cdef long ntaken, w
    cdef double tv, uu

    if with_replacement and ratio > 64:
        raise ValueError("ratio above 64 is not supported with replacement")

    for rank in range(nt):
        ti = orda[rank]
        tv = t[ti]
        lo = _lower_bound(c, tv - caliper)
        hi = _upper_bound(c, tv + caliper)  # exclusive
        ntaken = 0
        for slot in range(ratio):
            # collect alive candidates in [lo, hi)
            k = 0
            if with_replacement:
                for cur in range(lo, hi):
                    if alive[cur]:
                        buf[k] = cur
                        k += 1
            else:
                cur = lo
                while cur < hi:
                    # find next alive index >= cur with path compression
                    root = cur
                    while jump[root] != root:
                        root = jump[root]
                    while jump[cur] != root:
                        pos = jump[cur]
                        jump[cur] = root
                        cur = pos
                    cur = root
                    if cur >= hi:
                        break
                    buf[k] = cur
                    k += 1
                    cur += 1
            if k == 0:
                break
            uu = u[rank, slot]
            sel = <long>(uu * k)
            if sel >= k:
                sel = k - 1
            pos = buf[sel]
            pt[npairs] = ti
            pc[npairs] = pos
            npairs += 1
            alive[pos] = 0
            if not with_replacement:
                jump[pos] = pos + 1
            elif ntaken < 64:
                taken[ntaken] = pos
                ntaken += 1
        if with_replacement:
            for w in range(ntaken):
                alive[taken[w]] = 1
    return pt[:npairs].copy(), pc[:npairs].copy()
