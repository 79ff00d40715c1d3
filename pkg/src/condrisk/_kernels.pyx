# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the local linear weight and lag-moment kernels.

Semantics match ``_kernels_py`` exactly; only the loops differ. The
kernels have compact support, so each target only touches the points
inside its window.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

cnp.import_array()

DEF TRIWEIGHT = 0
DEF EPANECHNIKOV = 1
DEF GAUSSIAN = 2

cdef double INV_SQRT_2PI = 1.0 / sqrt(2.0 * 3.141592653589793)


cdef inline double _support(int kind) nogil:
    if kind == GAUSSIAN:
        return 3.0
    return 1.0


cdef inline double _kern(double t, int kind, double supp) nogil:
    cdef double u
    if fabs(t) >= supp:
        return 0.0
    if kind == TRIWEIGHT:
        u = 1.0 - t * t
        return 1.09375 * u * u * u
    elif kind == EPANECHNIKOV:
        return 0.75 * (1.0 - t * t)
    return exp(-0.5 * t * t) * INV_SQRT_2PI


def local_linear_weights(targets, locs, hinv, double det_h, int kind=TRIWEIGHT):
    cdef const double[:, ::1] tg = np.ascontiguousarray(targets, dtype=np.float64)
    cdef const double[:, ::1] lc = np.ascontiguousarray(locs, dtype=np.float64)
    cdef const double[:, ::1] hi = np.ascontiguousarray(hinv, dtype=np.float64)
    cdef Py_ssize_t m = tg.shape[0]
    cdef Py_ssize_t n = lc.shape[0]
    out_arr = np.zeros((m, n), dtype=np.float64)
    status_arr = np.zeros(m, dtype=np.int8)
    cdef double[:, ::1] out = out_arr
    cdef cnp.int8_t[::1] status = status_arr
    cdef double[::1] wbuf = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t a, i
    cdef double h00 = hi[0, 0], h01 = hi[0, 1], h10 = hi[1, 0], h11 = hi[1, 1]
    cdef double supp = _support(kind)
    cdef double x1, x2, d1, d2, u1, u2, w
    cdef double m00, m01, m02, m11, m12, m22, r11, r22
    cdef double c00, c01, c02, det, scale, lam
    cdef int st

    with nogil:
        for a in range(m):
            x1 = tg[a, 0]
            x2 = tg[a, 1]
            m00 = 0.0; m01 = 0.0; m02 = 0.0; m11 = 0.0; m12 = 0.0; m22 = 0.0
            for i in range(n):
                d1 = lc[i, 0] - x1
                d2 = lc[i, 1] - x2
                u1 = h00 * d1 + h01 * d2
                if fabs(u1) >= supp:
                    wbuf[i] = 0.0
                    continue
                u2 = h10 * d1 + h11 * d2
                if fabs(u2) >= supp:
                    wbuf[i] = 0.0
                    continue
                w = _kern(u1, kind, supp) * _kern(u2, kind, supp) / det_h
                wbuf[i] = w
                m00 += w
                m01 += w * d1
                m02 += w * d2
                m11 += w * d1 * d1
                m12 += w * d1 * d2
                m22 += w * d2 * d2
            st = 0
            r11 = m11
            r22 = m22
            c00 = r11 * r22 - m12 * m12
            c01 = m02 * m12 - m01 * r22
            c02 = m01 * m12 - m02 * r11
            det = m00 * c00 + m01 * c01 + m02 * c02
            scale = m00 * m11 * m22
            if scale <= 0.0 or det <= 1e-10 * scale:
                lam = 1e-8 * (m00 + m11 + m22) / 3.0
                r11 = m11 + lam
                r22 = m22 + lam
                c00 = r11 * r22 - m12 * m12
                c01 = m02 * m12 - m01 * r22
                c02 = m01 * m12 - m02 * r11
                det = m00 * c00 + m01 * c01 + m02 * c02
                st = 1
            if not (m00 > 0.0) or not (det > 0.0):
                status[a] = 2
                continue
            status[a] = st
            c00 = c00 / det
            c01 = c01 / det
            c02 = c02 / det
            for i in range(n):
                w = wbuf[i]
                if w != 0.0:
                    out[a, i] = w * (c00 + c01 * (lc[i, 0] - x1) + c02 * (lc[i, 1] - x2))
    return out_arr, status_arr


def lag_moments(lags, counts, sums, queries, double h, int kind=TRIWEIGHT):
    cdef const double[::1] lg = np.ascontiguousarray(lags, dtype=np.float64)
    cdef const double[::1] ct = np.ascontiguousarray(counts, dtype=np.float64)
    cdef const double[::1] sm = np.ascontiguousarray(sums, dtype=np.float64)
    cdef const double[::1] qs = np.ascontiguousarray(queries, dtype=np.float64)
    cdef Py_ssize_t nq = qs.shape[0]
    cdef Py_ssize_t nl = lg.shape[0]
    out_arr = np.zeros((nq, 5), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double supp = _support(kind)
    cdef double reach = supp * h
    cdef Py_ssize_t a, k, lo, hi_, mid
    cdef double q, d, w, cw, sw
    cdef double s0, s1, s2, t0, t1

    with nogil:
        for a in range(nq):
            q = qs[a]
            # first lag with lag > q - reach
            lo = 0
            hi_ = nl
            while lo < hi_:
                mid = (lo + hi_) // 2
                if lg[mid] <= q - reach:
                    lo = mid + 1
                else:
                    hi_ = mid
            s0 = 0.0; s1 = 0.0; s2 = 0.0; t0 = 0.0; t1 = 0.0
            k = lo
            while k < nl and lg[k] < q + reach:
                d = lg[k] - q
                w = _kern(d / h, kind, supp) / h
                cw = w * ct[k]
                sw = w * sm[k]
                s0 += cw
                s1 += cw * d
                s2 += cw * d * d
                t0 += sw
                t1 += sw * d
                k += 1
            out[a, 0] = s0
            out[a, 1] = s1
            out[a, 2] = s2
            out[a, 3] = t0
            out[a, 4] = t1
    return out_arr
