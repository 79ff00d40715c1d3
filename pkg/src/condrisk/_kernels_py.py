"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module; used
when the extension is not built or ``CONDRISK_PURE_PYTHON`` is set.
"""

import numpy as np

TRIWEIGHT, EPANECHNIKOV, GAUSSIAN = 0, 1, 2
SUPPORT = {TRIWEIGHT: 1.0, EPANECHNIKOV: 1.0, GAUSSIAN: 3.0}

# status codes returned per target row
OK, RIDGED, SINGULAR = 0, 1, 2

_SQRT_2PI = np.sqrt(2.0 * np.pi)
_CHUNK = 256


def kernel_1d(t, kind=TRIWEIGHT):
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < SUPPORT[kind]
    if kind == TRIWEIGHT:
        u = 1.0 - t * t
        v = 1.09375 * u * u * u
    elif kind == EPANECHNIKOV:
        v = 0.75 * (1.0 - t * t)
    elif kind == GAUSSIAN:
        v = np.exp(-0.5 * t * t) / _SQRT_2PI
    else:
        raise ValueError(f"unknown kernel {kind}")
    return np.where(inside, v, 0.0)


def _solve_rows(m00, m01, m02, m11, m12, m22):
    status = np.zeros(m00.shape, dtype=np.int8)
    c00 = m11 * m22 - m12 * m12
    c01 = m02 * m12 - m01 * m22
    c02 = m01 * m12 - m02 * m11
    det = m00 * c00 + m01 * c01 + m02 * c02
    scale = m00 * m11 * m22
    weak = (scale <= 0.0) | (det <= 1e-10 * scale)
    if np.any(weak):
        lam = 1e-8 * (m00 + m11 + m22) / 3.0
        r11 = np.where(weak, m11 + lam, m11)
        r22 = np.where(weak, m22 + lam, m22)
        c00 = r11 * r22 - m12 * m12
        c01 = m02 * m12 - m01 * r22
        c02 = m01 * m12 - m02 * r11
        det = m00 * c00 + m01 * c01 + m02 * c02
        status[weak] = RIDGED
    bad = ~(m00 > 0.0) | ~(det > 0.0)
    status[bad] = SINGULAR
    det = np.where(bad, 1.0, det)
    return c00 / det, c01 / det, c02 / det, status


def local_linear_weights(targets, locs, hinv, det_h, kind=TRIWEIGHT):
    """Rows of local linear smoother weights for each target.

    Returns ``(S, status)`` where ``S[a]`` is the smoother vector at
    ``targets[a]`` and ``status[a]`` is one of OK / RIDGED / SINGULAR.
    """
    targets = np.ascontiguousarray(targets, dtype=float)
    locs = np.ascontiguousarray(locs, dtype=float)
    hinv = np.asarray(hinv, dtype=float)
    m, n = len(targets), len(locs)
    out = np.zeros((m, n))
    status = np.zeros(m, dtype=np.int8)
    for start in range(0, m, _CHUNK):
        stop = min(start + _CHUNK, m)
        d1 = locs[None, :, 0] - targets[start:stop, None, 0]
        d2 = locs[None, :, 1] - targets[start:stop, None, 1]
        u1 = hinv[0, 0] * d1 + hinv[0, 1] * d2
        u2 = hinv[1, 0] * d1 + hinv[1, 1] * d2
        w = kernel_1d(u1, kind) * kernel_1d(u2, kind) / det_h
        wd1 = w * d1
        wd2 = w * d2
        a0, a1, a2, st = _solve_rows(
            w.sum(1), wd1.sum(1), wd2.sum(1),
            (wd1 * d1).sum(1), (wd1 * d2).sum(1), (wd2 * d2).sum(1))
        rows = w * (a0[:, None] + a1[:, None] * d1 + a2[:, None] * d2)
        rows[st == SINGULAR] = 0.0
        out[start:stop] = rows
        status[start:stop] = st
    return out, status


def lag_moments(lags, counts, sums, queries, h, kind=TRIWEIGHT):
    """Kernel moments of a lag-compressed cloud around each query lag.

    ``lags`` must be sorted ascending; ``counts[k]`` pairs share lag
    ``lags[k]`` with total squared difference ``sums[k]``. Columns of the
    result are ``sum c w, sum c w d, sum c w d^2, sum w s, sum w d s`` with
    ``d = lag - query`` and ``w = K((lag - query) / h) / h``.
    """
    lags = np.asarray(lags, dtype=float)
    counts = np.asarray(counts, dtype=float)
    sums = np.asarray(sums, dtype=float)
    queries = np.asarray(queries, dtype=float)
    out = np.zeros((len(queries), 5))
    chunk = max(1, 2_000_000 // max(len(lags), 1))
    for start in range(0, len(queries), chunk):
        q = queries[start:start + chunk, None]
        d = lags[None, :] - q
        w = kernel_1d(d / h, kind) / h
        cw = w * counts
        sw = w * sums
        out[start:start + chunk] = np.column_stack([
            cw.sum(1), (cw * d).sum(1), (cw * d * d).sum(1),
            sw.sum(1), (sw * d).sum(1)])
    return out
