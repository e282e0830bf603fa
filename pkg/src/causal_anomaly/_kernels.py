"""Hot numeric kernels.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version.  The numba path is used when numba imports cleanly and the
environment variable ``CAUSAL_ANOMALY_DISABLE_NUMBA`` is unset (or ``0``).
Both paths are importable directly (``*_numba`` / ``*_numpy``) so tests and
the benchmark can compare them.
"""

import os

import numpy as np
from scipy.special import logsumexp

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _numba_requested():
    flag = os.environ.get("CAUSAL_ANOMALY_DISABLE_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _numba_requested()


# ---------------------------------------------------------------------------
# Gaussian KDE log-density
# ---------------------------------------------------------------------------


def kde_logpdf_numpy(queries, points, bandwidth, chunk=2048):
    queries = np.asarray(queries, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    out = np.empty(queries.shape[0])
    norm = np.log(points.shape[0]) + np.log(bandwidth) + _LOG_SQRT_2PI
    for start in range(0, queries.shape[0], chunk):
        q = queries[start:start + chunk]
        z = (q[:, None] - points[None, :]) / bandwidth
        out[start:start + chunk] = logsumexp(-0.5 * z * z, axis=1) - norm
    return out


def _kde_logpdf_loop(queries, points, bandwidth):
    n_q = queries.shape[0]
    n_p = points.shape[0]
    out = np.empty(n_q)
    norm = np.log(n_p) + np.log(bandwidth) + 0.5 * np.log(2.0 * np.pi)
    inv_h = 1.0 / bandwidth
    for i in range(n_q):
        q = queries[i]
        best = -np.inf
        for k in range(n_p):
            z = (q - points[k]) * inv_h
            e = -0.5 * z * z
            if e > best:
                best = e
        acc = 0.0
        for k in range(n_p):
            z = (q - points[k]) * inv_h
            acc += np.exp(-0.5 * z * z - best)
        out[i] = best + np.log(acc) - norm
    return out


# ---------------------------------------------------------------------------
# B-spline basis (Cox-de Boor, NURBS-book A2.2)
# ---------------------------------------------------------------------------


def bspline_basis_numpy(x, knots, degree):
    """Basis matrix for ``x`` inside ``[knots[degree], knots[-degree-1]]``."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(knots, dtype=np.float64)
    n_basis = t.shape[0] - degree - 1
    n = x.shape[0]
    # span s satisfies t[s] <= x < t[s+1], clamped so the right boundary
    # belongs to the last non-empty interval
    span = np.searchsorted(t, x, side="right") - 1
    span = np.clip(span, degree, n_basis - 1)
    vals = np.zeros((n, degree + 1))
    vals[:, 0] = 1.0
    left = np.zeros((n, degree + 1))
    right = np.zeros((n, degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            safe = np.where(denom != 0.0, denom, 1.0)
            temp = np.where(denom != 0.0, vals[:, r] / safe, 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    out = np.zeros((n, n_basis))
    rows = np.arange(n)
    for r in range(degree + 1):
        out[rows, span - degree + r] = vals[:, r]
    return out


def _bspline_basis_loop(x, t, degree):
    n_basis = t.shape[0] - degree - 1
    n = x.shape[0]
    out = np.zeros((n, n_basis))
    vals = np.zeros(degree + 1)
    left = np.zeros(degree + 1)
    right = np.zeros(degree + 1)
    for i in range(n):
        xi = x[i]
        lo = degree
        hi = n_basis
        # largest s with t[s] <= xi, clamped to [degree, n_basis-1]
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if t[mid] <= xi:
                lo = mid
            else:
                hi = mid
        span = lo
        vals[:] = 0.0
        vals[0] = 1.0
        for j in range(1, degree + 1):
            left[j] = xi - t[span + 1 - j]
            right[j] = t[span + j] - xi
            saved = 0.0
            for r in range(j):
                denom = right[r + 1] + left[j - r]
                temp = 0.0
                if denom != 0.0:
                    temp = vals[r] / denom
                vals[r] = saved + right[r + 1] * temp
                saved = left[j - r] * temp
            vals[j] = saved
        for r in range(degree + 1):
            out[i, span - degree + r] = vals[r]
    return out


if HAVE_NUMBA:
    _kde_logpdf_jit = numba.njit(cache=True, nogil=True, fastmath=False)(_kde_logpdf_loop)
    _bspline_basis_jit = numba.njit(cache=True, nogil=True)(_bspline_basis_loop)

    def kde_logpdf_numba(queries, points, bandwidth):
        q = np.ascontiguousarray(queries, dtype=np.float64)
        p = np.ascontiguousarray(points, dtype=np.float64)
        return _kde_logpdf_jit(q, p, float(bandwidth))

    def bspline_basis_numba(x, knots, degree):
        return _bspline_basis_jit(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(knots, dtype=np.float64),
            int(degree),
        )
else:  # pragma: no cover
    kde_logpdf_numba = None
    bspline_basis_numba = None


if USE_NUMBA:
    kde_logpdf = kde_logpdf_numba
    bspline_basis = bspline_basis_numba
else:
    kde_logpdf = kde_logpdf_numpy
    bspline_basis = bspline_basis_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
