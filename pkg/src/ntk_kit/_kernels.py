"""Hot depth-iteration loops over power-series duals, in two backends.

Every public entry point here takes a 1-D float64 coefficient array ``c``
(``c[i]`` multiplies ``z**i``) plus a 1-D float64 ``z`` array, and dispatches
to either the ``@njit``-compiled scalar loops or the vectorized numpy sweeps
depending on :mod:`ntk_kit.backend`.  Both variants use the same Horner
association so results agree to the last few ulps.

Wrappers in :mod:`ntk_kit.depth` own input validation; these functions assume
clean inputs (finite, z in [0, 1], coefficients non-negative).
"""

from __future__ import annotations

import numpy as np

from .backend import USE_NUMBA, njit

# Below this many workable log-units, series evaluation switches to the
# leading-monomial asymptote to dodge subnormal underflow.
_LOG_SAFE = -600.0


# ---------------------------------------------------------------------------
# numba backend: scalar cores + array drivers
# ---------------------------------------------------------------------------


@njit(cache=True)
def _horner(c, z):
    acc = c[len(c) - 1]
    for k in range(len(c) - 2, -1, -1):
        acc = acc * z + c[k]
    return acc


@njit(cache=True)
def _eval_series_nb(c, z):
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        out[i] = _horner(c, z[i])
    return out


@njit(cache=True)
def _iterate_series_nb(c, z, depth):
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        v = z[i]
        for _ in range(depth):
            v = _horner(c, v)
        out[i] = v
    return out


@njit(cache=True)
def _ntk_series_nb(c, dc, z, depth):
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        v = z[i]
        K = v
        for _ in range(depth):
            vn = _horner(c, v)
            K = vn + K * _horner(dc, v)
            v = vn
        out[i] = K
    return out


@njit(cache=True)
def _ntk_closed_series_nb(c, dc, z, depth):
    out = np.empty(z.shape[0])
    iters = np.empty(depth + 1)
    for i in range(z.shape[0]):
        v = z[i]
        for j in range(depth + 1):
            iters[j] = v
            v = _horner(c, v)
        K = iters[depth]
        suffix = 1.0
        for j in range(depth - 1, -1, -1):
            suffix = suffix * _horner(dc, iters[j])
            K = K + iters[j] * suffix
        out[i] = K
    return out


@njit(cache=True)
def _trace_series_nb(c, rho_c, q_c, z, depth):
    vs = np.empty(depth + 1)
    Ns = np.empty(depth + 1)
    Ps = np.empty(depth + 1)
    v = z
    N = z
    P = z
    vs[0] = v
    Ns[0] = N
    Ps[0] = P
    for L in range(1, depth + 1):
        N = N * _horner(rho_c, v)
        P = (N + P * L * _horner(q_c, v)) / (L + 1)
        v = _horner(c, v)
        vs[L] = v
        Ns[L] = N
        Ps[L] = P
    return vs, Ns, Ps


@njit(cache=True)
def _psi_product_nb(c, rho_c, z, rtol, max_depth):
    out = np.empty(z.shape[0])
    depths = np.empty(z.shape[0], dtype=np.int64)
    ok = np.empty(z.shape[0], dtype=np.bool_)
    for i in range(z.shape[0]):
        v = z[i]
        N = v
        converged = False
        L = 0
        while L < max_depth:
            r = _horner(rho_c, v)
            N = N * r
            v = _horner(c, v)
            L += 1
            if r - 1.0 < rtol:
                converged = True
                break
        out[i] = N
        depths[i] = L
        ok[i] = converged
    return out, depths, ok


@njit(cache=True)
def _psi_trace_nb(c, rho_c, q_c, z, gap_tol, max_depth):
    out = np.empty(z.shape[0])
    gaps = np.empty(z.shape[0])
    depths = np.empty(z.shape[0], dtype=np.int64)
    for i in range(z.shape[0]):
        v = z[i]
        N = v
        P = v
        gap = np.inf
        L = 0
        while L < max_depth:
            L += 1
            N = N * _horner(rho_c, v)
            Pn = (N + P * L * _horner(q_c, v)) / (L + 1)
            v = _horner(c, v)
            gap = abs(Pn - P) / Pn
            P = Pn
            if gap < gap_tol:
                break
        out[i] = P
        gaps[i] = gap
        depths[i] = L
    return out, gaps, depths


@njit(cache=True)
def _logaddexp(x, y):
    if x == -np.inf:
        return y
    if y == -np.inf:
        return x
    if x < y:
        x, y = y, x
    return x + np.log1p(np.exp(y - x))


@njit(cache=True)
def _log_ntk_series_nb(c, dc, m, z, depth):
    log_cm = np.log(c[m])
    log_dm = np.log(m * c[m])
    switch = _LOG_SAFE / m
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        if z[i] <= 0.0:
            out[i] = -np.inf
            continue
        lv = np.log(z[i])
        lK = lv
        for _ in range(depth):
            if lv > switch:
                v = np.exp(lv)
                lphi = np.log(_horner(c, v))
                ldphi = np.log(_horner(dc, v))
            else:
                lphi = log_cm + m * lv
                ldphi = log_dm + (m - 1) * lv
            lK = _logaddexp(lphi, lK + ldphi)
            lv = lphi
        out[i] = lK
    return out


# ---------------------------------------------------------------------------
# numpy backend: vectorized sweeps
# ---------------------------------------------------------------------------


def _horner_np(c, z):
    acc = np.full_like(z, c[-1])
    for k in range(len(c) - 2, -1, -1):
        acc = acc * z + c[k]
    return acc


def _eval_series_np(c, z):
    return _horner_np(c, z)


def _iterate_series_np(c, z, depth):
    v = z.copy()
    for _ in range(depth):
        v = _horner_np(c, v)
    return v


def _ntk_series_np(c, dc, z, depth):
    v = z.copy()
    K = z.copy()
    for _ in range(depth):
        vn = _horner_np(c, v)
        K = vn + K * _horner_np(dc, v)
        v = vn
    return K


def _ntk_closed_series_np(c, dc, z, depth):
    iters = np.empty((depth + 1, z.shape[0]))
    v = z.copy()
    for j in range(depth + 1):
        iters[j] = v
        v = _horner_np(c, v)
    K = iters[depth].copy()
    suffix = np.ones_like(z)
    for j in range(depth - 1, -1, -1):
        suffix = suffix * _horner_np(dc, iters[j])
        K = K + iters[j] * suffix
    return K


def _horner_scalar(c, z):
    acc = c[-1]
    for k in range(len(c) - 2, -1, -1):
        acc = acc * z + c[k]
    return acc


def _trace_series_np(c, rho_c, q_c, z, depth):
    vs = np.empty(depth + 1)
    Ns = np.empty(depth + 1)
    Ps = np.empty(depth + 1)
    v = z
    N = z
    P = z
    vs[0], Ns[0], Ps[0] = v, N, P
    for L in range(1, depth + 1):
        N = N * _horner_scalar(rho_c, v)
        P = (N + P * L * _horner_scalar(q_c, v)) / (L + 1)
        v = _horner_scalar(c, v)
        vs[L], Ns[L], Ps[L] = v, N, P
    return vs, Ns, Ps


def _psi_product_np(c, rho_c, z, rtol, max_depth):
    n = z.shape[0]
    v = z.copy()
    N = z.copy()
    depths = np.zeros(n, dtype=np.int64)
    ok = np.zeros(n, dtype=bool)
    # compressed active set: converged lanes stop costing sweeps
    idx = np.arange(n)
    L = 0
    while L < max_depth and idx.size:
        vi = v[idx]
        r = _horner_np(rho_c, vi)
        N[idx] = N[idx] * r
        v[idx] = _horner_np(c, vi)
        L += 1
        depths[idx] = L
        done = r - 1.0 < rtol
        if done.any():
            ok[idx[done]] = True
            idx = idx[~done]
    return N, depths, ok


def _psi_trace_np(c, rho_c, q_c, z, gap_tol, max_depth):
    v = z.copy()
    N = z.copy()
    P = z.copy()
    gaps = np.full(z.shape[0], np.inf)
    depths = np.zeros(z.shape[0], dtype=np.int64)
    active = np.ones(z.shape[0], dtype=bool)
    L = 0
    while L < max_depth and active.any():
        L += 1
        N = np.where(active, N * _horner_np(rho_c, v), N)
        Pn = (N + P * L * _horner_np(q_c, v)) / (L + 1)
        gap = np.abs(Pn - P) / Pn
        P = np.where(active, Pn, P)
        gaps = np.where(active, gap, gaps)
        depths[active] = L
        v = np.where(active, _horner_np(c, v), v)
        active &= ~(gap < gap_tol)
    return P, gaps, depths


def _log_ntk_series_np(c, dc, m, z, depth):
    log_cm = np.log(c[m])
    log_dm = np.log(m * c[m])
    switch = _LOG_SAFE / m
    with np.errstate(divide="ignore"):
        lv = np.where(z > 0.0, np.log(np.where(z > 0.0, z, 1.0)), -np.inf)
    lK = lv.copy()
    for _ in range(depth):
        small = lv <= switch
        v = np.exp(np.where(small, 0.0, lv))
        with np.errstate(divide="ignore"):
            lphi_big = np.log(_horner_np(c, v))
            ldphi_big = np.log(_horner_np(dc, v))
        lphi = np.where(small, log_cm + m * lv, lphi_big)
        ldphi = np.where(small, log_dm + (m - 1) * lv, ldphi_big)
        lK = np.logaddexp(lphi, lK + ldphi)
        lv = lphi
    return lK


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _rho_coeffs(c):
    """phi(v)/(a1*v) as a polynomial in v; equals 1 at v=0."""
    return np.ascontiguousarray(c[1:] / c[1])


def _q_coeffs(c):
    """phi'(v)/a1 as a polynomial in v; equals 1 at v=0."""
    n = len(c)
    return np.ascontiguousarray(c[1:] * np.arange(1, n) / c[1])


def _deriv_coeffs(c):
    n = len(c)
    if n == 1:
        return np.zeros(1)
    return np.ascontiguousarray(c[1:] * np.arange(1, n))


def _lowest_index(c):
    nz = np.nonzero(c)[0]
    return int(nz[0]) if nz.size else 0


def eval_series(c, z):
    z = np.ascontiguousarray(z, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    return _eval_series_nb(c, z) if USE_NUMBA else _eval_series_np(c, z)


def iterate_series(c, z, depth):
    z = np.ascontiguousarray(z, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    if USE_NUMBA:
        return _iterate_series_nb(c, z, depth)
    return _iterate_series_np(c, z, depth)


def ntk_series(c, z, depth):
    z = np.ascontiguousarray(z, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    dc = _deriv_coeffs(c)
    if USE_NUMBA:
        return _ntk_series_nb(c, dc, z, depth)
    return _ntk_series_np(c, dc, z, depth)


def ntk_closed_series(c, z, depth):
    z = np.ascontiguousarray(z, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    dc = _deriv_coeffs(c)
    if USE_NUMBA:
        return _ntk_closed_series_nb(c, dc, z, depth)
    return _ntk_closed_series_np(c, dc, z, depth)


def trace_series(c, z, depth):
    c = np.ascontiguousarray(c, dtype=np.float64)
    rho_c, q_c = _rho_coeffs(c), _q_coeffs(c)
    if USE_NUMBA:
        return _trace_series_nb(c, rho_c, q_c, float(z), depth)
    return _trace_series_np(c, rho_c, q_c, float(z), depth)


def psi_product(c, z, rtol, max_depth):
    z = np.ascontiguousarray(z, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    rho_c = _rho_coeffs(c)
    if USE_NUMBA:
        return _psi_product_nb(c, rho_c, z, rtol, max_depth)
    return _psi_product_np(c, rho_c, z, rtol, max_depth)


def psi_trace(c, z, gap_tol, max_depth):
    z = np.ascontiguousarray(z, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    rho_c, q_c = _rho_coeffs(c), _q_coeffs(c)
    if USE_NUMBA:
        return _psi_trace_nb(c, rho_c, q_c, z, gap_tol, max_depth)
    return _psi_trace_np(c, rho_c, q_c, z, gap_tol, max_depth)


def log_ntk_series(c, z, depth):
    z = np.ascontiguousarray(z, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    dc = _deriv_coeffs(c)
    m = _lowest_index(c)
    if m < 1:
        raise ValueError("log-space recursion requires a dual with a0 = 0")
    if USE_NUMBA:
        return _log_ntk_series_nb(c, dc, m, z, depth)
    return _log_ntk_series_np(c, dc, m, z, depth)


def warm_up():
    """Trigger compilation of every hot kernel on toy inputs.

    Lets callers pay the one-off jit cost outside any timed region.  A no-op
    on the numpy backend.
    """
    c = np.array([0.0, 0.5, 0.0, 0.5])
    z = np.array([0.3, 0.9])
    eval_series(c, z)
    iterate_series(c, z, 3)
    ntk_series(c, z, 3)
    ntk_closed_series(c, z, 3)
    trace_series(c, 0.5, 3)
    psi_product(c, z, 1e-12, 50)
    psi_trace(c, z, 1e-6, 50)
    log_ntk_series(np.array([0.0, 0.0, 1.0]), z, 3)
