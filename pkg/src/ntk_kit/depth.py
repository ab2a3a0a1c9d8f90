"""Depth recursions for composed duals and their tangent kernels.

Depth convention: depth 0 is the raw inner product (``iterate`` and the
kernel recursion both start from ``z`` itself), so depth ``L`` applies the
dual ``L`` times.

Normalization: with ``a1`` the dual's linear coefficient, depth-``L``
composites are rescaled by ``a1**-L`` and the tangent kernel additionally by
``1/(L+1)``.  Both rescaled sequences converge for singular-kernel duals and
share the same limit; the rescale is computed as a running product of
``phi(v)/(a1*v)`` terms so no ``a1**L`` underflow ever materializes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .dual import Dual, DualSeries
from .errors import InvalidRegime, NormalizationUndefined, NumericalFailure

DEFAULT_MAX_DEPTH = 100_000
#: below this the ratio phi(v)/(a1*v) is 1 to double precision for any dual
_RATIO_FLOOR = 1e-150


def _coerce_z(z, upper: float = 1.0):
    arr = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("z must be finite")
    if np.any(arr < -1e-12) or np.any(arr > upper + 1e-12):
        raise ValueError(f"z must lie in [0, {upper}]")
    clipped = np.clip(arr, 0.0, upper)
    return clipped, arr.ndim == 0


def _ret(values: np.ndarray, scalar: bool):
    return float(values.reshape(())) if scalar else values


def _check_depth(depth: int) -> int:
    if depth < 0 or depth != int(depth):
        raise ValueError("depth must be a non-negative integer")
    return int(depth)


# ---------------------------------------------------------------------------
# finite-depth recursions
# ---------------------------------------------------------------------------


def iterate_dual(dual: Dual, z, depth: int):
    """Depth-``depth`` composite of the dual applied to ``z``."""
    depth = _check_depth(depth)
    arr, scalar = _coerce_z(z)
    if isinstance(dual, DualSeries):
        out = _kernels.iterate_series(dual.coeffs, arr.ravel(), depth)
        return _ret(out.reshape(arr.shape), scalar)
    v = arr.copy()
    for _ in range(depth):
        v = np.asarray(dual(v))
    return _ret(v, scalar)


def ntk_recursion(dual: Dual, z, depth: int):
    """Depth-``depth`` tangent kernel by the forward recursion.

    May underflow to zero for large depths when the dual has no constant
    mass; use :func:`normalized_trace` or :func:`deep log form
    <ntk_kit.classify.deep_ntk_kernel>` in that regime.
    """
    depth = _check_depth(depth)
    arr, scalar = _coerce_z(z)
    if isinstance(dual, DualSeries):
        out = _kernels.ntk_series(dual.coeffs, arr.ravel(), depth)
        return _ret(out.reshape(arr.shape), scalar)
    v = arr.copy()
    K = arr.copy()
    for _ in range(depth):
        vn = np.asarray(dual(v))
        K = vn + K * np.asarray(dual.deriv(v))
        v = vn
    return _ret(K, scalar)


def ntk_closed_form(dual: Dual, z, depth: int):
    """Depth-``depth`` tangent kernel as the explicit composite sum.

    Algebraically equal to :func:`ntk_recursion`; kept separate so the two
    routes can be cross-checked.  Materializes all ``depth + 1`` composites,
    so memory grows linearly with depth.
    """
    depth = _check_depth(depth)
    arr, scalar = _coerce_z(z)
    if isinstance(dual, DualSeries):
        out = _kernels.ntk_closed_series(dual.coeffs, arr.ravel(), depth)
        return _ret(out.reshape(arr.shape), scalar)
    flat = arr.ravel()
    iters = np.empty((depth + 1, flat.size))
    v = flat.copy()
    for j in range(depth + 1):
        iters[j] = v
        v = np.asarray(dual(v))
    K = iters[depth].copy()
    suffix = np.ones_like(flat)
    for j in range(depth - 1, -1, -1):
        suffix = suffix * np.asarray(dual.deriv(iters[j]))
        K = K + iters[j] * suffix
    return _ret(K.reshape(arr.shape), scalar)


# ---------------------------------------------------------------------------
# normalized depth traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DepthTrace:
    """Depth-indexed record of the composite and its normalized kernels.

    ``iterates[L]`` is the depth-L composite of ``z``; ``normalized_nngp[L]``
    is the composite rescaled by ``a1**-L``; ``normalized_ntk[L]`` is the
    tangent kernel rescaled by ``a1**-L / (L+1)``.
    """

    z: float
    iterates: np.ndarray
    normalized_nngp: np.ndarray
    normalized_ntk: np.ndarray

    @property
    def depths(self) -> np.ndarray:
        return np.arange(self.iterates.size)


def _require_a1(dual: Dual) -> float:
    a1 = dual.a1
    if a1 == 0.0:
        raise NormalizationUndefined("dual has no linear coefficient mass")
    return a1


def normalized_trace(dual: Dual, z: float, depth: int) -> DepthTrace:
    """Trace iterates and both normalized kernels from depth 0 to ``depth``."""
    depth = _check_depth(depth)
    arr, _ = _coerce_z(z)
    zf = float(arr.reshape(()))
    a1 = _require_a1(dual)
    if isinstance(dual, DualSeries):
        vs, Ns, Ps = _kernels.trace_series(dual.coeffs, zf, depth)
    else:
        vs = np.empty(depth + 1)
        Ns = np.empty(depth + 1)
        Ps = np.empty(depth + 1)
        v = N = P = zf
        vs[0] = Ns[0] = Ps[0] = zf
        for L in range(1, depth + 1):
            ratio = float(dual(v)) / (a1 * v) if v > _RATIO_FLOOR else 1.0
            N = N * ratio
            P = (N + P * L * float(dual.deriv(v)) / a1) / (L + 1)
            v = float(dual(v))
            vs[L], Ns[L], Ps[L] = v, N, P
    if not (np.all(np.isfinite(Ns)) and np.all(np.isfinite(Ps))):
        raise NumericalFailure("normalized trace left double range")
    return DepthTrace(z=zf, iterates=vs, normalized_nngp=Ns, normalized_ntk=Ps)


def _guard_singular(dual: Dual) -> None:
    if dual.a1 == 0.0:
        raise NormalizationUndefined("dual has no linear coefficient mass")
    if dual.a0 > 1e-12:
        raise InvalidRegime("normalized depth limit diverges when a0 > 0")


def psi_infinity(dual: Dual, z, rtol: float = 1e-14, max_depth: int = DEFAULT_MAX_DEPTH):
    """Depth-infinity normalized tangent kernel of a singular-kernel dual.

    Evaluated through the geometrically convergent running product for the
    normalized composite, whose limit the normalized tangent kernel shares
    (the trace route approaches the same value only harmonically, which is
    far too slow near the pole).  ``z = 1`` maps to ``+inf``: that is the pole.
    """
    _guard_singular(dual)
    arr, scalar = _coerce_z(z)
    flat = arr.ravel()
    out = np.empty_like(flat)
    at_pole = flat >= 1.0
    out[at_pole] = np.inf
    inner = flat[~at_pole]
    if inner.size:
        if isinstance(dual, DualSeries):
            vals, _, ok = _kernels.psi_product(dual.coeffs, inner, rtol, max_depth)
        else:
            a1 = dual.a1
            v = inner.copy()
            vals = inner.copy()
            ok = np.zeros(inner.size, dtype=bool)
            active = np.ones(inner.size, dtype=bool)
            for _ in range(max_depth):
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = np.where(
                        v > _RATIO_FLOOR,
                        np.asarray(dual(v)) / (a1 * np.where(v > 0, v, 1.0)),
                        1.0,
                    )
                vals = np.where(active, vals * ratio, vals)
                v = np.where(active, np.asarray(dual(v)), v)
                done = active & (ratio - 1.0 < rtol)
                ok |= done
                active &= ~done
                if not active.any():
                    break
        if not ok.all():
            raise NumericalFailure("normalized limit did not converge below the cap")
        out[~at_pole] = vals
    return _ret(out.reshape(arr.shape), scalar)


def psi_trace_estimate(
    dual: Dual,
    z,
    gap_tol: float = 1e-10,
    max_depth: int = DEFAULT_MAX_DEPTH,
):
    """Depth-infinity normalized tangent kernel via the adaptive trace.

    Iterates the depth trace until successive normalized kernel values agree
    to ``gap_tol`` (relative) or the cap is reached, whichever first.  The
    trace approaches its limit like 1/depth, so near ``z = 1`` the cap binds;
    the achieved gap is reported rather than hidden.

    Returns ``(value, achieved_gap, depth_used)`` with array shapes matching
    ``z``.
    """
    _guard_singular(dual)
    arr, scalar = _coerce_z(z)
    flat = arr.ravel()
    if np.any(flat >= 1.0):
        raise ValueError("the adaptive trace is defined for z in [0, 1)")
    if isinstance(dual, DualSeries):
        vals, gaps, depths = _kernels.psi_trace(dual.coeffs, flat, gap_tol, max_depth)
    else:
        a1 = dual.a1
        v = flat.copy()
        N = flat.copy()
        P = flat.copy()
        gaps = np.full(flat.size, np.inf)
        depths = np.zeros(flat.size, dtype=np.int64)
        active = np.ones(flat.size, dtype=bool)
        L = 0
        while L < max_depth and active.any():
            L += 1
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(
                    v > _RATIO_FLOOR,
                    np.asarray(dual(v)) / (a1 * np.where(v > 0, v, 1.0)),
                    1.0,
                )
            N = np.where(active, N * ratio, N)
            Pn = (N + P * L * np.asarray(dual.deriv(v)) / a1) / (L + 1)
            with np.errstate(invalid="ignore", divide="ignore"):
                gap = np.abs(Pn - P) / np.where(Pn != 0.0, Pn, 1.0)
            P = np.where(active, Pn, P)
            gaps = np.where(active, gap, gaps)
            depths[active] = L
            v = np.where(active, np.asarray(dual(v)), v)
            active &= ~(gap < gap_tol)
        vals = P
    if scalar:
        return (
            float(vals.reshape(arr.shape)),
            float(gaps.reshape(arr.shape)),
            int(depths.reshape(arr.shape)),
        )
    return vals.reshape(arr.shape), gaps.reshape(arr.shape), depths.reshape(arr.shape)


# ---------------------------------------------------------------------------
# pole-order estimation
# ---------------------------------------------------------------------------

DEFAULT_EPS_GRID = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class PoleFit:
    """Pole order of ``f`` in ``(1 - z)`` from dyadic ratio probes.

    ``raw_orders[k]`` is the single-scale estimate
    ``-log_base f(1 - base*eps) / f(1 - eps)``; ``order_hat`` extrapolates
    them linearly in ``1/log(1/eps)`` to the zero-epsilon intercept.
    """

    order_hat: float
    base: float
    eps_grid: tuple[float, ...]
    raw_orders: tuple[float, ...]

    @property
    def residuals(self) -> tuple[float, ...]:
        return tuple(abs(r - self.order_hat) for r in self.raw_orders)


def estimate_pole_order(
    f: Callable[[float], float],
    base: float = 2.0,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
) -> PoleFit:
    """Fit the order of a power-law divergence of ``f`` at ``z = 1``."""
    if base <= 1.0:
        raise ValueError("base must exceed 1")
    eps = tuple(float(e) for e in eps_grid)
    if len(eps) < 2 or any(e <= 0.0 or base * e >= 1.0 for e in eps):
        raise ValueError("need at least two epsilons with base*eps < 1")
    log_base = math.log(base)
    raw = []
    for e in eps:
        hi = float(f(1.0 - base * e))
        lo = float(f(1.0 - e))
        if not (math.isfinite(hi) and math.isfinite(lo)) or hi <= 0.0 or lo <= 0.0:
            raise NumericalFailure(f"unusable probe values at eps={e!r}")
        raw.append(-math.log(hi / lo) / log_base)
    t = 1.0 / np.log(1.0 / np.asarray(eps))
    intercept, _slope = np.polynomial.polynomial.polyfit(t, np.asarray(raw), 1)
    return PoleFit(
        order_hat=float(intercept),
        base=base,
        eps_grid=eps,
        raw_orders=tuple(raw),
    )


# ---------------------------------------------------------------------------
# piecewise-linear surrogate map
# ---------------------------------------------------------------------------


def _check_slopes(a: float, b: float) -> float:
    if not (0.0 < a < 1.0 < b):
        raise ValueError("slopes must satisfy 0 < a < 1 < b")
    return (b - 1.0) / (b - a)


def piecewise_linear_iterate(a: float, b: float, z, depth: int):
    """Iterate the two-slope map: slope ``a`` below the crossover, ``b`` above."""
    depth = _check_depth(depth)
    c = _check_slopes(a, b)
    arr, scalar = _coerce_z(z)
    v = arr.copy()
    for _ in range(depth):
        v = np.where(v <= c, a * v, 1.0 - b * (1.0 - v))
    return _ret(v, scalar)


def piecewise_linear_limit(a: float, b: float, z):
    """Limit of the ``a**-depth`` normalized iterates of the two-slope map.

    Below the crossover the limit is ``z`` itself; above, finitely many
    ``b``-steps bring the orbit into the contraction region, after which the
    normalization is exact, so the limit is reached at a computable finite
    depth.  ``z = 1`` is the unstable fixed point and maps to ``+inf``.
    """
    c = _check_slopes(a, b)
    arr, scalar = _coerce_z(z)
    flat = arr.ravel()
    out = np.where(flat <= c, flat, np.inf)
    mid = (flat > c) & (flat < 1.0)
    if np.any(mid):
        zm = flat[mid]
        steps = np.ceil(np.log((1.0 - c) / (1.0 - zm)) / math.log(b))
        entered = 1.0 - np.power(b, steps) * (1.0 - zm)
        # float roundoff in the ceiling can leave the orbit one b-step short
        short = entered > c
        while np.any(short):
            steps = np.where(short, steps + 1.0, steps)
            entered = np.where(short, 1.0 - np.power(b, steps) * (1.0 - zm), entered)
            short = entered > c
        out[mid] = entered * np.power(a, -steps)
    return _ret(out.reshape(arr.shape), scalar)


# ---------------------------------------------------------------------------
# resolvent-power surrogate family
# ---------------------------------------------------------------------------


def _check_alpha_d(alpha: float, d: int) -> float:
    if alpha <= 1.0:
        raise ValueError("alpha must exceed 1")
    if d < 1 or d != int(d):
        raise ValueError("d must be a positive integer")
    return (alpha - 1.0) / alpha


def f_alpha_iterate(alpha: float, d: int, z, depth: int, normalized: bool = True):
    """Iterate ``x -> ((alpha-1)/alpha)**d * x / (1 - x/alpha)**d``.

    With ``normalized=True`` the depth-``L`` iterate is rescaled by
    ``(alpha/(alpha-1))**(d*L)``, accumulated as a running product of the
    bounded per-step factors ``(1 - v/alpha)**-d`` so deep iterates cannot
    underflow.
    """
    depth = _check_depth(depth)
    r = _check_alpha_d(alpha, int(d))
    arr, scalar = _coerce_z(z, upper=1.0 - 1e-15)
    rd = r**d
    v = arr.copy()
    if not normalized:
        for _ in range(depth):
            v = rd * v / (1.0 - v / alpha) ** d
        return _ret(v, scalar)
    g = arr.copy()
    for _ in range(depth):
        factor = (1.0 - v / alpha) ** (-d)
        g = g * factor
        v = rd * v * factor
    return _ret(g, scalar)


def f_alpha_sandwich(alpha: float, d: int, z, depth: int | None = None):
    """Closed-form bounds enclosing the normalized iterate at this depth.

    ``depth=None`` gives the depth-infinity bounds; the upper one then equals
    ``z / (1 - z)**d`` exactly.
    """
    r = _check_alpha_d(alpha, int(d))
    if depth is not None:
        depth = _check_depth(depth)
    arr, scalar = _coerce_z(z, upper=1.0 - 1e-15)
    rd = r**d
    if depth is None:
        s_lower = 1.0 / (1.0 - rd)
        s_upper = 1.0 / (1.0 - r)
    else:
        s_lower = (1.0 - rd**depth) / (1.0 - rd)
        s_upper = (1.0 - r**depth) / (1.0 - r)
    lower = arr / (1.0 - s_lower * arr / alpha) ** d
    upper = arr / (1.0 - s_upper * arr / alpha) ** d
    return _ret(lower, scalar), _ret(upper, scalar)
