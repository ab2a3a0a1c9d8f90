"""Dual activations, their series coefficients, taxonomy, and fixed points.

A *dual* maps the inner product of two unit inputs to the expected product of
activation outputs under correlated standard Gaussians.  For a unit-variance
activation it is a power series with non-negative coefficients summing to one;
the coefficient of ``z**i`` is the squared weight of the i-th normalized
probabilists' Hermite polynomial in the activation's expansion.

Three regimes follow from the leading coefficients (constant mass ``a0``,
linear mass ``a1``):

* ``a0 = 0 < a1``  -- depth-normalized kernels develop a pole at ``z = 1``
  (singular-kernel smoothing),
* ``a0 = a1 = 0``  -- depth iteration collapses onto the nearest neighbor,
* ``a0 > 0``       -- depth iteration forgets the inputs (majority vote),
  further split into ordered/chaotic/critical by the slope at ``z = 1``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf as _erf

from . import _kernels
from .errors import (
    InvalidRegime,
    NumericalFailure,
    TruncationWarning,
    UnknownPreset,
)

#: negatives above this threshold are treated as quadrature noise
COEFF_CLAMP = -1e-12
#: total coefficient mass (plus tail) must be 1 within this
MASS_TOL = 1e-8
#: tail mass beyond this triggers a TruncationWarning
TAIL_WARN = 0.01

DEFAULT_MAX_DEGREE = 30
#: numpy's hermegauss node solver overflows past this order
MAX_QUAD_ORDER = 350
_ROOT_2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# representations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DualSeries:
    """Power-series dual: ``sum(coeffs[i] * z**i)`` plus untracked tail mass.

    Coefficients are validated on construction: entries in ``[COEFF_CLAMP, 0)``
    are clamped to zero, anything more negative raises, and the total mass
    (including ``tail_mass``) must be 1 within ``MASS_TOL``.
    """

    coeffs: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64).copy()
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coeffs must be a non-empty 1-D array")
        if not np.all(np.isfinite(c)) or not math.isfinite(self.tail_mass):
            raise NumericalFailure("non-finite dual series data")
        neg = c < 0.0
        if np.any(c < COEFF_CLAMP):
            raise NumericalFailure(
                f"coefficient below clamp threshold: min={c.min():.3e}"
            )
        c[neg] = 0.0
        if self.tail_mass < 0.0 or self.tail_mass > 1.0:
            raise ValueError("tail_mass must lie in [0, 1]")
        mass = float(c.sum()) + self.tail_mass
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"series mass {mass!r} is not 1 within {MASS_TOL}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        if self.tail_mass > TAIL_WARN:
            warnings.warn(
                f"tail mass {self.tail_mass:.4f} exceeds {TAIL_WARN}",
                TruncationWarning,
                stacklevel=2,
            )

    # -- evaluation ---------------------------------------------------------

    def __call__(self, z):
        z_arr = np.asarray(z, dtype=np.float64)
        out = _kernels.eval_series(self.coeffs, z_arr.ravel()).reshape(z_arr.shape)
        return float(out) if out.ndim == 0 else out

    def deriv(self, z):
        dc = _kernels._deriv_coeffs(self.coeffs)
        z_arr = np.asarray(z, dtype=np.float64)
        out = _kernels.eval_series(dc, z_arr.ravel()).reshape(z_arr.shape)
        return float(out) if out.ndim == 0 else out

    # -- leading structure --------------------------------------------------

    @property
    def a0(self) -> float:
        return float(self.coeffs[0])

    @property
    def a1(self) -> float:
        return float(self.coeffs[1]) if self.coeffs.size > 1 else 0.0

    @property
    def bprime(self) -> float:
        return float(np.dot(self.coeffs, np.arange(self.coeffs.size)))

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {"coeffs": [float(a) for a in self.coeffs], "tail_mass": self.tail_mass}
        )

    @classmethod
    def from_json(cls, text: Union[str, dict]) -> "DualSeries":
        obj = json.loads(text) if isinstance(text, str) else text
        return cls(
            coeffs=np.asarray(obj["coeffs"], dtype=np.float64),
            tail_mass=float(obj.get("tail_mass", 0.0)),
        )


@dataclass(frozen=True, eq=False)
class ClosedFormDual:
    """Dual with an exact non-polynomial closed form (never series-truncated)."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    dfn: Callable[[np.ndarray], np.ndarray]
    a0: float
    a1: float
    bprime: float

    def __call__(self, z):
        z_arr = np.asarray(z, dtype=np.float64)
        out = self.fn(z_arr)
        return float(out) if np.ndim(z) == 0 else out

    def deriv(self, z):
        z_arr = np.asarray(z, dtype=np.float64)
        out = self.dfn(z_arr)
        return float(out) if np.ndim(z) == 0 else out

    @property
    def tail_mass(self) -> float:
        return 0.0


#: anything with eval/deriv and leading-structure attributes
Dual = Union[DualSeries, ClosedFormDual]


@dataclass(frozen=True)
class ActivationSpec:
    """An activation to be expanded: a preset name or a sampled callable.

    ``dimension`` feeds dimension-parameterized presets and is otherwise a
    hint only.  Callables must be vectorized over numpy arrays and have a
    finite, nonzero second moment under the standard Gaussian.
    """

    source: Union[str, Callable[[np.ndarray], np.ndarray]]
    dimension: int | None = None


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


_SINE_C = 2.0 * math.e / (math.e**2 - 1.0)
_ERF_C = 1.0 / math.asin(2.0 / 3.0)


def _relu_dual(z):
    z = np.clip(z, -1.0, 1.0)
    return (np.sqrt(1.0 - z * z) + (math.pi - np.arccos(z)) * z) / math.pi


def _relu_dual_deriv(z):
    z = np.clip(z, -1.0, 1.0)
    return (math.pi - np.arccos(z)) / math.pi


def _corollary_coeffs(d: int) -> np.ndarray:
    if d == 1:
        c = np.zeros(8)
        c[1] = 0.5
        c[7] = 0.5
        return c
    s = 2.0 ** (-d / 2.0)
    return np.array([0.0, s, 1.0 - 2.0 * s, s])


def preset(name: str, d: int | None = None) -> Dual:
    """Construct a named dual exactly.

    Polynomial duals come back as :class:`DualSeries` with exact coefficients;
    ``relu``, ``normalized_sine`` and ``normalized_erf`` as closed forms.
    ``corollary_d`` requires the target dimension ``d >= 1``.
    """
    if name == "corollary_d":
        if d is None or d < 1 or d != int(d):
            raise ValueError("corollary_d requires an integer dimension d >= 1")
        return DualSeries(_corollary_coeffs(int(d)))
    if name == "hermite2":
        return DualSeries(np.array([0.0, 0.0, 1.0]))
    if name == "linear":
        return DualSeries(np.array([0.0, 1.0]))
    if name == "relu":
        return ClosedFormDual(
            name="relu",
            fn=_relu_dual,
            dfn=_relu_dual_deriv,
            a0=1.0 / math.pi,
            a1=0.5,
            bprime=1.0,
        )
    if name == "normalized_sine":
        return ClosedFormDual(
            name="normalized_sine",
            fn=lambda z: _SINE_C * np.sinh(z),
            dfn=lambda z: _SINE_C * np.cosh(z),
            a0=0.0,
            a1=_SINE_C,
            bprime=_SINE_C * math.cosh(1.0),
        )
    if name == "normalized_erf":
        return ClosedFormDual(
            name="normalized_erf",
            fn=lambda z: _ERF_C * np.arcsin(2.0 * z / 3.0),
            dfn=lambda z: _ERF_C * (2.0 / 3.0) / np.sqrt(1.0 - (4.0 / 9.0) * z * z),
            a0=0.0,
            a1=_ERF_C * 2.0 / 3.0,
            bprime=_ERF_C * 2.0 / math.sqrt(5.0),
        )
    raise UnknownPreset(name)


PRESET_NAMES = (
    "corollary_d",
    "hermite2",
    "relu",
    "normalized_sine",
    "normalized_erf",
    "linear",
)


def _normalized_hermite_table(x: np.ndarray, max_degree: int) -> np.ndarray:
    """Rows i = 0..max_degree of He_i(x)/sqrt(i!) via the stable recurrence."""
    table = np.empty((max_degree + 1, x.size))
    he_prev = np.ones_like(x)
    table[0] = he_prev
    if max_degree == 0:
        return table
    he = x.copy()
    table[1] = he
    for i in range(1, max_degree):
        he_next = x * he - i * he_prev
        he_prev, he = he, he_next
        table[i + 1] = he_next
    # normalize in place: divide row i by sqrt(i!)
    fact = 1.0
    for i in range(1, max_degree + 1):
        fact *= i
        table[i] /= math.sqrt(fact)
    return table


def preset_primal(name: str, d: int | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Unit-variance activation whose dual is ``preset(name, d)``.

    Used to cross-check the quadrature pipeline against exact presets.
    """
    if name == "corollary_d":
        if d is None or d < 1:
            raise ValueError("corollary_d requires d >= 1")
        if d == 1:

            def phi(x):
                x = np.asarray(x, dtype=np.float64)
                h1 = x
                he7 = x**7 - 21.0 * x**5 + 105.0 * x**3 - 105.0 * x
                h7 = he7 / math.sqrt(float(math.factorial(7)))
                return (h1 + h7) / math.sqrt(2.0)

            return phi

        s4 = 2.0 ** (-d / 4.0)
        w2 = math.sqrt(1.0 - 2.0 ** (1.0 - d / 2.0))

        def phi(x):
            x = np.asarray(x, dtype=np.float64)
            h1 = x
            h2 = (x * x - 1.0) / math.sqrt(2.0)
            h3 = (x**3 - 3.0 * x) / math.sqrt(6.0)
            return s4 * h3 + w2 * h2 + s4 * h1

        return phi
    if name == "hermite2":
        return lambda x: (np.asarray(x) ** 2 - 1.0) / math.sqrt(2.0)
    if name == "relu":
        return lambda x: math.sqrt(2.0) * np.maximum(np.asarray(x), 0.0)
    if name == "normalized_sine":
        return lambda x: math.sqrt(_SINE_C) * np.sin(np.asarray(x))
    if name == "normalized_erf":
        return lambda x: math.sqrt(_ERF_C) * _erf(np.asarray(x))
    if name == "linear":
        return lambda x: np.asarray(x, dtype=np.float64)
    raise UnknownPreset(name)


# ---------------------------------------------------------------------------
# quadrature expansion
# ---------------------------------------------------------------------------


def hermite_dual(
    spec: ActivationSpec,
    max_degree: int = DEFAULT_MAX_DEGREE,
    quad_order: int | None = None,
) -> DualSeries:
    """Expand an activation into its dual series by Gauss-Hermite quadrature.

    Coefficient ``i`` is the squared projection of the (variance-normalized)
    activation onto the i-th normalized probabilists' Hermite polynomial;
    unrecovered mass goes to ``tail_mass``.
    """
    if quad_order is None:
        quad_order = 2 * max_degree
    if quad_order < 2 * max_degree:
        raise ValueError("quad_order must be at least 2 * max_degree")
    if quad_order > MAX_QUAD_ORDER:
        raise ValueError(
            f"quad_order {quad_order} exceeds {MAX_QUAD_ORDER}; the node/weight "
            "recurrence overflows beyond that"
        )
    if max_degree < 1:
        raise ValueError("max_degree must be at least 1")

    phi = (
        preset_primal(spec.source, spec.dimension)
        if isinstance(spec.source, str)
        else spec.source
    )
    nodes, weights = np.polynomial.hermite_e.hermegauss(quad_order)
    vals = np.asarray(phi(nodes), dtype=np.float64)
    if vals.shape != nodes.shape or not np.all(np.isfinite(vals)):
        raise NumericalFailure("activation returned non-finite or misshaped values")

    second_moment = float(weights @ (vals * vals)) / _ROOT_2PI
    if not math.isfinite(second_moment) or second_moment <= 0.0:
        raise NumericalFailure(f"second moment {second_moment!r} unusable")

    herm = _normalized_hermite_table(nodes, max_degree)
    proj = herm @ (weights * vals) / _ROOT_2PI
    coeffs = proj * proj / second_moment

    tail = 1.0 - float(coeffs.sum())
    if tail < -MASS_TOL:
        raise NumericalFailure(
            f"recovered mass exceeds the second moment by {-tail:.3e}"
        )
    return DualSeries(coeffs=coeffs, tail_mass=max(tail, 0.0))


# ---------------------------------------------------------------------------
# moments and taxonomy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Moments:
    """Leading structure of a dual: value at 0, slope at 0, slope at 1.

    For truncated series ``bprime`` is a lower bound whenever tail mass is
    unaccounted (flagged by ``bprime_is_lower_bound``).
    """

    a0: float
    a1: float
    bprime: float
    tail_mass: float = 0.0

    @property
    def bprime_is_lower_bound(self) -> bool:
        return self.tail_mass > 0.0


def moments(dual: Dual) -> Moments:
    return Moments(
        a0=dual.a0, a1=dual.a1, bprime=dual.bprime, tail_mass=dual.tail_mass
    )


class KernelCase(Enum):
    SINGULAR_KERNEL = "singular_kernel"
    ONE_NN = "one_nn"
    MAJORITY_VOTE = "majority_vote"


class Phase(Enum):
    ORDERED = "ordered"
    CHAOTIC = "chaotic"
    EDGE_OF_CHAOS = "edge_of_chaos"


@dataclass(frozen=True)
class TaxonomyVerdict:
    case: KernelCase
    phase: Phase | None
    pole_order_z: float | None
    pole_order_dist: float | None
    optimal_for_dim: int | None
    moments: Moments


def classify_taxonomy(dual: Dual, tol: float = 1e-8) -> TaxonomyVerdict:
    """Place a dual in the smoothing taxonomy from its leading coefficients.

    For the singular-kernel case the depth-normalized kernel develops a pole
    of order ``-log(a1)/log(bprime)`` in ``(1 - z)``; the matching
    distance-space order is twice that, and when it sits within ``tol`` of an
    integer the dual is flagged as risk-optimal for data of that dimension.
    """
    m = moments(dual)
    if m.a0 <= tol and m.a1 <= tol:
        return TaxonomyVerdict(KernelCase.ONE_NN, None, None, None, None, m)
    if m.a0 <= tol:
        if m.bprime <= 1.0:
            raise InvalidRegime(
                f"pole order undefined: slope at 1 is {m.bprime!r} <= 1"
            )
        pole_z = -math.log(m.a1) / math.log(m.bprime)
        pole_dist = 2.0 * pole_z
        nearest = round(pole_dist)
        optimal = int(nearest) if nearest >= 1 and abs(pole_dist - nearest) <= tol else None
        return TaxonomyVerdict(
            KernelCase.SINGULAR_KERNEL, None, pole_z, pole_dist, optimal, m
        )
    if m.bprime > 1.0 + tol:
        phase = Phase.CHAOTIC
    elif m.bprime < 1.0 - tol:
        phase = Phase.ORDERED
    else:
        phase = Phase.EDGE_OF_CHAOS
    return TaxonomyVerdict(KernelCase.MAJORITY_VOTE, phase, None, None, None, m)


# ---------------------------------------------------------------------------
# fixed points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPoint:
    location: float
    derivative: float

    @property
    def stable(self) -> bool:
        return self.derivative < 1.0

    @property
    def ntk_limit(self) -> float | None:
        """Limiting kernel value ``c / (1 - slope)`` at a stable fixed point."""
        if not self.stable:
            return None
        return self.location / (1.0 - self.derivative)


@dataclass(frozen=True)
class FixedPointReport:
    points: tuple[FixedPoint, ...]
    continuum: bool

    @property
    def interior_stable(self) -> FixedPoint | None:
        for p in self.points:
            if 0.0 < p.location < 1.0 and p.stable:
                return p
        return None


def fixed_points(dual: Dual, grid_size: int = 2048) -> FixedPointReport:
    """All fixed points of the dual on [0, 1] by sign-change bisection.

    ``z = 1`` is always reported.  The identity dual has every point fixed and
    is flagged as a continuum instead of being enumerated.
    """
    grid = np.linspace(0.0, 1.0, grid_size + 1)
    gap = np.asarray(dual(grid)) - grid
    if np.max(np.abs(gap)) < 1e-14:
        one = FixedPoint(1.0, float(dual.deriv(1.0)))
        return FixedPointReport(points=(one,), continuum=True)

    locs: list[float] = []
    for k, g in enumerate(gap):
        if abs(g) < 1e-13:
            locs.append(float(grid[k]))
    f = lambda c: float(dual(c)) - c
    for k in range(grid_size):
        if gap[k] == 0.0 or gap[k + 1] == 0.0:
            continue
        if np.sign(gap[k]) != np.sign(gap[k + 1]):
            locs.append(brentq(f, grid[k], grid[k + 1], xtol=1e-12))

    locs.append(1.0)
    locs.sort()
    dedup: list[float] = []
    for c in locs:
        if not dedup or abs(c - dedup[-1]) > 1e-9:
            dedup.append(c)
        elif abs(c - 1.0) < 1e-15:
            dedup[-1] = 1.0
    points = tuple(FixedPoint(c, float(dual.deriv(c))) for c in dedup)
    return FixedPointReport(points=points, continuum=False)
