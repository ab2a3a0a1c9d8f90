"""Kernel predictors over labeled points on the non-negative sphere orthant.

All predictors map a labeled training set plus query points to hard labels in
``{-1, +1}``, with ``sign(0) = +1`` throughout.  Deep finite-depth kernels
whose raw values underflow are handled in log space: rescaling the Gram
matrix and the query vector by separate positive constants cannot change any
prediction, so each is normalized by its own largest entry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .depth import ntk_recursion, psi_infinity
from .dual import Dual, DualSeries
from .errors import (
    IllConditioned,
    MalformedDataset,
    NumericalFailure,
    SingularStructure,
    UnsupportedLimit,
)

_CASE_TOL = 1e-8
_UNIT_TOL = 1e-12
#: escalating absolute jitter levels, applied at the Gram's diagonal scale
_JITTERS = (0.0, 1e-12, 1e-10, 1e-8)


def _validate_points(points: np.ndarray, what: str = "points") -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise MalformedDataset(f"{what} must be a 2-D array with at least 2 columns")
    for i, row in enumerate(pts):
        if not np.all(np.isfinite(row)):
            raise MalformedDataset("non-finite coordinate", row=i)
        if np.any(row < -_UNIT_TOL):
            raise MalformedDataset("negative coordinate", row=i)
        norm = float(np.linalg.norm(row))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise MalformedDataset(f"norm {norm!r} is not 1", row=i)
    return np.clip(pts, 0.0, None)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Unit points in the non-negative orthant with labels in {-1, +1}."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        pts = _validate_points(self.points)
        labels = np.asarray(self.labels, dtype=np.float64)
        if labels.ndim != 1 or labels.shape[0] != pts.shape[0]:
            raise MalformedDataset("labels must be 1-D and match the point count")
        for i, lab in enumerate(labels):
            if lab not in (-1.0, 1.0):
                raise MalformedDataset(f"label {lab!r} not in {{-1, +1}}", row=i)
        pts.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        """Intrinsic sphere dimension (ambient coordinates minus one)."""
        return self.points.shape[1] - 1


def _inner(queries: np.ndarray, train: LabeledDataset) -> np.ndarray:
    q = _validate_points(queries, "queries")
    if q.shape[1] != train.points.shape[1]:
        raise MalformedDataset("query dimension does not match the training set")
    return np.clip(q @ train.points.T, 0.0, 1.0)


def _sign(scores: np.ndarray) -> np.ndarray:
    return np.where(scores >= 0.0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# kernel handles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelHandle:
    """Evaluable inner-product kernel ``z -> K(z)`` on [0, 1].

    ``diag`` is the value at ``z = 1`` (``inf`` marks a singular limit whose
    interpolating machine degenerates to the smoother).  ``log_evaluable``
    handles survive depths at which the raw values underflow.
    """

    name: str
    dual: Optional[Dual]
    depth: Optional[int]

    def eval(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_eval(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def log_evaluable(self) -> bool:
        return False

    @property
    def diag(self) -> float:
        return float(self.eval(np.array([1.0]))[0])


class FiniteDepthNtk(KernelHandle):
    def eval(self, z):
        return np.asarray(ntk_recursion(self.dual, z, self.depth))

    def log_eval(self, z):
        return _kernels.log_ntk_series(
            self.dual.coeffs, np.asarray(z, dtype=np.float64).ravel(), self.depth
        ).reshape(np.shape(z))

    @property
    def log_evaluable(self) -> bool:
        return isinstance(self.dual, DualSeries) and self.dual.a0 <= _CASE_TOL


class PsiLimitKernel(KernelHandle):
    def eval(self, z):
        return np.asarray(psi_infinity(self.dual, z))


class HilbertKernel(KernelHandle):
    """Inverse distance to the power of the data dimension, chordally."""

    def eval(self, z):
        z = np.asarray(z, dtype=np.float64)
        d = self.depth  # reused slot: the distance power
        with np.errstate(divide="ignore"):
            return np.where(z >= 1.0, np.inf, (2.0 * (1.0 - z)) ** (-d / 2.0))


def deep_ntk_kernel(dual: Dual, depth: Optional[int] = None) -> KernelHandle:
    """Kernel handle for the depth-``depth`` tangent kernel of a dual.

    ``depth=None`` requests the depth-infinity normalized limit, which exists
    as an evaluable kernel only in the singular-kernel regime; nearest
    neighbor and majority vote are the limiting predictors of the other two
    regimes and have dedicated entry points.
    """
    if depth is not None:
        return FiniteDepthNtk(name=f"ntk_depth_{depth}", dual=dual, depth=int(depth))
    if dual.a0 > _CASE_TOL or dual.a1 <= _CASE_TOL:
        raise UnsupportedLimit(
            "depth-infinity kernel exists only for singular-kernel duals; "
            "use one_nn_predict or majority_vote_predict instead"
        )
    return PsiLimitKernel(name="ntk_depth_inf", dual=dual, depth=None)


def hilbert_kernel(distance_power: int) -> KernelHandle:
    if distance_power < 1:
        raise ValueError("distance power must be a positive integer")
    return HilbertKernel(name=f"hilbert_{distance_power}", dual=None, depth=int(distance_power))


# ---------------------------------------------------------------------------
# predictors
# ---------------------------------------------------------------------------


def smoother_scores(weights: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Label-weighted sums, with divergent-weight rows decided by the hits.

    ``weights`` is a (queries, train) kernel-value matrix; ``inf`` entries
    mark exact inner-product hits on a singular kernel and override the rest
    of their row.
    """
    W = np.asarray(weights, dtype=np.float64)
    if np.any(np.isnan(W)):
        raise NumericalFailure("kernel produced NaN weights")
    hits = np.isinf(W)
    scores = np.where(hits, 0.0, W) @ labels
    hit_rows = hits.any(axis=1)
    if np.any(hit_rows):
        scores[hit_rows] = (hits[hit_rows] * labels).sum(axis=1)
    return scores


def kernel_smoother_predict(
    kernel: KernelHandle, train: LabeledDataset, queries: np.ndarray
) -> np.ndarray:
    """Sign of the kernel-weighted label sum at each query."""
    Z = _inner(queries, train)
    W = np.asarray(kernel.eval(Z), dtype=np.float64)
    return _sign(smoother_scores(W, train.labels))


def one_nn_predict(train: LabeledDataset, queries: np.ndarray) -> np.ndarray:
    """Label of the nearest training point; ties go to the lowest index."""
    Z = _inner(queries, train)
    return train.labels[np.argmax(Z, axis=1)]


def majority_vote_predict(train: LabeledDataset, n_queries: int) -> np.ndarray:
    """The constant majority label, ties to +1."""
    if n_queries < 0:
        raise ValueError("n_queries must be non-negative")
    vote = 1.0 if float(train.labels.sum()) >= 0.0 else -1.0
    return np.full(n_queries, vote)


def hilbert_smoother_predict(
    train: LabeledDataset, queries: np.ndarray, distance_power: Optional[int] = None
) -> np.ndarray:
    """Inverse-distance-power smoother; the power defaults to the data dimension."""
    d = train.dim if distance_power is None else int(distance_power)
    return kernel_smoother_predict(hilbert_kernel(d), train, queries)


def _factor_with_jitter(G: np.ndarray, ridge: float):
    scale = float(np.mean(np.diag(G)))
    if not np.isfinite(scale) or scale <= 0.0:
        raise IllConditioned("Gram diagonal is not positive and finite")
    n = G.shape[0]
    for j in _JITTERS:
        try:
            return cho_factor(G + (ridge + j * scale) * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise IllConditioned("Gram factorization failed at maximal jitter")


def kernel_machine_predict(
    kernel: KernelHandle,
    train: LabeledDataset,
    queries: np.ndarray,
    ridge: float = 0.0,
) -> np.ndarray:
    """Sign of the interpolating (optionally ridged) kernel machine.

    Divergent-diagonal kernels (depth-infinity singular limits, inverse
    distance powers) are dispatched to the smoother: with the Gram diagonal
    dominating every off-diagonal entry, the machine's limit is exactly the
    kernel-weighted vote.
    """
    if ridge < 0.0:
        raise ValueError("ridge must be non-negative")
    if np.isinf(kernel.diag):
        return kernel_smoother_predict(kernel, train, queries)
    Z = _inner(queries, train)
    G_in = np.clip(train.points @ train.points.T, 0.0, 1.0)
    # the self inner product is 1 by definition; the matmul rounds it a few
    # ulps short, which a kernel with an unstable fixed point at 1 amplifies
    # by orders of magnitude
    np.fill_diagonal(G_in, 1.0)
    if kernel.log_evaluable:
        lG = np.asarray(kernel.log_eval(G_in))
        l_diag = float(kernel.log_eval(np.array([1.0]))[0])
        G = np.exp(lG - l_diag)
        np.fill_diagonal(G, 1.0)
        lk = np.asarray(kernel.log_eval(Z))
        shift = lk.max(axis=1, keepdims=True)
        dead = ~np.isfinite(shift)  # query orthogonal to every training point
        k = np.exp(lk - np.where(dead, 0.0, shift))
        ridge_eff = float(np.exp(np.log(ridge) - l_diag)) if ridge > 0.0 else 0.0
    else:
        G = np.asarray(kernel.eval(G_in), dtype=np.float64)
        k = np.asarray(kernel.eval(Z), dtype=np.float64)
        ridge_eff = ridge
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(k))):
        raise NumericalFailure("kernel values left double range")
    cf = _factor_with_jitter(G, ridge_eff)
    alpha = cho_solve(cf, k.T)
    return _sign(train.labels @ alpha)


# ---------------------------------------------------------------------------
# structured Gram limits
# ---------------------------------------------------------------------------


def structured_inverse(c_diag: float, c_off: float, n: int) -> np.ndarray:
    """Closed-form inverse of ``(c_diag - c_off) I + c_off J`` of size n.

    This is the Gram shape every forgetting (majority-vote regime) kernel
    approaches with depth: constant off-diagonal, constant diagonal.
    """
    if n < 1:
        raise ValueError("n must be positive")
    gap = c_diag - c_off
    if gap == 0.0 or gap + c_off * n == 0.0:
        raise SingularStructure(
            f"structured matrix with diag {c_diag!r}, off {c_off!r}, n={n} is singular"
        )
    eye_term = 1.0 / gap
    j_term = c_off / (gap * (gap + c_off * n))
    return eye_term * np.eye(n) - j_term * np.ones((n, n))


def gram_matrix(
    kernel: KernelHandle, points: np.ndarray, normalized: bool = True
) -> np.ndarray:
    """Pairwise kernel matrix; ``normalized`` rescales the diagonal to 1.

    Uses the log route when available so deep singular/nearest-neighbor
    kernels keep their off-diagonal decay resolvable instead of underflowing.
    """
    pts = _validate_points(points)
    Z = np.clip(pts @ pts.T, 0.0, 1.0)
    np.fill_diagonal(Z, 1.0)  # exact self correlation, see kernel_machine_predict
    if not normalized:
        return np.asarray(kernel.eval(Z), dtype=np.float64)
    if kernel.log_evaluable:
        lG = np.asarray(kernel.log_eval(Z))
        l_diag = float(kernel.log_eval(np.array([1.0]))[0])
        G = np.exp(lG - l_diag)
    else:
        G = np.asarray(kernel.eval(Z), dtype=np.float64)
        G = G / kernel.diag
    np.fill_diagonal(G, 1.0)
    return G
