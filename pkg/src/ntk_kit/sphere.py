"""Sampling, coordinates, and exact oracles on the sphere's non-negative orthant.

Points live on the unit sphere in ``R**(d+1)`` with all coordinates
non-negative, parameterized by ``d`` hyperspherical angles in
``[0, pi/2]**d``.  Class-conditional distributions are uniform densities over
axis-aligned angle boxes, which keeps every posterior piecewise constant and
the optimal risk a closed-form box-volume expression.

Randomness: every sampling operation draws from its own child generator,
derived from ``(seed, operation-tag)`` via a seed sequence whose spawn key is
the CRC-32 of each tag.  Identical seeds therefore reproduce identical
datasets regardless of call order, and distinct operations never share a
stream.
"""

from __future__ import annotations

import csv
import logging
import math
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .classify import LabeledDataset
from .errors import MalformedDataset, SpecInvalid

logger = logging.getLogger(__name__)

HALF_PI = math.pi / 2.0


def stream(seed: int, *tags) -> np.random.Generator:
    """Child generator for one operation under one root seed."""
    key = tuple(zlib.crc32(str(t).encode("utf-8")) for t in tags)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# coordinates
# ---------------------------------------------------------------------------


def angles_to_point(angles: np.ndarray) -> np.ndarray:
    """Map angle rows in ``[0, pi/2]**d`` to unit points in ``R**(d+1)``."""
    ang = np.atleast_2d(np.asarray(angles, dtype=np.float64))
    if np.any(ang < -1e-12) or np.any(ang > HALF_PI + 1e-12):
        raise ValueError("angles must lie in [0, pi/2]")
    ang = np.clip(ang, 0.0, HALF_PI)
    n, d = ang.shape
    out = np.empty((n, d + 1))
    running_sin = np.ones(n)
    for k in range(d):
        out[:, k] = running_sin * np.cos(ang[:, k])
        running_sin = running_sin * np.sin(ang[:, k])
    out[:, d] = running_sin
    if np.ndim(angles) == 1:
        return out[0]
    return out


def point_to_angles(points: np.ndarray) -> np.ndarray:
    """Inverse of :func:`angles_to_point` for non-negative unit points.

    Stable at the poles: once the trailing coordinate block vanishes the
    remaining angles are zero by convention.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if np.any(pts < -1e-12):
        raise ValueError("points must be non-negative")
    pts = np.clip(pts, 0.0, None)
    n, amb = pts.shape
    d = amb - 1
    ang = np.empty((n, d))
    # tail[k] = norm of coordinates k..d
    sq = pts * pts
    tail = np.sqrt(np.cumsum(sq[:, ::-1], axis=1)[:, ::-1])
    for k in range(d):
        ang[:, k] = np.arctan2(tail[:, k + 1], pts[:, k])
    if np.ndim(points) == 1:
        return ang[0]
    return ang


def sample_uniform(d: int, n: int, seed: int) -> np.ndarray:
    """Uniform points on the orthant: folded Gaussians, normalized."""
    if d < 1 or n < 0:
        raise ValueError("need d >= 1 and n >= 0")
    rg = stream(seed, "uniform_orthant", d)
    x = np.abs(rg.standard_normal((n, d + 1)))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / norms


# ---------------------------------------------------------------------------
# mixtures of angle boxes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AngularBox:
    """Axis-aligned box in angle space carrying a uniform density."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise SpecInvalid("box bounds must be equal-length, non-empty tuples")
        for a, b in zip(lo, hi):
            if not (0.0 <= a < b <= HALF_PI + 1e-12):
                raise SpecInvalid(f"box side [{a}, {b}] invalid within [0, pi/2]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def contains(self, angles: np.ndarray) -> np.ndarray:
        ang = np.atleast_2d(angles)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((ang >= lo) & (ang <= hi), axis=1)

    def density(self, angles: np.ndarray) -> np.ndarray:
        """Uniform density w.r.t. Lebesgue measure on angle space."""
        return self.contains(angles) / self.volume

    @property
    def density_bound(self) -> float:
        """Supremum of the density; the rejection envelope over the box."""
        return 1.0 / self.volume

    def overlap_volume(self, other: "AngularBox") -> float:
        lo = np.maximum(np.asarray(self.lo), np.asarray(other.lo))
        hi = np.minimum(np.asarray(self.hi), np.asarray(other.hi))
        return float(np.prod(np.clip(hi - lo, 0.0, None)))

    def sample_angles(self, rg: np.random.Generator, n: int) -> np.ndarray:
        """Rejection-sample ``n`` angle rows against the uniform envelope.

        For a uniform box the envelope is exact, so every proposal is
        accepted; the audit still guards descriptors whose density exceeds
        their declared bound.
        """
        if n < 0:
            raise ValueError("n must be non-negative")
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        bound = self.density_bound
        rows = [np.empty((0, self.dim))]
        need = n
        proposed = 0
        while need > 0:
            cand = lo + (hi - lo) * rg.random((need, self.dim))
            dens = self.density(cand)
            if np.any(dens > bound * (1.0 + 1e-12)):
                raise SpecInvalid("density exceeds its declared envelope bound")
            accept = rg.random(need) * bound < dens
            rows.append(cand[accept])
            proposed += need
            need -= int(accept.sum())
        out = np.concatenate(rows, axis=0)
        if proposed:
            logger.debug(
                "box rejection sampling: %d/%d accepted (rate %.3f)",
                n,
                proposed,
                n / proposed,
            )
        return out


@dataclass(frozen=True)
class MixtureSpec:
    """Two-class mixture: label +1 with probability ``prior_pos``, each class
    uniform over its angle box."""

    dim: int
    prior_pos: float
    box_pos: AngularBox
    box_neg: AngularBox
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise SpecInvalid("dim must be >= 1")
        if not (0.0 <= self.prior_pos <= 1.0):
            raise SpecInvalid("prior_pos must lie in [0, 1]")
        if self.box_pos.dim != self.dim or self.box_neg.dim != self.dim:
            raise SpecInvalid("box dimensions must match the mixture dimension")


def sample_mixture(
    spec: MixtureSpec, n: int, seed: Optional[int] = None
) -> LabeledDataset:
    """Draw a labeled dataset from the mixture; deterministic per seed."""
    if n < 0:
        raise ValueError("n must be non-negative")
    root = spec.seed if seed is None else seed
    rg = stream(root, "mixture_sample", spec.dim, n)
    labels = np.where(rg.random(n) < spec.prior_pos, 1.0, -1.0)
    angles = np.empty((n, spec.dim))
    pos = labels == 1.0
    n_pos = int(pos.sum())
    # positive-class draws first, then negative: order is part of the stream contract
    angles[pos] = spec.box_pos.sample_angles(rg, n_pos)
    angles[~pos] = spec.box_neg.sample_angles(rg, n - n_pos)
    return LabeledDataset(points=angles_to_point(angles), labels=labels)


# ---------------------------------------------------------------------------
# optimal-rule oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BayesOracle:
    """Optimal decision rule and risk for a two-box mixture."""

    spec: MixtureSpec

    def decide(self, points: np.ndarray) -> np.ndarray:
        """Posterior-mode label at each point, ties to +1."""
        ang = np.atleast_2d(point_to_angles(points))
        p = self.spec.prior_pos
        margin = p * self.spec.box_pos.density(ang) - (1.0 - p) * self.spec.box_neg.density(ang)
        return np.where(margin >= 0.0, 1.0, -1.0)

    def exact_risk(self) -> float:
        """Closed-form optimal risk from box-overlap volumes."""
        p = self.spec.prior_pos
        v_pos = self.spec.box_pos.volume
        v_neg = self.spec.box_neg.volume
        overlap = self.spec.box_pos.overlap_volume(self.spec.box_neg)
        return min(p / v_pos, (1.0 - p) / v_neg) * overlap

    def mc_risk(self, n_samples: int, seed: Optional[int] = None) -> tuple[float, float]:
        """Monte Carlo estimate of the minimal posterior mass, with its SE."""
        if n_samples < 2:
            raise ValueError("need at least 2 samples")
        root = self.spec.seed if seed is None else seed
        data = sample_mixture(self.spec, n_samples, seed=stream(root, "mc_risk").integers(2**63))
        ang = point_to_angles(data.points)
        p = self.spec.prior_pos
        f_pos = p * self.spec.box_pos.density(ang)
        f_neg = (1.0 - p) * self.spec.box_neg.density(ang)
        total = f_pos + f_neg
        r = np.minimum(f_pos, f_neg) / np.where(total > 0.0, total, 1.0)
        est = float(np.mean(r))
        se = float(np.std(r, ddof=1) / math.sqrt(n_samples))
        return est, se


def bayes_oracle(spec: MixtureSpec) -> BayesOracle:
    return BayesOracle(spec=spec)


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


def save_dataset(dataset: LabeledDataset, path) -> None:
    """Write ``x0..xd,label`` CSV with round-trip-exact coordinates."""
    amb = dataset.points.shape[1]
    header = [f"x{k}" for k in range(amb)] + ["label"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, lab in zip(dataset.points, dataset.labels):
            writer.writerow([f"{v:.17g}" for v in row] + [str(int(lab))])


def load_dataset(path) -> LabeledDataset:
    """Read a dataset CSV, re-validating every row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedDataset("empty file") from None
        amb = len(header) - 1
        expected = [f"x{k}" for k in range(amb)] + ["label"]
        if amb < 2 or header != expected:
            raise MalformedDataset(f"bad header {header!r}")
        points = []
        labels = []
        for i, row in enumerate(reader):
            if len(row) != amb + 1:
                raise MalformedDataset(f"expected {amb + 1} fields", row=i)
            try:
                points.append([float(v) for v in row[:-1]])
                labels.append(float(int(row[-1])))
            except ValueError:
                raise MalformedDataset(f"unparseable row {row!r}", row=i) from None
    pts = np.asarray(points, dtype=np.float64)
    labs = np.asarray(labels, dtype=np.float64)
    # LabeledDataset re-checks norms and label values, reporting the bad row
    return LabeledDataset(points=pts, labels=labs)
