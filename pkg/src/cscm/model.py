"""Observation model for current status data with a continuous mark.

An event time X and a mark Y are never seen directly. At an independent
inspection time T we learn whether the event has happened, and if it has
we also see the mark. One observation is therefore the pair
``(t, z)`` with ``z = 0`` when the event had not yet occurred and
``z = y > 0`` otherwise.

Observation densities are taken with respect to the mixed measure that is
two-dimensional Lebesgue measure on the open quadrant plus one-dimensional
Lebesgue measure on the line ``z = 0``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import SupportError

UNIFORM = "uniform"
POLYNOMIAL = "polynomial"
MODEL_KINDS = (UNIFORM, POLYNOMIAL)


class Observation(NamedTuple):
    t: float
    z: float

    @property
    def delta(self) -> int:
        return int(self.z > 0)


@dataclass(frozen=True, eq=False)
class Sample:
    """An ordered, immutable collection of ``(t, z)`` observations."""

    t: np.ndarray
    z: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        t = np.array(self.t, dtype=float).ravel()
        z = np.array(self.z, dtype=float).ravel()
        if t.shape != z.shape:
            raise ValueError("t and z must have the same length")
        if t.size < 1:
            raise ValueError("a sample needs at least one observation")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(z))):
            raise ValueError("observations must be finite")
        bad = np.flatnonzero((t < 0) | (z < 0))
        if bad.size:
            raise SupportError(f"negative value in observation {bad[0]}", index=int(bad[0]))
        t.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "n", int(t.size))

    @property
    def delta(self) -> np.ndarray:
        return (self.z > 0).astype(int)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return np.array_equal(self.t, other.t) and np.array_equal(self.z, other.z)

    __hash__ = None

    def __iter__(self):
        for ti, zi in zip(self.t, self.z):
            yield Observation(float(ti), float(zi))

    @classmethod
    def from_observations(cls, observations) -> "Sample":
        obs = list(observations)
        return cls([o[0] for o in obs], [o[1] for o in obs])

    def support(self) -> tuple[float, float]:
        """Data-driven support bounds ``(max t, max z)``."""
        return float(self.t.max()), float(self.z.max())


def read_sample_csv(path) -> Sample:
    """Read a ``t,z`` CSV file.

    An optional ``delta`` column is accepted and checked against the
    ``z > 0`` encoding; a mismatch raises ``ValueError``.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t", "z"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected a header with columns t,z")
        has_delta = "delta" in reader.fieldnames
        t, z = [], []
        for row_no, row in enumerate(reader):
            ti, zi = float(row["t"]), float(row["z"])
            if has_delta and int(float(row["delta"])) != int(zi > 0):
                raise ValueError(f"{path}: row {row_no} has delta inconsistent with z")
            t.append(ti)
            z.append(zi)
    return Sample(t, z)


def write_sample_csv(sample: Sample, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,z\n")
        for ti, zi in zip(sample.t, sample.z):
            fh.write(f"{ti:.17g},{zi:.17g}\n")


@dataclass(frozen=True)
class ModelSpec:
    """One of the built-in ground-truth models on the unit square.

    ``uniform``: f0(x, y) = 1 and g(t) = 1.
    ``polynomial``: f0(x, y) = x + y and g(t) = 2t.
    """

    kind: str
    m1: float = 1.0
    m2: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.kind!r}; choose from {MODEL_KINDS}")
        if self.m1 != 1.0 or self.m2 != 1.0:
            raise ValueError("built-in models live on the unit square")

    @classmethod
    def uniform(cls) -> "ModelSpec":
        return cls(UNIFORM)

    @classmethod
    def polynomial(cls) -> "ModelSpec":
        return cls(POLYNOMIAL)

    def clamp(self, t, z):
        return np.clip(t, 0.0, self.m1), np.clip(z, 0.0, self.m2)

    # closed forms; arguments are assumed to be inside the unit square

    def f0(self, x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        if self.kind == UNIFORM:
            return np.ones(np.broadcast(x, y).shape)
        return x + y

    def cdf(self, t, z):
        t, z = self.clamp(np.asarray(t, float), np.asarray(z, float))
        if self.kind == UNIFORM:
            return t * z
        return 0.5 * t * z * (t + z)

    def marginal_cdf(self, t):
        t = np.clip(np.asarray(t, float), 0.0, self.m1)
        if self.kind == UNIFORM:
            return t
        return 0.5 * t * (t + 1.0)

    def d1_cdf(self, t, z):
        """Partial derivative of F0 in the time argument."""
        t, z = np.asarray(t, float), np.asarray(z, float)
        if self.kind == UNIFORM:
            return z + 0.0 * t
        return t * z + 0.5 * z * z

    def d11_cdf(self, t, z):
        t, z = np.asarray(t, float), np.asarray(z, float)
        if self.kind == UNIFORM:
            return 0.0 * (t + z)
        return z + 0.0 * t

    def d2_cdf(self, t, z):
        """Partial derivative of F0 in the mark argument."""
        t, z = np.asarray(t, float), np.asarray(z, float)
        if self.kind == UNIFORM:
            return t + 0.0 * z
        return 0.5 * t * t + t * z

    def g(self, t):
        t = np.asarray(t, float)
        if self.kind == UNIFORM:
            return np.ones(t.shape)
        return 2.0 * t

    def g_prime(self, t):
        t = np.asarray(t, float)
        if self.kind == UNIFORM:
            return np.zeros(t.shape)
        return np.full(t.shape, 2.0)

    def prob_not_yet(self) -> float:
        """P(X > T), the probability of recording z = 0."""
        return 0.5 if self.kind == UNIFORM else 5.0 / 12.0


def true_cdf(model: ModelSpec, t, z):
    """F0(t, z); arguments outside the support are clamped to it."""
    out = model.cdf(t, z)
    return float(out) if np.ndim(out) == 0 else out


def observation_density(model: ModelSpec, t, z):
    """Density of W = (T, Z) with respect to the mixed measure.

    ``g(t) * d/dz F0(t, z)`` for z > 0 and ``g(t) * (1 - F0_X(t))`` on z = 0.
    """
    t, z = np.asarray(t, float), np.asarray(z, float)
    line = model.g(t) * (1.0 - model.marginal_cdf(t))
    plane = model.g(t) * model.d2_cdf(t, z)
    out = np.where(z > 0, plane, line)
    return float(out) if out.ndim == 0 else out


def model_from_name(name: str) -> ModelSpec:
    return ModelSpec(name.lower())


__all__ = [
    "Observation",
    "Sample",
    "ModelSpec",
    "UNIFORM",
    "POLYNOMIAL",
    "true_cdf",
    "observation_density",
    "read_sample_csv",
    "write_sample_csv",
    "model_from_name",
]
