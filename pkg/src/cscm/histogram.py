"""Equispaced grids and the histogram estimate of the observation density."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import SupportError
from .model import Sample

SUPPORT_TOL = 1e-12
# k_n = round(KN_SCALE * n**(1/5)) gives 4 cells at n = 500 and 7 at n = 10 000
KN_SCALE = 1.1
DEFAULT_L = 5


@dataclass(frozen=True)
class Grid:
    """Cells ``(a_{i-1}, a_i] x (b_{j-1}, b_j]`` on ``[0, m1] x [0, m2]``."""

    m1: float
    m2: float
    k: int
    l: int
    delta: float = field(init=False)
    eps: float = field(init=False)

    def __post_init__(self):
        if not (self.m1 > 0 and self.m2 > 0):
            raise ValueError("support bounds must be positive")
        if int(self.k) != self.k or int(self.l) != self.l:
            raise ValueError("cell counts must be integers")
        if self.k < 2:
            raise ValueError("need at least two time cells (k >= 2)")
        if self.l < 1:
            raise ValueError("need at least one mark cell (l >= 1)")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "l", int(self.l))
        object.__setattr__(self, "m1", float(self.m1))
        object.__setattr__(self, "m2", float(self.m2))
        object.__setattr__(self, "delta", self.m1 / self.k)
        object.__setattr__(self, "eps", self.m2 / self.l)

    @property
    def a(self) -> np.ndarray:
        return np.arange(self.k + 1) * self.delta

    @property
    def b(self) -> np.ndarray:
        return np.arange(self.l + 1) * self.eps

    @property
    def shape(self):
        return (self.k, self.l)

    def time_cell(self, t) -> np.ndarray:
        """0-based index of the half-open time interval holding ``t``.

        ``t = 0`` goes to the first interval.
        """
        i = np.searchsorted(self.a, np.asarray(t, float), side="left") - 1
        return np.clip(i, 0, self.k - 1)

    def mark_cell(self, z) -> np.ndarray:
        j = np.searchsorted(self.b, np.asarray(z, float), side="left") - 1
        return np.clip(j, 0, self.l - 1)

    def to_dict(self):
        return {"m1": self.m1, "m2": self.m2, "k": self.k, "l": self.l}

    @classmethod
    def from_dict(cls, d):
        return cls(d["m1"], d["m2"], d["k"], d["l"])


def make_grid(m1: float, m2: float, k: int, l: int) -> Grid:
    return Grid(m1, m2, k, l)


def default_k(n: int) -> int:
    return max(2, int(round(KN_SCALE * n ** 0.2)))


def default_grid(n: int, m1: float = 1.0, m2: float = 1.0, l: int = DEFAULT_L) -> Grid:
    """Grid with ``k = round(1.1 n^(1/5))`` time cells and ``l`` mark cells."""
    return Grid(m1, m2, default_k(n), l)


@dataclass(frozen=True)
class Histogram:
    """Cell counts and heights of the histogram observation density.

    ``h0[i]`` is the height on the line ``z = 0`` over time cell i and
    ``h1[i, j]`` the height on the interior cell (i, j), so that
    ``delta * h0.sum() + delta * eps * h1.sum() == 1``.
    """

    counts0: np.ndarray
    counts1: np.ndarray
    grid: Grid
    n: int

    def __post_init__(self):
        c0 = np.asarray(self.counts0, dtype=np.int64)
        c1 = np.asarray(self.counts1, dtype=np.int64)
        if c0.shape != (self.grid.k,) or c1.shape != self.grid.shape:
            raise ValueError("count arrays do not match the grid")
        if c0.sum() + c1.sum() != self.n:
            raise ValueError("counts do not add up to n")
        c0.setflags(write=False)
        c1.setflags(write=False)
        object.__setattr__(self, "counts0", c0)
        object.__setattr__(self, "counts1", c1)

    @property
    def h0(self) -> np.ndarray:
        return self.counts0 / (self.grid.delta * self.n)

    @property
    def h1(self) -> np.ndarray:
        return self.counts1 / (self.grid.delta * self.grid.eps * self.n)

    @property
    def p0(self) -> np.ndarray:
        """Fraction of observations per line cell (``delta * h0``)."""
        return self.counts0 / self.n

    @property
    def p1(self) -> np.ndarray:
        """Fraction of observations per interior cell (``delta * eps * h1``)."""
        return self.counts1 / self.n

    def empty_cells(self):
        """1-based labels of cells without observations."""
        cells = [("line", int(i) + 1) for i in np.flatnonzero(self.counts0 == 0)]
        ii, jj = np.nonzero(self.counts1 == 0)
        cells += [("plane", int(i) + 1, int(j) + 1) for i, j in zip(ii, jj)]
        return cells

    def lambda_mass(self) -> Fraction:
        """Total mass under the mixed measure, in exact arithmetic."""
        return Fraction(int(self.counts0.sum()) + int(self.counts1.sum()), self.n)

    def to_dict(self):
        return {
            "grid": self.grid.to_dict(),
            "n": self.n,
            "counts0": self.counts0.tolist(),
            "counts1": self.counts1.tolist(),
            "h0": self.h0.tolist(),
            "h1": self.h1.tolist(),
            "empty_cells": [list(c) for c in self.empty_cells()],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["counts0"]), np.array(d["counts1"]), Grid.from_dict(d["grid"]), d["n"])

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def build_histogram(sample: Sample, grid: Grid) -> Histogram:
    """Count observations per cell; see :class:`Histogram` for the heights.

    Observations beyond the support by more than 1e-12 raise
    :class:`~cscm.errors.SupportError` carrying the offending index.
    """
    t, z = sample.t, sample.z
    out = np.flatnonzero((t > grid.m1 + SUPPORT_TOL) | (z > grid.m2 + SUPPORT_TOL))
    if out.size:
        i = int(out[0])
        raise SupportError(
            f"observation {i} = ({t[i]!r}, {z[i]!r}) lies outside [0, {grid.m1}] x [0, {grid.m2}]",
            index=i,
        )
    ti = grid.time_cell(t)
    on_line = z <= 0
    counts0 = np.bincount(ti[on_line], minlength=grid.k)
    flat = ti[~on_line] * grid.l + grid.mark_cell(z[~on_line])
    counts1 = np.bincount(flat, minlength=grid.k * grid.l).reshape(grid.k, grid.l)
    return Histogram(counts0, counts1, grid, sample.n)
