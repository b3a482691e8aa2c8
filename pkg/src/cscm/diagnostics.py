"""Distances between observation densities, error metrics and asymptotics.

Densities are taken with respect to the mixed measure (area measure on
the open quadrant plus length measure on the line z = 0), so each one has a
``line`` part over t and a ``plane`` part over (t, z). Two histograms on
the same grid are compared exactly by finite sums; anything else is
integrated with the midpoint rule on a 2000 x 2000 lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .histogram import Grid, Histogram
from .model import ModelSpec

QUAD_POINTS = 2000
PROBE = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True)
class LambdaDensity:
    """A density under the mixed measure on ``[0, m1] x [0, m2]``.

    Either ``line``/``plane`` are arrays of cell heights on ``grid``
    (shapes ``(k,)`` and ``(k, l)``), or they are vectorized callables
    ``line(t)`` and ``plane(t, z)`` and ``grid`` is None.
    """

    line: np.ndarray | Callable
    plane: np.ndarray | Callable
    m1: float = 1.0
    m2: float = 1.0
    grid: Grid | None = None

    def __post_init__(self):
        if self.grid is not None:
            line = np.asarray(self.line, dtype=float)
            plane = np.asarray(self.plane, dtype=float)
            if line.shape != (self.grid.k,) or plane.shape != self.grid.shape:
                raise ValueError("cell heights do not match the grid")
            if np.any(line < 0) or np.any(plane < 0):
                raise ValueError("density values must be nonnegative")
            object.__setattr__(self, "line", line)
            object.__setattr__(self, "plane", plane)
            object.__setattr__(self, "m1", self.grid.m1)
            object.__setattr__(self, "m2", self.grid.m2)

    @property
    def is_histogram(self) -> bool:
        return self.grid is not None

    @classmethod
    def from_histogram(cls, hist: Histogram) -> "LambdaDensity":
        return cls(hist.h0, hist.h1, grid=hist.grid)

    @classmethod
    def from_model(cls, model: ModelSpec) -> "LambdaDensity":
        """True observation density ``h_f0`` of a built-in model."""
        return cls(
            lambda t: model.g(t) * (1.0 - model.marginal_cdf(t)),
            lambda t, z: model.g(t) * model.d2_cdf(t, z),
            model.m1,
            model.m2,
        )

    @classmethod
    def from_fit(cls, fit, g) -> "LambdaDensity":
        """Observation density implied by a fitted CDF and inspection density g.

        ``g`` is a callable or a :class:`ModelSpec` (whose ``g`` is used).
        """
        from .msle import msle_d2_cdf, msle_marginal_cdf

        gfun = g.g if isinstance(g, ModelSpec) else g
        grid = fit.grid
        return cls(
            lambda t: gfun(t) * (1.0 - msle_marginal_cdf(fit, t)),
            lambda t, z: gfun(t) * msle_d2_cdf(fit, t, z),
            grid.m1,
            grid.m2,
        )

    def line_at(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_histogram:
            return self.line[self.grid.time_cell(t)]
        return np.asarray(self.line(t), dtype=float) * np.ones(t.shape)

    def plane_at(self, t, z):
        t, z = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(z, dtype=float))
        if self.is_histogram:
            return self.plane[self.grid.time_cell(t), self.grid.mark_cell(z)]
        return np.asarray(self.plane(t, z), dtype=float) * np.ones(t.shape)

    def total_mass(self) -> float:
        w_line, w_plane, line, plane = _evaluate(self, self)[:4]
        return float((w_line * line).sum() + (w_plane * plane).sum())


def _same_grid(p: LambdaDensity, q: LambdaDensity) -> bool:
    return p.is_histogram and q.is_histogram and p.grid == q.grid


def _plane_lattice(d: LambdaDensity, t, z, block=200):
    # row blocks keep fitted-density evaluation memory bounded
    out = np.empty((t.size, z.size))
    for s in range(0, t.size, block):
        T, Z = np.meshgrid(t[s:s + block], z, indexing="ij")
        out[s:s + block] = d.plane_at(T, Z)
    return out


def _evaluate(p: LambdaDensity, q: LambdaDensity):
    """Weights and values of both densities on a common set of nodes."""
    if (p.m1, p.m2) != (q.m1, q.m2):
        raise ValueError("densities live on different supports")
    if _same_grid(p, q):
        g = p.grid
        w_line = np.full(g.k, g.delta)
        w_plane = np.full(g.shape, g.delta * g.eps)
        out = (w_line, w_plane, p.line, p.plane, q.line, q.plane)
    else:
        n = QUAD_POINTS
        t = (np.arange(n) + 0.5) * (p.m1 / n)
        z = (np.arange(n) + 0.5) * (p.m2 / n)
        w_line = np.full(n, p.m1 / n)
        w_plane = np.full((n, n), p.m1 * p.m2 / n**2)
        out = (w_line, w_plane, p.line_at(t), _plane_lattice(p, t, z),
               q.line_at(t), _plane_lattice(q, t, z))
    for arr in out[2:]:
        if np.any(arr < 0):
            raise ValueError("density values must be nonnegative")
    return out


def hellinger(p: LambdaDensity, q: LambdaDensity) -> float:
    """``sqrt(0.5 * integral (sqrt p - sqrt q)^2)``."""
    wl, wp, pl, pp, ql, qp = _evaluate(p, q)
    s = (wl * (np.sqrt(pl) - np.sqrt(ql)) ** 2).sum() + (wp * (np.sqrt(pp) - np.sqrt(qp)) ** 2).sum()
    return float(math.sqrt(0.5 * s))


def _kl_part(w, a, b):
    pos = a > 0
    if np.any(pos & (b <= 0)):
        return math.inf
    return float((w[pos] * a[pos] * np.log(a[pos] / b[pos])).sum())


def kl(p: LambdaDensity, q: LambdaDensity) -> float:
    """``integral p log(p/q)``; ``inf`` if p charges a set where q vanishes."""
    wl, wp, pl, pp, ql, qp = _evaluate(p, q)
    return _kl_part(wl, pl, ql) + _kl_part(wp, pp, qp)


def l1_distance(p: LambdaDensity, q: LambdaDensity) -> float:
    wl, wp, pl, pp, ql, qp = _evaluate(p, q)
    return float((wl * np.abs(pl - ql)).sum() + (wp * np.abs(pp - qp)).sum())


def _check_interior(model: ModelSpec, t0, z0):
    if not (0 < t0 < model.m1 and 0 < z0 < model.m2):
        raise ValueError("asymptotic formulas need an interior point of the support")
    if not model.g(t0) > 0:
        raise ValueError("inspection density vanishes at t0")


def asymptotic_msle(model: ModelSpec, t0: float, z0: float, c1: float):
    """Heuristic limit ``N(beta, sigma2)`` of ``n^(2/5) (F_msle - F0)`` at (t0, z0).

    For time binwidth ``c1 n^(-1/5)`` and a finer mark binwidth:
    ``beta = d1F0 g' c1^2 / (6 g)`` and
    ``sigma2 = sqrt(3) F0 (1 - F0) / (2 c1 g)``.
    """
    _check_interior(model, t0, z0)
    F = float(model.cdf(t0, z0))
    g = float(model.g(t0))
    beta = float(model.d1_cdf(t0, z0)) * float(model.g_prime(t0)) * c1**2 / (6.0 * g)
    sigma2 = F * (1.0 - F) * math.sqrt(3.0) / (2.0 * c1 * g)
    return beta, sigma2


def asymptotic_plugin(model: ModelSpec, t0: float, z0: float, c1: float):
    """Limit ``N(beta2, sigma2_2)`` of the grid plug-in estimator.

    ``beta2 = (d11F0 / 6 + d1F0 g' / (3 g)) c1^2`` and
    ``sigma2_2 = F0 (1 - F0) / (2 c1 g)``.
    """
    _check_interior(model, t0, z0)
    F = float(model.cdf(t0, z0))
    g = float(model.g(t0))
    d1 = float(model.d1_cdf(t0, z0))
    beta2 = (float(model.d11_cdf(t0, z0)) / 6.0 + d1 * float(model.g_prime(t0)) / (3.0 * g)) * c1**2
    sigma2 = F * (1.0 - F) / (2.0 * c1 * g)
    return beta2, sigma2


def mse_at_point(estimates, truth: float) -> float:
    est = np.asarray(list(estimates), dtype=float)
    if est.size == 0:
        raise ValueError("need at least one estimate")
    return float(np.mean((est - truth) ** 2))


def sup_error(cdf, model: ModelSpec, probe=PROBE) -> float:
    """Largest ``|cdf - F0|`` over the probe lattice ``probe x probe``."""
    T, Z = np.meshgrid(probe, probe, indexing="ij")
    est = np.asarray(cdf(T.ravel(), Z.ravel()), dtype=float)
    return float(np.max(np.abs(est - model.cdf(T.ravel(), Z.ravel()))))
