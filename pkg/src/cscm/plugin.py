"""Plug-in estimators of the joint distribution function.

Both estimate F0(t, z) as a ratio: among observations inspected near t, the
fraction that already had the event with a mark at most z. Neither result
is guaranteed to be a distribution function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedNodeError, ZeroDenominatorError
from .histogram import Grid
from .model import Sample

_SNAP = 1e-9


@dataclass(frozen=True)
class GridCdf:
    """Node values ``values[i, j] = F_n(a_i, b_j)``; NaN marks undefined nodes.

    Column ``i = 0`` and row ``j = 0`` are the boundary value 0. Nodes
    ``1..k-1`` use the window ``(a_{i-1}, a_{i+1}]``. The last node ``i = k``
    has no window and is left undefined; evaluation on the last interval
    extends the line through nodes ``k-2`` and ``k-1``.
    """

    values: np.ndarray
    grid: Grid
    window_counts: np.ndarray

    def __call__(self, t, z):
        return grid_cdf_eval(self, t, z)

    def undefined_nodes(self):
        ii, jj = np.nonzero(np.isnan(self.values))
        return [(int(i), int(j)) for i, j in zip(ii, jj) if i < self.grid.k]


def plugin_grid_cdf(sample: Sample, grid: Grid) -> GridCdf:
    """Ratio estimator of F0 on the nodes ``(a_i, b_j)`` of ``grid``."""
    k, l = grid.k, grid.l
    ti = grid.time_cell(sample.t)
    pos = sample.z > 0
    counts_t = np.bincount(ti, minlength=k)
    counts_tz = np.zeros((k, l + 1), dtype=np.int64)
    np.add.at(counts_tz, (ti[pos], grid.mark_cell(sample.z[pos]) + 1), 1)
    cum_z = np.cumsum(counts_tz, axis=1)  # events with z <= b_j per time cell

    values = np.full((k + 1, l + 1), np.nan)
    values[0, :] = 0.0
    window = np.zeros(k + 1, dtype=np.int64)
    for i in range(1, k):
        den = counts_t[i - 1] + counts_t[i]
        window[i] = den
        if den > 0:
            values[i, :] = (cum_z[i - 1] + cum_z[i]) / den
    values[:, 0] = 0.0
    values.setflags(write=False)
    return GridCdf(values, grid, window)


def _locate(x, width, cells):
    u = x / width
    r = round(u)
    if abs(u - r) < _SNAP:
        u = float(r)
    i0 = min(int(math.floor(u)), cells - 1)
    return i0, u - i0


def grid_cdf_eval(gc: GridCdf, t: float, z: float) -> float:
    """Interpolate the node values bilinearly at ``(t, z)``.

    On the last time interval the line through the last two defined node
    columns is extended instead. The result is clipped to ``[0, 1]``.
    Raises :class:`UndefinedNodeError` if a node with nonzero weight is
    undefined.
    """
    grid = gc.grid
    t = min(max(float(t), 0.0), grid.m1)
    z = min(max(float(z), 0.0), grid.m2)
    i0, ft = _locate(t, grid.delta, grid.k)
    j0, fz = _locate(z, grid.eps, grid.l)
    if i0 >= grid.k - 1:
        # extension from nodes k-2 and k-1; ft measured from node k-1
        cols = [(grid.k - 2, -ft), (grid.k - 1, 1.0 + ft)]
    else:
        cols = [(i0, 1.0 - ft), (i0 + 1, ft)]
    rows = [(j0, 1.0 - fz), (j0 + 1, fz)]
    total = 0.0
    missing = []
    for i, wi in cols:
        for j, wj in rows:
            w = wi * wj
            if w == 0.0:
                continue
            v = gc.values[i, j]
            if np.isnan(v):
                missing.append((i, j))
                continue
            total += w * v
    if missing:
        raise UndefinedNodeError(missing)
    return min(max(total, 0.0), 1.0)


def epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def kernel_plugin_cdf(sample: Sample, t0: float, z0: float, bandwidth: float) -> float:
    """Kernel-weighted fraction of events with ``0 < z <= z0`` near ``t0``.

    Uses ``k_h(u) = k(u/h)/h`` with the Epanechnikov kernel ``k``.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    w = epanechnikov((t0 - sample.t) / bandwidth) / bandwidth
    den = w.sum()
    if den <= 0:
        raise ZeroDenominatorError(f"no observation within bandwidth {bandwidth} of t0 = {t0}")
    # same summation order as den keeps num <= den and num monotone in z0
    num = np.where((sample.z > 0) & (sample.z <= z0), w, 0.0).sum()
    return float(num / den)


def select_bandwidth(model, n, t0, z0, candidates, replicates=200, base_seed=0):
    """Pick the candidate bandwidth with the smallest simulated MSE.

    Returns ``(best, {bandwidth: mse})``. Replicates whose kernel window is
    empty are skipped for that bandwidth.
    """
    from .sampler import draw_sample

    truth = float(model.cdf(t0, z0))
    errs = {float(h): [] for h in candidates}
    for r in range(replicates):
        s = draw_sample(model, n, base_seed + r)
        for h in errs:
            try:
                errs[h].append((kernel_plugin_cdf(s, t0, z0, h) - truth) ** 2)
            except ZeroDenominatorError:
                pass
    mse = {h: float(np.mean(e)) if e else math.inf for h, e in errs.items()}
    return min(mse, key=mse.get), mse
