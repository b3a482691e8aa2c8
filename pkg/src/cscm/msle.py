"""Maximum smoothed likelihood estimation on a histogram grid.

Candidates are piecewise constant densities on the cells of a
:class:`~cscm.histogram.Grid`. They are parametrized by the cell masses
``m[i, j]`` (density times ``delta * eps``), which live on the probability
simplex. With the histogram in place of the empirical distribution, the
smoothed log-likelihood integrates in closed form to the concave objective

    psi(m) = delta * sum_i h0[i] * phi(alpha[i+1], alpha[i])
             + delta * eps * sum_ij h1[i, j] * phi(beta[i, j], beta[i-1, j])
             - sum(m) + 1

with ``alpha[i]`` the mass in rows ``i..k`` and ``beta[i, j]`` the mass of
column j in rows ``1..i`` divided by eps. It is maximized by the EM
(self-consistency) iteration :func:`em_step`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCellError
from .histogram import Grid, Histogram

PHI_DIAG_TOL = 1e-8
SMALL_RATIO = 1e-8
SIMPLEX_TOL = 1e-12
_SERIES_CUT = 1e-3
_DERIV_SERIES_CUT = 0.1


@dataclass(frozen=True)
class MassMatrix:
    """Cell masses ``m[i, j] >= 0`` summing to one."""

    masses: np.ndarray
    grid: Grid

    def __post_init__(self):
        m = np.array(self.masses, dtype=float)
        if m.shape != self.grid.shape:
            raise ValueError(f"mass matrix has shape {m.shape}, grid is {self.grid.shape}")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("masses must be finite and nonnegative")
        if abs(m.sum() - 1.0) > 1e-12 * max(1, m.size):
            raise ValueError(f"masses sum to {m.sum()!r}, not 1")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @classmethod
    def uniform(cls, grid: Grid) -> "MassMatrix":
        return cls(np.full(grid.shape, 1.0 / (grid.k * grid.l)), grid)

    @property
    def density(self) -> np.ndarray:
        return self.masses / (self.grid.delta * self.grid.eps)

    @property
    def row_mass(self) -> np.ndarray:
        return self.masses.sum(axis=1)


@dataclass(frozen=True)
class Accumulators:
    """Tail row masses and cumulative column masses.

    ``alpha[i]`` for ``i = 0..k`` is the mass in rows ``i+1..k`` (1-based),
    so ``alpha[0] = 1`` and ``alpha[k] = 0``. ``beta[i, j]`` for
    ``i = 0..k`` is the mass of column j in rows ``1..i`` divided by eps, so
    ``beta[0] = 0``.
    """

    alpha: np.ndarray
    beta: np.ndarray


@dataclass
class FitResult:
    masses: MassMatrix
    iterations: int
    fenchel_gap: float
    objective: float
    converged: bool
    kkt_residual: float = math.nan
    tol: float = 1e-10
    degenerate_steps: int = 0
    histogram: Histogram | None = field(default=None, repr=False)

    @property
    def grid(self) -> Grid:
        return self.masses.grid

    def cdf(self, t, z):
        return msle_cdf(self, t, z)

    def marginal_cdf(self, t):
        return msle_marginal_cdf(self, t)

    def d2_cdf(self, t, z):
        return msle_d2_cdf(self, t, z)

    def to_dict(self):
        d = {
            "grid": self.grid.to_dict(),
            "masses": self.masses.masses.ravel().tolist(),
            "objective": self.objective,
            "fenchel_gap": self.fenchel_gap,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "tol": self.tol,
            "degenerate_steps": self.degenerate_steps,
        }
        if self.histogram is not None:
            d["histogram"] = {
                "n": self.histogram.n,
                "counts0": self.histogram.counts0.tolist(),
                "counts1": self.histogram.counts1.tolist(),
            }
        return d

    @classmethod
    def from_dict(cls, d):
        grid = Grid.from_dict(d["grid"])
        m = np.array(d["masses"], dtype=float).reshape(grid.shape)
        hist = None
        if "histogram" in d:
            h = d["histogram"]
            hist = Histogram(np.array(h["counts0"]), np.array(h["counts1"]), grid, h["n"])
        return cls(
            masses=MassMatrix(m, grid),
            iterations=int(d["iterations"]),
            fenchel_gap=float(d["fenchel_gap"]),
            objective=float(d["objective"]),
            converged=bool(d["converged"]),
            kkt_residual=float(d.get("kkt_residual", math.nan)),
            tol=float(d.get("tol", 1e-10)),
            degenerate_steps=int(d.get("degenerate_steps", 0)),
            histogram=hist,
        )

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load_json(cls, path) -> "FitResult":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# --- the function phi and its partial derivatives ------------------------

def _check_nonneg(x, y):
    # arguments above 1 are allowed (see phi); only negatives are rejected
    if np.any(x < -1e-12) or np.any(y < -1e-12):
        raise ValueError("phi is defined for nonnegative arguments")


def _split(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_nonneg(x, y)
    x, y = np.broadcast_arrays(np.maximum(x, 0.0), np.maximum(y, 0.0))
    hi = np.maximum(x, y)
    lo = np.minimum(x, y)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = np.where(hi > 0, (hi - lo) / hi, 0.0)
    return x, y, hi, lo, w


def phi(x, y):
    """``(x log x - y log y) / (x - y)``, extended by ``1 + log x`` on x = y.

    Uses ``0 log 0 = 0``. The formula is the average of ``1 + log u`` over
    the segment between the two arguments, which is how it is evaluated:
    ``log(hi) + (1 - w) * (-log1p(-w) / w)`` with ``w = 1 - lo/hi``. Below
    ``w = 1e-8`` a second-order expansion about the diagonal is used.
    Arguments above one are accepted; the identity behind the objective
    holds for any positive pair.
    """
    x, y, hi, lo, w = _split(x, y)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        log_hi = np.log(hi)
        g = np.where(w >= 1.0, 0.0, -np.log1p(-w) / np.where(w > 0, w, 1.0))
        far = log_hi + (1.0 - w) * g
        near = log_hi + 1.0 - w / 2.0 - w * w / 6.0
    out = np.where(w < PHI_DIAG_TOL, near, far)
    out = np.where(w >= 1.0, log_hi, out)
    out = np.where(hi == 0, -np.inf, out)
    return float(out) if out.ndim == 0 else out


def _series(w, coef_fn, terms=30):
    acc = np.zeros_like(w)
    p = np.ones_like(w)
    for k in range(1, terms + 1):
        acc = acc + coef_fn(k) * p
        p = p * w
    return acc


def phi_partials(x, y):
    """Partial derivatives of :func:`phi` in its first and second argument.

    With ``hi >= lo`` and ``w = 1 - lo/hi``:
    ``d phi/d hi = (1 - (1-w) g(w)) / (hi w)`` and
    ``d phi/d lo = (g(w) - 1) / (hi w)`` with ``g(w) = -log(1-w)/w``.
    Both are summed as power series in w for ``w < 0.1``. The derivative in
    the smaller argument is ``+inf`` when that argument is 0.
    """
    x, y, hi, lo, w = _split(x, y)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ws = np.where(w < _DERIV_SERIES_CUT, w, 0.0)
        d_hi_near = _series(ws, lambda k: 1.0 / (k * (k + 1))) / hi
        d_lo_near = _series(ws, lambda k: 1.0 / (k + 1)) / hi
        wf = np.where(w >= _DERIV_SERIES_CUT, w, 0.5)
        g = np.where(wf >= 1.0, 0.0, -np.log1p(-wf) / wf)
        d_hi_far = (1.0 - (1.0 - wf) * g) / (hi * wf)
        d_lo_far = np.where(wf >= 1.0, np.inf, (g - 1.0) / (hi * wf))
    d_hi = np.where(w < _DERIV_SERIES_CUT, d_hi_near, d_hi_far)
    d_lo = np.where(w < _DERIV_SERIES_CUT, d_lo_near, d_lo_far)
    d_hi = np.where(hi == 0, np.inf, d_hi)
    d_lo = np.where(hi == 0, np.inf, d_lo)
    x_is_hi = x >= y
    dx = np.where(x_is_hi, d_hi, d_lo)
    dy = np.where(x_is_hi, d_lo, d_hi)
    if dx.ndim == 0:
        return float(dx), float(dy)
    return dx, dy


# --- objective, gradient and EM step -------------------------------------

def _masses(masses) -> np.ndarray:
    if isinstance(masses, MassMatrix):
        return masses.masses
    return np.asarray(masses, dtype=float)


def _check_grid(masses, hist: Histogram):
    if isinstance(masses, MassMatrix) and masses.grid != hist.grid:
        raise ValueError("mass matrix and histogram are on different grids")
    m = _masses(masses)
    if m.shape != hist.grid.shape:
        raise ValueError(f"mass matrix has shape {m.shape}, histogram grid is {hist.grid.shape}")
    return m


def accumulate(masses, eps: float | None = None) -> Accumulators:
    """Tail row sums ``alpha`` and cumulative column sums ``beta``."""
    if eps is None:
        if not isinstance(masses, MassMatrix):
            raise TypeError("pass eps when giving a bare array")
        eps = masses.grid.eps
    m = _masses(masses)
    k, l = m.shape
    alpha = np.zeros(k + 1)
    alpha[:k] = np.cumsum(m.sum(axis=1)[::-1])[::-1]
    beta = np.zeros((k + 1, l))
    beta[1:] = np.cumsum(m, axis=0) / eps
    return Accumulators(alpha, beta)


def _weighted(weights, values):
    # empty cells contribute nothing, even where phi is -inf
    with np.errstate(invalid="ignore"):
        return np.where(weights > 0, weights * values, 0.0)


def psi_objective(masses, hist: Histogram) -> float:
    """Value of the concave objective at the mass matrix ``masses``."""
    m = _check_grid(masses, hist)
    acc = accumulate(m, hist.grid.eps)
    line = _weighted(hist.p0, phi(acc.alpha[1:], acc.alpha[:-1]))
    plane = _weighted(hist.p1, phi(acc.beta[1:], acc.beta[:-1]))
    return float(line.sum() + plane.sum() - m.sum() + 1.0)


def psi_gradient(masses, hist: Histogram) -> np.ndarray:
    """Partial derivatives of :func:`psi_objective` in every cell mass.

    Components where a partial of phi diverges come out as ``+inf``.
    """
    m = _check_grid(masses, hist)
    grid = hist.grid
    delta = grid.delta
    acc = accumulate(m, grid.eps)
    h0, h1 = hist.h0, hist.h1

    # line part: row a sees phi_x through alpha[i+1] for i < a and phi_y through alpha[i] for i <= a
    ax, ay = phi_partials(acc.alpha[1:], acc.alpha[:-1])
    tx = _weighted(h0[:-1], ax[:-1])
    ty = _weighted(h0, ay)
    row = np.cumsum(ty)
    row[1:] += np.cumsum(tx)
    row *= delta

    # plane part: cell (a, b) enters beta[i, b] for i >= a, and beta[i-1, b] for i >= a + 1
    bx, by = phi_partials(acc.beta[1:], acc.beta[:-1])
    sx = _weighted(h1, bx)
    sy = _weighted(h1[1:], by[1:])
    col = np.cumsum(sx[::-1], axis=0)[::-1].copy()
    col[:-1] += np.cumsum(sy[::-1], axis=0)[::-1]
    col *= delta

    with np.errstate(invalid="ignore"):
        return row[:, None] + col - 1.0


def fenchel_gap(masses, hist: Histogram) -> float:
    """``<m, grad psi(m)>``, which vanishes at the constrained maximum."""
    m = _check_grid(masses, hist)
    grad = psi_gradient(m, hist)
    return float(_weighted(m, grad).sum())


def kkt_residual(masses, hist: Histogram) -> float:
    """Largest violation of the optimality conditions over the cells.

    At the maximizer every ``m[i, j] * grad[i, j]`` is zero and no partial
    derivative is positive.
    """
    m = _check_grid(masses, hist)
    grad = psi_gradient(m, hist)
    slack = np.abs(_weighted(m, grad))
    return float(max(slack.max(), np.max(grad, initial=-np.inf), 0.0))


def _log1p_ratio(r):
    """``log(1 + r) / r``; ``1 - r/2`` below ``r = 1e-8`` and 0 at ``r = inf``."""
    out = 1.0 - r / 2.0
    big = r >= SMALL_RATIO
    rb = r[big]
    out[big] = np.log1p(rb) / rb
    out[np.isinf(r)] = 0.0
    return out


def _one_minus_log1p_ratio(r):
    """``1 - log(1 + r) / r``; ``r/2 - r^2/3`` below ``r = 1e-8``, 1 at ``r = inf``."""
    with np.errstate(invalid="ignore", over="ignore"):
        out = r / 2.0 - r * r / 3.0
    mid = (r >= SMALL_RATIO) & (r < _SERIES_CUT)
    if mid.any():
        rm = r[mid]
        # r/2 - r^2/3 + r^3/4 - ...
        out[mid] = rm * _series(-rm, lambda k: 1.0 / (k + 1), terms=8)
    big = r >= _SERIES_CUT
    rb = r[big]
    with np.errstate(invalid="ignore"):
        out[big] = 1.0 - np.log1p(rb) / rb
    out[np.isinf(r)] = 1.0
    return out


def _em_update(m, p0, p1):
    k, l = m.shape
    col_before = np.zeros_like(m)
    np.cumsum(m[:-1], axis=0, out=col_before[1:])
    row = m.sum(axis=1)
    tail_after = np.zeros(k)
    tail_after[:-1] = np.cumsum(row[:0:-1])[::-1]

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # nothing before the cell in its column (or after its row): the
        # first-row (last-row) form applies, encoded as an infinite ratio
        r = np.where(col_before > 0, m / col_before, np.inf)
        s = np.where(tail_after > 0, row / tail_after, np.inf)
        later = np.where(col_before > 0, p1 * _log1p_ratio(r) / col_before, 0.0)
        earlier = np.where(tail_after > 0, p0 * _log1p_ratio(s) / tail_after, 0.0)
        own = np.where(row > 0, p0 * _one_minus_log1p_ratio(s) / row, 0.0)

    later_sum = np.zeros_like(m)
    np.cumsum(later[:0:-1], axis=0, out=later_sum[-2::-1])
    earlier_sum = np.zeros(k)
    np.cumsum(earlier[:-1], out=earlier_sum[1:])
    return m * (later_sum + (earlier_sum + own)[:, None]) + p1 * _one_minus_log1p_ratio(r)


def em_step(masses, hist: Histogram, return_flags: bool = False):
    """One self-consistency update of the cell masses.

    For cell (k, j) the new mass adds four contributions:

    * observations in later cells (i, j), i > k, of the same mark column,
      shared in proportion to ``m[k, j]``:
      ``m[k, j] * sum_{i>k} p1[i, j] * log(1 + m[i, j]/C[i-1, j]) / m[i, j]``;
    * observations in the cell itself:
      ``p1[k, j] * (1 - log(1 + r)/r)`` with ``r = m[k, j]/C[k-1, j]``,
      which equals ``p1[1, j]`` in the first row;
    * z = 0 observations in earlier rows i < k:
      ``m[k, j] * sum_{i<k} p0[i] * log(1 + R[i]/A[i+1]) / R[i]``;
    * z = 0 observations in row k:
      ``(m[k, j]/R[k]) * p0[k] * (1 - log(1 + s)/s)`` with ``s = R[k]/A[k+1]``,
      which is ``p0[k] * m[k, j]/R[k]`` in the last row.

    Here ``p0``/``p1`` are the observed cell fractions, ``C`` cumulative
    column masses, ``R`` row masses and ``A`` tail row masses. Ratios below
    1e-8 switch to the limiting forms ``log(1 + r)/m -> 1/C`` and
    ``(m - C log(1 + r))/m^2 -> 1/(2C)``, carried to one more order in
    ``r`` so the simplex is kept to rounding; single masses may shrink to
    zero. The result is a :class:`MassMatrix` when the input is one, else
    an array. With ``return_flags`` the number of mark columns that carry
    data but no mass is returned as well.
    """
    m = _check_grid(masses, hist)
    p1 = hist.p1
    new = _em_update(m, hist.p0, p1)
    if isinstance(masses, MassMatrix):
        new = MassMatrix(new, masses.grid)
    if return_flags:
        return new, _dead_columns(m, p1)
    return new


def _dead_columns(m, p1):
    return int(np.sum((m.sum(axis=0) == 0) & (p1.sum(axis=0) > 0)))


def _resolve_init(init, grid: Grid) -> np.ndarray:
    if init is None or (isinstance(init, str) and init == "uniform"):
        return MassMatrix.uniform(grid).masses.copy()
    if isinstance(init, MassMatrix):
        if init.grid != grid:
            raise ValueError("initial masses are on a different grid")
        return init.masses.copy()
    m = np.array(init, dtype=float)
    if m.shape != grid.shape:
        raise ValueError("initial masses do not match the grid")
    return MassMatrix(m, grid).masses.copy()


def _extrapolate(m, f1, f2, p0, p1):
    # squared-extrapolation step; steplength -1 reproduces f2
    r = f1 - m
    v = f2 - 2.0 * f1 + m
    nv = np.linalg.norm(v)
    a = min(-np.linalg.norm(r) / nv, -1.0) if nv > 0 else -1.0
    while a < -1.0:
        cand = m - 2.0 * a * r + a * a * v
        if np.all(cand >= 0):
            return _em_update(cand / cand.sum(), p0, p1)
        a = (a - 1.0) / 2.0
        if a > -1.01:
            a = -1.0
    return f2


def fit_msle(hist: Histogram, tol: float = 1e-10, max_iter: int = 10**6, init="uniform",
             allow_empty: bool = False, accelerate: bool = True) -> FitResult:
    """Maximize the smoothed likelihood by EM.

    Parameters
    ----------
    hist : Histogram
        Histogram of the data. Every cell, on the line z = 0 and in the
        interior, must hold at least one observation; otherwise the
        maximizer need not be unique and :class:`EmptyCellError` is raised.
    tol : float
        Stop once ``|<m, grad psi>|`` and the optimality residual of
        :func:`kkt_residual` are both below ``tol``.
    max_iter : int
        Iteration cap. On reaching it the last iterate is returned with
        ``converged=False``.
    init : "uniform", MassMatrix or array
        Strictly positive starting masses.
    allow_empty : bool
        Run the iteration even when some cells are empty. The result is
        then one maximizer, not necessarily the only one.
    accelerate : bool
        Extrapolate from two consecutive EM steps (SQUAREM) and keep the
        result only if the objective does not decrease; otherwise take the
        two plain steps. Plain EM slows to a crawl when masses tend to zero.

    Notes
    -----
    The update satisfies ``em_step(m) - m = m * grad psi(m)``, so every
    step yields the complementary-slackness residual and, dividing by m, the
    gradient itself. These are screened every iteration; the full residual,
    from the analytic gradient, is only evaluated once they pass.
    """
    empty = hist.empty_cells()
    if empty and not allow_empty:
        raise EmptyCellError(empty)
    grid = hist.grid
    m = _resolve_init(init, grid)
    if np.any(m <= 0):
        raise ValueError("initial masses must be strictly positive")
    p0, p1 = hist.p0, hist.p1

    degenerate = 0
    it = 0
    gap = resid = math.inf
    converged = False
    obj = psi_objective(m, hist)
    while it < max_iter:
        new = _em_update(m, p0, p1)
        diff = new - m
        # diff / m estimates the gradient on cells that still carry mass
        with np.errstate(divide="ignore", invalid="ignore"):
            screen = np.abs(diff).max() < tol and np.max(diff / m, where=m > 0, initial=-np.inf) < tol
        if screen:
            gap = abs(fenchel_gap(m, hist))
            resid = kkt_residual(m, hist)
            if gap < tol and resid < tol:
                converged = True
                break
        degenerate += _dead_columns(m, p1)
        if accelerate:
            f2 = _em_update(new, p0, p1)
            new = _extrapolate(m, new, f2, p0, p1)
            o = psi_objective(new, hist)
            if not o >= obj - 1e-12:
                new = f2
                o = psi_objective(new, hist)
            obj = o
        m = new
        it += 1
    if not converged:
        gap = abs(fenchel_gap(m, hist))
        resid = kkt_residual(m, hist)
        converged = gap < tol and resid < tol
    m = m / m.sum()
    return FitResult(
        masses=MassMatrix(m, grid),
        iterations=it,
        fenchel_gap=gap,
        objective=psi_objective(m, hist),
        converged=converged,
        kkt_residual=resid,
        tol=tol,
        degenerate_steps=degenerate,
        histogram=hist,
    )


# --- distribution function of the fitted density -------------------------

def _fractions(x, edges, width):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.clip((x[:, None] - edges[None, :-1]) / width, 0.0, 1.0)


def _mass_of(fit) -> tuple[np.ndarray, Grid]:
    if isinstance(fit, FitResult):
        return fit.masses.masses, fit.grid
    if isinstance(fit, MassMatrix):
        return fit.masses, fit.grid
    raise TypeError("expected a FitResult or MassMatrix")


def _shape_out(out, t, z):
    shape = np.broadcast(np.asarray(t), np.asarray(z)).shape
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


def msle_cdf(fit, t, z):
    """Integral of the fitted piecewise constant density over ``[0,t] x [0,z]``.

    Exact: full cells count with their mass, cut cells with the area
    fraction. ``t`` and ``z`` broadcast against each other.
    """
    m, grid = _mass_of(fit)
    tt, zz = np.broadcast_arrays(np.asarray(t, float), np.asarray(z, float))
    ft = _fractions(tt.ravel(), grid.a, grid.delta)
    fz = _fractions(zz.ravel(), grid.b, grid.eps)
    out = np.einsum("pi,ij,pj->p", ft, m, fz)
    return _shape_out(np.clip(out, 0.0, 1.0), t, z)


def msle_marginal_cdf(fit, t):
    m, grid = _mass_of(fit)
    return msle_cdf(fit, t, grid.m2)


def msle_d2_cdf(fit, t, z):
    """Derivative of the fitted CDF in z: ``int_0^t f(u, z) du``.

    Mark cells are right-closed, so at a cell edge ``b_j`` the value of the
    cell below is used.
    """
    m, grid = _mass_of(fit)
    tt, zz = np.broadcast_arrays(np.asarray(t, float), np.asarray(z, float))
    ft = _fractions(tt.ravel(), grid.a, grid.delta)
    zf = zz.ravel()
    j = grid.mark_cell(zf)
    cols = (m / grid.eps)[:, j].T
    out = np.einsum("pi,pi->p", ft, cols)
    out = np.where((zf > 0) & (zf <= grid.m2), out, 0.0)
    return _shape_out(out, t, z)


def rectangle_mass(fit, t0, t1, z0, z1):
    """Mass the fitted CDF assigns to ``(t0, t1] x (z0, z1]``."""
    F = lambda a, b: msle_cdf(fit, a, b)  # noqa: E731
    return F(t1, z1) - F(t0, z1) - F(t1, z0) + F(t0, z0)


def lattice(fit, size: int = 51):
    """Evaluation lattice ``(t, z, F)`` on a ``size x size`` grid of the support."""
    _, grid = _mass_of(fit)
    ts = np.linspace(0.0, grid.m1, size)
    zs = np.linspace(0.0, grid.m2, size)
    T, Z = np.meshgrid(ts, zs, indexing="ij")
    return T.ravel(), Z.ravel(), np.asarray(msle_cdf(fit, T.ravel(), Z.ravel()))
