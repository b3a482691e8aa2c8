"""Independent reference implementations used by the tests.

None of these call into the estimator code beyond the plain data classes,
so agreement with them is evidence rather than tautology.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import integrate, optimize
from scipy.special import xlogy

from cscm.histogram import Histogram, make_grid


# --- random instances -------------------------------------------------------

def random_hist(rng, k, l, m1=1.0, m2=1.0, empty=False):
    """Histogram with random counts; every cell occupied unless ``empty``."""
    lo = 0 if empty else 1
    c0 = rng.integers(lo, 40, size=k)
    c1 = rng.integers(lo, 40, size=(k, l))
    total = int(c0.sum() + c1.sum())
    if total == 0:
        c0[0] = 1
        total = 1
    return Histogram(c0, c1, make_grid(m1, m2, k, l), total)


def random_masses(rng, shape, floor=0.0):
    m = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape) + floor
    return m / m.sum()


# --- objective via the phi formula written out directly ---------------------

def phi_direct(x, y):
    """``(x log x - y log y)/(x - y)``, ``1 + log x`` on the diagonal.

    Near the diagonal phi is the mean of ``1 + log u`` over ``[y, x]``:
    ``1 + log mu - sum_k r^(2k) / (2k (2k + 1))`` with ``mu = (x + y)/2``
    and ``r = (x - y)/(x + y)``.
    """
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    with np.errstate(divide="ignore", invalid="ignore"):
        off = (xlogy(x, x) - xlogy(y, y)) / (x - y)
        mu = 0.5 * (x + y)
        r2 = ((x - y) / (x + y)) ** 2
        series = sum(r2**k / (2 * k * (2 * k + 1)) for k in range(1, 5))
        near = np.where(x == y, 1.0 + np.log(x), 1.0 + np.log(mu) - series)
    close = (x == y) | (np.abs(x - y) < 1e-3 * (x + y))
    return np.where(close, near, off)


def psi_batch(M, hist: Histogram):
    """psi for a batch of mass matrices ``M`` with shape ``(B, k, l)``."""
    g = hist.grid
    rows = M.sum(axis=2)
    tail = np.concatenate([np.cumsum(rows[:, ::-1], axis=1)[:, ::-1], np.zeros((M.shape[0], 1))], axis=1)
    cum = np.concatenate([np.zeros((M.shape[0], 1, g.l)), np.cumsum(M, axis=1)], axis=1) / g.eps
    line = phi_direct(tail[:, 1:], tail[:, :-1])
    plane = phi_direct(cum[:, 1:], cum[:, :-1])
    p0, p1 = hist.p0, hist.p1
    s = np.where(p0 > 0, p0 * line, 0.0).sum(axis=1) + np.where(p1 > 0, p1 * plane, 0.0).sum(axis=(1, 2))
    return s - M.sum(axis=(1, 2)) + 1.0


# --- objective through the smoothed log-likelihood and KL -------------------

def _log_linear_integral(lo_val, hi_val, width):
    """``integral_0^width log(lo + (hi - lo) s / width) ds`` by quadrature."""
    f = lambda s: math.log(lo_val + (hi_val - lo_val) * s / width)  # noqa: E731
    val, _ = integrate.quad(f, 0.0, width, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def smoothed_loglik(m, hist: Histogram):
    """``l^S(f)``: integral of log h_f (with g = 1) against the histogram density.

    On time cell i the survival function ``1 - F_X`` and the mark density
    ``d2 F(., z)`` are linear in t, and both are constant in z within a mark
    cell, so one 1-D quadrature per cell suffices.
    """
    g = hist.grid
    m = np.asarray(m, float)
    rows = m.sum(axis=1)
    surv = np.concatenate([np.cumsum(rows[::-1])[::-1], [0.0]])  # value at a_{i-1}
    col = np.concatenate([np.zeros((1, g.l)), np.cumsum(m, axis=0)]) / g.eps  # value at a_i
    total = 0.0
    for i in range(g.k):
        if hist.h0[i] > 0:
            total += hist.h0[i] * _log_linear_integral(surv[i], surv[i + 1], g.delta)
        for j in range(g.l):
            if hist.h1[i, j] > 0:
                total += hist.h1[i, j] * g.eps * _log_linear_integral(col[i, j], col[i + 1, j], g.delta)
    return total


def kl_hist_to_model(m, hist: Histogram):
    """``K(h_hat, h_f)`` under the mixed measure, with g = 1."""
    g = hist.grid
    ent = (g.delta * xlogy(hist.h0, hist.h0).sum()
           + g.delta * g.eps * xlogy(hist.h1, hist.h1).sum())
    return ent - smoothed_loglik(m, hist)


def psi_via_kl(m, hist: Histogram):
    """psi recovered from the KL divergence: ``psi = l^S + 2 - sum m``."""
    g = hist.grid
    ent = (g.delta * xlogy(hist.h0, hist.h0).sum()
           + g.delta * g.eps * xlogy(hist.h1, hist.h1).sum())
    return ent - kl_hist_to_model(m, hist) + 2.0 - float(np.sum(m))


def maximize_smoothed_loglik(hist: Histogram, x0=None):
    """Maximize l^S over the simplex in softmax coordinates."""
    size = hist.grid.k * hist.grid.l

    def masses(theta):
        e = np.exp(np.concatenate([[0.0], theta]) - max(0.0, theta.max()))
        return (e / e.sum()).reshape(hist.grid.shape)

    x0 = np.zeros(size - 1) if x0 is None else x0
    res = optimize.minimize(lambda th: -smoothed_loglik(masses(th), hist), x0, method="Nelder-Mead",
                            options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 20000, "maxfev": 40000})
    return masses(res.x)


# --- EM step transcribed literally -----------------------------------------

def em_step_loops(m, hist: Histogram, dps=None):
    """Self-consistency update with explicit loops, in mass units.

    Interior rows use four terms; the first row starts with its own cell
    fraction and has no earlier rows; the last row ends with
    ``p0[k] * m / R[k]``. With ``dps`` the arithmetic runs in mpmath at
    that many decimal digits.
    """
    if dps is None:
        num, log = float, math.log
    else:
        mpmath.mp.dps = dps
        num, log = mpmath.mpf, mpmath.log
    m0 = np.asarray(m, float)
    k, l = m0.shape
    m = [[num(float(m0[i, j])) for j in range(l)] for i in range(k)]
    m = np.array(m, dtype=object)
    p0 = [num(float(v)) for v in hist.p0]
    p1 = np.array([[num(float(v)) for v in row] for row in hist.p1], dtype=object)
    R = [sum(m[i, j] for j in range(l)) for i in range(k)]
    new = np.zeros((k, l))
    for a in range(k):
        for j in range(l):
            mkj = m[a, j]
            val = 0.0
            # later rows of the same column
            for i in range(a + 1, k):
                C = sum(m[q, j] for q in range(i))
                val += mkj * log(1 + m[i, j] / C) * p1[i, j] / m[i, j]
            # own cell
            if a == 0:
                val += p1[0, j]
            else:
                C = sum(m[q, j] for q in range(a))
                val += mkj * (mkj - C * log(1 + mkj / C)) * p1[a, j] / mkj**2
            # earlier rows, z = 0 part
            for i in range(a):
                A = sum(R[q] for q in range(i + 1, k))
                val += mkj * log(1 + R[i] / A) * p0[i] / R[i]
            # own row, z = 0 part
            if a == k - 1:
                val += mkj * p0[a] / R[a]
            else:
                A = sum(R[q] for q in range(a + 1, k))
                val += mkj * (R[a] - A * log(1 + R[a] / A)) * p0[a] / R[a] ** 2
            new[a, j] = float(val)
    return new


# --- exhaustive simplex search on 2 x 2 grids -------------------------------

def _compositions(total, parts):
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]])
    out = []
    for first in range(total + 1):
        rest = _compositions(total - first, parts - 1)
        out.append(np.column_stack([np.full(len(rest), first), rest]))
    return np.vstack(out)


def simplex_search(hist: Histogram, meshes=(1e-2, 1e-3, 1e-4, 1e-5), radius=20):
    """Grid search for the maximizer of psi on a 2 x 2 grid.

    The coarsest mesh is searched exhaustively; every finer mesh searches
    ``+-radius`` steps around the previous best in the three free
    coordinates.
    """
    shape = hist.grid.shape
    size = shape[0] * shape[1]
    steps = int(round(1 / meshes[0]))
    pts = _compositions(steps, size) / steps
    vals = psi_batch(pts.reshape(-1, *shape), hist)
    best = pts[np.argmax(vals)]
    for h in meshes[1:]:
        off = np.arange(-radius, radius + 1) * h
        grids = np.meshgrid(*([off] * (size - 1)), indexing="ij")
        free = best[:-1] + np.column_stack([g.ravel() for g in grids])
        last = 1.0 - free.sum(axis=1)
        cand = np.column_stack([free, last])
        cand = cand[np.all(cand >= 0, axis=1)]
        vals = psi_batch(cand.reshape(-1, *shape), hist)
        best = cand[np.argmax(vals)]
    return best.reshape(shape), float(psi_batch(best.reshape(1, *shape), hist)[0])
