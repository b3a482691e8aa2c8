"""Seeded simulation of current status samples from a built-in model.

The generator is numpy's ``PCG64`` bit generator wrapped as
``Generator(PCG64(seed))``. Each sample consumes one ``(n, 3)``
block of ``Generator.random`` doubles, in the column order (X, Y, T), so a
given ``(model, n, seed)`` reproduces the same sample bit for bit on any
platform running numpy >= 1.17.
"""

from __future__ import annotations

import numpy as np

from .model import POLYNOMIAL, ModelSpec, Sample

SEED_MAX = 2**64 - 1


def make_rng(seed: int) -> np.random.Generator:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.PCG64(seed))


def inverse_cdfs(model: ModelSpec, u: np.ndarray):
    """Map an ``(n, 3)`` block of uniforms to (x, y, t) draws."""
    u1, u2, u3 = u[:, 0], u[:, 1], u[:, 2]
    if model.kind == POLYNOMIAL:
        # marginal of X is x^2/2 + x/2; conditional of Y is (xy + y^2/2)/(x + 1/2)
        x = 0.5 * (np.sqrt(1.0 + 8.0 * u1) - 1.0)
        y = np.sqrt(x * x + 2.0 * u2 * (x + 0.5)) - x
        t = np.sqrt(u3)
        return x, y, t
    return u1, u2, u3


def draw_sample(model: ModelSpec, n: int, seed: int) -> Sample:
    """Draw ``n`` observations ``(T, 1{X <= T} * Y)`` from ``model``."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = make_rng(seed)
    x, y, t = inverse_cdfs(model, rng.random((n, 3)))
    # P(Y = 0) = 0 under the model, but a literal 0.0 draw would read as censored
    y = np.where(y > 0, y, np.nextafter(0.0, 1.0))
    z = np.where(x <= t, y, 0.0)
    return Sample(t, z)
