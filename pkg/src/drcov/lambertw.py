"""Principal branch of the Lambert W function for non-negative arguments."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, NoConvergence

MAX_ITER = 60
REL_TOL = 1e-14


def lambert_w0(t):
    """Solve ``w * exp(w) = t`` for ``w >= 0`` given ``t >= 0``.

    Halley iteration, vectorized. Small arguments iterate on ``w e^w - t``;
    arguments above ``e`` iterate on ``w + log w - log t`` so that huge ``t``
    never overflows ``exp``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError("lambert_w0 is evaluated only on t >= 0")
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    w = np.zeros_like(t)

    small = t <= np.e
    if np.any(small):
        w[small] = _halley_small(t[small])
    big = ~small & np.isfinite(t)
    if np.any(big):
        w[big] = _halley_large(t[big])
    w[np.isinf(t)] = np.inf
    return float(w[0]) if scalar else w


def _halley_small(t):
    w = np.log1p(t)
    for _ in range(MAX_ITER):
        ew = np.exp(w)
        f = w * ew - t
        fp = ew * (w + 1.0)
        step = f / (fp - (w + 2.0) * f / (2.0 * (w + 1.0)))
        w = w - step
        if np.all(np.abs(step) <= REL_TOL * np.maximum(np.abs(w), 1e-300)):
            return w
    raise NoConvergence("Lambert W iteration did not converge")


def _halley_large(t):
    lt = np.log(t)
    w = lt - np.log(lt)
    for _ in range(MAX_ITER):
        # g(w) = w + log w - log t, g' = 1 + 1/w, g'' = -1/w^2
        g = w + np.log(w) - lt
        g1 = 1.0 + 1.0 / w
        g2 = -1.0 / (w * w)
        step = g / (g1 - g * g2 / (2.0 * g1))
        w = w - step
        if np.all(np.abs(step) <= REL_TOL * w):
            return w
    raise NoConvergence("Lambert W iteration did not converge")
