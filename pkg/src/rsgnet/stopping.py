"""Stopping-iteration distributions for randomized stochastic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

STEP_COUPLING = 13.0 / 16.0


def stepsizes(gamma, rho, n):
    """Stepsize schedule ``gamma / k**rho`` for ``k = 1..n``."""
    k = np.arange(1, n + 1, dtype=np.float64)
    return gamma / k ** rho


@dataclass(frozen=True)
class StoppingDistribution:
    kind: str
    pmf: np.ndarray

    @property
    def n(self):
        return len(self.pmf)

    def sample(self, rng):
        return sample_stopping(self, rng)


def build_stopping(kind, n, gamma=None, rho=0.0, weights=None):
    """Build a normalized stopping pmf over iterations ``1..n``.

    ``kind`` is ``"uniform"``, ``"stepsize-coupled"`` (``p^k`` proportional
    to ``g_k (1 - 13/16 g_k)`` with ``g_k = gamma / k**rho``) or ``"custom"``
    (``weights`` supplied, normalized here).
    """
    n = int(n)
    if n < 1:
        raise ParameterError(f"N must be >= 1, got {n}")
    if kind == "uniform":
        w = np.ones(n)
    elif kind == "stepsize-coupled":
        if gamma is None or gamma <= 0:
            raise ParameterError(f"stepsize-coupled stopping needs gamma > 0, got {gamma}")
        g = stepsizes(gamma, rho, n)
        bad = np.nonzero(g >= 1.0 / STEP_COUPLING)[0]
        if bad.size:
            raise ParameterError(
                f"stepsize gamma/k^rho = {g[bad[0]]:.6g} >= 16/13 at k={bad[0] + 1}; "
                "stopping weights would not be positive")
        w = g * (1.0 - STEP_COUPLING * g)
    elif kind == "custom":
        if weights is None:
            raise ParameterError("custom stopping needs explicit weights")
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise ParameterError(f"expected {n} weights, got shape {w.shape}")
        if np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
            raise ParameterError("custom stopping weights must be finite, nonnegative and not all zero")
    else:
        raise ParameterError(f"unknown stopping kind {kind!r}")
    pmf = w / w.sum()
    pmf.setflags(write=False)
    return StoppingDistribution(kind, pmf)


def sample_stopping(dist: StoppingDistribution, rng):
    """Draw ``R in {1..N}``; consumes exactly one uniform variate."""
    cdf = np.cumsum(dist.pmf)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, dist.n - 1) + 1
