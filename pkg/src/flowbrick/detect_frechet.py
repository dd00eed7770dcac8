"""Extreme-value heavy-hitter detector for hash-binned volume arrays.

Under a Pareto-type tail the maximum of m independent bin volumes, scaled
by m**(-1/alpha), converges to a Frechet law.  Inverting that law gives a
per-window significance threshold

    T = (m * c / log(1/p0)) ** (1/alpha)

above which any bin is, with probability at least p0, larger than the
whole-array maximum would be under traffic as usual.  Tail parameters are
re-estimated every window via the max-spectrum and EWMA-smoothed before
the threshold is computed, so the detector adapts to slow drift while a
single anomalous window moves the baseline only by its blend weight.
"""

from __future__ import annotations

import math

import numpy as np

from .events import AlertEvent
from .tail import TailTracker, default_scales

__all__ = ["frechet_threshold", "FrechetDetector"]


def frechet_threshold(m: int, alpha: float, c: float, p0: float) -> float:
    """Volume level exceeded by the array maximum with probability 1 - p0."""
    if m < 1:
        raise ValueError("m must be >= 1, got %r" % m)
    if not alpha > 0.0:
        raise ValueError("alpha must be positive, got %r" % alpha)
    if not c > 0.0:
        raise ValueError("c must be positive, got %r" % c)
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie in (0, 1), got %r" % p0)
    return (m * c / math.log(1.0 / p0)) ** (1.0 / alpha)


class FrechetDetector:
    """Per-window bin flagging against the Frechet-calibrated threshold.

    One instance per array (source or destination); instances share
    nothing.  Each step folds the window into the tail tracker first and
    computes the threshold from the blended state, then flags bins with
    x[i] >= T (boundary inclusive).
    """

    __slots__ = ("m", "p0", "lam", "array", "tracker")

    def __init__(
        self,
        m: int,
        p0: float = 0.95,
        lam: float = 0.5,
        array: str = "dst",
        j1: int | None = None,
        j2: int | None = None,
        alpha_bounds: tuple[float, float] = (0.2, 10.0),
    ) -> None:
        if not 0.0 < p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1), got %r" % p0)
        d1, d2 = default_scales(m)
        self.m = int(m)
        self.p0 = float(p0)
        self.lam = float(lam)
        self.array = str(array)
        self.tracker = TailTracker(
            lam=lam,
            j1=d1 if j1 is None else j1,
            j2=d2 if j2 is None else j2,
            alpha_bounds=alpha_bounds,
        )

    def step(self, x: np.ndarray, window: int) -> AlertEvent:
        """Process one window's array; returns the (possibly empty) alert."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.m,):
            raise ValueError("expected shape (%d,), got %r" % (self.m, x.shape))
        if x.size and float(np.min(x)) < 0.0:
            raise ValueError("negative entries are not a volume array")
        state = self.tracker.step(x)
        threshold = frechet_threshold(self.m, state.alpha, state.c, self.p0)
        flagged = np.flatnonzero(x >= threshold)
        return AlertEvent(
            window=window,
            detector="frechet",
            array=self.array,
            bins=tuple(int(i) for i in flagged),
            values=tuple(float(x[i]) for i in flagged),
            threshold=threshold,
            severity=int(flagged.size),
            diagnostics={
                "alpha": state.alpha,
                "c": state.c,
                "raw_alpha": state.raw_alpha,
                "raw_c": state.raw_c,
                "fallback": state.fallback,
                "clamped": state.clamped,
            },
        )
