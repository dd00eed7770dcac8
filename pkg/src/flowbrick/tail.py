"""Heavy-tail exponent and scale estimation from hash-binned arrays.

The central tool is the max-spectrum: partition the positive entries of an
array into dyadic blocks, regress the mean log2 block maximum on the log2
block size, and read the tail exponent off the slope.  For Pareto-type data
with P(X > x) ~ c * x**(-alpha) the block maxima of size b behave like
(c*b)**(1/alpha) * Z where Z follows a unit Frechet law, so the slope
estimates 1/alpha and the intercept yields c.

A small EWMA tracker smooths the per-window estimates across a stream of
arrays and falls back to the previous state when a window is too sparse to
fit.  Hill and CCDF-regression estimators are provided for offline
diagnostics only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import SparseDataError, TailEstimationError

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)
_LN2 = math.log(2.0)

# polyfit weight = block_count**WEIGHT_EXPONENT, i.e. least-squares weights
# proportional to sqrt(block_count).  Equal weights let the noisy large-block
# scales dominate the fit variance; exact precision weights (residual weight
# sqrt(block_count)) concentrate on the smallest blocks where Pareto block
# maxima are farthest from their Frechet limit and bias alpha upward.  The
# quarter-power compromise keeps the Monte Carlo consistency of the estimator
# while cutting enough fit variance for stable downstream thresholds.
WEIGHT_EXPONENT = 0.25


def default_scales(m: int) -> tuple[int, int]:
    """Default dyadic scale range (j1, j2) for arrays of length m."""
    if m < 8:
        raise ValueError("need m >= 8 for a two-scale fit, got %d" % m)
    j2 = min(6, int(math.log2(m)) - 1)
    return 1, max(2, j2)


@dataclass(frozen=True)
class TailEstimate:
    """Single-window max-spectrum fit result."""

    alpha: float
    c: float
    slope: float
    intercept: float
    n_positive: int
    scales: tuple[int, int]


def max_spectrum(x: np.ndarray, j1: int = 1, j2: int = 6) -> TailEstimate:
    """Estimate (alpha, c) of a Pareto-type tail from one array.

    For each scale j in [j1, j2] the positive entries are split, in their
    given order, into floor(n / 2**j) consecutive blocks of 2**j (the
    remainder is dropped) and Y(j) = mean log2 block maximum is computed.
    A weighted least-squares line through (j, Y(j)) gives slope = 1/alpha;
    the intercept is inverted via E[log2 max_b] ~ (j + log2 c)/alpha +
    gamma/(alpha*ln 2), hence log2 c = alpha*intercept - gamma/ln 2.

    Raises SparseDataError when fewer than 2**(j2+1) positive entries are
    available, and TailEstimationError when the fitted slope is not positive.
    """
    if not 1 <= j1 < j2:
        raise ValueError("need 1 <= j1 < j2, got (%d, %d)" % (j1, j2))
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-d array")
    if x.size and float(np.min(x)) < 0.0:
        raise ValueError("negative entries are not a volume array")
    z = x[x > 0]
    n = int(z.size)
    if n < 1 << (j2 + 1):
        raise SparseDataError(
            "max-spectrum needs >= %d positive entries, got %d" % (1 << (j2 + 1), n)
        )
    js = np.arange(j1, j2 + 1, dtype=np.float64)
    y = np.empty(js.size, dtype=np.float64)
    counts = np.empty(js.size, dtype=np.float64)
    for ix, j in enumerate(range(j1, j2 + 1)):
        block = 1 << j
        nblocks = n // block
        tops = z[: nblocks * block].reshape(nblocks, block).max(axis=1)
        y[ix] = float(np.mean(np.log2(tops)))
        counts[ix] = nblocks
    slope, intercept = np.polyfit(js, y, 1, w=counts**WEIGHT_EXPONENT)
    if not slope > 0.0 or not np.isfinite(slope):
        raise TailEstimationError("non-positive max-spectrum slope %r" % slope)
    alpha = 1.0 / float(slope)
    log2_c = alpha * float(intercept) - EULER_GAMMA / _LN2
    if not (np.isfinite(alpha) and abs(log2_c) < 960.0):
        raise TailEstimationError("degenerate fit: alpha=%r log2_c=%r" % (alpha, log2_c))
    c = 2.0**log2_c
    if not (np.isfinite(c) and c > 0.0):
        raise TailEstimationError("degenerate fit: alpha=%r c=%r" % (alpha, c))
    return TailEstimate(
        alpha=alpha,
        c=c,
        slope=float(slope),
        intercept=float(intercept),
        n_positive=n,
        scales=(j1, j2),
    )


def ewma(prev: float, new: float, lam: float) -> float:
    """Convex blend lam*new + (1-lam)*prev."""
    if not 0.0 < lam <= 1.0:
        raise ValueError("lambda must lie in (0, 1], got %r" % lam)
    return lam * new + (1.0 - lam) * prev


def hill_alpha(x: np.ndarray, k: int | None = None) -> float:
    """Hill estimator on the top k order statistics (diagnostic only).

    Heavily influenced by the single largest observations, which is exactly
    why it serves as the robustness foil for the max-spectrum.
    """
    z = np.sort(np.asarray(x, dtype=np.float64)[np.asarray(x) > 0])[::-1]
    n = int(z.size)
    if k is None:
        k = max(2, math.isqrt(n))
    if not 2 <= k < n:
        raise ValueError("need 2 <= k < n_positive, got k=%d n=%d" % (k, n))
    logs = np.log(z[:k]) - math.log(z[k])
    mean_excess = float(np.mean(logs))
    if mean_excess <= 0.0:
        raise TailEstimationError("degenerate Hill mean excess")
    return 1.0 / mean_excess


def ccdf_alpha(x: np.ndarray, tail_fraction: float = 0.5) -> tuple[float, float]:
    """Slope fit of log empirical CCDF vs log x over the upper tail.

    Returns (alpha, c).  Offline diagnostic; detectors never call this.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must lie in (0, 1]")
    z = np.sort(np.asarray(x, dtype=np.float64)[np.asarray(x) > 0])
    n = int(z.size)
    if n < 16:
        raise SparseDataError("ccdf fit needs >= 16 positive entries, got %d" % n)
    # CCDF at the i-th smallest of n points is (n - i) / n; drop the last
    # point where it hits zero.
    start = max(0, n - max(8, int(round(tail_fraction * n))))
    xs = np.log(z[start : n - 1])
    ys = np.log((n - 1.0 - np.arange(start, n - 1)) / n)
    slope, intercept = np.polyfit(xs, ys, 1)
    if not slope < 0.0:
        raise TailEstimationError("non-negative CCDF slope %r" % slope)
    return -float(slope), float(math.exp(intercept))


@dataclass(frozen=True)
class TailState:
    """Smoothed tracker state after one window."""

    alpha: float
    c: float
    raw_alpha: float | None
    raw_c: float | None
    fallback: bool
    clamped: bool


class TailTracker:
    """EWMA-smoothed max-spectrum estimates across a window stream.

    alpha is blended arithmetically.  c is blended on the log scale: the
    per-window scale estimate is strongly right-skewed (its log is roughly
    normal with unit-order spread at m around 128), and an arithmetic mean
    of such a quantity tracks its inflated upper excursions rather than its
    central value, which in turn inflates every threshold derived from it.
    """

    __slots__ = ("lam", "j1", "j2", "alpha_bounds", "fallback_alpha",
                 "_alpha", "_log_c")

    def __init__(
        self,
        lam: float = 0.5,
        j1: int | None = None,
        j2: int | None = None,
        m: int | None = None,
        alpha_bounds: tuple[float, float] = (0.2, 10.0),
        fallback_alpha: float = 1.5,
    ) -> None:
        if not 0.0 < lam <= 1.0:
            raise ValueError("lambda must lie in (0, 1], got %r" % lam)
        if j1 is None or j2 is None:
            d1, d2 = default_scales(m if m is not None else 128)
            j1 = d1 if j1 is None else j1
            j2 = d2 if j2 is None else j2
        if not 1 <= j1 < j2:
            raise ValueError("need 1 <= j1 < j2, got (%d, %d)" % (j1, j2))
        if not 0.0 < alpha_bounds[0] < alpha_bounds[1]:
            raise ValueError("bad alpha bounds %r" % (alpha_bounds,))
        self.lam = float(lam)
        self.j1 = int(j1)
        self.j2 = int(j2)
        self.alpha_bounds = (float(alpha_bounds[0]), float(alpha_bounds[1]))
        self.fallback_alpha = float(fallback_alpha)
        self._alpha: float | None = None
        self._log_c: float | None = None

    @property
    def initialized(self) -> bool:
        return self._alpha is not None

    @property
    def alpha(self) -> float:
        if self._alpha is None:
            raise TailEstimationError("tracker has not seen a window yet")
        return self._alpha

    @property
    def c(self) -> float:
        if self._log_c is None:
            raise TailEstimationError("tracker has not seen a window yet")
        return math.exp(self._log_c)

    def step(self, x: np.ndarray) -> TailState:
        """Fold one window's array into the smoothed state."""
        raw_alpha: float | None = None
        raw_c: float | None = None
        fallback = False
        try:
            est = max_spectrum(x, self.j1, self.j2)
            raw_alpha, raw_c = est.alpha, est.c
            if self._alpha is None:
                self._alpha = raw_alpha
                self._log_c = math.log(raw_c)
            else:
                self._alpha = ewma(self._alpha, raw_alpha, self.lam)
                self._log_c = ewma(self._log_c, math.log(raw_c), self.lam)
        except TailEstimationError:
            fallback = True
            if self._alpha is None:
                # nothing to fall back on: adopt the default exponent and a
                # crude scale from the window median (1.0 for an empty window)
                self._alpha = self.fallback_alpha
                z = np.asarray(x, dtype=np.float64)
                z = z[z > 0]
                med = float(np.median(z)) if z.size else 0.0
                self._log_c = self._alpha * math.log(med) if med > 0.0 else 0.0
        clamped = False
        lo, hi = self.alpha_bounds
        if self._alpha < lo or self._alpha > hi:
            clamped = True
            old = self._alpha
            self._alpha = min(max(self._alpha, lo), hi)
            logger.warning("tail exponent %.3g clamped into [%g, %g]", old, lo, hi)
        return TailState(
            alpha=self._alpha,
            c=math.exp(self._log_c),
            raw_alpha=raw_alpha,
            raw_c=raw_c,
            fallback=fallback,
            clamped=clamped,
        )
