"""Relative-volume detector: is the top-k bin share significantly large?

V(k) = (sum of the k largest bins) / (total volume).  For i.i.d. Pareto
bins this ratio converges to the law of

    W_alpha(k, m) = sum_{j<=k} Gamma_j**(-1/alpha) / sum_{j<=m} Gamma_j**(-1/alpha)

where Gamma_j are standard Poisson arrival times; under the Pareto model
the match is exact in distribution, so an empirical p0-quantile of W makes
a calibrated threshold for V.  The quantile is simulated per window with a
window-keyed seed and cached on the rounded tail exponent.

A control-chart variant EWMA-smooths the z-scores of the per-window
exceedance probabilities to catch persistent shifts that are individually
too small to flag.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

from .errors import DegenerateWindowError
from .events import AlertEvent
from .hashing import STREAM_MONTECARLO, derive_seed
from .tail import TailTracker, default_scales

__all__ = [
    "relative_volume",
    "top_k_bins",
    "sample_W",
    "EwmaZChart",
    "RelVolDetector",
]

_SAMPLE_CHUNK = 8192  # draw replicates in fixed-size chunks (bounded memory)


def relative_volume(x: np.ndarray, k: int) -> float:
    """Share of total volume carried by the k largest bins."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-d array")
    if not 1 <= k <= x.size:
        raise ValueError("need 1 <= k <= m, got k=%d m=%d" % (k, x.size))
    if x.size and float(np.min(x)) < 0.0:
        raise ValueError("negative entries are not a volume array")
    # one cumulative sum gives exact monotonicity in k and V(m) == 1.0:
    # sequential non-negative additions never decrease a partial sum
    cs = np.cumsum(np.sort(x)[::-1])
    total = float(cs[-1])
    if total <= 0.0:
        raise DegenerateWindowError("all-zero window has no relative volume")
    return float(cs[k - 1] / total)


def top_k_bins(x: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest bins; ties go to the lower index."""
    x = np.asarray(x, dtype=np.float64)
    if not 1 <= k <= x.size:
        raise ValueError("need 1 <= k <= m, got k=%d m=%d" % (k, x.size))
    order = np.lexsort((np.arange(x.size), -x))
    return order[:k]


def sample_W(alpha: float, k: int, m: int, reps: int, seed: int) -> np.ndarray:
    """Empirical sample of W_alpha(k, m), deterministic in the seed.

    Arrival times are cumulative sums of standard exponentials; the final
    arrival Gamma_{m+1} never enters the ratio, so m draws per replicate
    suffice.  Replicates are generated in fixed chunks to keep memory flat
    at high rep counts without changing the draw sequence.
    """
    if not alpha > 0.0:
        raise ValueError("alpha must be positive, got %r" % alpha)
    if not 1 <= k <= m:
        raise ValueError("need 1 <= k <= m, got k=%d m=%d" % (k, m))
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty(reps, dtype=np.float64)
    done = 0
    inv = -1.0 / alpha
    while done < reps:
        n = min(_SAMPLE_CHUNK, reps - done)
        gamma = np.cumsum(rng.standard_exponential((n, m)), axis=1)
        powers = gamma**inv
        out[done : done + n] = powers[:, :k].sum(axis=1) / powers.sum(axis=1)
        done += n
    return out


class EwmaZChart:
    """EWMA control chart on Normal scores of exceedance probabilities.

    Feeding the chart p = P(V > W), which is Uniform(0,1) under the null,
    makes z a stationary AR(1) Gaussian with variance lam_p/(2-lam_p); the
    alarm fires when z exceeds L of its null standard deviations.  An
    anomalously concentrated window pushes p toward 1 and z upward.
    """

    __slots__ = ("lam_p", "L", "z")

    def __init__(self, lam_p: float = 0.6, L: float = 1.64) -> None:
        if not 0.0 < lam_p < 1.0:
            raise ValueError("lam_p must lie in (0, 1), got %r" % lam_p)
        if not L > 0.0:
            raise ValueError("L must be positive, got %r" % L)
        self.lam_p = float(lam_p)
        self.L = float(L)
        self.z = 0.0

    @property
    def sigma_z(self) -> float:
        return math.sqrt(self.lam_p / (2.0 - self.lam_p))

    def step(self, p: float) -> tuple[float, bool]:
        """Advance the chart with one exceedance probability."""
        if not 0.0 < p < 1.0:
            raise ValueError("p must lie strictly in (0, 1), got %r" % p)
        self.z = self.lam_p * float(ndtri(p)) + (1.0 - self.lam_p) * self.z
        return self.z, self.z / self.sigma_z > self.L


class RelVolDetector:
    """Per-window flagging of significantly large top-k volume shares.

    alpha follows the same estimate-then-blend contract as the Frechet
    detector unless fixed_alpha pins it (the exact-calibration mode for
    known Pareto input).  The threshold q is the empirical p0-quantile of
    sample_W at the smoothed alpha rounded to 0.01; samples are cached on
    (rounded alpha, k) and seeded from (master seed, window) on a miss, so
    a run is reproducible end to end.
    """

    __slots__ = ("m", "k", "p0", "lam", "mc_reps", "seed", "array",
                 "fixed_alpha", "tracker", "chart", "_cache")

    def __init__(
        self,
        m: int,
        k: int = 3,
        p0: float = 0.95,
        lam: float = 0.5,
        mc_reps: int = 4000,
        seed: int = 1,
        array: str = "dst",
        fixed_alpha: float | None = None,
        chart: EwmaZChart | None = None,
        j1: int | None = None,
        j2: int | None = None,
        alpha_bounds: tuple[float, float] = (0.2, 10.0),
    ) -> None:
        if not 1 <= k <= m:
            raise ValueError("need 1 <= k <= m, got k=%d m=%d" % (k, m))
        if not 0.0 < p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1), got %r" % p0)
        if mc_reps < 100:
            raise ValueError("mc_reps must be >= 100, got %d" % mc_reps)
        if fixed_alpha is not None and not fixed_alpha > 0.0:
            raise ValueError("fixed_alpha must be positive")
        self.m = int(m)
        self.k = int(k)
        self.p0 = float(p0)
        self.lam = float(lam)
        self.mc_reps = int(mc_reps)
        self.seed = int(seed)
        self.array = str(array)
        self.fixed_alpha = None if fixed_alpha is None else float(fixed_alpha)
        if fixed_alpha is None:
            d1, d2 = default_scales(m)
            self.tracker = TailTracker(
                lam=lam,
                j1=d1 if j1 is None else j1,
                j2=d2 if j2 is None else j2,
                alpha_bounds=alpha_bounds,
            )
        else:
            self.tracker = None
        self.chart = chart
        self._cache: dict[tuple[float, int], np.ndarray] = {}

    def _w_sample(self, alpha: float, window: int) -> np.ndarray:
        key = (round(alpha, 2), self.k)
        sample = self._cache.get(key)
        if sample is None:
            sample = np.sort(
                sample_W(
                    key[0],
                    self.k,
                    self.m,
                    self.mc_reps,
                    derive_seed(self.seed, STREAM_MONTECARLO, window),
                )
            )
            self._cache[key] = sample
        return sample

    def step(self, x: np.ndarray, window: int) -> list[AlertEvent]:
        """Process one window; returns [relvol] plus [relvol_chart] if on.

        An all-zero window yields a single skipped verdict and leaves all
        state (alpha, chart) untouched.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.m,):
            raise ValueError("expected shape (%d,), got %r" % (self.m, x.shape))
        if x.size and float(np.min(x)) < 0.0:
            raise ValueError("negative entries are not a volume array")
        if float(np.sum(x)) <= 0.0:
            return [
                AlertEvent(
                    window=window,
                    detector="relvol",
                    array=self.array,
                    diagnostics={"skipped": True},
                )
            ]
        if self.fixed_alpha is not None:
            alpha = self.fixed_alpha
        else:
            alpha = self.tracker.step(x).alpha
        v = relative_volume(x, self.k)
        sample = self._w_sample(alpha, window)
        q = float(np.quantile(sample, self.p0))
        flagged = v > q
        bins: tuple[int, ...] = ()
        values: tuple[float, ...] = ()
        if flagged:
            idx = top_k_bins(x, self.k)
            bins = tuple(int(i) for i in idx)
            values = tuple(float(x[i]) for i in idx)
        events = [
            AlertEvent(
                window=window,
                detector="relvol",
                array=self.array,
                bins=bins,
                values=values,
                threshold=q,
                severity=self.k if flagged else 0,
                diagnostics={
                    "V": v,
                    "q": q,
                    "alpha": alpha,
                    "flag": bool(flagged),
                    "skipped": False,
                },
            )
        ]
        if self.chart is not None:
            # exceedance fraction of the observed share over the W draws,
            # clipped away from {0,1} before the Normal-score transform
            reps = sample.size
            pmin = 1.0 / (reps + 1.0)
            p = float(np.searchsorted(sample, v, side="left")) / reps
            p = min(max(p, pmin), 1.0 - pmin)
            z, alarm = self.chart.step(p)
            events.append(
                AlertEvent(
                    window=window,
                    detector="relvol_chart",
                    array=self.array,
                    bins=bins if alarm else (),
                    values=values if alarm else (),
                    threshold=self.chart.L,
                    severity=1 if alarm else 0,
                    diagnostics={
                        "V": v,
                        "p": p,
                        "z": z,
                        "z_scaled": z / self.chart.sigma_z,
                        "alpha": alpha,
                        "flag": bool(alarm),
                        "skipped": False,
                    },
                )
            )
        return events
