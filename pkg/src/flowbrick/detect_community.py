"""Structural anomaly detection on the top-N flow graph.

The N largest matrix cells define a binary adjacency A whose row sums
(in-degrees) count how many source bins feed each destination bin.  A
flood toward one destination shows up as an in-degree spike even when the
extra flows carry negligible volume, which is exactly the regime where
volume-threshold detectors stay silent.  Degrees are modelled as i.i.d.
Normal with EWMA-tracked (mu, sigma); the p0-quantile of their maximum
gives the flag threshold.  The same machinery runs on column sums for the
one-to-many direction.

Co-connectivity products A*A' (destinations sharing sources) and A'*A
(sources sharing destinations) and their maximum clique sizes summarize
coordinated groups; the clique solver is exact branch-and-bound up to a
configurable node count and a flagged greedy bound beyond it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .events import AlertEvent

__all__ = [
    "TopNGraph",
    "build_topn",
    "community_threshold",
    "CommunityDetector",
    "CoConnectivity",
    "co_connectivity",
    "CliqueResult",
    "max_clique_size",
]

_U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class TopNGraph:
    """Binary adjacency over the N largest nonzero cells of one window."""

    n: int
    adjacency: np.ndarray  # m x m uint8
    in_degrees: np.ndarray  # row sums, int64
    out_degrees: np.ndarray  # column sums, int64


def build_topn(cells: np.ndarray, n: int) -> TopNGraph:
    """Mark the n largest nonzero cells; ties break on (row, col) order.

    Sorting the bit-inverted values with a stable sort gives descending
    value order with ascending flat index inside every tie, exact for the
    full uint64 range.
    """
    if n < 1:
        raise ValueError("n must be >= 1, got %d" % n)
    cells = np.asarray(cells)
    if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
        raise ValueError("expected a square matrix, got %r" % (cells.shape,))
    if cells.dtype != np.uint64:
        if np.issubdtype(cells.dtype, np.integer) and int(cells.min(initial=0)) >= 0:
            cells = cells.astype(np.uint64)
        else:
            raise ValueError("cell volumes must be unsigned integers")
    m = cells.shape[0]
    flat = cells.ravel()
    nnz = int(np.count_nonzero(flat))
    take = min(n, nnz)
    adjacency = np.zeros(m * m, dtype=np.uint8)
    if take:
        order = np.argsort(_U64_MAX - flat, kind="stable")
        adjacency[order[:take]] = 1
    adjacency = adjacency.reshape(m, m)
    return TopNGraph(
        n=int(n),
        adjacency=adjacency,
        in_degrees=adjacency.sum(axis=1, dtype=np.int64),
        out_degrees=adjacency.sum(axis=0, dtype=np.int64),
    )


def community_threshold(p0: float, m: int, mu: float, sigma: float) -> float:
    """p0-quantile of the max of m i.i.d. Normal(mu, sigma^2) degrees."""
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie in (0, 1), got %r" % p0)
    if m < 1:
        raise ValueError("m must be >= 1, got %d" % m)
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0, got %r" % sigma)
    return mu + sigma * float(ndtri(p0 ** (1.0 / m)))


class CommunityDetector:
    """Degree-spike flagging with EWMA-tracked Normal baseline.

    One instance per direction ("in" flags many-to-one targets on row
    sums, "out" flags one-to-many sources on column sums).  A window whose
    degrees are all equal carries no dispersion information: it leaves the
    state untouched and flags nothing.
    """

    __slots__ = ("m", "p0", "lam", "direction", "_mu", "_sigma")

    def __init__(
        self,
        m: int,
        p0: float = 0.9999,
        lam: float = 0.5,
        direction: str = "in",
    ) -> None:
        if not 0.0 < p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1), got %r" % p0)
        if not 0.0 < lam <= 1.0:
            raise ValueError("lambda must lie in (0, 1], got %r" % lam)
        if direction not in ("in", "out"):
            raise ValueError("direction must be 'in' or 'out'")
        self.m = int(m)
        self.p0 = float(p0)
        self.lam = float(lam)
        self.direction = direction
        self._mu: float | None = None
        self._sigma: float | None = None

    @property
    def initialized(self) -> bool:
        return self._mu is not None

    def step(self, degrees: np.ndarray, window: int) -> AlertEvent:
        """Fold one window's degree array and flag outlying bins."""
        degrees = np.asarray(degrees, dtype=np.float64)
        if degrees.shape != (self.m,):
            raise ValueError("expected shape (%d,), got %r" % (self.m, degrees.shape))
        array = "in_degree" if self.direction == "in" else "out_degree"
        mu_hat = float(np.mean(degrees))
        sigma_hat = float(np.std(degrees))
        if sigma_hat == 0.0:
            return AlertEvent(
                window=window,
                detector="community",
                array=array,
                diagnostics={
                    "mu": self._mu,
                    "sigma": self._sigma,
                    "degenerate": True,
                },
            )
        if self._mu is None:
            self._mu, self._sigma = mu_hat, sigma_hat
        else:
            self._mu = self.lam * mu_hat + (1.0 - self.lam) * self._mu
            self._sigma = self.lam * sigma_hat + (1.0 - self.lam) * self._sigma
        u = community_threshold(self.p0, self.m, self._mu, self._sigma)
        flagged = np.flatnonzero(degrees > u)
        return AlertEvent(
            window=window,
            detector="community",
            array=array,
            bins=tuple(int(i) for i in flagged),
            values=tuple(float(degrees[i]) for i in flagged),
            threshold=u,
            severity=int(flagged.size),
            diagnostics={
                "mu": self._mu,
                "sigma": self._sigma,
                "degenerate": False,
            },
        )


@dataclass(frozen=True)
class CoConnectivity:
    """Shared-neighbor counts: D[i,k] = sources shared by destinations
    i and k; S[j,l] = destinations shared by sources j and l."""

    D: np.ndarray  # A @ A.T, int64
    S: np.ndarray  # A.T @ A, int64


def co_connectivity(g: TopNGraph) -> CoConnectivity:
    a = g.adjacency.astype(np.int64)
    return CoConnectivity(D=a @ a.T, S=a.T @ a)


@dataclass(frozen=True)
class CliqueResult:
    size: int
    exact: bool


def _clique_exact(masks: list[int], order_n: int) -> int:
    """Maximum clique via branch-and-bound with greedy coloring bounds."""
    best = 0

    def expand(size: int, cand: int) -> None:
        nonlocal best
        if cand == 0:
            if size > best:
                best = size
            return
        # greedy sequential coloring; vertices are processed in reverse
        # color order so the bound tightens as early as possible
        order: list[int] = []
        bounds: list[int] = []
        left = cand
        color = 0
        while left:
            color += 1
            avail = left
            while avail:
                v = (avail & -avail).bit_length() - 1
                bit = 1 << v
                left ^= bit
                avail &= ~(masks[v] | bit)
                order.append(v)
                bounds.append(color)
        for i in range(len(order) - 1, -1, -1):
            if size + bounds[i] <= best:
                return
            v = order[i]
            expand(size + 1, cand & masks[v])
            cand &= ~(1 << v)

    expand(0, (1 << order_n) - 1)
    return best


def _clique_greedy(masks: list[int], order_n: int) -> int:
    """Lower bound: grow from each vertex by highest remaining degree."""
    best = 0
    degs = [masks[v].bit_count() for v in range(order_n)]
    starts = sorted(range(order_n), key=lambda v: -degs[v])[: max(8, order_n // 8)]
    for s in starts:
        size = 1
        cand = masks[s]
        while cand:
            pick = -1
            pick_deg = -1
            rest = cand
            while rest:
                v = (rest & -rest).bit_length() - 1
                rest &= rest - 1
                d = (masks[v] & cand).bit_count()
                if d > pick_deg:
                    pick, pick_deg = v, d
            size += 1
            cand &= masks[pick]
        if size > best:
            best = size
    return best


def max_clique_size(
    co: CoConnectivity,
    graph: str = "dst",
    threshold: int = 1,
    exact_limit: int = 256,
) -> CliqueResult:
    """Maximum clique of the binarized co-connectivity graph.

    Nodes are bins with nonzero self-count; edges join node pairs whose
    off-diagonal entry reaches the threshold.  All-zero adjacency gives 0;
    active nodes with no qualifying edges give 1.
    """
    if graph not in ("dst", "src"):
        raise ValueError("graph must be 'dst' or 'src'")
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    mat = co.D if graph == "dst" else co.S
    active = np.flatnonzero(np.diagonal(mat) > 0)
    if active.size == 0:
        return CliqueResult(size=0, exact=True)
    sub = (mat[np.ix_(active, active)] >= threshold).astype(np.uint8)
    np.fill_diagonal(sub, 0)
    n = int(active.size)
    masks = []
    for i in range(n):
        row = 0
        for j in np.flatnonzero(sub[i]):
            row |= 1 << int(j)
        masks.append(row)
    if n <= exact_limit:
        return CliqueResult(size=_clique_exact(masks, n), exact=True)
    return CliqueResult(size=_clique_greedy(masks, n), exact=False)
