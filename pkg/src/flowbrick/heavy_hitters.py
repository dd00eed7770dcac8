"""Hash-thinned weighted majority sketch for per-window heavy hitters.

The key universe is split into m sub-streams by one hash function; each
sub-stream runs an independent weighted majority vote (candidate key,
surviving weight, exactness flag). A second hash spreads each
sub-stream's volume over m' columns of an accumulator matrix, whose row
maximum serves as the candidate's volume estimate at query time. The
estimate never undershoots the candidate's true sub-stream volume, and
a still-set flag certifies that the candidate holds at least half of
its sub-stream's weight.

Keys are 64-bit. Flow pairs use the composite (src << 32) | dst by
default; src-only or dst-only tracking is a construction choice.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .hashing import STREAM_COLUMN, STREAM_SUBSTREAM, derive_seed, make_hash
from .ingest import key_repr

KEY_MODES = ("src_dst", "src", "dst")


def composite_key(src, dst):
    return (int(src) << 32) | int(dst)


def split_composite(key):
    return key >> 32, key & 0xFFFFFFFF


def batch_keys(batch, key_mode):
    """Sketch keys for a RecordBatch under the given key mode."""
    if key_mode == "src_dst":
        return (batch.src.astype(np.uint64) << np.uint64(32)) | batch.dst.astype(np.uint64)
    if key_mode == "src":
        return batch.src.astype(np.uint64)
    if key_mode == "dst":
        return batch.dst.astype(np.uint64)
    raise ValueError("unknown key mode %r" % (key_mode,))


def render_key(key, key_mode):
    """Human-readable form: dotted quads, 'src>dst' for composite keys."""
    if key_mode == "src_dst":
        s, d = split_composite(key)
        return "%s>%s" % (key_repr(s), key_repr(d))
    return key_repr(key)


@dataclass(frozen=True)
class HitterEntry:
    """One query result: candidate key and its volume estimate."""

    key: int
    est_volume: int
    flag: int
    substream: int


class BmSketch:
    """m sub-stream majority votes plus an m-by-m' volume accumulator."""

    __slots__ = ("m", "m_prime", "h1", "h2", "cand", "active", "count",
                 "flag", "pbm")

    def __init__(self, m=128, m_prime=256, hash_seed=1):
        self.m = m
        self.m_prime = m_prime
        self.h1 = make_hash(derive_seed(hash_seed, STREAM_SUBSTREAM), m)
        self.h2 = make_hash(derive_seed(hash_seed, STREAM_COLUMN), m_prime)
        self.cand = np.zeros(m, dtype=np.uint64)
        self.active = np.zeros(m, dtype=np.bool_)
        self.count = np.zeros(m, dtype=np.uint64)
        self.flag = np.ones(m, dtype=np.uint8)
        self.pbm = np.zeros((m, m_prime), dtype=np.uint64)

    def update(self, key, v):
        """Process one weighted item."""
        self.update_batch(np.array([key], dtype=np.uint64),
                          np.array([v], dtype=np.uint64))

    def update_batch(self, keys, values):
        """Process a batch of weighted items in arrival order."""
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        values = np.ascontiguousarray(values, dtype=np.uint64)
        if keys.shape != values.shape:
            raise ValueError("keys and values must have matching shapes")
        if keys.size == 0:
            return
        sub = self.h1.apply(keys)
        col = self.h2.apply(keys)
        _kernels.bm_update_batch(sub, col, keys, values, self.cand,
                                 self.active, self.count, self.flag, self.pbm)

    def query(self, K):
        """Top-K candidates by estimated volume.

        Estimate per sub-stream is the row maximum of the column
        accumulator. Ties rank the lower sub-stream index first. Only
        sub-streams that saw at least one positive-value item appear,
        so fewer than K entries may return.
        """
        if K < 1:
            raise ValueError("K must be >= 1, got %r" % (K,))
        p_est = self.pbm.max(axis=1)
        idx = np.flatnonzero(self.active)
        if idx.size == 0:
            return []
        inverted = np.iinfo(np.uint64).max - p_est[idx]
        order = np.argsort(inverted, kind="stable")
        out = []
        for s in idx[order][:K]:
            out.append(HitterEntry(key=int(self.cand[s]),
                                   est_volume=int(p_est[s]),
                                   flag=int(self.flag[s]),
                                   substream=int(s)))
        return out

    def reset(self):
        """Return to the freshly-constructed state (start of a window)."""
        self.cand[:] = 0
        self.active[:] = False
        self.count[:] = 0
        self.flag[:] = 1
        self.pbm[:] = 0


def report_record(window_index, entries, key_mode="src_dst"):
    """JSON-ready export of one window's query results."""
    return {
        "window": int(window_index),
        "entries": [{
            "rank": r,
            "key": e.key,
            "key_repr": render_key(e.key, key_mode),
            "est_volume": e.est_volume,
            "flag": e.flag,
            "substream": e.substream,
        } for r, e in enumerate(entries, start=1)],
    }
