"""Per-window hash-binned traffic matrices.

A databrick is an m-by-m matrix of unsigned 64-bit counters. Each flow
record adds its value (bytes or packets) to one cell: the row is the
hashed destination key, the column the hashed source key. Row sums are
therefore the per-destination volume array and column sums the
per-source array; both plus the full matrix are emitted at the end of
every window and the counters reset.

Matrix-level attack injection mirrors the record-level kind taxonomy
but operates directly on an accumulated brick, which keeps the added
volume exact and lets experiments control structure independently of
the packet stream.
"""

from dataclasses import dataclass

import numpy as np

from .hashing import STREAM_BRICK, derive_seed, make_hash
from .ingest import _split_exact


@dataclass
class HashArrays:
    """Marginals of one emitted brick: per-source and per-destination volume."""

    src: np.ndarray
    dst: np.ndarray
    total: int


class Databrick:
    """Accumulates one window of traffic into hashed (dst, src) cells."""

    __slots__ = ("m", "value_kind", "h", "cells")

    def __init__(self, m=128, hash_seed=1, value_kind="bytes"):
        self.m = m
        self.value_kind = value_kind
        self.h = make_hash(derive_seed(hash_seed, STREAM_BRICK), m)
        self.cells = np.zeros((m, m), dtype=np.uint64)

    def update(self, src, dst, v):
        """Add value v for one (src, dst) flow."""
        if v < 0:
            raise ValueError("flow value must be >= 0, got %r" % (v,))
        self.cells[self.h(dst), self.h(src)] += np.uint64(v)

    def bulk_update(self, src_keys, dst_keys, values):
        """Vectorized update over parallel key/value arrays."""
        values = np.asarray(values)
        if values.size == 0:
            return
        if values.min() < 0:
            raise ValueError("flow values must be >= 0")
        rows = self.h.apply(dst_keys)
        cols = self.h.apply(src_keys)
        np.add.at(self.cells, (rows, cols), values.astype(np.uint64))

    def add_batch(self, batch):
        """Accumulate a RecordBatch using this brick's value kind."""
        self.bulk_update(batch.src, batch.dst, batch.values(self.value_kind))

    def emit(self):
        """Snapshot the window and reset: returns (cells, HashArrays)."""
        snap = self.cells.copy()
        arrays = HashArrays(src=snap.sum(axis=0), dst=snap.sum(axis=1),
                            total=int(snap.sum()))
        self.cells[:] = 0
        return snap, arrays


def inject_matrix(brick, attack, rng):
    """Add an attack's volume directly onto an accumulated brick.

    many_to_one spreads the magnitude across `fanout` distinct random
    columns of the hashed target destination's row; one_to_many is the
    transpose; many_to_many hits distinct random cells. The brick total
    grows by exactly attack.magnitude. Returns the touched (rows, cols,
    parts) for diagnostics.
    """
    m = brick.m
    n = min(attack.fanout, m if attack.kind != "many_to_many" else m * m)
    parts = _split_exact(attack.magnitude, n).astype(np.uint64)
    if attack.kind == "many_to_one":
        rows = np.full(n, brick.h(attack.target_keys[0]))
        cols = rng.choice(m, size=n, replace=False)
    elif attack.kind == "one_to_many":
        rows = rng.choice(m, size=n, replace=False)
        cols = np.full(n, brick.h(attack.target_keys[0]))
    else:
        flat = rng.choice(m * m, size=n, replace=False)
        rows, cols = np.divmod(flat, m)
    brick.cells[rows, cols] += parts
    return rows, cols, parts


def redistribute_row(brick, row_bin, n_cols, rng):
    """Spread a row's existing volume over distinct random columns.

    Structural perturbation: the row (destination) sum and the brick
    total are preserved exactly, only the column membership changes.
    Returns the chosen columns, or None when the row is empty.
    """
    row = brick.cells[row_bin]
    total = int(row.sum())
    if total == 0:
        return None
    n = min(n_cols, brick.m)
    cols = rng.choice(brick.m, size=n, replace=False)
    row[:] = 0
    row[cols] = _split_exact(total, n).astype(np.uint64)
    return cols


def _rle(flat):
    n = flat.size
    starts = np.flatnonzero(np.concatenate(([True], flat[1:] != flat[:-1])))
    lengths = np.diff(np.append(starts, n))
    return [[int(flat[s]), int(length)] for s, length in zip(starts, lengths)]


def snapshot_record(window_index, brick_m, cells, arrays, value_kind="bytes"):
    """Build the JSON-ready export record for one emitted brick.

    Cells are stored flat in row-major order, run-length encoded as
    [value, run] pairs when more than half the matrix is zero.
    """
    flat = cells.ravel()
    rec = {
        "window": int(window_index),
        "m": int(brick_m),
        "value_kind": value_kind,
        "total": int(arrays.total),
        "src": [int(v) for v in arrays.src],
        "dst": [int(v) for v in arrays.dst],
    }
    if np.count_nonzero(flat) * 2 < flat.size:
        rec["cells_rle"] = _rle(flat)
    else:
        rec["cells"] = [int(v) for v in flat]
    return rec


def decode_cells(rec):
    """Rebuild the m-by-m cell matrix from a snapshot record."""
    m = rec["m"]
    if "cells" in rec:
        flat = np.array(rec["cells"], dtype=np.uint64)
    else:
        flat = np.concatenate([np.full(run, value, dtype=np.uint64)
                               for value, run in rec["cells_rle"]])
    if flat.size != m * m:
        raise ValueError("snapshot holds %d cells, expected %d" % (flat.size, m * m))
    return flat.reshape(m, m)
